"""Command line entry point: ``metapop <command> ...``.

Exit codes: 0 success, 1 configuration error, 2 training divergence,
3 missing artifact.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from metapop import __version__
from metapop import matrixgame as mg
from metapop.harness.config import ConfigError, ExperimentConfig, output_root, parse_seeds
from metapop.harness.experiments import EXPERIMENTS, FIGURES, export_figure, reproduce_experiment
from metapop.harness.runner import MissingArtifactError, evaluate_run, sweep, train_experiment
from metapop.training import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 1, 2, 3

log = logging.getLogger("metapop")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors, not divergence (argparse's default 2)
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metapop", description="Scalable population training for zero-shot coordination on matrix games.")
    p.add_argument("--version", action="version", version=f"metapop {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-matrix", help="write a shifted-block payoff matrix as CSV")
    g.add_argument("--blocks", type=int, default=1, help="number of diagonal blocks n_b")
    g.add_argument("--block-size", "--d", dest="d", type=int, default=10, help="block size d")
    g.add_argument("--eps", type=float, default=0.1, help="near-miss payoff")
    g.add_argument("--out", type=Path, default=None, help="CSV path (default: <output root>/matrix_<n_b>x<d>.csv)")

    c = sub.add_parser("init-config", help="write a config file with every key at its default")
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--blocks", type=int, default=None)
    c.add_argument("--method", default=None)
    c.add_argument("--mode", default=None)
    c.add_argument("--K", type=int, default=None)
    c.add_argument("--alpha", type=float, default=None)

    t = sub.add_parser("train", help="train every seed of a config and write manifests")
    t.add_argument("--config", type=Path, required=True)
    t.add_argument("--seeds", default=None, help="e.g. 0..4 or 1,3,5 (default: the config's seed list)")
    t.add_argument("--out", type=Path, default=None, help="run directory (default: config output_dir)")

    e = sub.add_parser("eval", help="Intra-XP and 1ZSC-XP from a run directory's checkpoints")
    e.add_argument("--run", type=Path, required=True)
    e.add_argument("--strangers", type=int, default=0, help="size of the self-play stranger pool (0: none)")

    s = sub.add_parser("sweep", help="train and evaluate a cross product of K, alpha, mode and n_b")
    s.add_argument("--config", type=Path, default=None, help="base config (default: built-in defaults)")
    s.add_argument("--K", type=_ints, default=None)
    s.add_argument("--alpha", type=_floats, default=None)
    s.add_argument("--mode", type=_strs, default=None)
    s.add_argument("--blocks", type=_ints, default=None)
    s.add_argument("--seeds", default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--strangers", type=int, default=0)
    s.add_argument("--out", type=Path, default=None)

    for name, helptext, choices in (("export-figure", "emit CSV+SVG for a figure setup", sorted(FIGURES)),
                                    ("reproduce", "run a named experiment end to end", list(EXPERIMENTS))):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("--name", required=True, choices=choices)
        r.add_argument("--out", type=Path, default=None)
        r.add_argument("--seeds", default="0..4")
        r.add_argument("--iterations", type=int, default=None, help="override the training budget")
    return p


def _load(path) -> ExperimentConfig:
    if not Path(path).exists():
        raise MissingArtifactError(f"config file not found: {path}")
    return ExperimentConfig.load(path)


def _cmd_gen_matrix(a):
    m = mg.generate_shifted_block_matrix(a.blocks, a.d, a.eps)
    out = a.out or output_root() / f"matrix_{a.blocks}x{a.d}.csv"
    mg.save_csv(m, out)
    print(out)


def _cmd_init_config(a):
    cfg = ExperimentConfig()
    if a.blocks is not None:
        cfg = cfg.replace(n_b=a.blocks)
    if a.method is not None:
        cfg = cfg.replace(method=a.method)
    if a.mode is not None:
        cfg = cfg.replace(mode=a.mode.upper())
    if a.K is not None:
        cfg = cfg.with_train(K=a.K)
    if a.alpha is not None:
        cfg = cfg.with_train(alpha=a.alpha)
    print(cfg.save(a.out))


def _cmd_train(a):
    cfg = _load(a.config)
    seeds = parse_seeds(a.seeds) if a.seeds else cfg.seeds
    root = a.out or cfg.resolved_output_dir()
    for man in train_experiment(cfg.replace(seeds=tuple(seeds)), seeds, root):
        print(f"seed {man.seed}: {Path(root) / f'seed{man.seed}' / 'manifest.json'}")


def _cmd_eval(a):
    rep = evaluate_run(a.run, a.strangers)
    print(f"intra_xp {rep.intra}")
    if rep.zsc is not None:
        print(f"one_sided_zsc_xp {rep.zsc}")
    print(Path(a.run) / "eval")


def _cmd_sweep(a):
    base = _load(a.config) if a.config else ExperimentConfig()
    if a.seeds:
        base = base.replace(seeds=parse_seeds(a.seeds))
    root = a.out or output_root() / "sweep"
    rows = sweep(base, root, a.K, a.alpha, a.mode, a.blocks, a.jobs, a.strangers)
    for r in rows:
        print(f"{r['cell']}: intra_xp {r['intra_xp']:.4f} ± {r['intra_xp_se']:.4f}")
    print(Path(root) / "summary.csv")


def _cmd_figure(a, fn):
    print(fn(a.name, a.out, parse_seeds(a.seeds), a.iterations))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-matrix":
            _cmd_gen_matrix(args)
        elif args.command == "init-config":
            _cmd_init_config(args)
        elif args.command == "train":
            _cmd_train(args)
        elif args.command == "eval":
            _cmd_eval(args)
        elif args.command == "sweep":
            _cmd_sweep(args)
        elif args.command == "export-figure":
            _cmd_figure(args, export_figure)
        elif args.command == "reproduce":
            _cmd_figure(args, reproduce_experiment)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DivergenceError, FloatingPointError) as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
