"""Per-seed runs, manifests, evaluation from checkpoints and sweeps."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from metapop import __version__
from metapop import matrixgame as mg
from metapop.evaluation import EvalReport, PolicyHandle, build_stranger_pool, evaluate, main_handle
from metapop.harness.config import ExperimentConfig
from metapop.metaagent import load_checkpoint, save_checkpoint
from metapop.training import IndependentPopulation, train

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class MissingArtifactError(FileNotFoundError):
    """A checkpoint, manifest or other expected file is absent or altered."""


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    method: str
    mode: str
    K: int
    alpha: float
    files: dict[str, dict[str, str]] = field(default_factory=dict)  # role -> {path, sha256}
    tool_version: str = __version__
    wall_clock: float = 0.0

    def path_of(self, role: str, root) -> Path:
        if role not in self.files:
            raise MissingArtifactError(f"manifest has no {role!r} entry")
        return Path(root) / self.files[role]["path"]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, directory) -> Path:
        p = Path(directory) / MANIFEST_NAME
        p.write_text(self.to_json())
        return p

    @classmethod
    def read(cls, directory) -> "RunManifest":
        p = Path(directory) / MANIFEST_NAME
        if not p.exists():
            raise MissingArtifactError(f"manifest not found: {p}")
        return cls(**json.loads(p.read_text()))

    def verify(self, directory):
        """Raise unless every recorded file exists with its recorded hash."""
        for role, entry in self.files.items():
            p = Path(directory) / entry["path"]
            if not p.exists():
                raise MissingArtifactError(f"{role} file missing: {p}")
            if file_sha256(p) != entry["sha256"]:
                raise MissingArtifactError(f"{role} file changed since the run: {p}")


def build_matrix(cfg: ExperimentConfig) -> mg.PayoffMatrix:
    return mg.generate_shifted_block_matrix(cfg.n_b, cfg.d, cfg.matrix_eps)


def seed_dir(root, seed: int) -> Path:
    return Path(root) / f"seed{seed}"


def run_seed(cfg: ExperimentConfig, seed: int, root=None) -> RunManifest:
    """Train one seed and write metrics, checkpoints and a manifest under ``root/seed<seed>``."""
    root = Path(root) if root is not None else cfg.resolved_output_dir()
    out = seed_dir(root, seed)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    tcfg = cfg.with_train(seed=int(seed)).train
    res = train(tcfg, build_matrix(cfg), cfg.mode, cfg.method)
    meta = {"config_hash": cfg.hash(), "seed": int(seed), "method": cfg.method, "mode": res.mode}
    written = {"metrics": res.trace.write_csv(out / "metrics.csv")}
    written["main"] = save_checkpoint(res.main, out / "main.ckpt", {**meta, "role": "main"})
    if isinstance(res.partners, IndependentPopulation):
        for k, member in enumerate(res.partners.members):
            written[f"member{k}"] = save_checkpoint(member, out / f"member{k}.ckpt", {**meta, "role": f"member{k}"})
    elif res.partners is not None:
        written["partners"] = save_checkpoint(res.partners, out / "partners.ckpt", {**meta, "role": "partners"})
    files = {role: {"path": str(Path(p).relative_to(root)), "sha256": file_sha256(p)} for role, p in written.items()}
    man = RunManifest(cfg.hash(), int(seed), cfg.method, res.mode, cfg.K, cfg.alpha, files,
                      wall_clock=round(time.perf_counter() - t0, 3))
    man.write(out)
    return man


def train_experiment(cfg: ExperimentConfig, seeds: Sequence[int] | None = None, root=None) -> list[RunManifest]:
    root = Path(root) if root is not None else cfg.resolved_output_dir()
    root.mkdir(parents=True, exist_ok=True)
    cfg.replace(output_dir=str(root)).save(root / "config.cfg")
    return [run_seed(cfg, s, root) for s in (seeds if seeds is not None else cfg.seeds)]


def load_run_config(root) -> ExperimentConfig:
    p = Path(root) / "config.cfg"
    if not p.exists():
        raise MissingArtifactError(f"run config not found: {p}")
    return ExperimentConfig.load(p)


def load_mains(root, seeds: Sequence[int] | None = None) -> list[PolicyHandle]:
    """Main-agent handles for every seed directory (or the given seeds) under ``root``."""
    root = Path(root)
    if seeds is None:
        dirs = sorted((p for p in root.glob("seed*") if p.is_dir()), key=lambda p: int(p.name[4:]))
    else:
        dirs = [seed_dir(root, s) for s in seeds]
    if not dirs:
        raise MissingArtifactError(f"no seed directories under {root}")
    handles = []
    for d in dirs:
        man = RunManifest.read(d)
        man.verify(root)
        ckpt = man.path_of("main", root)
        params, _ = load_checkpoint(ckpt)
        handles.append(main_handle(params, f"seed{man.seed}"))
    return handles


def evaluate_run(root, n_strangers: int = 0, stranger_seeds: Sequence[int] | None = None) -> EvalReport:
    """Intra-XP over the run's seeds, plus 1ZSC-XP against fresh self-play strangers."""
    cfg = load_run_config(root)
    matrix = build_matrix(cfg)
    mains = load_mains(root)
    strangers = build_stranger_pool(matrix, n_strangers, stranger_seeds, cfg.train) if n_strangers > 0 else None
    meta = {"config_hash": cfg.hash(), "method": cfg.method, "mode": cfg.mode, "K": cfg.K, "alpha": cfg.alpha,
            "n_b": cfg.n_b, "d": cfg.d}
    rep = evaluate(mains, matrix, strangers, meta)
    rep.write(Path(root) / "eval")
    return rep


# ---------------------------------------------------------------------------
# sweeps


def sweep_cells(base: ExperimentConfig, Ks=None, alphas=None, modes=None, n_bs=None) -> list[ExperimentConfig]:
    Ks = list(Ks) if Ks else [base.K]
    alphas = list(alphas) if alphas else [base.alpha]
    modes = list(modes) if modes else [base.mode]
    n_bs = list(n_bs) if n_bs else [base.n_b]
    cells = []
    for K, a, m, nb in itertools.product(Ks, alphas, modes, n_bs):
        cells.append(base.replace(mode=str(m).upper(), n_b=int(nb)).with_train(K=int(K), alpha=float(a)))
    return cells


def cell_name(cfg: ExperimentConfig) -> str:
    return f"K{cfg.K}_a{cfg.alpha:g}_m{cfg.mode}_nb{cfg.n_b}"


def _run_cell(args):
    cfg, root, n_strangers = args
    train_experiment(cfg, root=root)
    rep = evaluate_run(root, n_strangers)
    return rep.summary()


SWEEP_COLUMNS = ("cell", "K", "alpha", "mode", "n_b", "method", "intra_xp", "intra_xp_se", "zsc_xp", "zsc_xp_se",
                 "self_play")


def sweep(base: ExperimentConfig, root, Ks=None, alphas=None, modes=None, n_bs=None, jobs: int = 1,
          n_strangers: int = 0) -> list[dict]:
    """Train and evaluate every cell of the cross product, each in its own directory.

    Cells share nothing mutable, so ``jobs > 1`` runs them in worker processes
    with results identical to a serial run.  Writes ``summary.csv``.
    """
    root = Path(root)
    cells = sweep_cells(base, Ks, alphas, modes, n_bs)
    args = [(c, root / cell_name(c), n_strangers) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_cell, args))
    else:
        summaries = [_run_cell(a) for a in args]
    rows = []
    for c, s in zip(cells, summaries):
        z = s.get("one_sided_zsc_xp", {})
        rows.append({
            "cell": cell_name(c), "K": c.K, "alpha": c.alpha, "mode": c.mode, "n_b": c.n_b, "method": c.method,
            "intra_xp": s["intra_xp"]["mean"], "intra_xp_se": s["intra_xp"]["stderr"],
            "zsc_xp": z.get("mean", ""), "zsc_xp_se": z.get("stderr", ""), "self_play": s["self_play"]["mean"],
        })
    write_rows(root / "summary.csv", rows, SWEEP_COLUMNS)
    return rows


def write_rows(path, rows: list[dict], columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path
