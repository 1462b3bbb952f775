import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from metapop import matrixgame as mg
from metapop.harness import cli
from metapop.harness.config import ConfigError, ExperimentConfig, output_root, parse_seeds
from metapop.harness.figures import bar_chart_svg, line_chart_svg
from metapop.harness.runner import (
    MissingArtifactError,
    RunManifest,
    evaluate_run,
    load_mains,
    sweep,
    sweep_cells,
    train_experiment,
)

import oracles

TINY_TRAIN = dict(iterations=40, batch_size=16, log_every=20, target_sync=10, trunk_hidden=(16,), head_hidden=(8,),
                  value_hidden=(8,))


def tiny(seeds=(0, 1), **train) -> ExperimentConfig:
    return ExperimentConfig(seeds=tuple(seeds)).with_train(**{**TINY_TRAIN, **train})


# ---------------------------------------------------------------------------
# config


def test_seed_parsing():
    assert parse_seeds("0..4") == (0, 1, 2, 3, 4)
    assert parse_seeds("1,5, 9") == (1, 5, 9)
    assert parse_seeds("0..1,7") == (0, 1, 7)
    for bad in ("", "a..b", "4..0", "x"):
        with pytest.raises(ConfigError):
            parse_seeds(bad)


@pytest.mark.parametrize("cfg", [
    ExperimentConfig(),
    ExperimentConfig(n_b=5, method="individual_population", mode="vi", seeds=(3, 9), output_dir="out/x"),
    ExperimentConfig(matrix_eps=0.25).with_train(K=30, alpha=0.5, eps_decay_steps=7, double_q=True,
                                                 trunk_hidden=(8, 4), priority="proportional", learn_start=3),
    ExperimentConfig(method="self_play").with_train(diversity_gate="none", head_init="independent"),
])
def test_config_round_trip(cfg):
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.to_text() == cfg.to_text()
    assert ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


def test_canonical_text_is_sorted_and_hash_ignores_output_dir():
    cfg = ExperimentConfig()
    text = cfg.to_text()
    headers = [ln for ln in text.splitlines() if ln.startswith("[")]
    assert headers == ["[env]", "[experiment]", "[train]"]
    train_keys = text.split("[train]\n", 1)[1].split(" = ")[0]
    assert train_keys == "K"  # sorted, uppercase sorts first
    assert cfg.hash() == cfg.replace(output_dir="elsewhere").hash()
    assert cfg.hash() != cfg.with_train(alpha=0.5).hash()
    assert len(cfg.short_hash()) == 12


def test_reordered_input_has_same_hash():
    text = "[train]\nK = 4\nalpha = 0.5\n[env]\nn_b = 2\n"
    shuffled = "[env]\nn_b = 2\n[train]\nalpha = 0.5\nK = 4\n"
    assert ExperimentConfig.from_text(text).hash() == ExperimentConfig.from_text(shuffled).hash()


@pytest.mark.parametrize("text", [
    "[train]\nalpah = 1.0\n",
    "[trian]\nalpha = 1.0\n",
    "[env]\nblocks = 5\n",
    "[train]\nK = two\n",
    "[train]\ndouble_q = maybe\n",
    "[experiment]\nmode = VII\n",
    "[experiment]\nmethod = league\n",
    "[train]\nalpha = -1\n",
    "not an ini file",
])
def test_bad_config_is_a_hard_error(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("METAPOP_OUTPUT_ROOT", str(tmp_path))
    assert output_root() == tmp_path
    assert ExperimentConfig().resolved_output_dir().parent == tmp_path
    monkeypatch.delenv("METAPOP_OUTPUT_ROOT")
    assert output_root() == Path("runs")


# ---------------------------------------------------------------------------
# runs, manifests, evaluation


def test_train_writes_verifiable_manifests(tmp_path):
    cfg = tiny()
    mans = train_experiment(cfg, root=tmp_path)
    assert [m.seed for m in mans] == [0, 1]
    for m in mans:
        assert m.config_hash == cfg.hash()
        assert set(m.files) == {"metrics", "main", "partners"}
        m.verify(tmp_path)
        assert RunManifest.read(tmp_path / f"seed{m.seed}") == m
    assert ExperimentConfig.load(tmp_path / "config.cfg").hash() == cfg.hash()


def test_rerun_metrics_are_byte_identical(tmp_path):
    cfg = tiny()
    train_experiment(cfg, root=tmp_path / "a")
    train_experiment(cfg, root=tmp_path / "b")
    for s in (0, 1):
        for name in ("metrics.csv", "main.ckpt", "partners.ckpt"):
            assert (tmp_path / "a" / f"seed{s}" / name).read_bytes() == \
                (tmp_path / "b" / f"seed{s}" / name).read_bytes()


def test_tampered_or_missing_checkpoint_is_detected(tmp_path):
    train_experiment(tiny(seeds=(0,)), root=tmp_path)
    ckpt = tmp_path / "seed0" / "main.ckpt"
    ckpt.write_bytes(ckpt.read_bytes() + b"x")
    with pytest.raises(MissingArtifactError, match="changed"):
        load_mains(tmp_path)
    ckpt.unlink()
    with pytest.raises(MissingArtifactError, match=str(ckpt)):
        load_mains(tmp_path)


def test_individual_population_writes_one_checkpoint_per_member(tmp_path):
    cfg = tiny(seeds=(0,), K=3).replace(method="individual_population")
    man = train_experiment(cfg, root=tmp_path)[0]
    assert {"member0", "member1", "member2"} <= set(man.files)


def test_evaluate_run_writes_report(tmp_path):
    train_experiment(tiny(), root=tmp_path)
    rep = evaluate_run(tmp_path, n_strangers=2)
    assert rep.pairwise.shape == (2, 2) and rep.zsc_matrix.shape == (2, 2)
    summary = json.loads((tmp_path / "eval" / "summary.json").read_text())
    assert summary["intra_xp"]["n_pairs"] == 2
    assert (tmp_path / "eval" / "zsc_heatmap.svg").exists()


def test_sweep_cells_cross_product():
    cells = sweep_cells(ExperimentConfig(), Ks=[2, 30], alphas=[0.0, 1.0], modes=["ii"], n_bs=[5])
    assert [(c.K, c.alpha, c.mode, c.n_b) for c in cells] == [(2, 0.0, "II", 5), (2, 1.0, "II", 5),
                                                            (30, 0.0, "II", 5), (30, 1.0, "II", 5)]


def test_parallel_sweep_matches_serial(tmp_path):
    base = tiny()
    serial = sweep(base, tmp_path / "serial", Ks=[2, 3], jobs=1)
    parallel = sweep(base, tmp_path / "parallel", Ks=[2, 3], jobs=2)
    assert serial == parallel
    assert (tmp_path / "serial" / "summary.csv").read_bytes() == (tmp_path / "parallel" / "summary.csv").read_bytes()
    for cell in ("K2_a1_mII_nb1", "K3_a1_mII_nb1"):
        for s in (0, 1):
            a = tmp_path / "serial" / cell / f"seed{s}" / "metrics.csv"
            b = tmp_path / "parallel" / cell / f"seed{s}" / "metrics.csv"
            assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# CLI


def test_cli_gen_matrix_matches_oracle(tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert cli.main(["gen-matrix", "--blocks", "5", "--eps", "0.1", "--out", str(out)]) == 0
    m = mg.load_csv(out)
    assert m.entries.shape == (50, 50)
    for (r, c), v in oracles.BASE_SPOTS.items():
        assert m.entries[r, c] == v
    np.testing.assert_array_equal(m.entries, np.array(oracles.shifted_matrix_loops(5)))


def test_cli_train_and_eval(tmp_path, capsys):
    cfg_path = tiny().save(tmp_path / "c.cfg")
    run = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg_path), "--seeds", "0..2", "--out", str(run)]) == 0
    assert sorted(p.name for p in run.glob("seed*/manifest.json")) == ["manifest.json"] * 3
    first = [(run / f"seed{s}" / "metrics.csv").read_bytes() for s in range(3)]
    assert cli.main(["train", "--config", str(cfg_path), "--seeds", "0..2", "--out", str(run)]) == 0
    assert first == [(run / f"seed{s}" / "metrics.csv").read_bytes() for s in range(3)]
    assert cli.main(["eval", "--run", str(run)]) == 0
    assert "intra_xp" in capsys.readouterr().out


def test_cli_init_config(tmp_path):
    out = tmp_path / "c.cfg"
    assert cli.main(["init-config", "--out", str(out), "--blocks", "5", "--K", "30", "--mode", "iv"]) == 0
    cfg = ExperimentConfig.load(out)
    assert (cfg.n_b, cfg.K, cfg.mode) == (5, 30, "IV")


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\nalpah = 1\n")
    assert cli.main(["train", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "alpah" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_MISSING
    assert cli.main(["eval", "--run", str(tmp_path / "empty")]) == cli.EXIT_MISSING
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == cli.EXIT_CONFIG
    diverge = tiny(seeds=(0,), lr=1e200).save(tmp_path / "d.cfg")
    with np.errstate(all="ignore"):
        assert cli.main(["train", "--config", str(diverge), "--out", str(tmp_path / "d")]) == cli.EXIT_DIVERGED


def test_cli_missing_checkpoint_names_the_path(tmp_path, capsys):
    cfg_path = tiny(seeds=(0,)).save(tmp_path / "c.cfg")
    run = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg_path), "--out", str(run)]) == 0
    (run / "seed0" / "main.ckpt").unlink()
    assert cli.main(["eval", "--run", str(run)]) == cli.EXIT_MISSING
    assert str(run / "seed0" / "main.ckpt") in capsys.readouterr().err


def test_console_script_runs_with_numpy_kernels(tmp_path):
    env = {**os.environ, "METAPOP_DISABLE_NUMBA": "1", "METAPOP_OUTPUT_ROOT": str(tmp_path)}
    code = ("import metapop.kernels as k, sys; from metapop.harness.cli import main; "
            "from metapop.training import TrainConfig, train; from metapop.matrixgame import "
            "generate_shifted_block_matrix as g; "
            "print(k.backend_name()); "
            "r = train(TrainConfig(iterations=30, batch_size=8, K=3, priority='proportional'), g(1)); "
            "print(len(r.trace.rows)); sys.exit(main(['gen-matrix']))")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert res.stdout.splitlines()[:2] == ["numpy", "1"]
    assert (tmp_path / "matrix_1x10.csv").exists()


# ---------------------------------------------------------------------------
# figures


def test_svg_charts():
    bars = bar_chart_svg(["a", "b"], {"self": ([1.0, 0.9], [0.0, 0.1]), "cross": ([0.2, 0.1], [0.05, 0.0])},
                         title="t")
    assert bars.startswith("<svg") and bars.rstrip().endswith("</svg>") and bars.count("<rect") >= 4
    lines = line_chart_svg(np.arange(5), {"K=2": np.linspace(0, 1, 5)}, title="t", xlabel="iteration")
    assert "<polyline" in lines or "<path" in lines
