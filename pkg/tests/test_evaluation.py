import json

import numpy as np
import pytest

from metapop import evaluation as ev
from metapop import matrixgame as mg
from metapop import metaagent as ma
from metapop import numerics as nx
from metapop.training import TrainConfig


def fixed_policy(row_action, col_action, n_actions, kind="main_agent", name=""):
    """A one-head agent whose greedy seat actions are set by hand."""
    p = ma.init_meta_agent(3, n_actions, 1, nx.seeded_rng(0), trunk_hidden=(3,), head_hidden=(), value_hidden=())
    p.trunk.weights[0][...] = np.eye(3)
    p.heads.weights[0][...] = 0.0
    p.heads.weights[0][0, 0, row_action] = 1.0  # feature 0 is on only in the row seat
    p.heads.weights[0][0, 1, col_action] = 1.0
    p.value.weights[0][...] = 0.0
    p.touch()
    return ev.PolicyHandle(kind, p, 0, name or f"{row_action}/{col_action}")


def custom_matrix(entries):
    e = np.asarray(entries, dtype=np.float64)
    return mg.PayoffMatrix(e, 1, e.shape[0], 0.0)


M10 = mg.generate_shifted_block_matrix(1)


def test_fixed_policy_helper():
    assert fixed_policy(3, 7, 10).greedy_actions() == (3, 7)


def test_estimate_J_examples():
    zero = fixed_policy(0, 0, 10)
    assert ev.estimate_J(zero, zero, M10) == 1.0
    assert ev.estimate_J(zero, fixed_policy(0, 5, 10), M10) == 0.0
    a, b = fixed_policy(2, 4, 10), fixed_policy(9, 3, 10)
    assert ev.estimate_J(a, b, M10) == M10.entries[2, 3] == 0.1
    assert ev.estimate_J(a, b, M10, episodes=1) == ev.estimate_J(a, b, M10, episodes=100)


def test_estimate_J_rejects_mismatched_policies():
    with pytest.raises(ValueError, match="seat"):
        ev.estimate_J(fixed_policy(0, 0, 50), fixed_policy(0, 0, 10), M10)
    with pytest.raises(ValueError):
        ev.estimate_J(fixed_policy(0, 0, 10), fixed_policy(0, 0, 10), M10, episodes=0)


def test_estimate_J_exploring_pair_needs_rng_and_averages():
    p = ev.PolicyHandle("stranger", fixed_policy(0, 0, 10).params, eps=1.0)
    with pytest.raises(ValueError):
        ev.estimate_J(p, p, M10)
    val = ev.estimate_J(p, p, M10, episodes=20_000, rng=nx.seeded_rng(0))
    assert val == pytest.approx(M10.entries.mean(), abs=0.01)


def test_policy_handle_validation():
    params = fixed_policy(0, 0, 10).params
    with pytest.raises(ValueError):
        ev.PolicyHandle("teacher", params)
    with pytest.raises(IndexError):
        ev.PolicyHandle("meta_head", params, head=1)
    assert ev.PolicyHandle("meta_head", params).greedy


def test_intra_xp_arithmetic():
    m = custom_matrix([[100, 2, 4], [6, 100, 8], [10, 12, 100]])
    models = [fixed_policy(i, i, 3) for i in range(3)]
    score, J = ev.intra_xp(models, m)
    assert score.mean == 7.0 and score.n == 6
    assert score.stderr == pytest.approx(np.std([2, 4, 6, 8, 10, 12], ddof=1) / np.sqrt(6))
    np.testing.assert_array_equal(np.diag(J), [100, 100, 100])


def test_intra_xp_identical_models_equal_self_play():
    a = fixed_policy(4, 4, 10)
    score, _ = ev.intra_xp([a, a, a], M10)
    assert score.mean == ev.estimate_J(a, a, M10) and score.stderr == 0.0


def test_intra_xp_two_models_two_ordered_pairs():
    score, J = ev.intra_xp([fixed_policy(0, 0, 10), fixed_policy(1, 5, 10)], M10)
    assert score.n == 2
    assert score.mean == pytest.approx(0.5 * (M10.entries[0, 5] + M10.entries[1, 0]))
    with pytest.raises(ValueError):
        ev.intra_xp([fixed_policy(0, 0, 10)], M10)


def test_one_sided_zsc_shapes_and_values():
    model = fixed_policy(0, 0, 10)
    score, cells = ev.one_sided_zsc_xp([model], [fixed_policy(1, 0, 10, "stranger")], M10)
    assert cells.shape == (1, 1)
    assert cells[0, 0] == 0.5 * (M10.entries[0, 0] + M10.entries[1, 0])
    # a stranger identical to the model scores the model's self-play
    _, cells = ev.one_sided_zsc_xp([model], [model], M10)
    assert cells[0, 0] == ev.estimate_J(model, model, M10)
    with pytest.raises(ValueError):
        ev.one_sided_zsc_xp([model], [], M10)


def test_five_by_forty_heatmap():
    m50 = mg.generate_shifted_block_matrix(5)
    models = [fixed_policy(10 * k, 10 * k, 50) for k in range(5)]
    strangers = [fixed_policy(t, t, 50, "stranger", f"s{t}") for t in range(40)]
    score, cells = ev.one_sided_zsc_xp(models, strangers, m50)
    assert cells.shape == (5, 40) and score.n == 200
    assert ((cells >= 0) & (cells <= m50.max_payoff)).all()
    svg = ev.heatmap_svg(cells, [m.name for m in models], [s.name for s in strangers])
    assert svg.startswith("<svg") and svg.count("<rect") >= 200


def test_stranger_pool():
    tiny = TrainConfig(iterations=150, batch_size=16, trunk_hidden=(16,), head_hidden=(8,), value_hidden=(8,))
    pool = ev.build_stranger_pool(M10, 1, config=tiny)
    assert len(pool) == 1 and pool[0].kind == "stranger" and pool[0].name == "stranger1000"
    again = ev.build_stranger_pool(M10, 1, config=tiny)
    for k, v in pool[0].params.tensors().items():
        np.testing.assert_array_equal(v, again[0].params.tensors()[k])
    with pytest.raises(ValueError):
        ev.build_stranger_pool(M10, 0)
    with pytest.raises(ValueError):
        ev.build_stranger_pool(M10, 3, seeds=[1])


def test_stranger_pool_distinct_seeds_differ_on_dim50():
    m50 = mg.generate_shifted_block_matrix(5)
    cfg = TrainConfig(iterations=600, trunk_hidden=(32,), head_hidden=(16,), value_hidden=(16,))
    pool = ev.build_stranger_pool(m50, 2, seeds=[1, 2], config=cfg)
    assert pool[0].greedy_actions() != pool[1].greedy_actions()


def test_report_written(tmp_path):
    models = [fixed_policy(0, 0, 10, name="m0"), fixed_policy(1, 0, 10, name="m1")]
    rep = ev.evaluate(models, M10, strangers=[fixed_policy(2, 2, 10, "stranger", "s0")], meta={"K": 2})
    paths = rep.write(tmp_path)
    summary = json.loads(paths["summary"].read_text())
    assert summary["intra_xp"]["n_pairs"] == 2 and summary["meta"] == {"K": 2}
    assert summary["self_play"]["mean"] == pytest.approx(1.0)
    lines = paths["pairwise"].read_text().splitlines()
    assert lines[0] == ",m0,m1" and len(lines) == 3
    assert paths["zsc"].exists() and paths["heatmap"].read_text().startswith("<svg")


def test_mean_stderr():
    s = ev.mean_stderr([1.0, 3.0])
    assert (s.mean, s.n) == (2.0, 2) and s.stderr == pytest.approx(1.0)
    assert ev.mean_stderr([5.0]).stderr == 0.0
    with pytest.raises(ValueError):
        ev.mean_stderr([])
