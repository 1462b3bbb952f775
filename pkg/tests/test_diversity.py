import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metapop import diversity as dv
from metapop import metaagent as ma
from metapop import numerics as nx

import cases
import oracles


def _random_tables(rng, n, k, a):
    return rng.dirichlet(np.ones(a), size=(n, k))


# ---------------------------------------------------------------------------
# exact_cmi


def test_exact_cmi_identical_heads_is_zero():
    rng = np.random.default_rng(0)
    row = rng.dirichlet(np.ones(5), size=10)
    tables = np.repeat(row[:, None, :], 4, axis=1)
    heads = rng.integers(0, 4, 10)
    actions = rng.integers(0, 5, 10)
    assert dv.exact_cmi(tables, (heads, actions)) == 0.0


def test_exact_cmi_distinct_deterministic_heads_is_log_k():
    tables = np.tile(np.eye(4)[None], (8, 1, 1))
    heads = np.arange(8) % 4
    assert dv.exact_cmi(tables, (heads, heads)) == pytest.approx(math.log(4), abs=1e-15)
    assert dv.exact_cmi(tables, (heads, heads)) == pytest.approx(1.386294, abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_exact_cmi_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    tables = _random_tables(rng, 30, 3, 4)
    heads = rng.integers(0, 3, 30)
    actions = rng.integers(0, 4, 30)
    want = oracles.brute_cmi(tables.tolist(), heads.tolist(), actions.tolist())
    assert abs(dv.exact_cmi(tables, (heads, actions)) - want) <= 1e-12


def test_exact_cmi_with_explicit_prior_matches_brute_force():
    rng = np.random.default_rng(3)
    tables = _random_tables(rng, 12, 3, 4)
    prior = rng.dirichlet(np.ones(3), size=12)
    heads, actions = rng.integers(0, 3, 12), rng.integers(0, 4, 12)
    want = oracles.brute_cmi(tables.tolist(), heads.tolist(), actions.tolist(), prior.tolist())
    assert abs(dv.exact_cmi(tables, (heads, actions), prior) - want) <= 1e-12


def test_exact_cmi_rejects_bad_inputs():
    tables = np.tile(np.eye(3)[None], (2, 1, 1))
    with pytest.raises(ValueError, match="log of zero"):
        dv.exact_cmi(tables, ([0, 1], [1, 1]))
    with pytest.raises(ValueError):
        dv.exact_cmi(tables * 0.5, ([0, 1], [0, 1]))
    with pytest.raises(ValueError):
        dv.exact_cmi(tables, ([0], [0]))
    with pytest.raises(ValueError):
        dv.exact_cmi(tables, ([0, 3], [0, 0]))
    with pytest.raises(ValueError):
        dv.exact_cmi(tables, ([0, 1], [0, 1]), prior=np.full((2, 3), 0.5))


@st.composite
def _count_tables(draw):
    """Integer action counts per head with a common row total.

    Expanding counts into samples is model-consistent sampling with no
    sampling noise: the estimate equals the MI of the tabulated joint.
    """
    k = draw(st.integers(1, 4))
    a = draw(st.integers(1, 4))
    total = draw(st.integers(1, 6))
    rows = []
    for _ in range(k):
        cuts = sorted(draw(st.lists(st.integers(0, total), min_size=a - 1, max_size=a - 1)))
        edges = [0, *cuts, total]
        rows.append([edges[i + 1] - edges[i] for i in range(a)])
    return np.array(rows), total


@settings(max_examples=300, deadline=None)
@given(_count_tables())
def test_exact_cmi_is_nonnegative_and_bounded_under_model_consistent_samples(data):
    counts, total = data
    k, a = counts.shape
    probs = counts / total
    heads, actions = [], []
    for u in range(k):
        for act in range(a):
            heads += [u] * int(counts[u, act])
            actions += [act] * int(counts[u, act])
    tables = np.repeat(probs[None], len(heads), axis=0)
    value = dv.exact_cmi(tables, (heads, actions))
    assert value >= -1e-12
    assert value <= math.log(k) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.integers(1, 5))
def test_exact_cmi_never_exceeds_log_k(seed, k, a):
    rng = np.random.default_rng(seed)
    tables = _random_tables(rng, 20, k, a)
    heads = rng.integers(0, k, 20)
    actions = np.array([rng.choice(a, p=tables[j, heads[j]]) for j in range(20)])
    assert dv.exact_cmi(tables, (heads, actions)) <= math.log(k) + 1e-12


# ---------------------------------------------------------------------------
# surrogate


def test_surrogate_disjoint_deterministic_heads_is_zero():
    probs = np.tile(np.eye(4)[None], (4, 1, 1))
    heads = np.arange(4)
    favors = dv.favor_from_probs(probs, heads)
    assert dv.surrogate_mi(favors, heads) == 0.0


def test_surrogate_identical_deterministic_heads_is_minus_k_minus_one():
    probs = np.zeros((5, 4, 4))
    probs[:, :, 2] = 1.0
    heads = np.array([0, 1, 2, 3, 0])
    favors = dv.favor_from_probs(probs, [2] * 5)
    assert dv.surrogate_mi(favors, heads) == -3.0


def test_surrogate_q_form_direct_sum():
    favors = dv.FavorTable(np.array([[9.0, 0.5, -0.2]]), "q_value")
    assert dv.surrogate_mi(favors, [0]) == pytest.approx(-0.3, abs=1e-15)


def test_surrogate_single_head_warns_and_returns_zero():
    favors = dv.FavorTable(np.array([[0.4], [0.7]]), "probability")
    with pytest.warns(RuntimeWarning, match="single-head"):
        assert dv.surrogate_mi(favors, [0, 0]) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_surrogate_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(25, 6))
    heads = rng.integers(0, 6, 25)
    got = dv.surrogate_mi(dv.FavorTable(vals, "advantage"), heads)
    assert got == pytest.approx(oracles.brute_surrogate(vals.tolist(), heads.tolist()), abs=1e-13)


def test_surrogate_and_exact_move_together_on_two_head_family():
    # head 0 produced a_j; lower head 1's mass on a_j one grid step at a time
    grid = [i / 10 for i in range(11)]
    checked = 0
    for a, p0a in itertools.product(range(3), grid[1:]):
        for p1a, drop in itertools.product(grid[1:], grid[1:]):
            if drop > p1a + 1e-12:
                continue

            def table(q):
                t = np.zeros((2, 3))
                other = (a + 1) % 3
                t[0, a], t[0, other] = p0a, 1 - p0a
                t[1, a], t[1, other] = q, 1 - q
                return t[None]

            before, after = table(p1a), table(round(p1a - drop, 10))
            sur = [dv.surrogate_mi(dv.favor_from_probs(t, [a]), [0]) for t in (before, after)]
            ex = [dv.exact_cmi(t, ([0], [a])) for t in (before, after)]
            if sur[1] > sur[0]:
                assert ex[1] >= ex[0] - 1e-12
                checked += 1
    assert checked > 100


# ---------------------------------------------------------------------------
# favors


def test_favor_examples():
    uniform = np.full((3, 2, 4), 0.25)
    np.testing.assert_array_equal(dv.favor_from_probs(uniform, [0, 3, 1]).values, 0.25)
    f = dv.favor_from_q(np.array([[[1.0, 2.0, 3.0]]]), [2])
    assert f.values[0, 0] == 3.0 and f.form == "q_value"


def test_favor_rejections():
    with pytest.raises(ValueError):
        dv.favor_from_q(np.zeros((1, 2, 3)), [3])
    with pytest.raises(ValueError):
        dv.favor_from_q(np.full((1, 2, 3), np.inf), [0])
    with pytest.raises(ValueError):
        dv.favor_from_probs(np.full((1, 2, 3), 0.5), [0])
    with pytest.raises(ValueError):
        dv.FavorTable(np.zeros((2, 2)), "logit")


def test_favors_from_network_match_per_head_lookups():
    p = ma.init_meta_agent(3, 6, 4, nx.seeded_rng(2))
    obs = np.array([[1.0, 0, 1], [0, 1, 1], [1, 0, 1]])
    actions = np.array([5, 0, 2])
    q, _ = ma.forward_all(p, obs)
    f = dv.favor_from_q(q, actions)
    for j in range(3):
        for u in range(4):
            assert f.values[j, u] == pytest.approx(ma.q_values(p, obs[j], u)[actions[j]], abs=1e-13)


# ---------------------------------------------------------------------------
# monotonicity check


def test_probability_form_drop_from_point_nine_to_point_five():
    F = np.array([[0.6, 0.4, 0.0], [0.9, 0.1, 0.0], [0.2, 0.3, 0.5]])
    Fp = F.copy()
    Fp[1] = [0.5, 0.5, 0.0]
    res = dv.theorem1_check(F, Fp, u=0, a=0)
    assert res.applicable and res.holds and res.perturbed_head == 1
    assert res.I_j_after >= res.I_j_before


def test_q_form_argmax_kept_leaves_term_unchanged():
    F = np.array([[3.0, 1.0, 0.0], [2.0, 1.0, 0.0]])
    Fp = F.copy()
    Fp[1, 0] = 1.5
    res = dv.theorem1_check(F, Fp, u=0, a=0, form="q_value")
    assert res.applicable and res.holds
    assert res.I_j_after == res.I_j_before


def test_q_form_dethroned_argmax_raises_term():
    F = np.array([[3.0, 1.0, 0.0], [2.0, 1.0, 0.0]])
    Fp = F.copy()
    Fp[1, 0] = 0.5
    res = dv.theorem1_check(F, Fp, u=0, a=0, form="q_value")
    assert dv.greedy_policy(F)[1, 0] == 1.0 and dv.greedy_policy(Fp)[1, 0] == 0.0
    assert res.applicable and res.holds and res.I_j_after > res.I_j_before
    # both heads agreed before (log 1 = 0 after subtracting log of the mean), one after
    assert res.I_j_before == pytest.approx(0.0, abs=1e-15)
    assert res.I_j_after == pytest.approx(math.log(2), abs=1e-15)


def test_not_applicable_cases():
    F = np.array([[0.6, 0.4], [0.7, 0.3], [0.2, 0.8]])
    same = dv.theorem1_check(F, F, 0, 0)
    assert not same.applicable
    bump = F.copy()
    bump[1] = [0.8, 0.2]
    assert not dv.theorem1_check(F, bump, 0, 0).applicable  # increase
    own = F.copy()
    own[0] = [0.5, 0.5]
    assert not dv.theorem1_check(F, own, 0, 0).applicable  # v == u
    not_argmax = F.copy()
    not_argmax[2] = [0.1, 0.9]
    assert not dv.theorem1_check(F, not_argmax, 0, 0).applicable
    two = F.copy()
    two[1], two[2] = [0.5, 0.5], [0.1, 0.9]
    assert not dv.theorem1_check(F, two, 0, 0).applicable
    with pytest.raises(ValueError):
        dv.theorem1_check(F, F[:2], 0, 0)


def test_q_form_rejects_changes_outside_the_perturbed_entry():
    F = np.array([[3.0, 1.0], [2.0, 1.0]])
    Fp = np.array([[3.0, 1.0], [1.5, 1.8]])
    assert not dv.theorem1_check(F, Fp, 0, 0, form="q_value").applicable


@pytest.mark.parametrize("form", ["probability", "q_value", "advantage"])
def test_monotonicity_fuzz(form):
    rng = np.random.default_rng(42)
    seen = 0
    while seen < 3000:
        case = cases.random_perturbation(rng, form)
        if case is None:
            continue
        F, Fp, u, a = case
        for eps in ((0.0,) if form == "probability" else (0.0, 0.1)):
            res = dv.theorem1_check(F, Fp, u, a, form=form, eps=eps)
            if not res.applicable:
                continue
            assert res.holds, (F, Fp, u, a, res)
            seen += 1


# ---------------------------------------------------------------------------
# diff_prob


def test_diff_prob_shared_heads_is_one():
    p = ma.init_meta_agent(3, 5, 4, nx.seeded_rng(0), head_init="shared")
    assert dv.diff_prob(p, [[1.0, 0, 1], [0, 1, 1]]) == 1.0


def test_diff_prob_examples_from_greedy_tables():
    assert dv.diff_prob_from_greedy([[0, 1, 2, 3], [3, 2, 1, 0]]) == 0.0
    assert dv.diff_prob_from_greedy([[4, 4, 0], [1, 1, 2], [0, 0, 3]]) == pytest.approx(1 / 3, abs=1e-15)


def test_diff_prob_distinct_heads_on_network():
    p = ma.init_meta_agent(3, 3, 3, nx.seeded_rng(0))
    for u in range(3):
        p.heads.weights[-1][u][...] = 0.0
        p.heads.biases[-1][u][...] = np.eye(3)[u]
    p.touch()
    assert dv.diff_prob(p, [[1.0, 0, 1], [0, 1, 1]]) == 0.0


def test_diff_prob_invariant_to_constant_advantage_shift():
    p = ma.init_meta_agent(3, 5, 4, nx.seeded_rng(3))
    ctx = np.random.default_rng(0).normal(size=(30, 3))
    before = dv.diff_prob(p, ctx)
    for u, c in enumerate([0.5, -3.0, 10.0, 0.0]):
        p.heads.biases[-1][u][...] += c
    p.touch()
    assert dv.diff_prob(p, ctx) == before


def test_diff_prob_rejections():
    with pytest.raises(ValueError):
        dv.diff_prob(ma.init_agent(3, 5, nx.seeded_rng(0)), [[1.0, 0, 1]])
    with pytest.raises(ValueError):
        dv.diff_prob(ma.init_meta_agent(3, 5, 2, nx.seeded_rng(0)), np.zeros((0, 3)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert 0.0 <= dv.diff_prob(ma.init_meta_agent(3, 5, 2, nx.seeded_rng(0)), [1.0, 0, 1]) <= 1.0
