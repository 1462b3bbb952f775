"""Conditional mutual information between head index and action.

Two quantities are provided:

* :func:`exact_cmi` -- the Monte-Carlo estimate averaged over sampled
  transitions, computed from full conditional action distributions;
* :func:`surrogate_mi` -- the trainable stand-in, minus the summed favor that
  every *other* head places on the action a transition actually took.

Favors come either from action probabilities or from Q/advantage values.
The head prior is uniform throughout.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from metapop.kernels import cmi_terms, greedy_agreement, tie_first_argmax
from metapop.metaagent import MetaAgentParams, greedy_actions

FORMS = ("probability", "q_value", "advantage")


@dataclass(frozen=True)
class FavorTable:
    """``values[j, i]`` is head i's favor for the action taken in transition j."""

    values: np.ndarray
    form: str

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown favor form {self.form!r}")
        if self.values.ndim != 2:
            raise ValueError("favor values must be (N, K)")
        if self.form == "probability":
            if (self.values < 0).any() or (self.values > 1).any():
                raise ValueError("probability favors must lie in [0, 1]")
        elif not np.isfinite(self.values).all():
            raise ValueError("favors must be finite")


def uniform_prior(n: int, k: int) -> np.ndarray:
    return np.full((n, k), 1.0 / k)


def exact_cmi(cond_probs, samples, prior=None) -> float:
    """Average of log p(a_j|u_j,h_j) - log sum_i p(u_i|h_j) p(a_j|u_i,h_j).

    cond_probs: ``(N, K, A)``, one conditional table per transition.
    samples: ``(heads, actions)`` pair of length-N integer sequences.
    prior: ``(N, K)`` head prior, uniform when omitted.
    """
    probs = np.asarray(cond_probs, dtype=np.float64)
    heads, actions = (np.asarray(x, dtype=np.int64) for x in samples)
    n, k, a = probs.shape
    if heads.shape != (n,) or actions.shape != (n,):
        raise ValueError("need exactly one (head, action) sample per table")
    if not np.allclose(probs.sum(axis=2), 1.0, rtol=0, atol=1e-9):
        raise ValueError("every conditional distribution must sum to 1")
    if ((heads < 0) | (heads >= k) | (actions < 0) | (actions >= a)).any():
        raise ValueError("sampled head or action out of range")
    if (probs[np.arange(n), heads, actions] <= 0).any():
        raise ValueError("a sampled action has zero probability under its own head (log of zero)")
    prior = uniform_prior(n, k) if prior is None else np.asarray(prior, dtype=np.float64)
    if prior.shape != (n, k) or (prior < 0).any() or not np.allclose(prior.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("prior must be a nonnegative (N, K) table with rows summing to 1")
    return float(np.mean(cmi_terms(np.ascontiguousarray(probs), np.ascontiguousarray(prior), heads, actions)))


def surrogate_mi(favors: FavorTable, taken_heads) -> float:
    """``-(1/N) sum_j sum_{i != u_j} F(u_i, h_j, a_j)``."""
    vals = favors.values
    heads = np.asarray(taken_heads, dtype=np.int64)
    n, k = vals.shape
    if heads.shape != (n,):
        raise ValueError("need one taken head per transition")
    if ((heads < 0) | (heads >= k)).any():
        raise ValueError("taken head index out of range")
    if k == 1:
        warnings.warn("diversity is undefined for a single-head population; surrogate is 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    off = vals.sum(axis=1) - vals[np.arange(n), heads]
    return float(-off.mean())


def _check_actions(actions, n, n_actions):
    actions = np.asarray(actions, dtype=np.int64)
    if actions.shape != (n,):
        raise ValueError("need one taken action per transition")
    if ((actions < 0) | (actions >= n_actions)).any():
        raise ValueError(f"taken action outside [0, {n_actions})")
    return actions


def favor_from_probs(action_distributions, actions) -> FavorTable:
    """Favors from ``(N, K, A)`` action distributions, read at each taken action."""
    p = np.asarray(action_distributions, dtype=np.float64)
    if not np.allclose(p.sum(axis=2), 1.0, atol=1e-9):
        raise ValueError("action distributions must be normalized")
    actions = _check_actions(actions, p.shape[0], p.shape[2])
    return FavorTable(p[np.arange(p.shape[0]), :, actions], "probability")


def favor_from_q(q_matrices, actions, form: str = "q_value") -> FavorTable:
    """Favors from ``(N, K, A)`` Q (or advantage) tables, read at each taken action."""
    q = np.asarray(q_matrices, dtype=np.float64)
    if not np.isfinite(q).all():
        raise ValueError("Q matrices must be finite")
    actions = _check_actions(actions, q.shape[0], q.shape[2])
    return FavorTable(q[np.arange(q.shape[0]), :, actions], form)


def greedy_policy(q, eps: float = 0.0) -> np.ndarray:
    """Action distributions induced by (epsilon-)greedy play over ``(..., A)`` values.

    The argmax gets ``1 - eps`` and every other action ``eps / (A - 1)``.
    """
    q = np.asarray(q, dtype=np.float64)
    n_a = q.shape[-1]
    best = tie_first_argmax(q)
    off = eps / (n_a - 1) if n_a > 1 else 0.0
    p = np.full(q.shape, off)
    np.put_along_axis(p, best[..., None], 1.0 - eps if n_a > 1 else 1.0, axis=-1)
    return p


def _i_term(p_col: np.ndarray, u: int) -> float:
    """I_j from one column p(a_j | u_i, h_j) over heads, uniform prior."""
    return float(np.log(p_col[u]) - np.log(p_col.mean()))


@dataclass(frozen=True)
class Theorem1Result:
    applicable: bool
    holds: bool
    I_j_before: float
    I_j_after: float
    perturbed_head: int | None = None


def theorem1_check(F, F_prime, u: int, a: int, form: str = "probability", eps: float = 0.0) -> Theorem1Result:
    """Check monotonicity of I_j when one other head's favor for ``a`` drops.

    ``F`` and ``F_prime`` are ``(K, A)`` favor tables for a single transition
    that head ``u`` produced by taking action ``a``.  The perturbation is
    applicable when some head ``v != u`` has ``a`` as its argmax, its favor for
    ``a`` strictly decreased, and every other head's favor for ``a`` is
    unchanged.  For value forms the premise is stricter: nothing but
    ``F[v, a]`` may change, since any other entry can move an argmax.

    Probability form reads p(a|u_i) straight from the tables.  Value forms
    use (epsilon-)greedy policies over each row.
    """
    F = np.asarray(F, dtype=np.float64)
    Fp = np.asarray(F_prime, dtype=np.float64)
    if F.shape != Fp.shape or F.ndim != 2:
        raise ValueError("F and F_prime must be (K, A) tables of equal shape")
    if form not in FORMS:
        raise ValueError(f"unknown favor form {form!r}")
    k = F.shape[0]
    changed = np.flatnonzero(Fp[:, a] != F[:, a])
    v = int(changed[0]) if changed.size == 1 else None
    applicable = (
        v is not None
        and v != u
        and int(tie_first_argmax(F[v])) == a
        and Fp[v, a] < F[v, a]
    )
    if applicable and form != "probability":
        mask = np.ones_like(F, dtype=bool)
        mask[v, a] = False
        applicable = bool(np.array_equal(F[mask], Fp[mask]))
    if form == "probability":
        p_before, p_after = F[:, a], Fp[:, a]
    else:
        p_before, p_after = greedy_policy(F, eps)[:, a], greedy_policy(Fp, eps)[:, a]
    if p_before[u] <= 0 or k < 1:
        return Theorem1Result(False, False, float("nan"), float("nan"), v)
    before, after = _i_term(p_before, u), _i_term(p_after, u)
    if not applicable:
        return Theorem1Result(False, False, before, after, v)
    return Theorem1Result(True, after >= before - 1e-12, before, after, v)


def diff_prob(params: MetaAgentParams, contexts) -> float:
    """Fraction of (context, unordered head pair) cases where greedy actions agree."""
    if params.K < 2:
        raise ValueError("diff_prob needs at least two heads")
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    if contexts.shape[0] == 0:
        raise ValueError("need at least one context")
    return diff_prob_from_greedy(greedy_actions(params, contexts))


def diff_prob_from_greedy(greedy) -> float:
    greedy = np.ascontiguousarray(greedy, dtype=np.int64)
    if greedy.shape[1] < 2:
        raise ValueError("diff_prob needs at least two heads")
    agree, total = greedy_agreement(greedy)
    return agree / total
