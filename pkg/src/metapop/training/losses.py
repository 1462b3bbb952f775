"""TD losses for the main agent and the partner population."""
from __future__ import annotations

import numpy as np

from metapop.metaagent import MetaAgentParams, backward_all, forward_all
from metapop.training.replay import Batch


def _bootstrap(online, target, next_obs, heads, double):
    q_next_t, _ = forward_all(target, next_obs)
    rows = np.arange(next_obs.shape[0])
    q_next_t = q_next_t[rows, heads]
    if not double:
        return q_next_t.max(axis=1)
    q_next_o, _ = forward_all(online, next_obs)
    best = np.argmax(q_next_o[rows, heads], axis=1)
    return q_next_t[rows, best]


def main_td_loss(online: MetaAgentParams, target: MetaAgentParams, batch: Batch, gamma: float,
                 weights=None, double: bool = False):
    """Mean squared TD residual for a one-head agent.

    Returns ``(loss, grads, td_error)``; gradients flow through ``online`` only.
    Any head index carried by the transitions is ignored.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    heads = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    q, cache = forward_all(online, batch.obs)
    q_sa = q[rows, 0, batch.a]
    boot = _bootstrap(online, target, batch.next_obs, heads, double)
    td = batch.r + gamma * (1.0 - batch.done) * boot - q_sa
    loss = float(np.mean(w * td**2))
    dq = np.zeros_like(q)
    dq[rows, 0, batch.a] = -2.0 * w * td / n
    return loss, backward_all(online, cache, dq), td


GATES = ("none", "greedy")


def partner_loss(online: MetaAgentParams, target: MetaAgentParams, batch: Batch, gamma: float, alpha: float,
                 weights=None, double: bool = False, gate: str = "none"):
    """Per-head TD loss plus ``alpha`` times the other heads' Q on the taken action.

    Minimizing the second term pushes every head ``i != u_j`` away from the
    action ``a_j`` head ``u_j`` chose.  Importance weights scale the TD part.

    ``gate="greedy"`` keeps a head in the second term only while ``a_j`` is its
    current greedy action.  Lowering Q below that point cannot change any greedy
    policy, and without an anchor the ungated term drives rarely visited
    actions toward minus infinity.  The mask is treated as a constant.
    """
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}; expected one of {GATES}")
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    if (batch.u < 0).any() or (batch.u >= online.K).any():
        raise ValueError("every partner transition needs a valid head index")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    rows = np.arange(n)
    q, cache = forward_all(online, batch.obs)
    q_sa = q[rows, batch.u, batch.a]
    boot = _bootstrap(online, target, batch.next_obs, batch.u, double)
    td = batch.r + gamma * (1.0 - batch.done) * boot - q_sa
    mask = np.ones((n, online.K))
    if gate == "greedy":
        mask = (np.argmax(q, axis=2) == batch.a[:, None]).astype(np.float64)
    mask[rows, batch.u] = 0.0
    off_heads = (mask * q[rows, :, batch.a]).sum(axis=1)
    loss = float(np.mean(w * td**2 + alpha * off_heads))
    dq = np.zeros_like(q)
    dq[rows, :, batch.a] = alpha * mask / n
    dq[rows, batch.u, batch.a] = -2.0 * w * td / n
    return loss, backward_all(online, cache, dq), td
