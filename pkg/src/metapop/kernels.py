"""Hot inner loops, each in two flavours.

Every kernel has a ``*_numba`` loop version (compiled with ``@njit``) and a
``*_numpy`` vectorized version.  The unsuffixed public name is bound to one of
them according to :data:`metapop._accel.USE_NUMBA`.  Both flavours must agree;
``tests/test_kernels.py`` checks that and ``benchmarks/bench_kernels.py`` times
them against each other.
"""
import numpy as np

from metapop._accel import USE_NUMBA, backend_name, njit  # noqa: F401  (backend_name re-exported)

__all__ = [
    "adam_update",
    "unique_rows",
    "sumtree_update",
    "sumtree_find",
    "cmi_terms",
    "greedy_agreement",
    "tie_first_argmax",
]


# ---------------------------------------------------------------------------
# sum tree (binary heap layout: internal nodes 0..cap-2, leaves cap-1..2cap-2)


def sumtree_update_numpy(tree, capacity, leaf, value):
    idx = leaf + capacity - 1
    change = value - tree[idx]
    tree[idx] = value
    while idx > 0:
        idx = (idx - 1) // 2
        tree[idx] += change


@njit
def sumtree_update_numba(tree, capacity, leaf, value):
    idx = leaf + capacity - 1
    change = value - tree[idx]
    tree[idx] = value
    while idx > 0:
        idx = (idx - 1) // 2
        tree[idx] += change


def sumtree_find_numpy(tree, capacity, targets):
    """Descend all targets in lockstep, one tree level per iteration."""
    idx = np.zeros(targets.shape[0], dtype=np.int64)
    rem = targets.astype(np.float64).copy()
    active = idx < capacity - 1
    while active.any():
        left = 2 * idx[active] + 1
        go_left = tree[left] >= rem[active]
        right = left + 1
        new_idx = np.where(go_left, left, right)
        rem[active] = np.where(go_left, rem[active], rem[active] - tree[left])
        idx[active] = new_idx
        active = idx < capacity - 1
    return idx - (capacity - 1)


@njit
def sumtree_find_numba(tree, capacity, targets):
    out = np.empty(targets.shape[0], dtype=np.int64)
    for t in range(targets.shape[0]):
        v = targets[t]
        idx = 0
        while idx < capacity - 1:
            left = 2 * idx + 1
            if tree[left] >= v:
                idx = left
            else:
                v -= tree[left]
                idx = left + 1
        out[t] = idx - (capacity - 1)
    return out


# ---------------------------------------------------------------------------
# per-sample conditional mutual information terms


def cmi_terms_numpy(probs, prior, heads, actions):
    """I_j = log p(a_j|u_j,h_j) - log sum_i p(u_i|h_j) p(a_j|u_i,h_j).

    probs: (N, K, A); prior: (N, K); heads, actions: (N,) ints.
    """
    n = probs.shape[0]
    rows = np.arange(n)
    own = probs[rows, heads, actions]
    marginal = np.einsum("nk,nk->n", prior, probs[rows, :, actions])
    return np.log(own) - np.log(marginal)


@njit
def cmi_terms_numba(probs, prior, heads, actions):
    n = probs.shape[0]
    k = probs.shape[1]
    out = np.empty(n)
    for j in range(n):
        a = actions[j]
        marginal = 0.0
        for i in range(k):
            marginal += prior[j, i] * probs[j, i, a]
        out[j] = np.log(probs[j, heads[j], a]) - np.log(marginal)
    return out


# ---------------------------------------------------------------------------
# greedy action helpers


def tie_first_argmax_numpy(q):
    """Argmax over the last axis; ties go to the lowest index (np.argmax does this)."""
    return np.argmax(q, axis=-1)


@njit
def tie_first_argmax_numba(q):
    n, a = q.shape
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        best = 0
        for c in range(1, a):
            if q[r, c] > q[r, best]:
                best = c
        out[r] = best
    return out


def greedy_agreement_numpy(greedy):
    """Count head pairs (i < i') whose greedy actions agree, summed over contexts.

    greedy: (C, K) int array.  Returns (agreeing_pairs, total_pairs).
    """
    c, k = greedy.shape
    same = greedy[:, :, None] == greedy[:, None, :]
    upper = np.triu(np.ones((k, k), dtype=bool), 1)
    return int(same[:, upper].sum()), c * k * (k - 1) // 2


@njit
def greedy_agreement_numba(greedy):
    c, k = greedy.shape
    agree = 0
    for r in range(c):
        for i in range(k):
            for j in range(i + 1, k):
                if greedy[r, i] == greedy[r, j]:
                    agree += 1
    return agree, c * k * (k - 1) // 2


# ---------------------------------------------------------------------------
# Adam moment update on one flattened tensor (in place)


def adam_update_numpy(p, g, m, v, lr, beta1, beta2, c1, c2, eps_stab):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps_stab)


@njit
def adam_update_numba(p, g, m, v, lr, beta1, beta2, c1, c2, eps_stab):
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps_stab)


# ---------------------------------------------------------------------------
# distinct rows of a small batch (first-occurrence order)


def unique_rows_numpy(x):
    """Return ``(uniq, inverse)`` with rows of ``uniq`` in first-occurrence order."""
    uniq, first, inverse = np.unique(x, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return uniq[order], rank[inverse.reshape(-1)]


@njit
def unique_rows_numba(x):
    n, d = x.shape
    inverse = np.empty(n, dtype=np.int64)
    reps = np.empty(n, dtype=np.int64)
    n_uniq = 0
    for r in range(n):
        found = -1
        for u in range(n_uniq):
            same = True
            base = reps[u]
            for c in range(d):
                if x[r, c] != x[base, c]:
                    same = False
                    break
            if same:
                found = u
                break
        if found < 0:
            reps[n_uniq] = r
            found = n_uniq
            n_uniq += 1
        inverse[r] = found
    out = np.empty((n_uniq, d))
    for u in range(n_uniq):
        out[u] = x[reps[u]]
    return out, inverse


if USE_NUMBA:
    adam_update = adam_update_numba
    unique_rows = unique_rows_numba
    sumtree_update = sumtree_update_numba
    sumtree_find = sumtree_find_numba
    cmi_terms = cmi_terms_numba
    greedy_agreement = greedy_agreement_numba

    def tie_first_argmax(q):
        q = np.ascontiguousarray(q, dtype=np.float64)
        return tie_first_argmax_numba(q.reshape(-1, q.shape[-1])).reshape(q.shape[:-1])

    tie_first_argmax.__doc__ = tie_first_argmax_numpy.__doc__
else:
    adam_update = adam_update_numpy
    unique_rows = unique_rows_numpy
    sumtree_update = sumtree_update_numpy
    sumtree_find = sumtree_find_numpy
    cmi_terms = cmi_terms_numpy
    greedy_agreement = greedy_agreement_numpy
    tie_first_argmax = tie_first_argmax_numpy
