"""Ring-buffer experience replay with optional proportional prioritization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from metapop.kernels import sumtree_find, sumtree_update

NO_HEAD = -1


@dataclass(frozen=True)
class Transition:
    ctx: np.ndarray
    u: int
    a: int
    r: float
    next_ctx: np.ndarray
    done: bool = True


@dataclass
class Batch:
    obs: np.ndarray
    u: np.ndarray
    a: np.ndarray
    r: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.a.shape[0]

    @classmethod
    def from_transitions(cls, items) -> "Batch":
        items = list(items)
        return cls(
            np.stack([t.ctx for t in items]).astype(np.float64),
            np.array([t.u for t in items], dtype=np.int64),
            np.array([t.a for t in items], dtype=np.int64),
            np.array([t.r for t in items], dtype=np.float64),
            np.stack([t.next_ctx for t in items]).astype(np.float64),
            np.array([t.done for t in items], dtype=bool),
        )


class ReplayBuffer:
    """FIFO store of transitions.

    ``mode="uniform"`` samples with replacement at equal probability and unit
    importance weights.  ``mode="proportional"`` samples item j with
    probability proportional to ``(|td_j| + eps_per) ** alpha_per`` through a
    sum tree; weights are ``(N * P(j)) ** -beta_per`` divided by the batch max.
    New items enter at the largest priority seen so far.
    """

    def __init__(self, capacity: int, obs_dim: int, mode: str = "uniform", alpha_per: float = 0.6,
                 beta_per: float = 0.4, eps_per: float = 1e-6):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if mode not in ("uniform", "proportional"):
            raise ValueError(f"unknown priority mode {mode!r}")
        self.capacity = int(capacity)
        self.mode = mode
        self.alpha_per = alpha_per
        self.beta_per = beta_per
        self.eps_per = eps_per
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.u = np.full(capacity, NO_HEAD, dtype=np.int64)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0
        self._tree = np.zeros(2 * capacity - 1) if mode == "proportional" else None
        self._max_priority = 1.0

    def __len__(self):
        return self._size

    def push(self, t: Transition):
        i = self._next
        self.obs[i] = t.ctx
        self.next_obs[i] = t.next_ctx
        self.u[i] = t.u
        self.a[i] = t.a
        self.r[i] = t.r
        self.done[i] = t.done
        if self._tree is not None:
            sumtree_update(self._tree, self.capacity, i, self._max_priority**self.alpha_per)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, indices) -> Batch:
        idx = np.asarray(indices, dtype=np.int64)
        return Batch(self.obs[idx], self.u[idx], self.a[idx], self.r[idx], self.next_obs[idx], self.done[idx])

    def probabilities(self) -> np.ndarray:
        """Sampling probability of every stored slot (in storage order)."""
        if self._size == 0:
            raise ValueError("buffer is empty")
        if self._tree is None:
            return np.full(self._size, 1.0 / self._size)
        leaves = self._tree[self.capacity - 1 : self.capacity - 1 + self._size]
        return leaves / self._tree[0]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[Batch, np.ndarray, np.ndarray]:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if n > self._size:
            raise ValueError(f"requested {n} items from a buffer holding {self._size}")
        if self._tree is None:
            idx = rng.integers(0, self._size, size=n)
            return self.get(idx), idx, np.ones(n)
        total = self._tree[0]
        targets = rng.random(n) * total
        idx = sumtree_find(self._tree, self.capacity, targets)
        # guard against float round-off landing on an unused leaf
        idx = np.minimum(idx, self._size - 1)
        probs = self._tree[idx + self.capacity - 1] / total
        weights = (self._size * probs) ** (-self.beta_per)
        return self.get(idx), idx, weights / weights.max()

    def update_priorities(self, indices, td_errors):
        if self._tree is None:
            return
        for i, d in zip(np.asarray(indices, dtype=np.int64), np.asarray(td_errors, dtype=np.float64)):
            p = abs(float(d)) + self.eps_per
            self._max_priority = max(self._max_priority, p)
            sumtree_update(self._tree, self.capacity, int(i), p**self.alpha_per)
