"""Shared-trunk population network with dueling Q heads.

A :class:`MetaAgentParams` holds one trunk, one value stream and K advantage
heads.  Head ``u`` plays population member ``u``; the main agent is the same
structure with ``K == 1``.  Q-values are composed as
``Q(u, h, a) = v(h) + A(u, h, a) - mean_a A(u, h, a)``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from metapop import numerics as nx
from metapop.kernels import tie_first_argmax, unique_rows

DEFAULT_TRUNK_HIDDEN = (64,)
DEFAULT_HEAD_HIDDEN = (32,)
DEFAULT_VALUE_HIDDEN = (32,)


@dataclass(eq=False)
class MetaAgentParams:
    trunk: nx.DenseNet
    heads: nx.StackedDenseNet
    value: nx.DenseNet

    def __post_init__(self):
        feat = self.trunk.out_dim
        if self.heads.layer_dims[0] != feat or self.value.in_dim != feat:
            raise ValueError("heads and value stream must consume the trunk's output dimension")
        if self.value.out_dim != 1:
            raise ValueError("value stream must output a scalar")
        if self.heads.count < 1:
            raise ValueError("need at least one head")

    @property
    def K(self) -> int:
        return self.heads.count

    @property
    def n_actions(self) -> int:
        return self.heads.layer_dims[-1]

    @property
    def obs_dim(self) -> int:
        return self.trunk.in_dim

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.trunk.tensors("trunk."), **self.heads.tensors("heads."), **self.value.tensors("value.")}

    def num_params(self) -> int:
        return self.trunk.num_params() + self.heads.num_params() + self.value.num_params()

    def touch(self):
        self.trunk.touch()
        self.heads.touch()
        self.value.touch()

    def copy(self) -> "MetaAgentParams":
        return MetaAgentParams(self.trunk.copy(), self.heads.copy(), self.value.copy())

    def head_net(self, u: int) -> nx.DenseNet:
        return self.heads.member(u)

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())


HEAD_INITS = ("independent", "shared")

# The main agent is a one-head meta-agent.
AgentParams = MetaAgentParams


def init_meta_agent(
    obs_dim: int,
    n_actions: int,
    K: int,
    rng: np.random.Generator,
    trunk_hidden=DEFAULT_TRUNK_HIDDEN,
    head_hidden=DEFAULT_HEAD_HIDDEN,
    value_hidden=DEFAULT_VALUE_HIDDEN,
    out_scale: float = 0.1,
    head_init: str = "independent",
) -> MetaAgentParams:
    """Random init; the trunk's last width is the feature size every head reads.

    ``head_init="shared"`` copies one head draw into all K slots, so the heads
    only drift apart through the data they see and the diversity term.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if head_init not in HEAD_INITS:
        raise ValueError(f"unknown head_init {head_init!r}; expected one of {HEAD_INITS}")
    trunk = nx.init_dense((obs_dim, *trunk_hidden), rng)
    feat = trunk.out_dim
    if head_init == "shared":
        one = nx.init_dense((feat, *head_hidden, n_actions), rng, out_scale=out_scale)
        heads = nx.StackedDenseNet.from_members(one.copy() for _ in range(K))
    else:
        heads = nx.init_stacked((feat, *head_hidden, n_actions), K, rng, out_scale=out_scale)
    value = nx.init_dense((feat, *value_hidden, 1), rng, out_scale=out_scale)
    return MetaAgentParams(trunk, heads, value)


def init_agent(obs_dim: int, n_actions: int, rng: np.random.Generator, **sizes) -> AgentParams:
    return init_meta_agent(obs_dim, n_actions, 1, rng, **sizes)


def parameter_count(obs_dim: int, n_actions: int, K: int, trunk_hidden=DEFAULT_TRUNK_HIDDEN,
                    head_hidden=DEFAULT_HEAD_HIDDEN, value_hidden=DEFAULT_VALUE_HIDDEN) -> dict[str, int]:
    """Closed-form parameter counts: trunk + value + K * head."""

    def dense(dims):
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))

    trunk_dims = (obs_dim, *trunk_hidden)
    feat = trunk_dims[-1]
    trunk = dense(trunk_dims)
    head = dense((feat, *head_hidden, n_actions))
    value = dense((feat, *value_hidden, 1))
    return {"trunk": trunk, "value": value, "head": head, "total": trunk + value + K * head}


@dataclass
class QCache:
    trunk: nx.Cache
    heads: nx.Cache
    value: nx.Cache
    features: np.ndarray
    inverse: np.ndarray | None
    n_unique: int


def forward_all(params: MetaAgentParams, obs) -> tuple[np.ndarray, QCache]:
    """Q for every head on a batch: ``(N, obs_dim) -> (N, K, n_actions)``.

    The trunk runs once per distinct observation regardless of K.  Repeated
    observations (the norm in single-step games) are evaluated once and
    scattered back; :func:`backward_all` sums their cotangents accordingly.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise ValueError(f"observations have shape {obs.shape}, expected (N, {params.obs_dim})")
    inverse = None
    if obs.shape[0] > 1:
        uniq, inverse = unique_rows(np.ascontiguousarray(obs))
        if uniq.shape[0] == obs.shape[0]:
            inverse = None
        else:
            obs = uniq
    z, tc = nx.forward(params.trunk, obs)
    feat = np.maximum(z, 0.0)
    adv, hc = nx.stacked_forward(params.heads, feat)
    v, vc = nx.forward(params.value, feat)
    q = v[:, :, None] + adv - adv.mean(axis=2, keepdims=True)
    cache = QCache(tc, hc, vc, z, inverse, obs.shape[0])
    return (q if inverse is None else q[inverse]), cache


def backward_all(params: MetaAgentParams, cache: QCache, dq: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients from a cotangent ``dq`` of shape ``(N, K, n_actions)``."""
    if cache.inverse is not None:
        summed = np.zeros((cache.n_unique,) + dq.shape[1:])
        np.add.at(summed, cache.inverse, dq)
        dq = summed
    dadv = dq - dq.mean(axis=2, keepdims=True)
    dv = dq.sum(axis=(1, 2))[:, None]
    g_heads, dfeat = nx.stacked_backward(params.heads, cache.heads, dadv)
    g_value, dfeat_v = nx.backward(params.value, cache.value, dv)
    dz = (dfeat + dfeat_v) * (cache.features > 0.0)
    g_trunk, _ = nx.backward(params.trunk, cache.trunk, dz)
    grads = {}
    grads.update({f"trunk.{k}": g for k, g in g_trunk.items()})
    grads.update({f"heads.{k}": g for k, g in g_heads.items()})
    grads.update({f"value.{k}": g for k, g in g_value.items()})
    return grads


def q_values_all_heads(params: MetaAgentParams, ctx) -> np.ndarray:
    """``K x |A|`` Q matrix for a single decision context."""
    ctx = np.asarray(ctx, dtype=np.float64)
    if ctx.shape != (params.obs_dim,):
        raise ValueError(f"context has shape {ctx.shape}, expected ({params.obs_dim},)")
    q, _ = forward_all(params, ctx[None, :])
    return q[0]


def q_values(params: MetaAgentParams, ctx, u: int) -> np.ndarray:
    if not 0 <= u < params.K:
        raise IndexError(f"head index {u} outside [0, {params.K})")
    ctx = np.asarray(ctx, dtype=np.float64)
    if ctx.shape != (params.obs_dim,):
        raise ValueError(f"context has shape {ctx.shape}, expected ({params.obs_dim},)")
    z, _ = nx.forward(params.trunk, ctx)
    feat = np.maximum(z, 0.0)
    adv, _ = nx.forward(params.heads.member(u), feat)
    v, _ = nx.forward(params.value, feat)
    return v[0] + adv - adv.mean()


def greedy_actions(params: MetaAgentParams, obs) -> np.ndarray:
    """Greedy action per (context, head): ``(N, K)``; ties go to the lowest index."""
    q, _ = forward_all(params, obs)
    return tie_first_argmax(q)


def select_action(q, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over a Q vector.

    Exactly one uniform draw decides exploration; a second draw picks the
    action only when exploring.
    """
    q = np.asarray(q)
    if q.size == 0:
        raise ValueError("empty Q vector")
    if rng.random() < eps:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def clone_to_target(online: MetaAgentParams) -> MetaAgentParams:
    return online.copy()


def sync_target(online: MetaAgentParams, target: MetaAgentParams):
    """Copy online weights into an existing target in place."""
    src = online.tensors()
    for name, t in target.tensors().items():
        t[...] = src[name]
    target.touch()


# Checkpoint: b"MPCK", u32 header length, JSON header, then trunk blob,
# K head blobs and the value blob (numerics serialization each).
_CKPT_MAGIC = b"MPCK"


def to_checkpoint_bytes(params: MetaAgentParams, meta: dict | None = None) -> bytes:
    header = {
        "K": params.K,
        "trunk_dims": list(params.trunk.layer_dims),
        "head_dims": list(params.heads.layer_dims),
        "value_dims": list(params.value.layer_dims),
    }
    header.update(meta or {})
    hbytes = json.dumps(header, sort_keys=True).encode()
    parts = [nx.dense_to_bytes(params.trunk)]
    parts += [nx.dense_to_bytes(params.heads.member(u)) for u in range(params.K)]
    parts.append(nx.dense_to_bytes(params.value))
    return _CKPT_MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(parts)


def from_checkpoint_bytes(blob: bytes) -> tuple[MetaAgentParams, dict]:
    if blob[:4] != _CKPT_MAGIC:
        raise ValueError("not a meta-agent checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<I", blob, 4)
    header = json.loads(blob[8 : 8 + hlen].decode())
    off = 8 + hlen
    trunk, used = nx.dense_from_bytes(blob[off:])
    off += used
    heads = []
    for _ in range(header["K"]):
        net, used = nx.dense_from_bytes(blob[off:])
        heads.append(net)
        off += used
    value, used = nx.dense_from_bytes(blob[off:])
    return MetaAgentParams(trunk, nx.StackedDenseNet.from_members(heads), value), header


def save_checkpoint(params: MetaAgentParams, path, meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_checkpoint_bytes(params, meta))
    return path


def load_checkpoint(path) -> tuple[MetaAgentParams, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return from_checkpoint_bytes(path.read_bytes())
