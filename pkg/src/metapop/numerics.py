"""Dense MLP numerics written directly on numpy.

Networks are stored as ``(in, out)`` weight matrices so a batch ``x`` of shape
``(N, in)`` maps through ``x @ W + b``.  Hidden layers use a rectifier whose
subgradient at exactly zero is taken as 0; the output layer is linear.
Everything runs in float64.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from metapop.kernels import adam_update

__all__ = [
    "DenseNet",
    "StackedDenseNet",
    "Cache",
    "AdamState",
    "NonFiniteGradientError",
    "StaleCacheError",
    "seeded_rng",
    "init_dense",
    "init_stacked",
    "forward",
    "backward",
    "stacked_forward",
    "stacked_backward",
    "adam_step",
    "finite_diff_check",
    "FiniteDiffReport",
    "dense_to_bytes",
    "dense_from_bytes",
]


class NonFiniteGradientError(FloatingPointError):
    """Raised by :func:`adam_step` when a gradient holds NaN or Inf."""


class StaleCacheError(ValueError):
    """A forward cache was reused after its network changed or on another network."""


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream is bit-exact across platforms for a given seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


@dataclass(eq=False)
class DenseNet:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if not self.layer_dims or any(d <= 0 for d in self.layer_dims):
            raise ValueError(f"layer_dims must be positive integers, got {self.layer_dims}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need exactly one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ValueError(f"layer {i}: weight {w.shape}/bias {b.shape} do not chain with {want}")

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())

    def touch(self):
        """Mark parameters as modified so older forward caches are rejected."""
        self.version += 1


@dataclass(eq=False)
class StackedDenseNet:
    """K networks with identical ``layer_dims`` held as stacked arrays.

    ``weights[l]`` has shape ``(K, in, out)``.  All K members read the same
    input and their outputs come back as ``(N, K, out)``.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("a stacked net needs at least one layer")
        k = self.weights[0].shape[0]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (k, self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != want or b.shape != (k, want[2]):
                raise ValueError(f"stacked layer {i}: {w.shape}/{b.shape} do not match {want}")

    @property
    def count(self) -> int:
        return self.weights[0].shape[0]

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out

    def member(self, k: int) -> DenseNet:
        """Copy of member ``k`` as a standalone :class:`DenseNet`."""
        return DenseNet(self.layer_dims, [w[k].copy() for w in self.weights], [b[k].copy() for b in self.biases])

    def member_params(self) -> int:
        return sum(w[0].size + b[0].size for w, b in zip(self.weights, self.biases))

    def num_params(self) -> int:
        return self.count * self.member_params()

    def touch(self):
        self.version += 1

    def copy(self) -> "StackedDenseNet":
        return StackedDenseNet(self.layer_dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def from_members(cls, nets: Iterable[DenseNet]) -> "StackedDenseNet":
        nets = list(nets)
        dims = nets[0].layer_dims
        if any(n.layer_dims != dims for n in nets):
            raise ValueError("all stacked members must share layer_dims")
        n_layers = len(dims) - 1
        return cls(
            dims,
            [np.stack([n.weights[l] for n in nets]) for l in range(n_layers)],
            [np.stack([n.biases[l] for n in nets]) for l in range(n_layers)],
        )


def _fan_in_uniform(rng, fan_in, shape):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_dense(layer_dims, rng: np.random.Generator, out_scale: float = 1.0) -> DenseNet:
    """He-style uniform init (bound sqrt(6/fan_in)); biases start at zero.

    ``out_scale`` shrinks the final layer, which keeps initial Q-values small.
    """
    dims = tuple(int(d) for d in layer_dims)
    weights, biases = [], []
    for i in range(len(dims) - 1):
        w = _fan_in_uniform(rng, dims[i], (dims[i], dims[i + 1]))
        if i == len(dims) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(dims[i + 1]))
    return DenseNet(dims, weights, biases)


def init_stacked(layer_dims, count: int, rng: np.random.Generator, out_scale: float = 1.0) -> StackedDenseNet:
    return StackedDenseNet.from_members(init_dense(layer_dims, rng, out_scale) for _ in range(count))


@dataclass
class Cache:
    net_id: int
    version: int
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    squeeze: bool


def _check_cache(net, cache: Cache):
    if cache.net_id != id(net):
        raise StaleCacheError("cache was produced by a different network")
    if cache.version != net.version:
        raise StaleCacheError("network was updated after this cache was produced")


def forward(net: DenseNet, x) -> tuple[np.ndarray, Cache]:
    """Evaluate ``net`` on a vector ``(in,)`` or a batch ``(N, in)``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"input has trailing shape {x.shape[1:]}, expected ({net.in_dim},)")
    inputs, preacts = [], []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    out = h[0] if squeeze else h
    return out, Cache(id(net), net.version, inputs, preacts, squeeze)


def backward(net: DenseNet, cache: Cache, output_grad) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Return ``(grads, input_grad)``; ``grads`` is keyed like :meth:`DenseNet.tensors`."""
    _check_cache(net, cache)
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    if net.weights and g.shape != (cache.inputs[0].shape[0], net.out_dim):
        raise ValueError(f"output_grad has shape {g.shape}, expected (N, {net.out_dim})")
    grads: dict[str, np.ndarray] = {}
    last = len(net.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * (cache.preacts[i] > 0.0)
        grads[f"W{i}"] = cache.inputs[i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ net.weights[i].T
    ordered = {k: grads[k] for k in net.tensors()}
    return ordered, (g[0] if cache.squeeze else g)


def stacked_forward(net: StackedDenseNet, x) -> tuple[np.ndarray, Cache]:
    """Shared input ``(N, in)`` -> per-member outputs ``(N, K, out)``.

    Internally activations are laid out ``(K, N, width)`` so every layer is a
    single batched matmul; the first layer reads the shared input once.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise ValueError(f"input has shape {x.shape}, expected (N, {net.layer_dims[0]})")
    k = net.count
    inputs, preacts = [x], []
    w0 = net.weights[0]
    z = (x @ w0.transpose(1, 0, 2).reshape(w0.shape[1], -1)).reshape(x.shape[0], k, -1).transpose(1, 0, 2)
    z = z + net.biases[0][:, None, :]
    for i in range(1, len(net.weights)):
        preacts.append(z)
        h = np.maximum(z, 0.0)
        inputs.append(h)
        z = np.matmul(h, net.weights[i]) + net.biases[i][:, None, :]
    preacts.append(z)
    return z.transpose(1, 0, 2), Cache(id(net), net.version, inputs, preacts, False)


def stacked_backward(net: StackedDenseNet, cache: Cache, output_grad) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients per stacked tensor plus the input gradient summed over members."""
    _check_cache(net, cache)
    g = np.asarray(output_grad, dtype=np.float64).transpose(1, 0, 2)  # (K, N, out)
    grads: dict[str, np.ndarray] = {}
    last = len(net.weights) - 1
    for i in range(last, 0, -1):
        grads[f"W{i}"] = np.matmul(cache.inputs[i].transpose(0, 2, 1), g)
        grads[f"b{i}"] = g.sum(axis=1)
        g = np.matmul(g, net.weights[i].transpose(0, 2, 1)) * (cache.preacts[i - 1] > 0.0)
    x = cache.inputs[0]
    k, n, width = g.shape
    g_flat = g.transpose(1, 0, 2).reshape(n, k * width)
    grads["W0"] = (x.T @ g_flat).reshape(x.shape[1], k, width).transpose(1, 0, 2)
    grads["b0"] = g.sum(axis=1)
    dx = g_flat @ net.weights[0].transpose(0, 2, 1).reshape(k * width, -1)
    ordered = {name: grads[name] for name in net.tensors()}
    return ordered, dx


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def adam_step(state: AdamState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place.

    Moments are created lazily on the first call.  All gradients are checked
    for finiteness before any parameter is touched.
    """
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise ValueError(f"params and grads disagree on tensors: {sorted(missing)}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in tensor {name!r}")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        adam_update(p.reshape(-1), np.ascontiguousarray(grads[name], dtype=np.float64).reshape(-1),
                    state.m[name].reshape(-1), state.v[name].reshape(-1),
                    state.lr, state.beta1, state.beta2, c1, c2, state.eps_stab)
    return state


@dataclass
class FiniteDiffReport:
    passed: bool
    tolerance: float
    worst: float
    per_tensor: dict[str, float]

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={v:.2e}" for k, v in self.per_tensor.items())
        return f"{status} worst={self.worst:.2e} tol={self.tolerance:.0e} [{parts}]"


def finite_diff_check(
    params,
    loss: Callable[[], tuple[float, Mapping[str, np.ndarray]]],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> FiniteDiffReport:
    """Compare analytic gradients with central differences, element by element.

    ``params`` is anything with a ``tensors()`` method (or a mapping of live
    arrays).  ``loss()`` must read those arrays and return ``(value, grads)``.
    Relative error is ``|g - fd| / max(|g|, |fd|, floor)``.
    """
    tensors = params.tensors() if hasattr(params, "tensors") else dict(params)
    _, analytic = loss()
    per_tensor = {}
    for name, arr in tensors.items():
        g = np.asarray(analytic[name], dtype=np.float64)
        worst = 0.0
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss()[0]
            flat[idx] = orig - step
            down = loss()[0]
            flat[idx] = orig
            fd = (up - down) / (2 * step)
            a = g.reshape(-1)[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), floor)
            worst = max(worst, rel)
        per_tensor[name] = worst
    overall = max(per_tensor.values(), default=0.0)
    return FiniteDiffReport(overall <= tolerance, tolerance, overall, per_tensor)


# Serialization: magic, u16 version, u32 n_dims, u32 dims..., then float64 LE
# tensors W0, b0, W1, b1, ... each row-major.
_MAGIC = b"MPDN"
_VERSION = 1


def dense_to_bytes(net: DenseNet) -> bytes:
    head = _MAGIC + struct.pack("<HI", _VERSION, len(net.layer_dims))
    head += struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims)
    body = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in net.tensors().values())
    return head + body


def dense_from_bytes(blob: bytes) -> tuple[DenseNet, int]:
    """Parse one serialized net; returns it and the number of bytes consumed."""
    if blob[:4] != _MAGIC:
        raise ValueError("not a serialized DenseNet (bad magic)")
    version, n = struct.unpack_from("<HI", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported DenseNet blob version {version}")
    off = 10
    dims = struct.unpack_from(f"<{n}I", blob, off)
    off += 4 * n
    weights, biases = [], []
    for i in range(n - 1):
        shape = (dims[i], dims[i + 1])
        size = shape[0] * shape[1]
        weights.append(np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64))
        off += 8 * size
        biases.append(np.frombuffer(blob, dtype="<f8", count=dims[i + 1], offset=off).astype(np.float64))
        off += 8 * dims[i + 1]
    if off > len(blob):
        raise ValueError("truncated DenseNet blob")
    return DenseNet(dims, weights, biases), off
