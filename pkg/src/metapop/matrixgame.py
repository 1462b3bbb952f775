"""Cooperative single-step matrix games built from shifted diagonal blocks.

Player 1 picks a row, player 2 picks a column, and both receive the entry at
the intersection.  The episode ends after that single move.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW, COL = "row", "col"
ROLES = (ROW, COL)
OBS_DIM = 3


@dataclass(frozen=True, eq=False)
class PayoffMatrix:
    entries: np.ndarray
    n_b: int
    d: int
    eps: float

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.n_b * self.d

    @property
    def max_payoff(self) -> float:
        return float(self.entries.max())

    def __eq__(self, other):
        if not isinstance(other, PayoffMatrix):
            return NotImplemented
        return (self.n_b, self.d, self.eps) == (other.n_b, other.d, other.eps) and np.array_equal(
            self.entries, other.entries
        )

    def __hash__(self):
        return hash((self.n_b, self.d, self.eps, self.entries.tobytes()))


@dataclass(frozen=True)
class GameOutcome:
    row_action: int
    col_action: int
    reward: float
    done: bool = True


def base_block(d: int = 10, eps: float = 0.1) -> np.ndarray:
    """Unshifted block: identity with B[1][1]=0, B[1][0]=1 and eps side bands.

    Rows 2..d-1 (inclusive) get eps at columns i-1 and i+1 when 1 < j < d.
    """
    b = np.eye(d)
    b[1, 1] = 0.0
    b[1, 0] = 1.0
    for i in range(2, d):
        for j in (i - 1, i + 1):
            if 1 < j < d:
                b[i, j] = eps
    return b


def generate_shifted_block_matrix(n_b: int, d: int = 10, eps: float = 0.1) -> PayoffMatrix:
    if n_b < 1:
        raise ValueError(f"n_b must be >= 1, got {n_b}")
    if d < 3:
        raise ValueError(f"block size d must be >= 3, got {d}")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    flat = base_block(d, eps).reshape(-1)
    m = np.zeros((n_b * d, n_b * d))
    for k in range(n_b):
        s = (np.arange(d * d) + k) % (d * d)
        m[k * d : (k + 1) * d, k * d : (k + 1) * d] = flat[s].reshape(d, d)
    return PayoffMatrix(m, n_b, d, float(eps))


def play(m: PayoffMatrix, row: int, col: int) -> GameOutcome:
    if not (0 <= row < m.dim and 0 <= col < m.dim):
        raise ValueError(f"actions ({row}, {col}) outside [0, {m.dim})")
    return GameOutcome(int(row), int(col), float(m.entries[row, col]))


_OBS = {ROW: np.array([1.0, 0.0, 1.0]), COL: np.array([0.0, 1.0, 1.0])}


def observation(m: PayoffMatrix | None, role: str) -> np.ndarray:
    """One-hot seat plus a constant bias input.  The game carries no other state."""
    try:
        return _OBS[role].copy()
    except KeyError:
        raise ValueError(f"unknown role {role!r}; expected one of {ROLES}") from None


def role_observations() -> np.ndarray:
    """Both seat observations stacked as ``(2, OBS_DIM)``: row first."""
    return np.stack([_OBS[ROW], _OBS[COL]])


def save_csv(m: PayoffMatrix, path) -> Path:
    """Write entries as CSV and ``<path>.meta`` holding ``n_b=..,d=..,eps=..``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in m.entries:
            writer.writerow([repr(float(x)) for x in row])
    meta = path.with_name(path.name + ".meta")
    meta.write_text(f"n_b={m.n_b},d={m.d},eps={m.eps!r}\n")
    return path


def load_csv(path) -> PayoffMatrix:
    path = Path(path)
    meta_path = path.with_name(path.name + ".meta")
    if not meta_path.exists():
        raise FileNotFoundError(f"missing matrix metadata file {meta_path}")
    fields = dict(item.split("=", 1) for item in meta_path.read_text().strip().split(","))
    with path.open(newline="") as fh:
        entries = np.array([[float(x) for x in row] for row in csv.reader(fh) if row])
    n_b, d, eps = int(fields["n_b"]), int(fields["d"]), float(fields["eps"])
    if entries.shape != (n_b * d, n_b * d):
        raise ValueError(f"{path}: entries {entries.shape} disagree with metadata n_b={n_b}, d={d}")
    return PayoffMatrix(entries, n_b, d, eps)
