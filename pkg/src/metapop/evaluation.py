"""Cooperation scores, intra-framework cross-play and one-sided ZSC cross-play.

All scores are for the row/column matrix game: ``J(p1, p2)`` seats ``p1`` as
the row player and ``p2`` as the column player.  Metrics that mix seatings say
so explicitly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from metapop import matrixgame as mg
from metapop.metaagent import MetaAgentParams, forward_all, select_action

KINDS = ("main_agent", "meta_head", "stranger")


@dataclass(frozen=True)
class PolicyHandle:
    """A single population member viewed as a policy.

    ``eps`` is the exploration rate used when playing; evaluation handles are
    greedy (``eps == 0``) unless a caller deliberately asks otherwise.
    """

    kind: str
    params: MetaAgentParams
    head: int = 0
    name: str = ""
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0 <= self.head < self.params.K:
            raise IndexError(f"head {self.head} outside [0, {self.params.K})")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")

    @property
    def greedy(self) -> bool:
        return self.eps == 0.0

    @property
    def n_actions(self) -> int:
        return self.params.n_actions

    def q_roles(self) -> np.ndarray:
        """Q vectors for the row and column seats, shape ``(2, A)``."""
        return forward_all(self.params, mg.role_observations())[0][:, self.head, :]

    def greedy_actions(self) -> tuple[int, int]:
        q = self.q_roles()
        return int(np.argmax(q[0])), int(np.argmax(q[1]))


def main_handle(params: MetaAgentParams, name: str = "") -> PolicyHandle:
    return PolicyHandle("main_agent", params, 0, name)


def head_handles(params: MetaAgentParams, prefix: str = "head") -> list[PolicyHandle]:
    return [PolicyHandle("meta_head", params, u, f"{prefix}{u}") for u in range(params.K)]


def _check_compatible(p: PolicyHandle, matrix: mg.PayoffMatrix):
    if p.n_actions != matrix.dim or p.params.obs_dim != mg.OBS_DIM:
        raise ValueError(
            f"policy {p.name or p.kind} ({p.params.obs_dim} inputs, {p.n_actions} actions) "
            f"cannot take a seat in a {matrix.dim}x{matrix.dim} game")


def estimate_J(p1: PolicyHandle, p2: PolicyHandle, matrix: mg.PayoffMatrix, episodes: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Mean reward with ``p1`` in the row seat and ``p2`` in the column seat.

    Greedy pairs are deterministic, so a single game is played whatever
    ``episodes`` says.  ``episodes`` defaults to 1 for greedy pairs and 100
    otherwise.
    """
    _check_compatible(p1, matrix)
    _check_compatible(p2, matrix)
    if episodes is not None and episodes < 1:
        raise ValueError("episodes must be >= 1")
    if p1.greedy and p2.greedy:
        r, _ = p1.greedy_actions()
        _, c = p2.greedy_actions()
        return float(matrix.entries[r, c])
    if rng is None:
        raise ValueError("a random generator is required for exploring policies")
    n = 100 if episodes is None else episodes
    q1, q2 = p1.q_roles()[0], p2.q_roles()[1]
    total = 0.0
    for _ in range(n):
        total += matrix.entries[select_action(q1, p1.eps, rng), select_action(q2, p2.eps, rng)]
    return total / n


@dataclass(frozen=True)
class Score:
    mean: float
    stderr: float
    n: int

    def __str__(self):
        return f"{self.mean:.4f} ± {self.stderr:.4f} (n={self.n})"


def mean_stderr(values) -> Score:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("no values to aggregate")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return Score(float(v.mean()), se, int(v.size))


def pairwise_matrix(rows: Sequence[PolicyHandle], cols: Sequence[PolicyHandle], matrix: mg.PayoffMatrix,
                    episodes: int | None = None, rng=None) -> np.ndarray:
    """``out[i, j] = J(rows[i] as row player, cols[j] as column player)``."""
    return np.array([[estimate_J(a, b, matrix, episodes, rng) for b in cols] for a in rows], dtype=np.float64)


def intra_xp(models: Sequence[PolicyHandle], matrix: mg.PayoffMatrix, episodes: int | None = None,
             rng=None) -> tuple[Score, np.ndarray]:
    """Cross-play among models of one framework trained from different seeds.

    Averages J over all ordered pairs ``i != j``; since ``(i, j)`` and ``(j, i)``
    are both included, each pair is scored in both seatings.  The standard
    error is taken over those ordered pairs.  Returns the score and the full
    pairwise matrix (diagonal = self-play).
    """
    if len(models) < 2:
        raise ValueError("intra_xp needs at least two models")
    J = pairwise_matrix(models, models, matrix, episodes, rng)
    off = ~np.eye(len(models), dtype=bool)
    return mean_stderr(J[off]), J


def one_sided_zsc_xp(models: Sequence[PolicyHandle], strangers: Sequence[PolicyHandle], matrix: mg.PayoffMatrix,
                     episodes: int | None = None, rng=None) -> tuple[Score, np.ndarray]:
    """Score of tested models against a pool of agents they never trained with.

    Cell ``(i, t)`` averages both seatings of model i with stranger t.  Returns
    the mean ± stderr over cells and the ``models x strangers`` matrix.
    """
    if not strangers:
        raise ValueError("stranger pool is empty")
    if not models:
        raise ValueError("no models to evaluate")
    as_row = pairwise_matrix(models, strangers, matrix, episodes, rng)
    as_col = pairwise_matrix(strangers, models, matrix, episodes, rng).T
    cells = 0.5 * (as_row + as_col)
    return mean_stderr(cells), cells


def build_stranger_pool(matrix: mg.PayoffMatrix, n: int, seeds: Sequence[int] | None = None,
                        config=None) -> list[PolicyHandle]:
    """Train ``n`` independent self-play Q-learners and return greedy handles."""
    from metapop.training import TrainConfig, train

    if n < 1:
        raise ValueError("stranger pool size must be >= 1")
    seeds = list(range(1000, 1000 + n)) if seeds is None else list(seeds)
    if len(seeds) < n:
        raise ValueError(f"need {n} seeds, got {len(seeds)}")
    base = config if config is not None else TrainConfig()
    pool = []
    for s in seeds[:n]:
        cfg = type(base)(**{**base.__dict__, "seed": int(s)})
        res = train(cfg, matrix, method="self_play")
        pool.append(PolicyHandle("stranger", res.main, 0, f"stranger{s}"))
    return pool


@dataclass
class EvalReport:
    labels: list[str]
    pairwise: np.ndarray
    intra: Score
    stranger_labels: list[str] = field(default_factory=list)
    zsc_matrix: np.ndarray | None = None
    zsc: Score | None = None
    episodes: int = 1
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "intra_xp": {"mean": self.intra.mean, "stderr": self.intra.stderr, "n_pairs": self.intra.n},
            "self_play": mean_stderr(np.diag(self.pairwise)).__dict__,
            "n_models": len(self.labels),
            "models": self.labels,
            "episodes_per_pair": self.episodes,
            "meta": self.meta,
        }
        if self.zsc is not None:
            out["one_sided_zsc_xp"] = {"mean": self.zsc.mean, "stderr": self.zsc.stderr, "n_cells": self.zsc.n}
            out["strangers"] = self.stranger_labels
        return out

    def write(self, directory) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"pairwise": d / "pairwise.csv", "summary": d / "summary.json"}
        write_matrix_csv(paths["pairwise"], self.pairwise, self.labels, self.labels)
        if self.zsc_matrix is not None:
            paths["zsc"] = d / "zsc_matrix.csv"
            write_matrix_csv(paths["zsc"], self.zsc_matrix, self.labels, self.stranger_labels)
            paths["heatmap"] = d / "zsc_heatmap.svg"
            paths["heatmap"].write_text(heatmap_svg(self.zsc_matrix, self.labels, self.stranger_labels))
        paths["summary"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return paths


def evaluate(models: Sequence[PolicyHandle], matrix: mg.PayoffMatrix,
             strangers: Sequence[PolicyHandle] | None = None, meta: dict | None = None) -> EvalReport:
    intra, J = intra_xp(models, matrix)
    rep = EvalReport([m.name for m in models], J, intra, meta=dict(meta or {}))
    if strangers:
        rep.zsc, rep.zsc_matrix = one_sided_zsc_xp(models, strangers, matrix)
        rep.stranger_labels = [s.name for s in strangers]
    return rep


def write_matrix_csv(path, values: np.ndarray, row_labels, col_labels):
    lines = [",".join([""] + list(col_labels))]
    for label, row in zip(row_labels, values):
        lines.append(",".join([label] + [repr(float(x)) for x in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def _shade(t: float) -> str:
    # white -> deep blue; deeper colour means a higher score
    t = min(1.0, max(0.0, t))
    lo, hi = np.array([247, 251, 255]), np.array([8, 48, 107])
    r, g, b = (lo + (hi - lo) * t).round().astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(values: np.ndarray, row_labels=None, col_labels=None, vmax: float | None = None,
                cell: int = 28, title: str = "") -> str:
    """Standalone SVG heat map with per-cell values."""
    values = np.asarray(values, dtype=np.float64)
    n_r, n_c = values.shape
    row_labels = list(row_labels) if row_labels is not None else [str(i) for i in range(n_r)]
    col_labels = list(col_labels) if col_labels is not None else [str(j) for j in range(n_c)]
    top = max(values.max(), 1e-12) if vmax is None else vmax
    left, head = 90, 90 if col_labels else 20
    w, h = left + n_c * cell + 10, head + n_r * cell + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="9">']
    if title:
        out.append(f'<text x="4" y="12" font-size="12">{_esc(title)}</text>')
    for j, lab in enumerate(col_labels):
        x = left + j * cell + cell / 2
        out.append(f'<text x="{x:.1f}" y="{head - 4}" transform="rotate(-60 {x:.1f} {head - 4})">{_esc(lab)}</text>')
    for i in range(n_r):
        y = head + i * cell
        out.append(f'<text x="{left - 4}" y="{y + cell / 2 + 3:.1f}" text-anchor="end">{_esc(row_labels[i])}</text>')
        for j in range(n_c):
            v = values[i, j]
            t = v / top
            x = left + j * cell
            ink = "#ffffff" if t > 0.55 else "#000000"
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_shade(t)}" stroke="#cccccc"/>')
            out.append(f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 3:.1f}" text-anchor="middle" '
                       f'fill="{ink}">{v:.2f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
