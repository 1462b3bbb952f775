"""Acting, learning and the outer training loop."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from metapop import matrixgame as mg
from metapop import numerics as nx
from metapop.diversity import diff_prob_from_greedy
from metapop.kernels import tie_first_argmax
from metapop.metaagent import (
    DEFAULT_HEAD_HIDDEN,
    DEFAULT_TRUNK_HIDDEN,
    DEFAULT_VALUE_HIDDEN,
    HEAD_INITS,
    MetaAgentParams,
    clone_to_target,
    forward_all,
    init_agent,
    init_meta_agent,
    select_action,
    sync_target,
)
from metapop.training.losses import GATES, main_td_loss, partner_loss
from metapop.training.modes import (
    BUFFER_A,
    BUFFER_B,
    MAIN_SIDE,
    MM,
    MP,
    PARTNER_SIDE,
    PP,
    SELF_PLAY,
    ModeSpec,
    mode_spec,
)
from metapop.training.replay import NO_HEAD, ReplayBuffer, Transition

log = logging.getLogger(__name__)

METHODS = ("scapt", "alpha_zero_ablation", "self_play", "individual_population")


class DivergenceError(FloatingPointError):
    """A loss or parameter became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.999
    alpha: float = 1.0
    lr: float = 1e-3
    batch_size: int = 128
    iterations: int = 2000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int | None = None  # None: half of `iterations`
    target_sync: int = 100
    K: int = 2
    seed: int = 0
    buffer_capacity: int = 10_000
    priority: str = "uniform"
    double_q: bool = False
    diversity_gate: str = "greedy"
    head_init: str = "shared"
    learn_start: int | None = None  # None: batch_size
    episodes_per_group: int = 1
    log_every: int = 50
    trunk_hidden: tuple[int, ...] = DEFAULT_TRUNK_HIDDEN
    head_hidden: tuple[int, ...] = DEFAULT_HEAD_HIDDEN
    value_hidden: tuple[int, ...] = DEFAULT_VALUE_HIDDEN

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lr <= 0 or self.batch_size < 1 or self.iterations < 0 or self.K < 1:
            raise ValueError("lr, batch_size and K must be positive; iterations >= 0")
        if self.target_sync < 1 or self.buffer_capacity < 1 or self.log_every < 1 or self.episodes_per_group < 1:
            raise ValueError("target_sync, buffer_capacity, log_every and episodes_per_group must be positive")
        if not (0.0 <= self.eps_end <= 1.0 and 0.0 <= self.eps_start <= 1.0):
            raise ValueError("epsilon bounds must lie in [0, 1]")
        if self.diversity_gate not in GATES:
            raise ValueError(f"unknown diversity gate {self.diversity_gate!r}")
        if self.head_init not in HEAD_INITS:
            raise ValueError(f"unknown head_init {self.head_init!r}")
        if self.priority not in ("uniform", "proportional"):
            raise ValueError(f"unknown priority mode {self.priority!r}")

    @property
    def decay_steps(self) -> int:
        return self.eps_decay_steps if self.eps_decay_steps is not None else max(1, self.iterations // 2)

    @property
    def warmup(self) -> int:
        return self.learn_start if self.learn_start is not None else self.batch_size

    def epsilon(self, it: int) -> float:
        frac = min(1.0, it / self.decay_steps)
        return self.eps_start + (self.eps_end - self.eps_start) * frac

    def sizes(self) -> dict:
        return {"trunk_hidden": self.trunk_hidden, "head_hidden": self.head_hidden, "value_hidden": self.value_hidden}


# Hanabi-scale values from the original setup; runnable but far beyond desk budgets.
HANABI_PRESET = TrainConfig(lr=6.25e-5, buffer_capacity=35_000, batch_size=128, gamma=0.999,
                            iterations=500 * 50, trunk_hidden=(512,), head_hidden=(512,), value_hidden=(512,))


class IndependentPopulation:
    """K separately parameterized one-head agents standing in for a population."""

    def __init__(self, members: list[MetaAgentParams]):
        if not members:
            raise ValueError("population needs at least one member")
        self.members = members

    @property
    def K(self) -> int:
        return len(self.members)

    def num_params(self) -> int:
        return sum(m.num_params() for m in self.members)

    def copy(self) -> "IndependentPopulation":
        return IndependentPopulation([m.copy() for m in self.members])

    def all_finite(self) -> bool:
        return all(m.all_finite() for m in self.members)


def population_q(pop, obs) -> np.ndarray:
    """Q for every population member on a batch: ``(N, K, A)``."""
    if isinstance(pop, IndependentPopulation):
        return np.concatenate([forward_all(m, obs)[0] for m in pop.members], axis=1)
    return forward_all(pop, obs)[0]


@dataclass
class MetricsRow:
    iteration: int
    mm_score: float
    mp_score: float
    pp_score: float
    diff_prob: float
    main_loss: float
    partner_loss: float
    epsilon: float


COLUMNS = ("iteration", "mm_score", "mp_score", "pp_score", "diff_prob", "main_loss", "partner_loss", "epsilon")


@dataclass
class MetricsTrace:
    rows: list[MetricsRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in self.rows:
            writer.writerow([r.iteration] + [repr(float(getattr(r, c))) for c in COLUMNS[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def read_csv(cls, path) -> "MetricsTrace":
        with Path(path).open() as fh:
            reader = csv.DictReader(fh)
            rows = [MetricsRow(int(r["iteration"]), *(float(r[c]) for c in COLUMNS[1:])) for r in reader]
        return cls(rows)


def greedy_role_actions(q_roles: np.ndarray) -> np.ndarray:
    """``(2, K, A)`` role-by-member Q -> ``(2, K)`` greedy actions (row seat first)."""
    return tie_first_argmax(q_roles)


def group_scores(matrix: mg.PayoffMatrix, main_greedy, partner_greedy=None) -> dict[str, float]:
    """Greedy cooperation scores.

    ``main_greedy`` is ``(row_action, col_action)``; ``partner_greedy`` is a
    ``(2, K)`` array.  MP averages both seatings over all members, PP averages
    all ordered member pairs including a member with itself.
    """
    m = matrix.entries
    out = {"MM": float(m[main_greedy[0], main_greedy[1]]), "MP": float("nan"), "PP": float("nan")}
    if partner_greedy is not None:
        rows, cols = partner_greedy
        out["MP"] = float(0.5 * (m[main_greedy[0], cols].mean() + m[rows, main_greedy[1]].mean()))
        out["PP"] = float(m[np.ix_(rows, cols)].mean())
    return out


@dataclass
class Buffers:
    A: ReplayBuffer
    B: ReplayBuffer | None


def _store(buffers: Buffers, spec: ModeSpec, group: str, side: str, t: Transition):
    dest = spec.route(group, side)
    if dest == BUFFER_A:
        buffers.A.push(t)
    elif dest == BUFFER_B and buffers.B is not None:
        buffers.B.push(t)


def act_phase(spec: ModeSpec, main: MetaAgentParams, partners, matrix: mg.PayoffMatrix, buffers: Buffers,
              eps: float, rng: np.random.Generator, episodes: int = 1) -> dict[str, float]:
    """Play ``episodes`` single-step games per act group and route the transitions.

    Seats are drawn uniformly for MP games.  MP uses one uniformly sampled head;
    PP draws a head for each seat independently.  Returns the mean reward per
    group (NaN for groups the mode does not play).
    """
    obs = mg.role_observations()
    q_main = forward_all(main, obs)[0][:, 0, :]  # (2, A)
    q_part = population_q(partners, obs) if partners is not None else None  # (2, K, A)
    stats = {MM: [], MP: [], PP: []}
    for group in spec.act_groups:
        for _ in range(episodes):
            if group == MM:
                a_row = select_action(q_main[0], eps, rng)
                a_col = select_action(q_main[1], eps, rng)
                r = mg.play(matrix, a_row, a_col).reward
                _store(buffers, spec, MM, MAIN_SIDE, Transition(obs[0], NO_HEAD, a_row, r, obs[0], True))
                _store(buffers, spec, MM, MAIN_SIDE, Transition(obs[1], NO_HEAD, a_col, r, obs[1], True))
            elif group == MP:
                u = int(rng.integers(partners.K))
                main_seat = int(rng.integers(2))
                a_main = select_action(q_main[main_seat], eps, rng)
                a_part = select_action(q_part[1 - main_seat, u], eps, rng)
                row, col = (a_main, a_part) if main_seat == 0 else (a_part, a_main)
                r = mg.play(matrix, row, col).reward
                o_m, o_p = obs[main_seat], obs[1 - main_seat]
                # the partner's head index rides along on the main side too
                _store(buffers, spec, MP, MAIN_SIDE, Transition(o_m, u, a_main, r, o_m, True))
                _store(buffers, spec, MP, PARTNER_SIDE, Transition(o_p, u, a_part, r, o_p, True))
            elif group == PP:
                u_row = int(rng.integers(partners.K))
                u_col = int(rng.integers(partners.K))
                a_row = select_action(q_part[0, u_row], eps, rng)
                a_col = select_action(q_part[1, u_col], eps, rng)
                r = mg.play(matrix, a_row, a_col).reward
                _store(buffers, spec, PP, PARTNER_SIDE, Transition(obs[0], u_row, a_row, r, obs[0], True))
                _store(buffers, spec, PP, PARTNER_SIDE, Transition(obs[1], u_col, a_col, r, obs[1], True))
            stats[group].append(r)
    return {g: (float(np.mean(v)) if v else float("nan")) for g, v in stats.items()}


@dataclass
class TrainResult:
    main: MetaAgentParams
    partners: MetaAgentParams | IndependentPopulation | None
    trace: MetricsTrace
    config: TrainConfig
    mode: str
    method: str

    def greedy_profile(self) -> dict[str, np.ndarray]:
        obs = mg.role_observations()
        prof = {"main": greedy_role_actions(forward_all(self.main, obs)[0])[:, 0]}
        if self.partners is not None:
            prof["partners"] = greedy_role_actions(population_q(self.partners, obs))
        return prof


class _Learner:
    """Online/target pair with its optimizer state."""

    def __init__(self, online, lr):
        self.online = online
        self.target = clone_to_target(online)
        self.opt = nx.AdamState(lr=lr)

    def apply(self, grads):
        nx.adam_step(self.opt, self.online.tensors(), grads)
        self.online.touch()

    def sync(self):
        sync_target(self.online, self.target)


def _check_finite(loss, who, it):
    if not np.isfinite(loss):
        raise DivergenceError(f"{who} loss became non-finite ({loss}) at iteration {it}")


def train(config: TrainConfig, matrix: mg.PayoffMatrix, mode: str = "II", method: str = "scapt") -> TrainResult:
    """Run the act/learn loop and return trained agents plus a metrics trace.

    Each iteration plays every act group of the mode once (``episodes_per_group``
    times), then takes one gradient step on buffer A (main agent) and one on
    buffer B (partners) once each holds ``warmup`` transitions.  Targets are
    refreshed every ``target_sync`` iterations.  One trace row is recorded
    every ``log_every`` iterations and after the final one.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    rng = nx.seeded_rng(config.seed)
    init_rng = nx.seeded_rng(config.seed + 0x9E3779B97F4A7C15)
    obs_dim, n_actions = mg.OBS_DIM, matrix.dim
    alpha = 0.0 if method in ("alpha_zero_ablation", "individual_population") else config.alpha

    main = _Learner(init_agent(obs_dim, n_actions, init_rng, **config.sizes()), config.lr)
    spec = SELF_PLAY if method == "self_play" else mode_spec(mode)
    partners = None
    if method in ("scapt", "alpha_zero_ablation"):
        partners = _Learner(init_meta_agent(obs_dim, n_actions, config.K, init_rng, head_init=config.head_init,
                                                   **config.sizes()), config.lr)
    elif method == "individual_population":
        members = [_Learner(init_agent(obs_dim, n_actions, init_rng, **config.sizes()), config.lr)
                   for _ in range(config.K)]

    def buf():
        return ReplayBuffer(config.buffer_capacity, obs_dim, config.priority)

    buffers = Buffers(buf(), buf() if method != "self_play" else None)
    trace = MetricsTrace()

    def partner_params():
        if partners is not None:
            return partners.online
        if method == "individual_population":
            return IndependentPopulation([m.online for m in members])
        return None

    def record(it, eps, main_losses, partner_losses):
        obs = mg.role_observations()
        main_g = greedy_role_actions(forward_all(main.online, obs)[0])[:, 0]
        pop = partner_params()
        part_g = greedy_role_actions(population_q(pop, obs)) if pop is not None else None
        scores = group_scores(matrix, main_g, part_g)
        dp = diff_prob_from_greedy(part_g) if part_g is not None and part_g.shape[1] >= 2 else float("nan")
        trace.rows.append(MetricsRow(
            it, scores["MM"], scores["MP"], scores["PP"], dp,
            float(np.mean(main_losses)) if main_losses else float("nan"),
            float(np.mean(partner_losses)) if partner_losses else float("nan"),
            eps,
        ))

    main_losses: list[float] = []
    partner_losses: list[float] = []
    eps = config.eps_start
    for it in range(config.iterations):
        eps = config.epsilon(it)
        act_phase(spec, main.online, partner_params(), matrix, buffers, eps, rng, config.episodes_per_group)

        if len(buffers.A) >= config.warmup:
            batch, idx, w = buffers.A.sample(config.batch_size, rng)
            loss, grads, td = main_td_loss(main.online, main.target, batch, config.gamma, w, config.double_q)
            _check_finite(loss, "main", it)
            main.apply(grads)
            buffers.A.update_priorities(idx, td)
            main_losses.append(loss)

        if buffers.B is not None and len(buffers.B) >= config.warmup:
            batch, idx, w = buffers.B.sample(config.batch_size, rng)
            if partners is not None:
                loss, grads, td = partner_loss(partners.online, partners.target, batch, config.gamma, alpha, w,
                                               config.double_q, config.diversity_gate)
                _check_finite(loss, "partner", it)
                partners.apply(grads)
            else:
                loss, td = _independent_step(members, batch, w, config, it)
            buffers.B.update_priorities(idx, td)
            partner_losses.append(loss)

        if (it + 1) % config.target_sync == 0:
            main.sync()
            if partners is not None:
                partners.sync()
            elif method == "individual_population":
                for m in members:
                    m.sync()

        if (it + 1) % config.log_every == 0 or it + 1 == config.iterations:
            record(it + 1, eps, main_losses, partner_losses)
            main_losses, partner_losses = [], []

    if not main.online.all_finite():
        raise DivergenceError("main agent parameters became non-finite")
    return TrainResult(main.online, partner_params(), trace, config, spec.mode, method)


def _independent_step(members, batch, weights, config, it):
    """One TD step per population member on the transitions that member produced."""
    td = np.zeros(len(batch))
    losses = []
    for k, m in enumerate(members):
        sel = np.flatnonzero(batch.u == k)
        if sel.size == 0:
            continue
        sub = type(batch)(batch.obs[sel], batch.u[sel], batch.a[sel], batch.r[sel], batch.next_obs[sel],
                          batch.done[sel])
        loss, grads, sub_td = main_td_loss(m.online, m.target, sub, config.gamma, weights[sel], config.double_q)
        _check_finite(loss, f"member {k}", it)
        m.apply(grads)
        td[sel] = sub_td
        losses.append(loss * sel.size)
    return (sum(losses) / len(batch) if losses else 0.0), td
