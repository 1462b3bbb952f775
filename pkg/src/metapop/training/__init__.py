"""Losses, replay, training modes and the act/learn loop."""
from metapop.training.losses import main_td_loss, partner_loss
from metapop.training.loop import (
    METHODS,
    DivergenceError,
    IndependentPopulation,
    MetricsTrace,
    TrainConfig,
    TrainResult,
    act_phase,
    group_scores,
    train,
)
from metapop.training.modes import MODES, ModeSpec, mode_spec
from metapop.training.replay import Batch, ReplayBuffer, Transition

__all__ = [
    "Batch",
    "DivergenceError",
    "IndependentPopulation",
    "METHODS",
    "MODES",
    "MetricsTrace",
    "ModeSpec",
    "ReplayBuffer",
    "TrainConfig",
    "TrainResult",
    "Transition",
    "act_phase",
    "group_scores",
    "main_td_loss",
    "mode_spec",
    "partner_loss",
    "train",
]
