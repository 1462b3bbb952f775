"""Experiment configuration: a flat INI text form with a canonical layout.

Sections are ``[env]``, ``[experiment]`` and ``[train]``.  Every key must be
known; anything else is a hard error rather than a silently ignored typo.  The
canonical text (sorted sections, sorted keys, normalized values) is what the
content hash is computed over.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from metapop.training import METHODS, MODES, TrainConfig

OUTPUT_ROOT_ENV = "METAPOP_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0..4"`` (inclusive range), ``"1,5,9"`` or a mix of both."""
    out: list[int] = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..", 1)
                lo_i, hi_i = int(lo), int(hi)
                if hi_i < lo_i:
                    raise ConfigError(f"empty seed range {part!r}")
                out.extend(range(lo_i, hi_i + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"bad seed list {text!r}") from exc
    if not out:
        raise ConfigError("seed list is empty")
    return tuple(out)


# ---------------------------------------------------------------------------
# value codecs keyed by the field annotation text


def _encode(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_encode(v) for v in value)
    return str(value)


def _decode(text: str, annotation: str, key: str):
    text = text.strip()
    optional = "None" in annotation
    base = annotation.replace("| None", "").strip()
    if optional and text.lower() == "none":
        return None
    try:
        if base == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "str":
            return text
        if base.startswith("tuple"):
            return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot read {key} = {text!r} as {annotation}") from exc
    raise ConfigError(f"no codec for {key} ({annotation})")


_TRAIN_FIELDS = {f.name: str(f.type) for f in dataclasses.fields(TrainConfig)}


@dataclass(frozen=True)
class ExperimentConfig:
    n_b: int = 1
    d: int = 10
    matrix_eps: float = 0.1
    method: str = "scapt"
    mode: str = "II"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = ""
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "mode", str(self.mode).upper())
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.n_b < 1 or self.d < 3 or not 0.0 <= self.matrix_eps < 1.0:
            raise ConfigError("env needs n_b >= 1, d >= 3 and 0 <= eps < 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    # -- convenience --------------------------------------------------------
    @property
    def K(self) -> int:
        return self.train.K

    @property
    def alpha(self) -> float:
        return self.train.alpha

    def with_train(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, train=dataclasses.replace(self.train, **changes))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else output_root() / self.short_hash()

    # -- canonical form -----------------------------------------------------
    def sections(self) -> dict[str, dict[str, str]]:
        return {
            "env": {"d": _encode(self.d), "eps": _encode(float(self.matrix_eps)), "n_b": _encode(self.n_b)},
            "experiment": {
                "method": self.method,
                "mode": str(self.mode).upper(),
                "output_dir": self.output_dir,
                "seeds": _encode(tuple(self.seeds)),
            },
            "train": {k: _encode(getattr(self.train, k)) for k in sorted(_TRAIN_FIELDS)},
        }

    def to_text(self) -> str:
        lines = []
        for sec, kv in sorted(self.sections().items()):
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in sorted(kv.items()))
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        """sha256 of the canonical text, ignoring where outputs are written."""
        return hashlib.sha256(self.replace(output_dir="").to_text().encode()).hexdigest()

    def short_hash(self) -> str:
        return self.hash()[:12]

    def to_json(self) -> dict:
        return {sec: dict(sorted(kv.items())) for sec, kv in sorted(self.sections().items())}

    # -- parsing ------------------------------------------------------------
    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str  # keys are case sensitive
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls.from_mapping({s: dict(parser.items(s)) for s in parser.sections()})

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {"env": {"n_b", "d", "eps"}, "experiment": {"method", "mode", "seeds", "output_dir"},
                 "train": set(_TRAIN_FIELDS)}
        for sec, kv in data.items():
            if sec not in known:
                raise ConfigError(f"unknown section [{sec}]")
            extra = sorted(set(kv) - known[sec])
            if extra:
                raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(extra)}")
        env = {k: str(v) for k, v in data.get("env", {}).items()}
        exp = {k: str(v) for k, v in data.get("experiment", {}).items()}
        tr = {k: _decode(str(v), _TRAIN_FIELDS[k], k) for k, v in data.get("train", {}).items()}
        kwargs = {}
        if "n_b" in env:
            kwargs["n_b"] = _decode(env["n_b"], "int", "n_b")
        if "d" in env:
            kwargs["d"] = _decode(env["d"], "int", "d")
        if "eps" in env:
            kwargs["matrix_eps"] = _decode(env["eps"], "float", "eps")
        if "method" in exp:
            kwargs["method"] = exp["method"].strip()
        if "mode" in exp:
            kwargs["mode"] = exp["mode"].strip().upper()
        if "seeds" in exp:
            kwargs["seeds"] = parse_seeds(exp["seeds"])
        if "output_dir" in exp:
            kwargs["output_dir"] = exp["output_dir"].strip()
        try:
            kwargs["train"] = TrainConfig(**tr)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kwargs)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        return cls.from_mapping(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        return cls.from_text(p.read_text())

    def save(self, path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_text())
        return p


def config_to_json_text(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n"
