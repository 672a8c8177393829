"""Shared value types and experiment configuration.

Conventions used by every module:

* day of week is encoded Monday=0 ... Sunday=6,
* month is encoded January=0 ... December=11,
* the sensitive attribute is binary occupancy, label 1 meaning occupied.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

METHODS = ("CAL", "DI")
SI_CASES = ("1", "2", "3", "2*")


class ConfigError(ValueError):
    """Raised when an experiment configuration field is out of range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SideInfo:
    day_of_week: int
    month: int

    def __post_init__(self):
        if not 0 <= int(self.day_of_week) <= 6:
            raise ValueError(f"day_of_week must be in 0..6, got {self.day_of_week}")
        if not 0 <= int(self.month) <= 11:
            raise ValueError(f"month must be in 0..11, got {self.month}")

    @classmethod
    def from_date(cls, date: dt.date) -> "SideInfo":
        return cls(day_of_week=date.weekday(), month=date.month - 1)


@dataclass(frozen=True, eq=False)
class LoadSequence:
    """One window of aligned power readings ``y`` (kW) and occupancy ``x``."""

    y: np.ndarray
    x: np.ndarray
    side: SideInfo
    house_id: str = ""
    date: dt.date | None = None

    def __post_init__(self):
        y = _frozen_array(self.y, np.float64)
        x = _frozen_array(self.x, np.int8)
        if y.ndim != 1 or x.ndim != 1:
            raise ValueError("y and x must be one-dimensional")
        if len(y) != len(x):
            raise ValueError(f"length mismatch: len(y)={len(y)} len(x)={len(x)}")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("power readings must be finite and nonnegative")
        if np.any((x != 0) & (x != 1)):
            raise ValueError("occupancy labels must be 0 or 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def seq_id(self) -> str:
        date = self.date.isoformat() if self.date is not None else "nodate"
        return f"{self.house_id}:{date}"


@dataclass(frozen=True, eq=False)
class ReleasedSequence:
    z: np.ndarray

    def __post_init__(self):
        z = _frozen_array(self.z, np.float64)
        if z.ndim != 1:
            raise ValueError("z must be one-dimensional")
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return len(self.z)


@dataclass(frozen=True, eq=False)
class NoiseSeed:
    """Uniform seed noise of shape ``(T, m)`` with entries in [0, 1)."""

    u: np.ndarray

    def __post_init__(self):
        u = _frozen_array(self.u, np.float64)
        if u.ndim != 2:
            raise ValueError("seed noise must have shape (T, m)")
        if np.any(u < 0) or np.any(u >= 1):
            raise ValueError("seed noise entries must lie in [0, 1)")
        object.__setattr__(self, "u", u)

    @classmethod
    def sample(cls, T: int, m: int, rng: np.random.Generator) -> "NoiseSeed":
        return cls(rng.random((T, m)))


@dataclass(frozen=True, eq=False)
class AdversaryOutput:
    """Per-step probabilities ``q[t] = P(X_t = 1 | inputs up to t)``."""

    q: np.ndarray

    def __post_init__(self):
        q = _frozen_array(self.q, np.float64)
        if np.any(q < 0) or np.any(q > 1) or np.any(np.isnan(q)):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts; row = true class, column = predicted class.

    Class 1 is label 0 (unoccupied) and class 2 is label 1 (occupied).
    """

    c11: int
    c12: int
    c21: int
    c22: int

    def __post_init__(self):
        for name in ("c11", "c12", "c21", "c22"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true).ravel().astype(int)
        p = np.asarray(y_pred).ravel().astype(int)
        if t.shape != p.shape:
            raise ValueError("label arrays must have the same size")
        return cls(
            c11=int(np.sum((t == 0) & (p == 0))),
            c12=int(np.sum((t == 0) & (p == 1))),
            c21=int(np.sum((t == 1) & (p == 0))),
            c22=int(np.sum((t == 1) & (p == 1))),
        )

    @property
    def total(self) -> int:
        return self.c11 + self.c12 + self.c21 + self.c22


@dataclass(frozen=True)
class TradeoffPoint:
    method: str
    si_case: str
    lam: float
    ne2: float
    attacker_balanced_accuracy: float
    si_only_baseline: float
    status: str = "ok"

    def __post_init__(self):
        if self.status != "ok":
            return
        if not self.ne2 >= 0:
            raise ValueError("ne2 must be nonnegative")
        for name in ("attacker_balanced_accuracy", "si_only_baseline"):
            v = getattr(self, name)
            if not (np.isnan(v) or 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one training run.

    ``lam`` is the privacy-utility weight; the distortion budget never appears
    explicitly, sweeping ``lam`` traces the trade-off instead.
    """

    method: str = "DI"
    si_case: str = "1"
    lam: float = 1.0
    batch_size: int = 128
    adversary_steps: int = 4
    noise_dim: int = 8
    ridge_coeff: float = 1.5
    seq_len: int = 24
    learning_rate: float = 1e-3
    epochs: int = 300
    rng_seed: int = 0
    sensitive_alphabet_size: int = 2
    rmsprop_alpha: float = 0.9
    rmsprop_eps: float = 1e-8
    patience: int = 0  # early stopping off: a min-max loss is no convergence signal
    releaser_layers: int = 4
    releaser_hidden: int = 64
    adversary_layers: int | None = None
    adversary_hidden: int = 32
    adversary_feedback: str = "none"
    attacker_layers: int = 3
    attacker_hidden: int = 32
    attacker_epochs: int = 150
    attacker_patience: int = 25
    attacker_learning_rate: float = 3e-3

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        return validate_config(cls(**dict(values)))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return validate_config(dataclasses.replace(self, **changes))

    @property
    def n_adversary_layers(self) -> int:
        if self.adversary_layers is not None:
            return self.adversary_layers
        return 2 if self.si_case == "1" else 3


def _positive_int(cfg, name):
    v = getattr(cfg, name)
    if isinstance(v, bool) or int(v) != v or v < 1:
        raise ConfigError(name, f"must be a positive integer, got {v!r}")


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every field, normalise ``si_case``/``method`` spelling, return a new config."""
    method = str(cfg.method).upper()
    if method not in METHODS:
        raise ConfigError("method", f"unknown method {cfg.method!r}; expected one of {METHODS}")
    si_case = str(cfg.si_case)
    if si_case not in SI_CASES:
        raise ConfigError("si_case", f"unknown case {cfg.si_case!r}; expected one of {SI_CASES}")
    if not np.isfinite(cfg.lam) or cfg.lam < 0:
        raise ConfigError("lam", "lambda must be >= 0")
    for name in ("batch_size", "adversary_steps", "noise_dim", "seq_len", "epochs",
                 "releaser_layers", "releaser_hidden", "adversary_hidden",
                 "attacker_layers", "attacker_hidden", "attacker_epochs",
                 "sensitive_alphabet_size"):
        _positive_int(cfg, name)
    if cfg.sensitive_alphabet_size != 2:
        raise ConfigError("sensitive_alphabet_size", "only binary sensitive attributes are supported")
    if cfg.adversary_layers is not None:
        _positive_int(cfg, "adversary_layers")
    if cfg.ridge_coeff < 0:
        raise ConfigError("ridge_coeff", "must be >= 0")
    for name in ("learning_rate", "attacker_learning_rate", "rmsprop_eps"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(name, "must be > 0")
    if not 0 <= cfg.rmsprop_alpha < 1:
        raise ConfigError("rmsprop_alpha", "must lie in [0, 1)")
    for name in ("patience", "attacker_patience"):
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")
    if cfg.adversary_feedback not in ("none", "labels"):
        raise ConfigError("adversary_feedback", "must be 'none' or 'labels'")
    return dataclasses.replace(
        cfg, method=method, si_case=si_case, lam=float(cfg.lam),
        ridge_coeff=float(cfg.ridge_coeff), rng_seed=int(cfg.rng_seed),
    )
