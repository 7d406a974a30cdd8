"""Experiment scenarios and their flat ``key = value`` file format.

Example file::

    # 4x4 BPSK with a slowly varying channel
    n_t = 4
    n_r = 4
    modulation = BPSK
    epsilon = 0.1
    snr_grid_db = 6:16:2
    trials = 10000
    seed = 2021
    detectors = ml | mmse | mcts playouts=200 c_uct=350 | drl | drl_mcts playouts=20 c_puct=20
    train.total_updates = 3000
    train.episodes_per_update = 64

``snr_grid_db`` takes a comma/space separated list or an inclusive
``start:stop:step`` range.  Keys prefixed with ``train.`` populate the
training configuration.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidParameterError
from .signal_model import (
    ComplexChannelInstance,
    Constellation,
    get_constellation,
    random_base_channel,
)

__all__ = [
    "KNOWN_DETECTORS",
    "DetectorSpec",
    "TrainConfig",
    "Scenario",
    "parse_detectors",
    "parse_scenario",
    "load_scenario",
]

KNOWN_DETECTORS = ("ml", "mmse", "mcts", "drl", "drl_mcts")


@dataclass(frozen=True)
class DetectorSpec:
    name: str
    params: tuple[tuple[str, float], ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.name not in KNOWN_DETECTORS:
            raise ConfigurationError(
                f"unknown detector {self.name!r}; expected one of {KNOWN_DETECTORS}")
        if not self.label:
            if self.params:
                inner = ";".join(f"{k}={_fmt(v)}" for k, v in self.params)
                object.__setattr__(self, "label", f"{self.name}({inner})")
            else:
                object.__setattr__(self, "label", self.name)

    def param(self, key: str, default=None):
        return dict(self.params).get(key, default)

    @property
    def uses_agent(self) -> bool:
        return self.name in ("drl", "drl_mcts")


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class TrainConfig:
    """Self-play training settings.

    ``reward_scale`` of ``None`` resolves to ``1 / (2 n)`` for the scenario.
    ``c2`` multiplies the entropy bonus in scaled-reward units.
    """

    gamma: float = 0.95
    c1: float = 1e-4
    c2: float = 0.01
    c3: float = 1e-4
    c4: float = 1e-4
    learning_rate: float = 1e-4
    workers: int = 1
    episodes_per_update: int = 64
    total_updates: int = 2000
    reward_scale: float | None = None
    train_snr_db: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.9 <= self.gamma <= 1.0:
            raise InvalidParameterError("gamma must lie in [0.9, 1]")
        if self.workers < 1:
            raise InvalidParameterError("workers must be at least 1")
        if self.episodes_per_update < self.workers:
            raise InvalidParameterError("need at least one episode per worker")
        if self.total_updates < 0:
            raise InvalidParameterError("total_updates must be nonnegative")
        if self.reward_scale is not None and not self.reward_scale > 0:
            raise InvalidParameterError("reward_scale must be positive")

    def resolved_reward_scale(self, n: int) -> float:
        return self.reward_scale if self.reward_scale is not None else 1.0 / (2 * n)


@dataclass(frozen=True)
class Scenario:
    n_t: int
    n_r: int
    modulation: str = "BPSK"
    epsilon: float = 0.0
    snr_grid_db: tuple[float, ...] = (10.0,)
    trials: int = 1000
    detector_set: tuple[DetectorSpec, ...] = (DetectorSpec("ml"),)
    seed: int = 0
    noise_variance: float | None = None
    workers: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < self.n_t:
            raise ConfigurationError("need 1 <= n_t <= n_r")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if not self.snr_grid_db:
            raise ConfigurationError("snr_grid_db must not be empty")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError("epsilon must lie in [0, 1]")
        get_constellation(self.modulation)
        labels = [d.label for d in self.detector_set]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("detector labels must be unique")

    @property
    def constellation(self) -> Constellation:
        return get_constellation(self.modulation)

    @property
    def m(self) -> int:
        return self.n_t if self.constellation.is_real else 2 * self.n_t

    @property
    def n(self) -> int:
        return self.n_r if self.constellation.is_real else 2 * self.n_r

    def base_channel(self) -> ComplexChannelInstance:
        """Base channel ``H_c`` with the evaluation stream of variations."""
        return random_base_channel(self.n_t, self.n_r, self.constellation,
                                   self.epsilon, self.seed)

    def training_channel(self) -> ComplexChannelInstance:
        """Same ``H_c`` but an independent stream of variation matrices."""
        base = self.base_channel()
        stream = int(np.random.SeedSequence([self.seed, 99]).generate_state(1)[0])
        return dataclasses.replace(base, rng_seed=stream)

    def train_snr_range(self) -> tuple[float, float]:
        if self.train.train_snr_db is not None:
            return self.train.train_snr_db
        return (min(self.snr_grid_db), max(self.snr_grid_db))


def parse_detectors(text: str) -> tuple[DetectorSpec, ...]:
    specs = []
    for chunk in text.split("|"):
        words = chunk.split()
        if not words:
            continue
        name, params, label = words[0].lower(), [], ""
        for word in words[1:]:
            if "=" not in word:
                raise ConfigurationError(f"detector argument {word!r} is not key=value")
            key, value = word.split("=", 1)
            if key == "label":
                label = value
                continue
            try:
                params.append((key, float(value)))
            except ValueError:
                raise ConfigurationError(f"detector argument {word!r} is not numeric") from None
        specs.append(DetectorSpec(name, tuple(params), label))
    if not specs:
        raise ConfigurationError("no detectors given")
    return tuple(specs)


def _parse_grid(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigurationError(f"bad SNR range {text!r}; use start:stop:step")
        start, stop, step = parts
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(count))
    return tuple(float(v) for v in text.replace(",", " ").split())


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _train_value(key: str, value: str):
    if key == "train_snr_db":
        lo, hi = (float(v) for v in value.replace(",", " ").split())
        return (lo, hi)
    if key == "reward_scale" and value.lower() in ("none", "auto"):
        return None
    if key in ("workers", "episodes_per_update", "total_updates", "seed"):
        return int(value)
    return float(value)


def parse_scenario(text: str) -> Scenario:
    kwargs: dict = {}
    train: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        try:
            if key.startswith("train."):
                sub = key[len("train."):]
                if sub not in _TRAIN_FIELDS:
                    raise ConfigurationError(f"line {lineno}: unknown training key {sub!r}")
                train[sub] = _train_value(sub, value)
            elif key in ("n_t", "n_r", "trials", "seed", "workers"):
                kwargs[key] = int(value)
            elif key == "modulation":
                kwargs[key] = value
            elif key in ("epsilon", "noise_variance"):
                kwargs[key] = float(value)
            elif key == "snr_grid_db":
                kwargs[key] = _parse_grid(value)
            elif key in ("detectors", "detector_set"):
                kwargs["detector_set"] = parse_detectors(value)
            else:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from exc
    for required in ("n_t", "n_r"):
        if required not in kwargs:
            raise ConfigurationError(f"scenario is missing {required!r}")
    try:
        kwargs["train"] = TrainConfig(**train)
        return Scenario(**kwargs)
    except InvalidParameterError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text)
