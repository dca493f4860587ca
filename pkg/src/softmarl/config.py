"""Run configuration, annealing schedule and per-trial result records.

Config files are flat ``key = value`` text with ``#`` comments. Keys are the
field names of :class:`RunConfig`, :class:`AlphaSchedule` and
:class:`~softmarl.env.GameConfig`; ``hidden_sizes`` is a comma-separated list.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import GameConfig
from .errors import ConfigurationError

ALGORITHMS = ("masoftq", "maddpg")
CONVERGENCE_THRESHOLD = 9.0


@dataclass(frozen=True)
class AlphaSchedule:
    alpha_start: float = 1.0
    alpha_end: float = 0.001
    anneal_start_epoch: int = 100
    anneal_epochs: int = 15

    def __post_init__(self):
        if not self.alpha_start >= self.alpha_end > 0:
            raise ConfigurationError("need alpha_start >= alpha_end > 0")
        if self.anneal_epochs < 0 or self.anneal_start_epoch < 0:
            raise ConfigurationError("annealing epochs must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "masoftq"
    epochs: int = 150
    steps_per_epoch: int = 100
    warmup: int = 1000
    hidden_sizes: tuple = (100, 100)
    schedule: AlphaSchedule = field(default_factory=AlphaSchedule)
    game: GameConfig = field(default_factory=GameConfig)
    critic_lr: float = 1e-3
    policy_lr: float = 1e-4
    gamma: float = 0.99
    tau: float = 0.001
    batch_size: int = 64
    buffer_capacity: int = 1_000_000
    value_samples: int = 32
    particles: int = 32
    eval_samples: int = 100
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    trials: int = 50
    base_seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        counts = dict(epochs=self.epochs, steps_per_epoch=self.steps_per_epoch, trials=self.trials,
                      batch_size=self.batch_size, buffer_capacity=self.buffer_capacity,
                      value_samples=self.value_samples, eval_samples=self.eval_samples)
        for name, value in counts.items():
            if int(value) < 1:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.warmup < self.batch_size:
            raise ConfigurationError("warmup must be at least batch_size")
        if self.particles < 2:
            raise ConfigurationError("particles must be >= 2")
        if not all(int(h) > 0 for h in self.hidden_sizes):
            raise ConfigurationError("hidden sizes must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def replace(self, **changes) -> "RunConfig":
        return apply_overrides(self, changes)


@dataclass
class TrialResult:
    algorithm: str
    seed: int
    epoch_rewards: np.ndarray
    epoch_alphas: np.ndarray | None
    final_joint_action: np.ndarray
    final_reward: float
    eval_reward: float
    failed: bool = False
    error: str = ""
    num_updates: int = 0
    num_steps: int = 0

    @property
    def converged(self) -> bool:
        return (not self.failed) and bool(self.final_reward >= CONVERGENCE_THRESHOLD)


def _coerce(template, raw):
    if isinstance(template, bool):
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        if isinstance(raw, str):
            raw = [p for p in raw.replace("{", "").replace("}", "").split(",") if p.strip()]
        return tuple(int(p) for p in raw)
    return str(raw)


def apply_overrides(config: RunConfig, values: dict) -> RunConfig:
    """Return a copy of ``config`` with flat keys applied to the right nested dataclass."""
    top = {f.name for f in dataclasses.fields(RunConfig)} - {"schedule", "game"}
    sched = {f.name for f in dataclasses.fields(AlphaSchedule)}
    game = set(GameConfig.field_names())
    run_kw, sched_kw, game_kw = {}, {}, {}
    for key, raw in values.items():
        if key in ("schedule", "game") and dataclasses.is_dataclass(raw):
            run_kw[key] = raw
        elif key in top:
            run_kw[key] = _coerce(getattr(config, key), raw)
        elif key in sched:
            sched_kw[key] = _coerce(getattr(config.schedule, key), raw)
        elif key in game:
            game_kw[key] = _coerce(getattr(config.game, key), raw)
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    if sched_kw:
        run_kw["schedule"] = dataclasses.replace(run_kw.get("schedule", config.schedule), **sched_kw)
    if game_kw:
        run_kw["game"] = dataclasses.replace(run_kw.get("game", config.game), **game_kw)
    return dataclasses.replace(config, **run_kw)


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        values[key] = value
    return values


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return apply_overrides(base or RunConfig(), parse_config_text(text))


def dump_config(config: RunConfig, exclude=()) -> str:
    """Flat ``key = value`` text that :func:`load_config` reads back to an equal config."""
    lines = []
    for f in dataclasses.fields(config):
        if f.name in exclude:
            continue
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            for sub in dataclasses.fields(value):
                lines.append(f"{sub.name} = {getattr(value, sub.name)!r}")
        elif isinstance(value, tuple):
            lines.append(f"{f.name} = {','.join(str(v) for v in value)}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
