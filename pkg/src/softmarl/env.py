"""The Max of Two Quadratics game: a single-state, two-agent cooperative continuous game."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigurationError, NumericError

CRITIC_STATE = np.array([0.0, 1.0])


@dataclass(frozen=True)
class GameConfig:
    h1: float = 0.8
    h2: float = 1.0
    s1: float = 3.0
    s2: float = 1.0
    x1: float = -5.0
    x2: float = 5.0
    y1: float = -5.0
    y2: float = -5.0
    c: float = 10.0
    action_lo: float = -10.0
    action_hi: float = 10.0
    reward_scale: float = 0.1

    def __post_init__(self):
        if self.s1 == 0 or self.s2 == 0:
            raise ConfigurationError("s1 and s2 must be non-zero")
        if not self.action_lo < self.action_hi:
            raise ConfigurationError("action_lo must be below action_hi")
        if self.reward_scale <= 0:
            raise ConfigurationError("reward_scale must be positive")

    @property
    def num_agents(self) -> int:
        return 2

    @property
    def box_volume(self) -> float:
        return (self.action_hi - self.action_lo) ** self.num_agents

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    observations: tuple
    joint_action: np.ndarray
    reward: float
    next_state: np.ndarray


def reward(a1, a2, config: GameConfig = GameConfig()):
    """Unscaled reward ``max(f1, f2)``; broadcasts over array arguments."""
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    f1 = config.h1 * (-((a1 - config.x1) / config.s1) ** 2 - ((a2 - config.y1) / config.s1) ** 2)
    f2 = config.h2 * (-((a1 - config.x2) / config.s2) ** 2 - ((a2 - config.y2) / config.s2) ** 2) + config.c
    r = np.maximum(f1, f2)
    return float(r) if r.ndim == 0 else r


def observations(state=CRITIC_STATE) -> tuple:
    # agent i senses <i>; the critic sees the concatenation
    return tuple(np.array([v]) for v in state)


def step(joint_action, config: GameConfig = GameConfig()) -> Transition:
    a = np.asarray(joint_action, dtype=float).reshape(-1)
    if a.shape != (2,):
        raise ConfigurationError(f"joint action must have 2 components, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite action {a}")
    a = np.clip(a, config.action_lo, config.action_hi)
    r = config.reward_scale * reward(a[0], a[1], config)
    state = CRITIC_STATE.copy()
    return Transition(state, observations(state), a, r, state.copy())


def action_grid(config: GameConfig, resolution: int) -> np.ndarray:
    if resolution < 2:
        raise ConfigurationError("resolution must be >= 2")
    return np.linspace(config.action_lo, config.action_hi, resolution)


def grid_eval(config: GameConfig, resolution: int) -> np.ndarray:
    """Rewards on a ``resolution x resolution`` grid; row index is a1, column index is a2."""
    g = action_grid(config, resolution)
    return reward(g[:, None], g[None, :], config)
