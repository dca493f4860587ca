"""Figure rendering for experiment outputs (PNG, headless)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import env

_METADATA = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_METADATA)
    plt.close(fig)


def plot_reward_curve(summary, path, ax=None):
    """Trial-averaged per-epoch reward with a one-standard-deviation band."""
    fig, ax = (ax.figure, ax) if ax is not None else plt.subplots(figsize=(6, 3.6))
    epochs = np.arange(1, len(summary.mean_reward) + 1)
    mean = np.asarray(summary.mean_reward, dtype=float)
    std = np.asarray(summary.std_reward, dtype=float)
    ax.plot(epochs, mean, lw=1.5, label=f"{summary.algorithm} (n={summary.trials})")
    ax.fill_between(epochs, mean - std, mean + std, alpha=0.2, lw=0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean reward (unscaled)")
    ax.set_title(f"convergence rate {summary.convergence_rate:.2f}")
    ax.legend(loc="lower right", frameon=False)
    _save(fig, path)


def plot_contour(game: env.GameConfig, path, joint_actions=(), resolution=201):
    """Reward contours with both local optima (dots) and final joint actions (stars)."""
    grid = env.action_grid(game, resolution)
    rewards = env.grid_eval(game, resolution)
    fig, ax = plt.subplots(figsize=(4.6, 4))
    cs = ax.contourf(grid, grid, rewards.T, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="reward")
    ax.plot([game.x1, game.x2], [game.y1, game.y2], "o", color="white", ms=6)
    pts = np.array([p for p in joint_actions if p is not None and np.all(np.isfinite(p))], dtype=float)
    if len(pts):
        ax.plot(pts[:, 0], pts[:, 1], "*", color="red", ms=8, alpha=0.7)
    ax.set_xlabel("$a_1$")
    ax.set_ylabel("$a_2$")
    ax.set_aspect("equal")
    _save(fig, path)


def render_figures(output_dir, summary, game, joint_actions=()):
    out = Path(output_dir)
    plot_reward_curve(summary, out / "reward_curve.png")
    plot_contour(game, out / "contour.png", joint_actions)
