"""Seeded multi-trial experiments, summary statistics and file emission."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import env
from .config import CONVERGENCE_THRESHOLD, RunConfig, TrialResult, dump_config
from .errors import SoftMarlError

log = logging.getLogger(__name__)

TRIAL_HEADER = ["epoch", "mean_reward", "alpha"]
CONTOUR_HEADER = ["a1", "a2", "reward"]
CONTOUR_RESOLUTION = 201
_TRIAL_FILE = re.compile(r"trial_(\d+)\.csv$")


@dataclass
class Summary:
    algorithm: str
    trials: int
    convergence_rate: float
    mean_reward: np.ndarray
    std_reward: np.ndarray
    converged: list
    reward_scale: float
    base_seed: int
    failed: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "reward_scale": self.reward_scale,
            "convergence_threshold": CONVERGENCE_THRESHOLD,
            "convergence_rate": self.convergence_rate,
            "converged": [bool(c) for c in self.converged],
            "failed": [bool(f) for f in self.failed],
            "mean_reward": [_json_float(v) for v in self.mean_reward],
            "std_reward": [_json_float(v) for v in self.std_reward],
        }


def _json_float(v):
    v = float(v)
    return None if math.isnan(v) else v


def _fmt(v) -> str:
    # repr is the shortest round-trip decimal (at most 17 significant digits)
    if v is None:
        return ""
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _trainer(algorithm):
    if algorithm == "masoftq":
        from .masoftq import train_masoftq
        return train_masoftq
    from .maddpg import train_maddpg
    return train_maddpg


def run_trial(config: RunConfig, trial_index: int) -> TrialResult:
    """Train one trial with seed ``base_seed + trial_index``; numeric failures become flagged records."""
    seed = config.base_seed + trial_index
    try:
        return _trainer(config.algorithm)(config, seed)
    except (SoftMarlError, FloatingPointError) as exc:
        log.warning("trial %d (seed %d) failed: %s", trial_index, seed, exc)
        nan = np.full(config.epochs, np.nan)
        alphas = nan.copy() if config.algorithm == "masoftq" else None
        return TrialResult(config.algorithm, seed, nan, alphas, np.full(2, np.nan), math.nan, math.nan,
                           failed=True, error=str(exc))


def _run_indexed(args):
    config, index = args
    return run_trial(config, index)


def default_workers(trials: int) -> int:
    cap = os.environ.get("MASOFTQ_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, trials))


def summarize(algorithm, curves, converged, failed, reward_scale, base_seed) -> Summary:
    curves = np.asarray(curves, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(curves, axis=0)
        std = np.nanstd(curves, axis=0)
    rate = float(np.mean(converged)) if len(converged) else 0.0
    return Summary(algorithm, len(converged), rate, mean, std, list(converged), reward_scale, base_seed, list(failed))


def run_experiment(config: RunConfig, workers: int | None = None, write: bool = True, figures: bool = True):
    """Run all trials and return ``(summary, results)``; writes outputs to ``config.output_dir`` if ``write``."""
    workers = default_workers(config.trials) if workers is None else max(1, workers)
    jobs = [(config, k) for k in range(config.trials)]
    if workers == 1:
        results = [_run_indexed(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_indexed, jobs))
    summary = summarize(
        config.algorithm,
        [r.epoch_rewards for r in results],
        [r.converged for r in results],
        [r.failed for r in results],
        config.game.reward_scale,
        config.base_seed,
    )
    if write:
        emit_outputs(summary, results, config.output_dir, config=config, figures=figures)
    return summary, results


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def write_trial_csv(path: Path, result: TrialResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_HEADER)
        alphas = result.epoch_alphas
        for e, r in enumerate(result.epoch_rewards):
            w.writerow([e, _fmt(r), "" if alphas is None else _fmt(alphas[e])])


def write_contour_csv(path: Path, game: env.GameConfig, resolution=CONTOUR_RESOLUTION):
    grid = env.action_grid(game, resolution)
    rewards = env.grid_eval(game, resolution)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONTOUR_HEADER)
        for i, a1 in enumerate(grid):
            for j, a2 in enumerate(grid):
                w.writerow([_fmt(a1), _fmt(a2), _fmt(rewards[i, j])])


def emit_outputs(summary: Summary, trial_results, output_dir, config: RunConfig | None = None, figures=True):
    """Write per-trial CSVs, ``summary.json``, ``trials.json``, ``contour.csv``, ``config.txt`` and PNG figures."""
    out = Path(output_dir)
    game = config.game if config is not None else env.GameConfig(reward_scale=summary.reward_scale)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for k, result in enumerate(trial_results):
            write_trial_csv(out / f"trial_{k}.csv", result)
        _write_json(out / "summary.json", summary.to_json())
        _write_json(out / "trials.json", [_trial_record(k, r) for k, r in enumerate(trial_results)])
        write_contour_csv(out / "contour.csv", game)
        if config is not None:
            (out / "config.txt").write_text(dump_config(config, exclude=("output_dir",)))
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out}: {exc}") from exc
    if figures:
        from .plotting import render_figures
        render_figures(out, summary, game, [r.final_joint_action for r in trial_results])
    return out


def _trial_record(k, r: TrialResult) -> dict:
    return {
        "trial": k,
        "seed": r.seed,
        "final_reward": _json_float(r.final_reward),
        "eval_reward": _json_float(r.eval_reward),
        "final_joint_action": [_json_float(v) for v in r.final_joint_action],
        "converged": r.converged,
        "failed": r.failed,
        "error": r.error,
    }


def read_trial_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    rewards, alphas = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRIAL_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            rewards.append(float(row[1]))
            alphas.append(float(row[2]) if row[2] else None)
    has_alpha = any(a is not None for a in alphas)
    return np.array(rewards), (np.array([np.nan if a is None else a for a in alphas]) if has_alpha else None)


def analyze(output_dir, figures=True) -> Summary:
    """Recompute ``summary.json`` from the trial CSVs in ``output_dir``."""
    out = Path(output_dir)
    files = sorted((int(m.group(1)), p) for p in out.glob("trial_*.csv") if (m := _TRIAL_FILE.search(p.name)))
    if not files:
        raise FileNotFoundError(f"no trial_<k>.csv files in {out}")
    meta = {}
    if (out / "summary.json").exists():
        meta = json.loads((out / "summary.json").read_text())
    curves, converged, failed, alphas_seen = [], [], [], False
    for _, path in files:
        rewards, alphas = read_trial_csv(path)
        alphas_seen |= alphas is not None
        curves.append(rewards)
        bad = bool(np.all(np.isnan(rewards)))
        failed.append(bad)
        converged.append((not bad) and bool(rewards[-1] >= CONVERGENCE_THRESHOLD))
    algorithm = meta.get("algorithm", "masoftq" if alphas_seen else "maddpg")
    summary = summarize(algorithm, curves, converged, failed, meta.get("reward_scale", env.GameConfig().reward_scale),
                        meta.get("base_seed", 0))
    _write_json(out / "summary.json", summary.to_json())
    if figures:
        from .plotting import render_figures
        joint = []
        if (out / "trials.json").exists():
            joint = [r["final_joint_action"] for r in json.loads((out / "trials.json").read_text())]
        render_figures(out, summary, env.GameConfig(reward_scale=summary.reward_scale), joint)
    return summary
