"""Verification suite run by ``softmarl oracle`` and by the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env, theory
from .numcore import LINEAR, TANH_BOX, flatten, mlp_backward, mlp_forward, mlp_init, unflatten


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _fd_param_grad(params, x, seed, h):
    theta = flatten(params)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[k] += h
        minus[k] -= h
        fp = np.sum(mlp_forward(unflatten(params, plus), x)[0] * seed)
        fm = np.sum(mlp_forward(unflatten(params, minus), x)[0] * seed)
        grad[k] = (fp - fm) / (2 * h)
    return grad


def random_network_case(rng, max_sizes=(4, 16, 16, 2), kink_margin=1e-3):
    sizes = [int(rng.integers(1, m + 1)) for m in max_sizes]
    act = TANH_BOX if rng.random() < 0.5 else LINEAR
    params = mlp_init(sizes, act, rng, box=(-2.0, 2.0))
    for b in params.biases:
        b[...] = rng.normal(scale=0.1, size=b.shape)
    # Central differences are invalid across a ReLU kink; redraw inputs until every
    # hidden pre-activation is clear of zero by more than the stencil can move it.
    while True:
        x = rng.normal(size=(3, sizes[0]))
        _, cache = mlp_forward(params, x)
        if all(np.min(np.abs(z)) > kink_margin for z in cache.pre[:-1]):
            break
    seed = rng.normal(size=(3, sizes[-1]))
    return params, x, seed


def check_numcore_gradients(num_nets=100, seed=0, h=1e-5, tol=1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_nets):
        params, x, out_seed = random_network_case(rng)
        _, cache = mlp_forward(params, x)
        grads, _ = mlp_backward(params, cache, out_seed)
        bp = np.concatenate([a.ravel() for pair in zip(grads.weights, grads.biases) for a in pair])
        fd = _fd_param_grad(params, x, out_seed, h)
        worst = max(worst, float(np.max(relative_error(bp, fd))))
    return CheckResult("mlp_backward vs central differences", worst < tol,
                       f"max rel err {worst:.3g} over {num_nets} nets (tol {tol:g})")


def check_prop1(num_games=20, seed=0, h=1e-6, tol=1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_games):
        game = theory.random_csg(rng, num_states=2, num_agents=2, actions_per_agent=3, horizon=3)
        pol = theory.random_policies(rng, game)
        for i in range(game.num_agents):
            exact = theory.prop1_gradient(game, pol, i)
            fd = theory.finite_difference_gradient(game, pol, i, h)
            worst = max(worst, float(np.max(relative_error(exact, fd))))
    return CheckResult("multiagent policy gradient vs finite differences", worst < tol,
                       f"max rel err {worst:.3g} over {num_games} games (tol {tol:g})")


def check_reinforce(num_games=5, num_trajectories=100_000, seed=1, sigmas=3.0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_games):
        game = theory.random_csg(rng, num_states=2, num_agents=2, actions_per_agent=3, horizon=3)
        pol = theory.random_policies(rng, game)
        for i in range(game.num_agents):
            exact = theory.prop1_gradient(game, pol, i)
            est, se = theory.reinforce_gradient(game, pol, i, num_trajectories, rng, return_stderr=True)
            worst = max(worst, float(np.max(np.abs(est - exact) / se)))
    return CheckResult("REINFORCE estimate vs exact gradient", worst <= sigmas,
                       f"max deviation {worst:.2f} standard errors over {num_games} games (bound {sigmas:g})")


def check_soft_value_limit(seed=0, alpha=1e-3, resolution=401, tol=0.1) -> CheckResult:
    from .masoftq import make_soft_critic, soft_value_grid

    game = env.GameConfig()
    critic = make_soft_critic(2, 2, (100, 100), (game.action_lo, game.action_hi), 1e-3, np.random.default_rng(seed))
    value, qmax = soft_value_grid(critic, env.CRITIC_STATE, alpha, resolution)
    expected = qmax + alpha * np.log(game.box_volume)
    gap = abs(value - expected)
    return CheckResult("soft value approaches hard max as alpha -> 0", gap < tol,
                       f"|V - (max Q + alpha log vol)| = {gap:.3g} at alpha={alpha:g} (tol {tol:g})")


def check_relative_overgeneralization(resolution=401) -> CheckResult:
    game = env.GameConfig()
    grid, marginal = theory.marginal_action_values(game, None, resolution)
    marg_arg = float(grid[np.argmax(marginal)])
    rewards = env.grid_eval(game, resolution)
    i, j = np.unravel_index(np.argmax(rewards), rewards.shape)
    joint = np.array([grid[i], grid[j]])
    ok = -7.0 <= marg_arg <= -3.0 and np.all(np.abs(joint - [5.0, -5.0]) <= 0.1)
    return CheckResult("relative overgeneralization on the default game", bool(ok),
                       f"marginal argmax a1={marg_arg:+.2f}, joint argmax ({joint[0]:+.2f}, {joint[1]:+.2f})")


def run_all(quick=False) -> list[CheckResult]:
    if quick:
        return [
            check_numcore_gradients(num_nets=10),
            check_prop1(num_games=3),
            check_reinforce(num_games=1, num_trajectories=20_000),
            check_soft_value_limit(),
            check_relative_overgeneralization(),
        ]
    return [
        check_numcore_gradients(),
        check_prop1(),
        check_reinforce(),
        check_soft_value_limit(),
        check_relative_overgeneralization(),
    ]
