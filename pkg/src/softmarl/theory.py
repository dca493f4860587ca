"""Exact oracles for small discrete cooperative stochastic games, and marginal-value analysis.

Trajectories run for ``t = 0 .. horizon`` inclusive, with return
``sum_t gamma**t R(s_t, a_t)``. Joint actions are flattened in C order over the
agents, so joint index ``j`` unravels to ``np.unravel_index(j, (A,) * n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env
from .errors import ConfigurationError, SizeError

ENUMERATION_BUDGET = 10**7


@dataclass
class SmallCSG:
    num_states: int
    num_agents: int
    actions_per_agent: int
    transition: np.ndarray  # (S, J, S)
    reward: np.ndarray  # (S, J)
    gamma: float
    horizon: int
    initial_dist: np.ndarray  # (S,)

    def __post_init__(self):
        j = self.num_joint_actions
        if self.transition.shape != (self.num_states, j, self.num_states):
            raise ConfigurationError(f"transition must have shape (S, J, S), got {self.transition.shape}")
        if self.reward.shape != (self.num_states, j):
            raise ConfigurationError(f"reward must have shape (S, J), got {self.reward.shape}")
        if np.any(self.transition < 0) or not np.allclose(self.transition.sum(-1), 1.0):
            raise ConfigurationError("transition rows must be probability vectors")
        if np.any(self.initial_dist < 0) or not np.isclose(self.initial_dist.sum(), 1.0):
            raise ConfigurationError("initial_dist must be a probability vector")

    @property
    def num_joint_actions(self) -> int:
        return self.actions_per_agent**self.num_agents

    @property
    def joint_shape(self) -> tuple:
        return (self.actions_per_agent,) * self.num_agents


@dataclass
class SoftmaxPolicyParams:
    logits: list  # per agent, (S, A)

    def probs(self, agent) -> np.ndarray:
        z = self.logits[agent] - self.logits[agent].max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def with_logits(self, agent, logits) -> "SoftmaxPolicyParams":
        out = [l.copy() for l in self.logits]
        out[agent] = np.asarray(logits, dtype=float)
        return SoftmaxPolicyParams(out)


def random_csg(rng, num_states=2, num_agents=2, actions_per_agent=3, horizon=3, gamma=0.9) -> SmallCSG:
    j = actions_per_agent**num_agents
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, j))
    reward = rng.normal(size=(num_states, j))
    initial = rng.dirichlet(np.ones(num_states))
    return SmallCSG(num_states, num_agents, actions_per_agent, transition, reward, gamma, horizon, initial)


def random_policies(rng, game: SmallCSG, scale=1.0) -> SoftmaxPolicyParams:
    return SoftmaxPolicyParams(
        [scale * rng.normal(size=(game.num_states, game.actions_per_agent)) for _ in range(game.num_agents)]
    )


def joint_policy(game: SmallCSG, policies: SoftmaxPolicyParams) -> np.ndarray:
    """``pi(joint a | s)`` as ``(S, J)``, the product of the agents' independent policies."""
    out = np.ones((game.num_states,) + (1,) * game.num_agents)
    for i in range(game.num_agents):
        shape = [game.num_states] + [1] * game.num_agents
        shape[1 + i] = game.actions_per_agent
        out = out * policies.probs(i).reshape(shape)
    return out.reshape(game.num_states, -1)


def _backward_values(game: SmallCSG, pi):
    """Time-indexed ``Q_t`` (S, J) and ``V_t`` (S,) for ``t = 0 .. H``."""
    qs, vs = [None] * (game.horizon + 1), [None] * (game.horizon + 1)
    v_next = np.zeros(game.num_states)
    for t in range(game.horizon, -1, -1):
        q = game.reward + game.gamma * game.transition @ v_next
        v = np.sum(pi * q, axis=1)
        qs[t], vs[t] = q, v
        v_next = v
    return qs, vs


def _state_marginals(game: SmallCSG, pi):
    d = [game.initial_dist.copy()]
    for _ in range(game.horizon):
        flow = np.einsum("s,sj,sjk->k", d[-1], pi, game.transition)
        d.append(flow)
    return d


def exact_return(game: SmallCSG, policies: SoftmaxPolicyParams, method="dp") -> float:
    """Expected discounted return, by backward induction (``"dp"``) or explicit trajectory enumeration."""
    pi = joint_policy(game, policies)
    if method == "dp":
        _, vs = _backward_values(game, pi)
        return float(game.initial_dist @ vs[0])
    if method != "enumerate":
        raise ConfigurationError(f"unknown method {method!r}")
    steps = game.horizon + 1
    per_step = game.num_states * game.num_joint_actions
    if per_step**steps > ENUMERATION_BUDGET:
        raise SizeError(f"{per_step}**{steps} trajectories exceed the enumeration budget")
    # Each row is one trajectory prefix ending in state `last`.
    states = np.arange(game.num_states)
    prob = game.initial_dist.copy()
    ret = np.zeros(game.num_states)
    last = states
    for t in range(steps):
        a = np.arange(game.num_joint_actions)
        prob = (prob[:, None] * pi[last]).ravel()
        ret = (ret[:, None] + game.gamma**t * game.reward[last]).ravel()
        s_rep = np.repeat(last, game.num_joint_actions)
        a_rep = np.tile(a, len(last))
        if t == steps - 1:
            break
        prob = (prob[:, None] * game.transition[s_rep, a_rep]).ravel()
        ret = np.repeat(ret, game.num_states)
        last = np.tile(states, len(s_rep))
    return float(np.sum(prob * ret))


def other_averaged_q(game: SmallCSG, policies: SoftmaxPolicyParams, q, agent) -> np.ndarray:
    """``sum_{a^-i} pi^-i(a^-i | s) Q(s, a)`` as ``(S, A)``."""
    qa = q.reshape((game.num_states,) + game.joint_shape)
    for k in range(game.num_agents - 1, -1, -1):
        if k == agent:
            continue
        p = policies.probs(k)
        qa = np.moveaxis(qa, 1 + k, -1)
        qa = np.einsum("s...a,sa->s...", qa, p)
    return qa


def prop1_gradient(game: SmallCSG, policies: SoftmaxPolicyParams, agent) -> np.ndarray:
    """Gradient of the return w.r.t. agent ``agent``'s logits via the multiagent policy gradient theorem.

    Sums discounted occupancy x grad pi^i(a^i | s) x partner-averaged Q. With a
    finite horizon the Q-function depends on the time step, so the occupancy
    is paired with ``Q_t`` step by step.
    """
    pi = joint_policy(game, policies)
    qs, _ = _backward_values(game, pi)
    d = _state_marginals(game, pi)
    p = policies.probs(agent)
    grad = np.zeros_like(p)
    for t in range(game.horizon + 1):
        qbar = other_averaged_q(game, policies, qs[t], agent)
        baseline = np.sum(p * qbar, axis=1, keepdims=True)
        # d pi(a|s) / d theta(s, b) = pi(a|s) (1[a = b] - pi(b|s))
        grad += game.gamma**t * d[t][:, None] * p * (qbar - baseline)
    return grad


def finite_difference_gradient(game: SmallCSG, policies: SoftmaxPolicyParams, agent, h=1e-6, method="dp"):
    theta = policies.logits[agent]
    grad = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        plus, minus = theta.copy(), theta.copy()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (
            exact_return(game, policies.with_logits(agent, plus), method)
            - exact_return(game, policies.with_logits(agent, minus), method)
        ) / (2 * h)
    return grad


def reinforce_gradient(game: SmallCSG, policies: SoftmaxPolicyParams, agent, num_trajectories, rng,
                       return_stderr=False):
    """Likelihood-ratio estimate ``mean_j grad log P(tau_j) R(tau_j)`` for one agent's logits.

    Only the agent's own policy terms survive in the score. With ``return_stderr``
    also returns the per-coordinate standard error of the mean.
    """
    if num_trajectories < 1:
        raise ConfigurationError("num_trajectories must be >= 1")
    m = int(num_trajectories)
    probs = [policies.probs(k) for k in range(game.num_agents)]
    s = _categorical(rng, np.broadcast_to(game.initial_dist, (m, game.num_states)))
    score = np.zeros((m, game.num_states, game.actions_per_agent))
    ret = np.zeros(m)
    rows = np.arange(m)
    for t in range(game.horizon + 1):
        actions = [_categorical(rng, probs[k][s]) for k in range(game.num_agents)]
        score[rows, s, :] -= probs[agent][s]
        score[rows, s, actions[agent]] += 1.0
        joint = np.ravel_multi_index(actions, game.joint_shape)
        ret += game.gamma**t * game.reward[s, joint]
        if t < game.horizon:
            s = _categorical(rng, game.transition[s, joint])
    samples = score * ret[:, None, None]
    est = samples.mean(axis=0)
    if not return_stderr:
        return est
    se = samples.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.full_like(est, np.inf)
    return est, se


def _categorical(rng, p):
    u = rng.random(p.shape[0])[:, None]
    idx = np.sum(np.cumsum(p, axis=1) < u, axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def marginal_action_values(config: env.GameConfig = env.GameConfig(), other_agent_policy_density=None,
                           grid_resolution=401, agent=0):
    """Average reward of each own action against a partner action density, by grid quadrature.

    ``other_agent_policy_density`` may be ``None`` (uniform over the box), a
    callable evaluated on the grid, or an array of grid weights. Returns
    ``(grid, values)``.
    """
    grid = env.action_grid(config, grid_resolution)
    if other_agent_policy_density is None:
        w = np.ones_like(grid)
    elif callable(other_agent_policy_density):
        w = np.asarray(other_agent_policy_density(grid), dtype=float)
    else:
        w = np.asarray(other_agent_policy_density, dtype=float)
    if w.shape != grid.shape or np.any(w < 0) or w.sum() <= 0:
        raise ConfigurationError("partner density must give non-negative grid weights with positive mass")
    w = w / w.sum()
    rewards = env.grid_eval(config, grid_resolution)  # rows a1, cols a2
    values = rewards @ w if agent == 0 else w @ rewards
    return grid, values


def point_mass(grid, at):
    w = np.zeros_like(grid)
    w[np.argmin(np.abs(grid - at))] = 1.0
    return w
