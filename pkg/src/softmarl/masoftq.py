"""Multiagent soft Q-learning.

A central soft-Q critic scores joint actions. Every agent owns an amortised
sampler that maps its own observation plus Gaussian noise to a *joint* action
and is fitted to ``exp(Q / alpha)`` with Stein variational gradient descent.
At execution time an agent carries out only its own component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env
from .buffer import ReplayBuffer
from .critic import CentralCritic, make_critic, regression_step
from .config import AlphaSchedule, RunConfig, TrialResult
from .errors import ConfigurationError, DomainError, NumericError
from .numcore import (
    TANH_BOX, MLPParams, OptimizerState, adam_init, adam_step, mlp_backward, mlp_forward, mlp_init, soft_update,
    squash_derivative,
)


def observation_of(states, agent):
    """Agent ``i`` senses component ``i`` of the critic state."""
    states = np.asarray(states, dtype=float)
    return states[..., agent:agent + 1]


SoftCritic = CentralCritic


@dataclass
class JointPolicySampler:
    net: MLPParams
    opt: OptimizerState
    noise_dim: int
    owner_index: int

    @property
    def action_dim(self) -> int:
        return self.net.layer_sizes[-1]

    def _inputs(self, observations, noise):
        # observations (B, obs), noise (B, K, noise_dim) -> (B*K, obs + noise_dim)
        b, k = noise.shape[:2]
        obs = np.broadcast_to(observations[:, None, :], (b, k, observations.shape[-1]))
        return np.concatenate([obs, noise], axis=-1).reshape(b * k, -1)

    def sample(self, observations, num, rng):
        """Draw ``num`` joint actions per observation row; returns ``(B, num, action_dim)``."""
        observations = np.atleast_2d(np.asarray(observations, dtype=float))
        noise = rng.standard_normal((observations.shape[0], num, self.noise_dim))
        out, _ = mlp_forward(self.net, self._inputs(observations, noise))
        return out.reshape(observations.shape[0], num, -1)


make_soft_critic = make_critic


def make_sampler(owner_index, obs_dim, action_dim, hidden, box, learning_rate, rng, noise_dim=None):
    noise_dim = action_dim if noise_dim is None else noise_dim
    net = mlp_init([obs_dim + noise_dim, *hidden, action_dim], TANH_BOX, rng, box=box)
    return JointPolicySampler(net, adam_init(net, learning_rate), noise_dim, owner_index)


def _logmeanexp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.mean(np.exp(x - m), axis=axis))


def soft_values(critic: SoftCritic, states, alpha, num_samples, rng) -> np.ndarray:
    """Importance-sampled ``alpha * log int exp(Q/alpha) da`` for each state row.

    Proposal is uniform over the action box, so each weight is ``volume * exp(Q/alpha)``.
    Uses the target network.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if num_samples < 1:
        raise ConfigurationError("num_samples must be >= 1")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    b = states.shape[0]
    actions = rng.uniform(critic.action_lo, critic.action_hi, size=(b, num_samples, critic.action_dim))
    s = np.broadcast_to(states[:, None, :], (b, num_samples, states.shape[1]))
    q = critic.q(s.reshape(b * num_samples, -1), actions.reshape(b * num_samples, -1), target=True)
    q = q.reshape(b, num_samples)
    return alpha * (_logmeanexp(q / alpha) + np.log(critic.box_volume))


def soft_value(critic: SoftCritic, state, alpha, num_samples, rng) -> float:
    return float(soft_values(critic, state, alpha, num_samples, rng)[0])


def soft_value_grid(critic: SoftCritic, state, alpha, resolution=201, target=True):
    """Deterministic midpoint-rule quadrature of the soft value over the 2-D action box.

    Returns ``(value, grid_max_q)``.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if critic.action_dim != 2:
        raise ConfigurationError("grid quadrature is implemented for 2-D joint actions")
    width = (critic.action_hi - critic.action_lo) / resolution
    centres = critic.action_lo + width * (np.arange(resolution) + 0.5)
    a1, a2 = np.meshgrid(centres, centres, indexing="ij")
    actions = np.stack([a1.ravel(), a2.ravel()], axis=1)
    states = np.broadcast_to(np.asarray(state, dtype=float), (len(actions), len(state)))
    q = critic.q(states, actions, target=target)
    qmax = float(np.max(q))
    value = qmax + alpha * (np.log(np.sum(np.exp((q - qmax) / alpha))) + np.log(width * width))
    return float(value), qmax


def critic_update(critic: SoftCritic, batch, alpha, gamma, num_value_samples, rng, tau=0.001) -> float:
    """One Adam step on the soft Bellman regression; returns the pre-step loss.

    ``batch`` is ``(states, actions, rewards, next_states)``. The soft value is
    estimated once per distinct next state in the batch.
    """
    states, actions, rewards, next_states = (np.asarray(x, dtype=float) for x in batch)
    if len(rewards) == 0:
        raise ConfigurationError("empty batch")
    if gamma > 0:
        uniq, inverse = np.unique(next_states, axis=0, return_inverse=True)
        v = soft_values(critic, uniq, alpha, num_value_samples, rng)[inverse.reshape(-1)]
        targets = rewards + gamma * v
    else:
        targets = rewards.copy()
    loss = regression_step(critic, states, actions, targets)
    soft_update(critic.target_net, critic.net, tau)
    return loss


def rbf_kernel(particles):
    """RBF kernel matrix with median-heuristic bandwidth, batched over the leading axis.

    ``particles`` is ``(B, K, d)``. Returns ``(kernel, grad)`` where ``kernel[b, j, i] = k(a_j, a_i)``
    and ``grad[b, j, i] = d k(a_j, a_i) / d a_j``.
    """
    k = particles.shape[1]
    if k < 2:
        raise ConfigurationError("at least two particles are needed for the kernel bandwidth")
    diff = particles[:, :, None, :] - particles[:, None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    iu = np.triu_indices(k, 1)
    med_sq = np.median(sq[:, iu[0], iu[1]], axis=1)
    h = np.maximum(med_sq / (2.0 * np.log(k + 1.0)), 1e-6)[:, None, None]
    kern = np.exp(-sq / h)
    grad = -2.0 * diff / h[..., None] * kern[..., None]
    return kern, grad


def stein_direction(particles, score):
    """SVGD direction ``(1/K) sum_j [k(a_j, a_i) score_j + grad_{a_j} k(a_j, a_i)]`` for every ``i``."""
    particles = np.asarray(particles, dtype=float)
    score = np.asarray(score, dtype=float)
    squeeze = particles.ndim == 2
    if squeeze:
        particles, score = particles[None], score[None]
    kern, grad = rbf_kernel(particles)
    k = particles.shape[1]
    delta = (np.einsum("bji,bjd->bid", kern, score) + grad.sum(axis=1)) / k
    return delta[0] if squeeze else delta


def svgd_policy_update(policy: JointPolicySampler, critic, state_batch, alpha, num_particles, rng) -> float:
    """Fit the sampler toward ``exp(Q/alpha)``; returns the norm of the surrogate gradient.

    Particles live in the sampler's pre-squash space ``u`` with ``a = squash(u)``.
    The target there is the pulled-back density ``exp(Q(a(u))/alpha) |da/du|``,
    which has the same KL optimum but keeps particles off the saturated box edge.
    ``critic`` only needs ``q_and_action_grad(states, actions)``.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if num_particles < 2:
        raise ConfigurationError("num_particles must be >= 2")
    states = np.atleast_2d(np.asarray(state_batch, dtype=float))
    b = states.shape[0]
    obs = observation_of(states, policy.owner_index)
    noise = rng.standard_normal((b, num_particles, policy.noise_dim))
    actions, cache = mlp_forward(policy.net, policy._inputs(obs, noise))
    _, dq = critic.q_and_action_grad(np.repeat(states, num_particles, axis=0), actions)
    u = cache.pre[-1]
    score = dq / alpha
    if policy.net.output_activation == TANH_BOX:
        # chain rule into u, plus grad_u log|da/du| = -2 tanh(u)
        score = score * squash_derivative(policy.net, u) - 2.0 * np.tanh(u)
    d = u.shape[-1]
    delta = stein_direction(u.reshape(b, num_particles, d), score.reshape(b, num_particles, d))
    # ascend sum_i delta_i . u_i(theta), delta held fixed
    seed = -delta.reshape(b * num_particles, d) / (b * num_particles)
    grads, _ = mlp_backward(policy.net, cache, seed, wrt_preactivation=True)
    adam_step(policy.opt, policy.net, grads)
    return grads.norm()


def anneal_alpha(schedule: AlphaSchedule, epoch) -> float:
    """Constant, then geometric interpolation over ``anneal_epochs``, then constant."""
    if epoch < 0:
        raise DomainError("epoch must be non-negative")
    start, end = schedule.alpha_start, schedule.alpha_end
    if epoch < schedule.anneal_start_epoch:
        return start
    if schedule.anneal_epochs == 0 or epoch >= schedule.anneal_start_epoch + schedule.anneal_epochs:
        return end
    frac = (epoch - schedule.anneal_start_epoch) / schedule.anneal_epochs
    return float(np.exp(np.log(start) + frac * (np.log(end) - np.log(start))))


def act(policy: JointPolicySampler, observation, rng) -> float:
    """Sample a joint action and keep this agent's own component."""
    joint = policy.sample(np.asarray(observation, dtype=float).reshape(1, -1), 1, rng)[0, 0]
    return float(joint[policy.owner_index])


def evaluate_policies(policies, config: RunConfig, rng):
    """Noise-averaged own actions; returns ``(joint_action, unscaled_reward)``."""
    joint = np.empty(len(policies))
    for i, p in enumerate(policies):
        obs = observation_of(env.CRITIC_STATE, i)
        joint[i] = p.sample(obs[None], config.eval_samples, rng)[0, :, i].mean()
    joint = np.clip(joint, config.game.action_lo, config.game.action_hi)
    return joint, env.reward(joint[0], joint[1], config.game)


def train_masoftq(config: RunConfig, rng_seed: int, progress=None, artifacts: dict | None = None) -> TrialResult:
    """Run one trial. If ``artifacts`` is a dict it receives the trained critic, samplers and buffer."""
    game = config.game
    box = (game.action_lo, game.action_hi)
    init_rng, act_rng, buf_rng, upd_rng, eval_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(rng_seed).spawn(5)
    )
    state = env.CRITIC_STATE
    n_agents = game.num_agents
    critic = make_soft_critic(len(state), n_agents, config.hidden_sizes, box, config.critic_lr, init_rng)
    policies = [
        make_sampler(i, 1, n_agents, config.hidden_sizes, box, config.policy_lr, init_rng) for i in range(n_agents)
    ]
    buffer = ReplayBuffer(config.buffer_capacity)
    obs = env.observations(state)
    epoch_rewards = np.empty(config.epochs)
    epoch_alphas = np.empty(config.epochs)
    updates = 0
    for epoch in range(config.epochs):
        alpha = anneal_alpha(config.schedule, epoch)
        epoch_alphas[epoch] = alpha
        total = 0.0
        for _ in range(config.steps_per_epoch):
            joint = [act(p, obs[p.owner_index], act_rng) for p in policies]
            transition = env.step(joint, game)
            buffer.push(transition)
            total += transition.reward / game.reward_scale
            if not buffer.ready(config.warmup):
                continue
            batch = buffer.sample_arrays(config.batch_size, buf_rng)
            critic_update(critic, batch, alpha, config.gamma, config.value_samples, upd_rng, config.tau)
            states = np.unique(batch[0], axis=0)
            for p in policies:
                svgd_policy_update(p, critic, states, alpha, config.particles, upd_rng)
            updates += 1
        epoch_rewards[epoch] = total / config.steps_per_epoch
        if progress is not None:
            progress(epoch, epoch_rewards[epoch], alpha)
    joint, eval_reward = evaluate_policies(policies, config, eval_rng)
    if artifacts is not None:
        artifacts.update(critic=critic, policies=policies, buffer=buffer)
    return TrialResult("masoftq", rng_seed, epoch_rewards, epoch_alphas, joint, float(epoch_rewards[-1]),
                       float(eval_reward), num_updates=updates, num_steps=config.total_steps)
