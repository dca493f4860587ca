"""MADDPG baseline: central deterministic-action critic, per-agent deterministic policies.

Each actor ascends ``grad_{a_i} Q(s, a)`` evaluated with its own action replaced
by the current policy output and the partners' actions taken from the replay
buffer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import env
from .buffer import ReplayBuffer
from .config import RunConfig, TrialResult
from .critic import CentralCritic, make_critic, regression_step
from .errors import ConfigurationError
from .masoftq import observation_of
from .numcore import TANH_BOX, MLPParams, OptimizerState, adam_init, adam_step, mlp_backward, mlp_forward, mlp_init, soft_update


@dataclass
class OUNoise:
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0
    value: float = 0.0

    def sample(self, rng) -> float:
        self.value += self.theta * (self.mu - self.value) + self.sigma * rng.standard_normal()
        return self.value

    def reset(self):
        self.value = self.mu


@dataclass
class DeterministicAgent:
    index: int
    policy_net: MLPParams
    target_policy_net: MLPParams
    opt: OptimizerState
    noise: OUNoise
    rng: np.random.Generator

    @property
    def exploration_state(self) -> float:
        return self.noise.value

    def policy(self, observations, target=False) -> np.ndarray:
        net = self.target_policy_net if target else self.policy_net
        out, _ = mlp_forward(net, observations)
        return out[..., 0]


def make_agent(index, obs_dim, hidden, box, learning_rate, rng, theta=0.15, sigma=0.2, noise_rng=None):
    net = mlp_init([obs_dim, *hidden, 1], TANH_BOX, rng, box=box)
    noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(rng.integers(2**63))
    return DeterministicAgent(index, net, net.copy(), adam_init(net, learning_rate), OUNoise(theta, sigma), noise_rng)


def maddpg_act(agent: DeterministicAgent, observation, explore: bool, box=None) -> float:
    a = float(agent.policy(np.asarray(observation, dtype=float).reshape(1, -1))[0])
    if explore:
        a += agent.noise.sample(agent.rng)
    if box is not None:
        a = float(np.clip(a, box[0], box[1]))
    return a


def target_joint_actions(target_policies, states) -> np.ndarray:
    return np.stack([p.policy(observation_of(states, p.index), target=True) for p in target_policies], axis=1)


def maddpg_critic_update(critic: CentralCritic, batch, gamma, target_policies, tau=0.001) -> float:
    states, actions, rewards, next_states = (np.asarray(x, dtype=float) for x in batch)
    if len(rewards) == 0:
        raise ConfigurationError("empty batch")
    targets = rewards.copy()
    if gamma > 0:
        next_actions = target_joint_actions(target_policies, next_states)
        targets += gamma * critic.q(next_states, next_actions, target=True)
    loss = regression_step(critic, states, actions, targets)
    soft_update(critic.target_net, critic.net, tau)
    return loss


def maddpg_actor_update(agent: DeterministicAgent, critic: CentralCritic, batch, tau=None) -> float:
    """One ascent step for ``agent``; returns the gradient norm. Soft-updates the target policy if ``tau``."""
    states, actions = (np.asarray(x, dtype=float) for x in batch[:2])
    if len(states) == 0:
        raise ConfigurationError("empty batch")
    own, cache = mlp_forward(agent.policy_net, observation_of(states, agent.index))
    joint = actions.copy()
    joint[:, agent.index] = own[:, 0]
    _, dq = critic.q_and_action_grad(states, joint)
    seed = -dq[:, agent.index:agent.index + 1] / len(states)
    grads, _ = mlp_backward(agent.policy_net, cache, seed)
    adam_step(agent.opt, agent.policy_net, grads)
    if tau is not None:
        soft_update(agent.target_policy_net, agent.policy_net, tau)
    return grads.norm()


def train_maddpg(config: RunConfig, rng_seed: int, progress=None, artifacts: dict | None = None) -> TrialResult:
    """Run one MADDPG trial. If ``artifacts`` is a dict it receives the trained critic, agents and buffer."""
    game = config.game
    box = (game.action_lo, game.action_hi)
    init_rng, buf_rng, *noise_rngs = (np.random.default_rng(s) for s in np.random.SeedSequence(rng_seed).spawn(4))
    state = env.CRITIC_STATE
    n_agents = game.num_agents
    critic = make_critic(len(state), n_agents, config.hidden_sizes, box, config.critic_lr, init_rng)
    agents = [
        make_agent(i, 1, config.hidden_sizes, box, config.policy_lr, init_rng, config.ou_theta, config.ou_sigma,
                   noise_rngs[i])
        for i in range(n_agents)
    ]
    buffer = ReplayBuffer(config.buffer_capacity)
    obs = env.observations(state)
    epoch_rewards = np.empty(config.epochs)
    updates = 0
    for epoch in range(config.epochs):
        total = 0.0
        for _ in range(config.steps_per_epoch):
            joint = [maddpg_act(a, obs[a.index], True, box) for a in agents]
            transition = env.step(joint, game)
            buffer.push(transition)
            total += transition.reward / game.reward_scale
            if not buffer.ready(config.warmup):
                continue
            batch = buffer.sample_arrays(config.batch_size, buf_rng)
            maddpg_critic_update(critic, batch, config.gamma, agents, config.tau)
            for a in agents:
                maddpg_actor_update(a, critic, batch, config.tau)
            updates += 1
        epoch_rewards[epoch] = total / config.steps_per_epoch
        if progress is not None:
            progress(epoch, epoch_rewards[epoch], None)
    joint = np.array([maddpg_act(a, obs[a.index], False, box) for a in agents])
    eval_reward = env.reward(joint[0], joint[1], game)
    if artifacts is not None:
        artifacts.update(critic=critic, agents=agents, buffer=buffer)
    return TrialResult("maddpg", rng_seed, epoch_rewards, None, joint, float(epoch_rewards[-1]), float(eval_reward),
                       num_updates=updates, num_steps=config.total_steps)
