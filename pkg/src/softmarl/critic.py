"""Central critic over (state, joint action), shared by both trainers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .numcore import LINEAR, MLPParams, OptimizerState, adam_init, adam_step, mlp_backward, mlp_forward, mlp_init


@dataclass
class CentralCritic:
    net: MLPParams
    target_net: MLPParams
    opt: OptimizerState
    action_lo: float
    action_hi: float
    action_dim: int

    @property
    def box_volume(self) -> float:
        return (self.action_hi - self.action_lo) ** self.action_dim

    def q(self, states, actions, target=False) -> np.ndarray:
        net = self.target_net if target else self.net
        out, _ = mlp_forward(net, np.concatenate([states, actions], axis=-1))
        return out[..., 0]

    def q_and_action_grad(self, states, actions):
        """Online-network Q values and their gradient with respect to the action inputs."""
        x = np.concatenate([states, actions], axis=-1)
        out, cache = mlp_forward(self.net, x)
        _, dx = mlp_backward(self.net, cache, np.ones_like(out))
        return out[..., 0], dx[..., states.shape[-1]:]


def make_critic(state_dim, action_dim, hidden, box, learning_rate, rng) -> CentralCritic:
    net = mlp_init([state_dim + action_dim, *hidden, 1], LINEAR, rng)
    return CentralCritic(net, net.copy(), adam_init(net, learning_rate), float(box[0]), float(box[1]), action_dim)


def regression_step(critic: CentralCritic, states, actions, targets) -> float:
    """One Adam step on mean squared error; returns the loss before the step."""
    out, cache = mlp_forward(critic.net, np.concatenate([states, actions], axis=1))
    err = out[:, 0] - targets
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NumericError("non-finite critic loss")
    grads, _ = mlp_backward(critic.net, cache, (2.0 / len(err)) * err[:, None])
    adam_step(critic.opt, critic.net, grads)
    return loss
