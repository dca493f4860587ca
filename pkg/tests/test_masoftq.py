import numpy as np
import pytest

from softmarl import env
from softmarl.config import AlphaSchedule, RunConfig
from softmarl.errors import ConfigurationError, DomainError
from softmarl.masoftq import (
    JointPolicySampler, act, anneal_alpha, critic_update, make_sampler, make_soft_critic, rbf_kernel, soft_value,
    soft_value_grid, stein_direction, svgd_policy_update, train_masoftq,
)
from softmarl.numcore import LINEAR, adam_init, mlp_init

BOX = (-10.0, 10.0)
STATE = np.array([0.0, 1.0])


def _critic(rng, hidden=(16, 16), lr=1e-3):
    return make_soft_critic(2, 2, hidden, BOX, lr, rng)


def _constant_critic(rng, k):
    c = _critic(rng)
    for net in (c.net, c.target_net):
        net.flat[...] = 0.0
        net.biases[-1][...] = k
    return c


class QuadraticCritic:
    """Q(s, a) = -alpha |a|^2 / 2, that is a standard normal target density."""

    def __init__(self, alpha):
        self.alpha = alpha

    def q_and_action_grad(self, states, actions):
        return -0.5 * self.alpha * np.sum(actions**2, -1), -self.alpha * actions


class ConstantCritic:
    def q_and_action_grad(self, states, actions):
        return np.zeros(len(actions)), np.zeros_like(actions)


@pytest.mark.parametrize("m", [1, 7, 32])
def test_soft_value_constant_q_closed_form(rng, m):
    alpha = 0.37
    c = _constant_critic(rng, 1.5)
    assert soft_value(c, STATE, alpha, m, rng) == pytest.approx(1.5 + alpha * np.log(400.0), abs=1e-12)


def test_soft_value_reproducible(rng):
    c = _critic(rng)
    assert soft_value(c, STATE, 0.5, 32, np.random.default_rng(1)) == soft_value(c, STATE, 0.5, 32, np.random.default_rng(1))


def test_soft_value_rejects_bad_alpha(rng):
    with pytest.raises(DomainError):
        soft_value(_critic(rng), STATE, 0.0, 4, rng)
    with pytest.raises(ConfigurationError):
        soft_value(_critic(rng), STATE, 1.0, 0, rng)


def test_soft_value_hard_max_limit(rng):
    c = _critic(rng)
    alpha = 0.001
    value, qmax = soft_value_grid(c, STATE, alpha, resolution=401)
    assert abs(value - (qmax + alpha * np.log(400.0))) < 0.1


def test_soft_value_dominates_grid_max(rng):
    c = _critic(rng)
    for alpha in (1.0, 0.1, 0.01):
        value, qmax = soft_value_grid(c, STATE, alpha, resolution=201)
        # the integral of exp(Q/alpha) over a box of volume 400 exceeds exp(max/alpha) times a cell area
        assert value >= qmax + alpha * np.log((20 / 201) ** 2)


def test_monte_carlo_soft_value_tracks_quadrature(rng):
    c = _critic(rng, lr=1e-3)
    value, _ = soft_value_grid(c, STATE, 1.0, resolution=201)
    mc = soft_value(c, STATE, 1.0, 20000, rng)
    assert mc == pytest.approx(value, abs=0.05)


def _batch(a, r, n=1):
    a = np.atleast_2d(a)
    return (np.tile(STATE, (n, 1)), np.tile(a, (n, 1)), np.full(n, r), np.tile(STATE, (n, 1)))


def test_critic_gamma_zero_targets_reward(rng):
    c = _critic(rng)
    batch = _batch([1.0, 2.0], 0.7)
    q = c.q(batch[0], batch[1])[0]
    loss = critic_update(c, batch, 1.0, 0.0, 8, rng)
    assert loss == pytest.approx((q - 0.7) ** 2, rel=1e-12)


def test_critic_fixed_point(rng):
    c = _critic(rng)
    batch = _batch([1.0, -2.0], 0.0)
    q = c.q(batch[0], batch[1])[0]
    batch = _batch([1.0, -2.0], q)
    before = c.net.flat.copy()
    assert critic_update(c, batch, 1.0, 0.0, 8, rng) == pytest.approx(0.0, abs=1e-28)
    np.testing.assert_allclose(c.net.flat, before, atol=1e-12)


def test_critic_regression_monotone(rng):
    c = _critic(rng)
    batch = _batch([3.0, -4.0], 1.0)
    losses = [critic_update(c, batch, 1.0, 0.0, 8, rng) for _ in range(100)]
    # strictly decreasing until Adam momentum overshoots around the optimum
    floor = 1e-3 * losses[0]
    head = losses[: next(k for k, v in enumerate(losses) if v < floor) + 1]
    assert len(head) > 20
    assert all(b < a for a, b in zip(head, head[1:]))
    assert max(losses[len(head):], default=0.0) < floor


def test_critic_update_moves_target_by_tau(rng):
    c = _critic(rng)
    target_before = c.target_net.flat.copy()
    critic_update(c, _batch([0.0, 0.0], 1.0, 4), 1.0, 0.99, 8, rng, tau=0.5)
    np.testing.assert_allclose(c.target_net.flat, 0.5 * target_before + 0.5 * c.net.flat)


def test_kernel_coincident_particles():
    x = np.zeros((1, 2, 2))
    kern, grad = rbf_kernel(x)
    np.testing.assert_array_equal(kern, 1.0)
    np.testing.assert_array_equal(grad, 0.0)
    score = np.array([[1.0, -2.0], [3.0, 0.5]])
    np.testing.assert_allclose(stein_direction(x[0], score), np.tile(score.mean(0), (2, 1)))


def test_kernel_needs_two_particles():
    with pytest.raises(ConfigurationError):
        rbf_kernel(np.zeros((1, 1, 2)))
    with pytest.raises(ConfigurationError):
        svgd_policy_update(None, None, STATE, 1.0, 1, None)


def test_kernel_gradient_finite_difference(rng):
    x = rng.normal(size=(1, 5, 2))
    kern, grad = rbf_kernel(x)
    # bandwidth held fixed: differentiate exp(-|a_j - a_i|^2 / h) in a_j
    diff = x[0, :, None] - x[0, None]
    h = -np.sum(diff[0, 1] ** 2) / np.log(kern[0, 0, 1])
    eps = 1e-6
    j, i = 2, 4
    for d in range(2):
        xp, xm = x[0, j].copy(), x[0, j].copy()
        xp[d] += eps
        xm[d] -= eps
        f = lambda a: np.exp(-np.sum((a - x[0, i]) ** 2) / h)
        assert grad[0, j, i, d] == pytest.approx((f(xp) - f(xm)) / (2 * eps), rel=1e-6)


def _spread(pts):
    return np.mean(np.linalg.norm(pts[:, None] - pts[None], axis=-1))


def test_repulsion_only_does_not_shrink_spread(rng):
    pts = rng.normal(scale=0.3, size=(16, 2))
    for _ in range(50):
        before = _spread(pts)
        pts = pts + 0.1 * stein_direction(pts, np.zeros_like(pts))
        assert _spread(pts) >= before


def test_particle_svgd_fits_gaussian(rng):
    pts = rng.normal(loc=3.0, scale=0.2, size=(64, 2))
    for _ in range(2000):
        pts = pts + 0.05 * stein_direction(pts, -pts)
    assert np.all(np.abs(pts.mean(0)) < 0.2)
    assert np.all(np.abs(pts.var(0) - 1) < 0.3)


def _linear_sampler(rng, lr=1e-3):
    net = mlp_init([3, 32, 32, 2], LINEAR, rng)
    return JointPolicySampler(net, adam_init(net, lr), 2, 0)


# Finite-particle SVGD under-disperses: with this bandwidth rule an amortised
# sampler settles near variance 0.55 at K = 32 and 0.85 at K = 256.
GAUSSIAN_K = 256


def test_svgd_sampler_fits_gaussian():
    rng = np.random.default_rng(4)
    policy = _linear_sampler(rng)
    critic = QuadraticCritic(alpha=0.5)
    for _ in range(2000):
        svgd_policy_update(policy, critic, STATE, critic.alpha, GAUSSIAN_K, rng)
    samples = policy.sample(np.array([[0.0]]), 4000, rng)[0]
    assert np.all(np.abs(samples.mean(0)) < 0.2)
    assert np.all(np.abs(samples.var(0) - 1) < 0.3)


def test_svgd_box_sampler_fits_gaussian():
    rng = np.random.default_rng(5)
    policy = make_sampler(0, 1, 2, (32, 32), BOX, 1e-3, rng)
    critic = QuadraticCritic(alpha=1.0)
    for _ in range(2000):
        svgd_policy_update(policy, critic, STATE, critic.alpha, GAUSSIAN_K, rng)
    samples = policy.sample(np.array([[0.0]]), 4000, rng)[0]
    assert np.all(np.abs(samples.mean(0)) < 0.2)
    assert np.all(np.abs(samples.var(0) - 1) < 0.3)


def test_svgd_constant_critic_spreads_particles():
    rng = np.random.default_rng(6)
    policy = _linear_sampler(rng)
    obs = np.array([[0.0]])
    before = _spread(policy.sample(obs, 256, np.random.default_rng(0))[0])
    for _ in range(50):
        svgd_policy_update(policy, ConstantCritic(), STATE, 1.0, 32, rng)
    assert _spread(policy.sample(obs, 256, np.random.default_rng(0))[0]) > before


def test_sampler_outputs_in_box(rng):
    policy = make_sampler(1, 1, 2, (8,), BOX, 1e-3, rng)
    policy.net.weights[-1] *= 1e4
    out = policy.sample(np.array([[1.0], [5.0]]), 100, rng)
    assert out.shape == (2, 100, 2)
    assert np.all(out >= BOX[0]) and np.all(out <= BOX[1])


SCHEDULE = AlphaSchedule()


@pytest.mark.parametrize("epoch,expected", [(0, 1.0), (99, 1.0), (100, 1.0), (115, 0.001), (149, 0.001),
                                            (107.5, np.sqrt(0.001))])
def test_anneal_values(epoch, expected):
    assert anneal_alpha(SCHEDULE, epoch) == pytest.approx(expected, rel=1e-12)


def test_anneal_monotone():
    values = [anneal_alpha(SCHEDULE, e) for e in np.linspace(0, 200, 2001)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_anneal_negative_epoch():
    with pytest.raises(DomainError):
        anneal_alpha(SCHEDULE, -1)


def test_act_returns_own_component(rng):
    policy = make_sampler(0, 1, 2, (8, 8), BOX, 1e-3, rng)
    a = act(policy, [0.0], np.random.default_rng(3))
    joint = policy.sample(np.array([[0.0]]), 1, np.random.default_rng(3))[0, 0]
    assert a == joint[0]
    other = JointPolicySampler(policy.net, policy.opt, 2, 1)
    assert act(other, [0.0], np.random.default_rng(3)) == joint[1]


def test_act_stochastic_and_reproducible(rng):
    policy = make_sampler(0, 1, 2, (8, 8), BOX, 1e-3, rng)
    draws = [act(policy, [0.0], rng) for _ in range(5)]
    assert len(set(draws)) == 5
    assert act(policy, [0.0], np.random.default_rng(9)) == act(policy, [0.0], np.random.default_rng(9))


def test_training_counts_and_warmup():
    cfg = RunConfig(algorithm="masoftq", epochs=12, steps_per_epoch=100, hidden_sizes=(8, 8))
    steps = []
    res = train_masoftq(cfg, 0, progress=lambda e, r, a: steps.append(e))
    assert res.num_steps == 1200
    # updates start at the step that stores transition 1000
    assert res.num_updates == 1200 - 999
    assert len(res.epoch_rewards) == 12 and steps == list(range(12))
    np.testing.assert_array_equal(res.epoch_alphas, 1.0)


def test_full_protocol_step_count():
    cfg = RunConfig(algorithm="masoftq")
    assert cfg.total_steps == 15_000


def test_no_updates_before_warmup():
    cfg = RunConfig(algorithm="masoftq", epochs=3, steps_per_epoch=100, warmup=1000, hidden_sizes=(4,))
    assert train_masoftq(cfg, 0).num_updates == 0


def test_trial_is_pure_function_of_seed():
    cfg = RunConfig(algorithm="masoftq", epochs=11, steps_per_epoch=100, hidden_sizes=(8, 8))
    a, b = train_masoftq(cfg, 3), train_masoftq(cfg, 3)
    np.testing.assert_array_equal(a.epoch_rewards, b.epoch_rewards)
    np.testing.assert_array_equal(a.final_joint_action, b.final_joint_action)
    c = train_masoftq(cfg, 4)
    assert not np.array_equal(a.epoch_rewards, c.epoch_rewards)


@pytest.mark.slow
def test_converged_trial_sits_in_optimal_basin():
    res = train_masoftq(RunConfig(algorithm="masoftq"), 0)
    assert res.converged
    assert np.linalg.norm(res.final_joint_action - np.array([5.0, -5.0])) <= 1.0
