import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softmarl.errors import ConfigurationError, ConsistencyError, NumericError, ShapeError
from softmarl.numcore import (
    LINEAR, TANH_BOX, MLPGrads, MLPParams, adam_init, adam_step, mlp_backward, mlp_forward, mlp_init, soft_update,
)
from softmarl.verify import _fd_param_grad, random_network_case, relative_error


def test_init_is_deterministic():
    a = mlp_init([1, 1], rng_seed=7)
    b = mlp_init([1, 1], rng_seed=7)
    assert a.flat.tobytes() == b.flat.tobytes()


def test_init_shape_chain_and_bounds():
    p = mlp_init([2, 100, 100, 1], rng_seed=0)
    assert [w.shape for w in p.weights] == [(100, 2), (100, 100), (1, 100)]
    assert [b.shape for b in p.biases] == [(100,), (100,), (1,)]
    for w in p.weights:
        assert np.all(np.abs(w) <= 1.0 / np.sqrt(w.shape[1]))
    assert all(np.all(b == 0) for b in p.biases)


@pytest.mark.parametrize("sizes", [[], [3], [2, 0, 1], [2, -1]])
def test_init_rejects_bad_sizes(sizes):
    with pytest.raises(ConfigurationError):
        mlp_init(sizes)


def test_tanh_box_requires_valid_box():
    with pytest.raises(ConfigurationError):
        mlp_init([1, 1], TANH_BOX)
    with pytest.raises(ConfigurationError):
        mlp_init([1, 1], TANH_BOX, box=(1.0, -1.0))


def test_identity_net():
    p = MLPParams.from_arrays([np.eye(3)], [np.zeros(3)])
    x = np.array([1.5, -2.0, 0.25])
    out, _ = mlp_forward(p, x)
    np.testing.assert_array_equal(out, x)


def test_zero_weights_return_bias():
    b = np.array([0.5, -1.0])
    p = MLPParams.from_arrays([np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), b])
    out, _ = mlp_forward(p, np.array([3.0, -7.0, 1.0]))
    np.testing.assert_array_equal(out, b)


def test_tanh_box_saturates_inside_box():
    p = MLPParams.from_arrays([np.array([[1.0]])], [np.zeros(1)], TANH_BOX, box=(-10, 10))
    hi, _ = mlp_forward(p, np.array([1e6]))
    lo, _ = mlp_forward(p, np.array([-1e6]))
    assert 9.999 < hi[0] < 10.0
    assert -10.0 < lo[0] < -9.999


def test_forward_errors():
    p = mlp_init([2, 3, 1])
    with pytest.raises(ShapeError):
        mlp_forward(p, np.zeros(3))
    with pytest.raises(NumericError):
        mlp_forward(p, np.array([np.nan, 0.0]))


def test_backward_matches_finite_differences_small_net(rng):
    p = mlp_init([2, 8, 1], rng_seed=rng)
    p.biases[0][...] = rng.normal(scale=0.1, size=8)
    x = rng.normal(size=(4, 2))
    seed = np.ones((4, 1))
    _, cache = mlp_forward(p, x)
    grads, _ = mlp_backward(p, cache, seed)
    fd = _fd_param_grad(p, x, seed, 1e-5)
    assert np.max(relative_error(grads.flat, fd)) < 1e-5


def test_linear_input_gradient():
    w = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
    p = MLPParams.from_arrays([w], [np.zeros(2)])
    _, cache = mlp_forward(p, np.array([0.3, 0.1, -0.2]))
    _, dx = mlp_backward(p, cache, np.ones(2))
    np.testing.assert_allclose(dx, w.T @ np.ones(2))


def test_zero_seed_gives_zero_gradients(rng):
    p = mlp_init([3, 5, 2], rng_seed=rng)
    _, cache = mlp_forward(p, rng.normal(size=(6, 3)))
    grads, dx = mlp_backward(p, cache, np.zeros((6, 2)))
    assert not grads.flat.any() and not dx.any()


def test_backward_rejects_foreign_cache(rng):
    p = mlp_init([3, 5, 2], rng_seed=rng)
    q = p.copy()
    _, cache = mlp_forward(p, np.zeros(3))
    with pytest.raises(ConsistencyError):
        mlp_backward(q, cache, np.ones(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_fidelity_property(seed):
    rng = np.random.default_rng(seed)
    params, x, out_seed = random_network_case(rng)
    _, cache = mlp_forward(params, x)
    grads, _ = mlp_backward(params, cache, out_seed)
    fd = _fd_param_grad(params, x, out_seed, 1e-5)
    assert np.max(relative_error(grads.flat, fd)) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 1e4))
def test_tanh_outputs_stay_in_box(seed, scale):
    rng = np.random.default_rng(seed)
    p = mlp_init([2, 6, 3], TANH_BOX, rng, box=(-1.5, 4.0))
    out, _ = mlp_forward(p, scale * rng.normal(size=(20, 2)))
    assert np.all(out > -1.5) and np.all(out < 4.0)


def test_adam_zero_gradient_leaves_params():
    p = mlp_init([2, 3, 1], rng_seed=1)
    before = p.flat.copy()
    state = adam_init(p)
    adam_step(state, p, MLPGrads.zeros_like(p))
    np.testing.assert_array_equal(p.flat, before)
    assert state.step_count == 1


def test_adam_moments_decay_under_zero_gradient():
    p = mlp_init([2, 3, 1], rng_seed=1)
    state = adam_init(p)
    state.first_moment[...] = 1.0
    state.second_moment[...] = 1.0
    for _ in range(3):
        adam_step(state, p, MLPGrads.zeros_like(p))
    np.testing.assert_allclose(state.first_moment, 0.9**3)
    np.testing.assert_allclose(state.second_moment, 0.999**3)


def test_adam_first_step_is_learning_rate():
    p = mlp_init([2, 3, 1], rng_seed=2)
    before = p.flat.copy()
    state = adam_init(p, learning_rate=1e-3)
    g = MLPGrads.zeros_like(p)
    g.flat[...] = 37.5
    adam_step(state, p, g)
    # m_hat = g, v_hat = g^2  ->  step = lr * g / (|g| + eps)
    np.testing.assert_allclose(before - p.flat, 1e-3 * 37.5 / (37.5 + 1e-8), rtol=1e-12)


def test_adam_non_finite_gradient_untouched():
    p = mlp_init([2, 3, 1], rng_seed=3)
    before = p.flat.copy()
    state = adam_init(p)
    g = MLPGrads.zeros_like(p)
    g.flat[4] = np.inf
    with pytest.raises(NumericError):
        adam_step(state, p, g)
    np.testing.assert_array_equal(p.flat, before)
    assert state.step_count == 0


def test_adam_runs_are_reproducible():
    def run():
        rng = np.random.default_rng(5)
        p = mlp_init([2, 4, 1], rng_seed=rng)
        s = adam_init(p)
        for _ in range(20):
            x = rng.normal(size=(8, 2))
            out, cache = mlp_forward(p, x)
            grads, _ = mlp_backward(p, cache, out - 1.0)
            adam_step(s, p, grads)
        return p.flat.copy()

    assert run().tobytes() == run().tobytes()


def test_soft_update():
    target = mlp_init([2, 3, 1], rng_seed=0)
    target.flat[...] = 0.0
    source = target.copy()
    source.flat[...] = 1.0
    soft_update(target, source, 0.001)
    np.testing.assert_allclose(target.flat, 0.001)
    soft_update(target, source, 1.0)
    np.testing.assert_array_equal(target.flat, source.flat)


def test_soft_update_converges_geometrically():
    target = mlp_init([1, 2, 1], rng_seed=0)
    source = mlp_init([1, 2, 1], rng_seed=1)
    gap0 = np.max(np.abs(target.flat - source.flat))
    for _ in range(100):
        soft_update(target, source, 0.1)
    np.testing.assert_allclose(np.max(np.abs(target.flat - source.flat)), gap0 * 0.9**100, rtol=1e-6)


def test_soft_update_errors():
    a, b = mlp_init([1, 2, 1]), mlp_init([1, 3, 1])
    with pytest.raises(ConsistencyError):
        soft_update(a, b, 0.5)
    with pytest.raises(ConfigurationError):
        soft_update(a, a.copy(), 0.0)


def test_views_share_flat_storage():
    p = mlp_init([2, 3, 1])
    p.weights[0][0, 0] = 42.0
    assert p.flat[0] == 42.0
    q = p.copy()
    q.weights[0][0, 0] = 0.0
    assert p.flat[0] == 42.0
