import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthflow.nets import (
    DenseLayer,
    MlpNetwork,
    NonFiniteError,
    ShapeError,
    build_mlp,
    mlp_forward,
    mlp_input_grad,
    mlp_param_grad,
    penalty_param_grad,
    rmsprop_state,
    rmsprop_step,
    sample_uniform,
)

from helpers import fd_input_grad, fd_param_grad, random_net_and_batch, rel_err


def linear_net(weights, bias=None, activation="linear"):
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=float)
    return MlpNetwork([DenseLayer(w, b, activation)])


# ---------------------------------------------------------------- forward

def test_forward_identity_linear():
    net = linear_net([[1.0]])
    y, _ = mlp_forward(net, [[3.0]])
    assert y == np.array([[3.0]])


def test_forward_relu_clamps_negative():
    net = linear_net([[1.0]], activation="relu")
    y, _ = mlp_forward(net, [[-2.0]])
    assert y == np.array([[0.0]])


def test_forward_two_layer_composition():
    net = MlpNetwork(
        [
            DenseLayer(np.array([[2.0]]), np.zeros(1), "relu"),
            DenseLayer(np.array([[-1.0]]), np.zeros(1), "linear"),
        ]
    )
    y, _ = mlp_forward(net, [[3.0]])
    assert y == np.array([[-6.0]])


def test_forward_shape_error_names_both_shapes():
    net = linear_net([[1.0, 2.0]])
    with pytest.raises(ShapeError, match="3 columns.*expects 2"):
        mlp_forward(net, [[1.0, 2.0, 3.0]])


def test_forward_rejects_nonfinite_input():
    net = linear_net([[1.0]])
    with pytest.raises(NonFiniteError):
        mlp_forward(net, [[np.nan]])


def test_incompatible_layer_dims_rejected():
    with pytest.raises(ShapeError):
        MlpNetwork(
            [
                DenseLayer(np.ones((2, 3)), np.zeros(2), "relu"),
                DenseLayer(np.ones((1, 5)), np.zeros(1), "linear"),
            ]
        )


# ---------------------------------------------------------- parameter grads

def test_param_grad_linear_layer_hand_case():
    net = linear_net([[1.0]])
    _, cache = mlp_forward(net, [[3.0]])
    grads = mlp_param_grad(net, cache, [[1.0]])
    assert grads[0] == np.array([[3.0]])
    assert grads[1] == np.array([1.0])


def test_param_grad_dead_relu_is_zero():
    net = linear_net([[1.0]], activation="relu")
    _, cache = mlp_forward(net, [[-2.0]])
    grads = mlp_param_grad(net, cache, [[5.0]])
    assert grads[0] == np.array([[0.0]])
    assert grads[1] == np.array([0.0])


def test_param_grad_matches_finite_differences():
    for seed in range(5):
        net, x = random_net_and_batch(seed)
        weighting = np.random.default_rng(seed).normal(size=(x.shape[0], 1))
        _, cache = mlp_forward(net, x)
        analytic = mlp_param_grad(net, cache, weighting)
        oracle = fd_param_grad(
            net, lambda: float((mlp_forward(net, x)[0] * weighting).sum())
        )
        assert rel_err(analytic, oracle) < 1e-5


def test_param_grad_stale_cache_rejected():
    net, x = random_net_and_batch(0)
    other = build_mlp([3, 7, 1], np.random.default_rng(1))
    _, cache = mlp_forward(net, x)
    with pytest.raises(ShapeError, match="stale"):
        mlp_param_grad(other, cache, np.ones((x.shape[0], 1)))


@settings(deadline=None, max_examples=25)
@given(
    seed=st.integers(0, 10_000),
    alpha=st.floats(-3, 3, allow_nan=False),
    beta=st.floats(-3, 3, allow_nan=False),
)
def test_param_grad_linear_in_upstream(seed, alpha, beta):
    net, x = random_net_and_batch(seed)
    rng = np.random.default_rng(seed + 1)
    u = rng.normal(size=(x.shape[0], 1))
    v = rng.normal(size=(x.shape[0], 1))
    _, cache = mlp_forward(net, x)
    combined = mlp_param_grad(net, cache, alpha * u + beta * v)
    separate = [
        alpha * gu + beta * gv
        for gu, gv in zip(
            mlp_param_grad(net, cache, u), mlp_param_grad(net, cache, v)
        )
    ]
    assert rel_err(combined, separate) < 1e-12


# ---------------------------------------------------------------- input grads

def test_input_grad_linear_critic():
    net = linear_net([[2.0, 3.0]])
    g = mlp_input_grad(net, [[0.4, 0.6], [5.0, -1.0]])
    assert np.array_equal(g, np.array([[2.0, 3.0], [2.0, 3.0]]))


def test_input_grad_dead_relu_zero():
    net = linear_net([[1.0]], activation="relu")
    g = mlp_input_grad(net, [[-1.5]])
    assert g == np.array([[0.0]])


def test_input_grad_requires_scalar_output():
    net = linear_net([[1.0], [2.0]])
    with pytest.raises(ShapeError, match="scalar-output"):
        mlp_input_grad(net, [[1.0]])


def test_input_grad_matches_finite_differences():
    for seed in range(5):
        net, x = random_net_and_batch(seed + 50)
        analytic = mlp_input_grad(net, x)
        assert rel_err(analytic, fd_input_grad(net, x)) < 1e-5


# ------------------------------------------------------------ penalty grads

def test_penalty_zero_on_unit_norm_linear_critic():
    net = linear_net([[0.6, 0.8]])
    penalty, grads = penalty_param_grad(net, [[0.1, 0.2], [0.5, 0.5]], 10.0)
    assert penalty == 0.0
    assert all(np.all(g == 0.0) for g in grads)


def test_penalty_closed_form_linear_critic():
    net = linear_net([[2.0]])
    penalty, grads = penalty_param_grad(net, [[0.3]], 10.0)
    assert penalty == 10.0
    assert grads[0] == np.array([[20.0]])
    assert grads[1] == np.array([0.0])


def test_penalty_zero_gradient_norm_uses_zero_subgradient():
    net = linear_net([[0.0]])
    penalty, grads = penalty_param_grad(net, [[0.7]], 10.0)
    assert penalty == 10.0
    assert grads[0] == np.array([[0.0]])


def test_penalty_grad_matches_finite_differences():
    for seed in range(5):
        net, x_hat = random_net_and_batch(seed + 200)
        penalty, analytic = penalty_param_grad(net, x_hat, 10.0)
        assert penalty >= 0.0
        oracle = fd_param_grad(net, lambda: penalty_param_grad(net, x_hat, 10.0)[0])
        assert rel_err(analytic, oracle) < 1e-4


def test_penalty_requires_nonempty_batch():
    net = linear_net([[1.0]])
    with pytest.raises(ValueError, match="nonempty"):
        penalty_param_grad(net, np.empty((0, 1)), 10.0)


# ------------------------------------------------------------------- rmsprop

def test_rmsprop_zero_gradient_keeps_param_and_decays_cache():
    params = [np.array([2.0])]
    state = rmsprop_state(params)
    state.cache[0][:] = 0.5
    rmsprop_step(params, [np.array([0.0])], state)
    assert params[0] == np.array([2.0])
    assert state.cache[0] == np.array([0.45])


def test_rmsprop_first_step_hand_case():
    params = [np.array([1.0])]
    state = rmsprop_state(params, lr=0.001, rho=0.9, epsilon=1e-6)
    rmsprop_step(params, [np.array([1.0])], state)
    assert abs(state.cache[0][0] - 0.1) < 1e-15
    expected_delta = -0.001 / (math.sqrt(0.1) + 1e-6)
    assert abs(params[0][0] - (1.0 + expected_delta)) < 1e-12


def test_rmsprop_second_identical_step():
    params = [np.array([1.0])]
    state = rmsprop_state(params, lr=0.001, rho=0.9, epsilon=1e-6)
    rmsprop_step(params, [np.array([1.0])], state)
    first = params[0][0]
    rmsprop_step(params, [np.array([1.0])], state)
    assert abs(state.cache[0][0] - 0.19) < 1e-15
    expected_delta = -0.001 / (math.sqrt(0.19) + 1e-6)
    assert abs(params[0][0] - (first + expected_delta)) < 1e-15


def test_rmsprop_nonfinite_gradient_names_parameter():
    params = [np.array([1.0]), np.array([2.0])]
    state = rmsprop_state(params)
    with pytest.raises(NonFiniteError, match="parameter 1"):
        rmsprop_step(params, [np.array([0.0]), np.array([np.inf])], state)


def test_rmsprop_validates_hyperparameters():
    with pytest.raises(ValueError):
        rmsprop_state([np.zeros(1)], lr=0.0)
    with pytest.raises(ValueError):
        rmsprop_state([np.zeros(1)], rho=1.0)
    with pytest.raises(ValueError):
        rmsprop_state([np.zeros(1)], epsilon=0.0)


@settings(deadline=None, max_examples=50)
@given(
    grads=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=8),
    rho=st.floats(0.01, 0.99),
)
def test_rmsprop_cache_stays_nonnegative(grads, rho):
    params = [np.zeros(len(grads))]
    state = rmsprop_state(params, rho=rho)
    for _ in range(3):
        rmsprop_step(params, [np.array(grads)], state)
        assert (state.cache[0] >= 0.0).all()


def test_training_steps_are_seed_deterministic():
    def run():
        rng = np.random.default_rng(1234)
        net = build_mlp([2, 4, 1], rng)
        state = rmsprop_state(net.parameters())
        for _ in range(10):
            x = rng.normal(size=(5, 2))
            _, cache = mlp_forward(net, x)
            grads = mlp_param_grad(net, cache, np.ones((5, 1)) / 5)
            rmsprop_step(net.parameters(), grads, state)
        return net

    a, b = run(), run()
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)


# ----------------------------------------------------------------- sampling

def test_sample_uniform_range_and_determinism():
    a = sample_uniform(np.random.default_rng(9), 50, 3, 0.0, 1.0)
    b = sample_uniform(np.random.default_rng(9), 50, 3, 0.0, 1.0)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() < 1.0


def test_sample_uniform_rejects_bad_range():
    with pytest.raises(ValueError, match="low"):
        sample_uniform(np.random.default_rng(0), 2, 2, 1.0, 1.0)


def test_sample_uniform_law_of_large_numbers():
    m = sample_uniform(np.random.default_rng(5), 100, 100, 0.0, 1.0)
    assert abs(m.mean() - 0.5) < 0.02


# ------------------------------------------------------------------ builder

def test_build_mlp_shapes_and_zero_bias():
    net = build_mlp([3, 5, 2], np.random.default_rng(0))
    assert [l.weights.shape for l in net.layers] == [(5, 3), (2, 5)]
    assert all(np.all(l.bias == 0.0) for l in net.layers)
    assert [l.activation for l in net.layers] == ["relu", "linear"]
