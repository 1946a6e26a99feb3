import json

import numpy as np
import pytest

from kernelmix.errors import ParameterError, ShapeError, TrainingDivergedError
from kernelmix.ndnet import (
    DenseNet,
    OptimizerState,
    backward,
    forward,
    forward_cache,
    init_dense_net,
    interleave,
    optimizer_step,
    rectified_quadratic,
    relu,
)
from oracles import central_diff, max_rel_error


def tiny_net():
    # 2 -> 2 -> 1, hand-picked weights
    w0 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b0 = np.array([0.0, -1.0])
    w1 = np.array([[1.0, 1.0]])
    b1 = np.array([0.5])
    return DenseNet([2, 2, 1], [w0, w1], [b0, b1], ["relu", "rectified_quadratic"])


def test_activations():
    assert relu(-2.0) == 0.0
    assert rectified_quadratic(-1.0) == 0.0
    assert rectified_quadratic(3.0) == 9.0
    np.testing.assert_array_equal(rectified_quadratic(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 4.0])


def test_forward_by_hand():
    net = tiny_net()
    # hidden: relu([1-2, 0.5+4-1]) = [0, 3.5]; outer: max(0, 3.5+0.5)^2 = 16
    assert forward(net, [1.0, 2.0]) == pytest.approx([16.0])
    out = forward(net, np.array([[1.0, 2.0], [0.0, 0.0]]))
    # second row: relu([0, -1]) = 0, outer (0.5)^2
    np.testing.assert_allclose(out[:, 0], [16.0, 0.25])


def test_shape_errors():
    net = tiny_net()
    with pytest.raises(ShapeError):
        forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        DenseNet([2, 1], [np.zeros((2, 1))], [np.zeros(1)], ["linear"])
    with pytest.raises(ParameterError):
        DenseNet([2, 1], [np.zeros((1, 2))], [np.zeros(1)], ["swish"])


def test_init_shapes_and_bounds(rng):
    net = init_dense_net([4, 8, 3], ("relu", "rectified_quadratic"), rng)
    assert [w.shape for w in net.weights] == [(8, 4), (3, 8)]
    assert net.activations == ["relu", "rectified_quadratic"]
    assert all(np.all(b == 0) for b in net.biases)
    assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 12)
    assert net.n_params == 8 * 4 + 8 + 3 * 8 + 3


@pytest.mark.parametrize("acts", [("tanh", "linear"), ("relu", "rectified_quadratic"), ("tanh", "exponential")])
def test_backward_matches_finite_differences(rng, acts):
    net = init_dense_net([3, 5, 4, 2], acts, rng)
    for b in net.biases:
        b += rng.normal(0, 0.3, b.shape)
    x = rng.normal(size=(7, 3))
    coef = rng.normal(size=(7, 2))

    def loss():
        return float(np.sum(coef * forward(net, x)))

    wg, bg = backward(net, forward_cache(net, x), coef)
    numeric = central_diff(loss, net.params)
    assert max_rel_error(interleave(wg, bg), numeric) < 1e-6


def test_backward_wrt_preactivation(rng):
    net = init_dense_net([3, 4, 2], ("tanh", "exponential"), rng)
    x = rng.normal(size=(5, 3))
    cache = forward_cache(net, x)
    g = rng.normal(size=(5, 2))
    # dL/da = g means dL/dh = g / exp(a)
    a = backward(net, cache, g / cache.outputs[-1])
    b = backward(net, cache, g, wrt_preactivation=True)
    for u, v in zip(a[0] + a[1], b[0] + b[1]):
        np.testing.assert_allclose(u, v, rtol=1e-12)


def test_adam_first_step_moves_by_learning_rate():
    p = [np.array([1.0, -2.0, 3.0])]
    g = [np.array([0.5, -4.0, 1e-3])]
    state = OptimizerState("adam", learning_rate=1e-2)
    optimizer_step(state, p, g)
    # bias-corrected first step is lr * g / (|g| + eps)
    expected = np.array([1.0, -2.0, 3.0]) - 1e-2 * g[0] / (np.abs(g[0]) + 1e-8)
    np.testing.assert_allclose(p[0], expected, rtol=1e-14)
    np.testing.assert_allclose(p[0], [0.99, -1.99, 2.99], rtol=1e-5)
    assert state.step_count == 1


def test_sgd_step():
    p = [np.array([[1.0, 2.0]])]
    optimizer_step(OptimizerState("sgd", learning_rate=0.1), p, [np.array([[1.0, -1.0]])])
    np.testing.assert_allclose(p[0], [[0.9, 2.1]])


def test_adam_minimizes_quadratic():
    p = [np.array([3.0, -2.0])]
    state = OptimizerState("adam", learning_rate=0.05)
    for _ in range(2000):
        optimizer_step(state, p, [2.0 * p[0]])
    assert np.abs(p[0]).max() < 1e-2


def test_non_finite_gradient_raises():
    p = [np.zeros(2)]
    with pytest.raises(TrainingDivergedError):
        optimizer_step(OptimizerState(), p, [np.array([np.nan, 0.0])])
    np.testing.assert_array_equal(p[0], 0.0)


def test_bad_optimizer_settings():
    with pytest.raises(ParameterError):
        OptimizerState("rmsprop")
    with pytest.raises(ParameterError):
        OptimizerState(learning_rate=0.0)


def test_round_trip_is_exact(rng):
    net = init_dense_net([3, 6, 2], ("relu", "rectified_quadratic"), rng)
    back = DenseNet.from_dict(json.loads(json.dumps(net.to_dict())))
    for a, b in zip(net.params, back.params):
        np.testing.assert_array_equal(a, b)
    x = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(forward(net, x), forward(back, x))
