import math

import numpy as np
import pytest
from pydantic import ValidationError

from qhybrid.nn import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    NetworkSpec,
    QuantumLayer,
    activation_backward,
    activation_forward,
    bce_grad,
    bce_loss,
    build_desk_architectures,
    build_reference_architectures,
    conv2d_backward,
    conv2d_forward,
    count_params,
    dense_backward,
    dense_forward,
    glorot_uniform_init,
    init_params,
    layer_param_count,
    maxpool2d_backward,
    maxpool2d_forward,
    network_backward,
    network_forward,
    sgd_step,
    to_hybrid,
)

from oracles import rel_err


def naive_conv(x, w, b, stride, padding):
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    kh, kw, _, cout = w.shape
    n, hp, wp, _ = xp.shape
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    out = np.zeros((n, ho, wo, cout))
    for a in range(n):
        for i in range(ho):
            for j in range(wo):
                patch = xp[a, i * stride : i * stride + kh, j * stride : j * stride + kw, :]
                for o in range(cout):
                    out[a, i, j, o] = np.sum(patch * w[:, :, :, o]) + b[o]
    return out


def tiny_spec(hybrid=False):
    layers = (
        Conv2D(in_ch=3, out_ch=2, kernel_h=3, kernel_w=3, padding=1, activation="relu"),
        MaxPool2D(pool_h=2, pool_w=2),
        Flatten(),
        Dense(in_dim=32, out_dim=4, activation="relu"),
        Dense(in_dim=4, out_dim=2),
        Dense(in_dim=2, out_dim=2, activation="relu"),
        Dense(in_dim=2, out_dim=1, activation="sigmoid"),
    )
    spec = NetworkSpec(input_shape=(8, 8, 3), layers=layers)
    return to_hybrid(spec) if hybrid else spec


# -- initialisation ---------------------------------------------------------


def test_glorot_bound_and_determinism():
    limit = math.sqrt(1.5)
    w = glorot_uniform_init(2, 2, (1000,), 0)
    assert np.all(np.abs(w) <= limit) and np.abs(w).max() > 0.95 * limit
    np.testing.assert_array_equal(w, glorot_uniform_init(2, 2, (1000,), 0))


def test_glorot_mean():
    w = glorot_uniform_init(2, 2, (100_000,), 42)
    assert abs(w.mean()) < 0.01 * math.sqrt(1.5)


def test_glorot_rejects_bad_fans():
    with pytest.raises(ValueError):
        glorot_uniform_init(0, 2, (2,), 0)


def test_init_params_zero_bias_and_seeded():
    spec, _ = build_desk_architectures()
    p1 = init_params(spec, 3)
    p2 = init_params(spec, 3)
    for a, b in zip(p1, p2):
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])
    assert all(np.all(p["b"] == 0) for p in p1 if "b" in p)
    assert count_params(p1) == spec.n_params


# -- conv / pool ------------------------------------------------------------


def test_conv_examples():
    x = np.arange(1.0, 5.0).reshape(1, 2, 2, 1)
    y, _ = conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(y, x)
    y, _ = conv2d_forward(x, np.ones((2, 2, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(y, [[[[10.0]]]])
    y, _ = conv2d_forward(np.zeros((1, 3, 3, 2)), np.ones((2, 2, 2, 1)), np.array([0.7]))
    np.testing.assert_array_equal(y, np.full((1, 2, 2, 1), 0.7))


@pytest.mark.parametrize("stride, padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_matches_naive(stride, padding):
    rng = np.random.default_rng(stride * 10 + padding)
    x = rng.normal(size=(2, 7, 6, 3))
    w = rng.normal(size=(3, 2, 3, 4))
    b = rng.normal(size=4)
    y, _ = conv2d_forward(x, w, b, stride, padding)
    np.testing.assert_allclose(y, naive_conv(x, w, b, stride, padding), atol=1e-12)


@pytest.mark.parametrize("stride, padding", [(1, 1), (2, 0)])
def test_conv_backward_against_fd(stride, padding):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5, 5, 2))
    w = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=3)
    y, cache = conv2d_forward(x, w, b, stride, padding)
    g = rng.normal(size=y.shape)
    dx, dw, db = conv2d_backward(cache, g)
    h = 1e-6

    def f(xx, ww, bb):
        return np.sum(g * conv2d_forward(xx, ww, bb, stride, padding)[0])

    for arr, grad, name in ((x, dx, "x"), (w, dw, "w"), (b, db, "b")):
        for idx in list(np.ndindex(arr.shape))[::3]:
            plus, minus = arr.copy(), arr.copy()
            plus[idx] += h
            minus[idx] -= h
            args_p = {"x": x, "w": w, "b": b} | {name: plus}
            args_m = {"x": x, "w": w, "b": b} | {name: minus}
            fd = (f(args_p["x"], args_p["w"], args_p["b"]) - f(args_m["x"], args_m["w"], args_m["b"])) / (2 * h)
            assert grad[idx] == pytest.approx(fd, abs=1e-6)


def test_maxpool_examples():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    y, cache = maxpool2d_forward(x, 2, 2)
    np.testing.assert_array_equal(y, [[[[4.0]]]])
    dx = maxpool2d_backward(cache, np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(dx[0, :, :, 0], [[0, 0], [0, 1]])
    y, _ = maxpool2d_forward(np.full((1, 4, 4, 2), 3.0), 2, 2)
    np.testing.assert_array_equal(y, np.full((1, 2, 2, 2), 3.0))


def test_maxpool_ties_route_to_first():
    x = np.full((1, 2, 2, 1), 5.0)
    _, cache = maxpool2d_forward(x, 2, 2)
    dx = maxpool2d_backward(cache, np.full((1, 1, 1, 1), 2.0))
    np.testing.assert_array_equal(dx[0, :, :, 0], [[2, 0], [0, 0]])


def test_maxpool_indivisible():
    with pytest.raises(ValueError):
        maxpool2d_forward(np.zeros((1, 3, 4, 1)), 2, 2)


# -- dense / activations / loss ---------------------------------------------


def test_dense_examples():
    x = np.array([[1.0, 1.0]])
    y, _ = dense_forward(x, np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(y, x)
    # y = Wx + b with W = [[1, 2], [3, 4]]; stored as (in, out) = W^T
    y, cache = dense_forward(x, np.array([[1.0, 2.0], [3.0, 4.0]]).T, np.array([0.5, -0.5]))
    np.testing.assert_array_equal(y, [[3.5, 6.5]])
    assert layer_param_count(Dense(in_dim=2, out_dim=2)) == 6
    dx, dw, db = dense_backward(cache, np.array([[1.0, 0.0]]))
    np.testing.assert_array_equal(dx, [[1.0, 2.0]])
    np.testing.assert_array_equal(dw, [[1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(db, [1.0, 0.0])
    with pytest.raises(ValueError):
        dense_forward(np.ones((1, 3)), np.eye(2), np.zeros(2))


def test_activation_examples():
    y, _ = activation_forward(np.array([-1.0, 0.0, 2.0]), "relu")
    np.testing.assert_array_equal(y, [0, 0, 2])
    y, cache = activation_forward(np.array([0.0]), "sigmoid")
    assert y[0] == 0.5
    assert activation_backward("sigmoid", cache, np.array([1.0]))[0] == 0.25
    y, _ = activation_forward(np.array([-800.0, 800.0]), "sigmoid")
    assert np.all(np.isfinite(y))


def test_bce_examples():
    assert bce_loss(1.0, 1) == pytest.approx(-math.log(1 - 1e-7), rel=1e-9)
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(0.5, 0) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_grad(0.5, 1) == pytest.approx(-2.0)
    assert np.isfinite(bce_grad(0.0, 1)) and np.isfinite(bce_loss(0.0, 1))


# -- specs ------------------------------------------------------------------


def test_reference_architectures():
    classical, hybrid = build_reference_architectures()
    assert classical.n_layers == hybrid.n_layers == 11
    assert classical.input_shape == (128, 128, 3)
    assert classical.n_params == hybrid.n_params == 416_883
    assert layer_param_count(classical.layers[-2]) == 6
    assert isinstance(hybrid.layers[-2], QuantumLayer)
    assert layer_param_count(hybrid.layers[-2]) == 6
    diff = [i for i, (a, b) in enumerate(zip(classical.layers, hybrid.layers)) if a != b]
    assert diff == [len(classical.layers) - 2]
    assert not classical.is_hybrid and hybrid.is_hybrid


def test_desk_architectures_share_tail():
    classical, hybrid = build_desk_architectures(32)
    assert classical.n_params == hybrid.n_params
    assert [l.kind for l in hybrid.layers[-3:]] == ["dense", "quantum", "dense"]
    assert hybrid.layers[-3].out_dim == 2


def test_spec_json_round_trip():
    _, hybrid = build_reference_architectures()
    text = hybrid.to_json()
    assert NetworkSpec.from_json(text) == hybrid
    assert '"kind":"quantum"' in text


def test_spec_validation_errors():
    ok_tail = (Flatten(), Dense(in_dim=4, out_dim=1, activation="sigmoid"))
    NetworkSpec(input_shape=(2, 2, 1), layers=ok_tail)
    with pytest.raises(ValidationError, match="does not divide"):
        NetworkSpec(input_shape=(3, 3, 1), layers=(MaxPool2D(),) + ok_tail)
    with pytest.raises(ValidationError, match="sigmoid"):
        NetworkSpec(input_shape=(2, 2, 1), layers=(Flatten(), Dense(in_dim=4, out_dim=1)))
    with pytest.raises(ValidationError, match="at most one quantum"):
        NetworkSpec(
            input_shape=(1, 1, 2),
            layers=(Flatten(), QuantumLayer(), QuantumLayer(), Dense(in_dim=2, out_dim=1, activation="sigmoid")),
        )
    with pytest.raises(ValidationError, match="quantum layer expects"):
        NetworkSpec(
            input_shape=(1, 1, 3),
            layers=(Flatten(), QuantumLayer(), Dense(in_dim=2, out_dim=1, activation="sigmoid")),
        )
    with pytest.raises(ValidationError):
        NetworkSpec.model_validate({"input_shape": [1, 1, 2], "layers": [{"kind": "dropout"}]})


def test_standalone_activation_layers():
    spec = NetworkSpec(
        input_shape=(1, 1, 2),
        layers=(Flatten(), Dense(in_dim=2, out_dim=2), Activation(fn="relu"), Dense(in_dim=2, out_dim=1), Activation(fn="sigmoid")),
    )
    assert spec.n_layers == 3
    net = Network(spec, seed=0)
    x = np.random.default_rng(0).normal(size=(3, 1, 1, 2))
    y = np.array([0, 1, 1])
    _, grads = net.loss_and_grads(x, y)
    h = 1e-6
    w = net.params[1]["w"]
    for idx in np.ndindex(w.shape):
        p = [{k: v.copy() for k, v in d.items()} for d in net.params]
        p[1]["w"][idx] += h
        lp = bce_loss(network_forward(spec, p, x)[0], y).mean()
        p[1]["w"][idx] -= 2 * h
        lm = bce_loss(network_forward(spec, p, x)[0], y).mean()
        assert grads[1]["w"][idx] == pytest.approx((lp - lm) / (2 * h), abs=1e-8)


# -- network ----------------------------------------------------------------


def test_network_forward_examples():
    spec = NetworkSpec(input_shape=(1, 1, 2), layers=(Flatten(), Dense(in_dim=2, out_dim=1, activation="sigmoid")))
    params = [{}, {"w": np.zeros((2, 1)), "b": np.zeros(1)}]
    pred, _ = network_forward(spec, params, np.random.default_rng(0).normal(size=(5, 1, 1, 2)))
    np.testing.assert_array_equal(pred, 0.5)

    spec = NetworkSpec(
        input_shape=(1, 1, 2),
        layers=(Flatten(), QuantumLayer(), Dense(in_dim=2, out_dim=1, activation="sigmoid")),
    )
    params = [{}, {"w": np.zeros((3, 2))}, {"w": np.ones((2, 1)), "b": np.zeros(1)}]
    pred, cache = network_forward(spec, params, np.zeros((1, 1, 1, 2)))
    fed_to_output = cache[2][0][0]
    np.testing.assert_allclose(fed_to_output, [[1.0, 1.0]], atol=1e-15)
    assert pred[0] == pytest.approx(1 / (1 + math.exp(-2)))


def test_reference_net_output_in_unit_interval():
    classical, hybrid = build_reference_architectures()
    x = np.random.default_rng(0).random((2, 128, 128, 3))
    for spec in (classical, hybrid):
        pred, _ = network_forward(spec, init_params(spec, 0), x)
        assert pred.shape == (2,) and np.all((pred > 0) & (pred < 1))


def test_network_input_shape_checked():
    spec = tiny_spec()
    with pytest.raises(ValueError):
        network_forward(spec, init_params(spec, 0), np.zeros((1, 7, 8, 3)))


def test_backward_zero_upstream_and_shapes():
    spec = tiny_spec(hybrid=True)
    params = init_params(spec, 0)
    _, cache = network_forward(spec, params, np.random.default_rng(1).random((3, 8, 8, 3)))
    grads = network_backward(spec, params, cache, np.zeros(3))
    for p, g in zip(params, grads):
        assert p.keys() == g.keys()
        for k in p:
            assert g[k].shape == p[k].shape
            assert np.all(g[k] == 0)


def test_backward_stale_cache():
    spec = tiny_spec()
    params = init_params(spec, 0)
    _, cache = network_forward(spec, params, np.random.default_rng(1).random((3, 8, 8, 3)))
    with pytest.raises(ValueError, match="stale cache"):
        network_backward(spec, params, cache, np.zeros(2))
    with pytest.raises(ValueError):
        network_backward(spec, params, cache[:-1], np.zeros(3))


@pytest.mark.parametrize("hybrid", [False, True])
def test_backward_matches_finite_differences(hybrid):
    spec = tiny_spec(hybrid)
    assert spec.n_params <= 500
    rng = np.random.default_rng(4)
    x = rng.random((4, 8, 8, 3))
    y = np.array([0, 1, 1, 0])
    net = Network(spec, seed=7)
    _, grads = net.loss_and_grads(x, y)

    def loss(p):
        return bce_loss(network_forward(spec, p, x)[0], y).mean()

    worst = 0.0
    for li, group in enumerate(net.params):
        for k, v in group.items():
            for idx in np.ndindex(v.shape):
                p = [{kk: vv.copy() for kk, vv in d.items()} for d in net.params]
                p[li][k][idx] += 1e-4
                lp = loss(p)
                p[li][k][idx] -= 2e-4
                lm = loss(p)
                worst = max(worst, float(rel_err(grads[li][k][idx], (lp - lm) / 2e-4)))
    assert worst < 1e-3


def test_sgd_step_examples():
    params = [{"w": np.array([1.0])}]
    out = sgd_step(params, [{"w": np.array([1.0])}], 0.01)
    assert out[0]["w"][0] == 0.99
    same = sgd_step(params, [{"w": np.array([0.0])}], 0.01)
    np.testing.assert_array_equal(same[0]["w"], params[0]["w"])
    g = [{"w": np.array([0.3])}]
    half = sgd_step(sgd_step(params, g, 0.005), g, 0.005)
    assert half[0]["w"][0] == pytest.approx(sgd_step(params, g, 0.01)[0]["w"][0], abs=1e-15)
    with pytest.raises(ValueError):
        sgd_step(params, [{"w": np.array([1.0, 2.0])}], 0.1)


def test_sgd_updates_quantum_weights():
    spec = tiny_spec(hybrid=True)
    net = Network(spec, seed=0)
    qi = next(i for i, l in enumerate(spec.layers) if isinstance(l, QuantumLayer))
    before = net.params[qi]["w"].copy()
    _, grads = net.loss_and_grads(np.random.default_rng(0).random((4, 8, 8, 3)), np.array([0, 1, 0, 1]))
    net.step(grads, 0.1)
    np.testing.assert_allclose(net.params[qi]["w"], before - 0.1 * grads[qi]["w"])


@pytest.mark.parametrize("seed", range(5))
def test_smooth_network_gradients_without_exclusions(seed):
    layers = (
        Conv2D(in_ch=3, out_ch=2, kernel_h=3, kernel_w=3, padding=1, activation="sigmoid"),
        MaxPool2D(pool_h=2, pool_w=2),
        Flatten(),
        Dense(in_dim=32, out_dim=2, activation="sigmoid"),
        QuantumLayer(),
        Dense(in_dim=2, out_dim=1, activation="sigmoid"),
    )
    spec = NetworkSpec(input_shape=(8, 8, 3), layers=layers)
    rng = np.random.default_rng(seed)
    x = rng.random((3, 8, 8, 3))
    y = np.array([1, 0, 1])
    net = Network(spec, seed=seed)
    _, grads = net.loss_and_grads(x, y)
    for li, group in enumerate(net.params):
        for k, v in group.items():
            for idx in np.ndindex(v.shape):
                p = [{kk: vv.copy() for kk, vv in d.items()} for d in net.params]
                p[li][k][idx] += 1e-5
                lp = bce_loss(network_forward(spec, p, x)[0], y).mean()
                p[li][k][idx] -= 2e-5
                lm = bce_loss(network_forward(spec, p, x)[0], y).mean()
                assert rel_err(grads[li][k][idx], (lp - lm) / 2e-5, 1e-6) < 1e-5
