"""Composition of layer kernels into a trainable network.

Parameters live in a plain list with one dict per layer (empty for
parameter-free layers): ``{"w": ..., "b": ...}`` for conv/dense and
``{"w": ...}`` holding the angle grid for the quantum layer.
"""

from __future__ import annotations

import numpy as np

from .. import vqc
from . import layers as L
from .spec import Activation, Conv2D, Dense, Flatten, MaxPool2D, NetworkSpec, QuantumLayer

Params = list[dict[str, np.ndarray]]


def init_params(spec: NetworkSpec, rng) -> Params:
    """Glorot-uniform weights, zero biases, uniform circuit angles.

    Draws are taken layer by layer from one generator, so a seed fixes the
    whole initialisation.
    """
    rng = np.random.default_rng(rng)
    params: Params = []
    for layer in spec.layers:
        if isinstance(layer, Conv2D):
            shape = (layer.kernel_h, layer.kernel_w, layer.in_ch, layer.out_ch)
            rf = layer.kernel_h * layer.kernel_w
            w = L.glorot_uniform_init(rf * layer.in_ch, rf * layer.out_ch, shape, rng)
            params.append({"w": w, "b": np.zeros(layer.out_ch)})
        elif isinstance(layer, Dense):
            w = L.glorot_uniform_init(layer.in_dim, layer.out_dim, (layer.in_dim, layer.out_dim), rng)
            params.append({"w": w, "b": np.zeros(layer.out_dim)})
        elif isinstance(layer, QuantumLayer):
            params.append({"w": vqc.init_weights(rng, layer.vqc_config)})
        else:
            params.append({})
    return params


def count_params(params: Params) -> int:
    return sum(int(v.size) for p in params for v in p.values())


def _check_params(spec: NetworkSpec, params: Params) -> None:
    if len(params) != len(spec.layers):
        raise ValueError(f"{len(params)} parameter groups for {len(spec.layers)} layers")


def network_forward(spec: NetworkSpec, params: Params, x: np.ndarray):
    """Run a batch ``(N, h, w, c)`` through the network.

    Returns the ``(N,)`` probabilities and the per-layer cache needed by
    :func:`network_backward`.
    """
    _check_params(spec, params)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != tuple(spec.input_shape):
        raise ValueError(f"input batch has shape {x.shape}, network expects (N, *{spec.input_shape})")
    cache = []
    for layer, p in zip(spec.layers, params):
        act = None
        if isinstance(layer, Conv2D):
            x, c = L.conv2d_forward(x, p["w"], p["b"], layer.stride, layer.padding)
            act = layer.activation
        elif isinstance(layer, MaxPool2D):
            x, c = L.maxpool2d_forward(x, layer.pool_h, layer.pool_w)
        elif isinstance(layer, Flatten):
            c = x.shape
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            x, c = L.dense_forward(x, p["w"], p["b"])
            act = layer.activation
        elif isinstance(layer, Activation):
            x, c = L.activation_forward(x, layer.fn)
        elif isinstance(layer, QuantumLayer):
            c = (x, p["w"])
            x = vqc.vqc_forward(x, p["w"], layer.vqc_config)
        else:  # pragma: no cover
            raise TypeError(f"unsupported layer {layer!r}")
        act_cache = None
        if act is not None:
            x, act_cache = L.activation_forward(x, act)
        cache.append((c, act_cache))
    return x[:, 0], cache


def network_backward(spec: NetworkSpec, params: Params, cache, grad_pred: np.ndarray) -> Params:
    """Reverse-mode pass from d loss / d prediction to parameter gradients."""
    _check_params(spec, params)
    if len(cache) != len(spec.layers):
        raise ValueError("cache does not belong to this network")
    grad = np.asarray(grad_pred, dtype=np.float64).reshape(-1, 1)
    grads: Params = [{} for _ in spec.layers]
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, p = spec.layers[i], params[i]
        c, act_cache = cache[i]
        act = getattr(layer, "activation", None)
        if act is not None:
            if act_cache is None or act_cache.shape != grad.shape:
                raise ValueError(f"stale cache at layer {i}")
            grad = L.activation_backward(act, act_cache, grad)
        if isinstance(layer, Conv2D):
            grad, dw, db = L.conv2d_backward(c, grad)
            grads[i] = {"w": dw, "b": db}
        elif isinstance(layer, MaxPool2D):
            grad = L.maxpool2d_backward(c, grad)
        elif isinstance(layer, Flatten):
            grad = grad.reshape(c)
        elif isinstance(layer, Dense):
            if c[0].shape[0] != grad.shape[0]:
                raise ValueError(f"stale cache at layer {i}")
            grad, dw, db = L.dense_backward(c, grad)
            grads[i] = {"w": dw, "b": db}
        elif isinstance(layer, Activation):
            grad = L.activation_backward(layer.fn, c, grad)
        elif isinstance(layer, QuantumLayer):
            x_in, w = c
            grad, dw = vqc.vqc_backward(x_in, w, grad, layer.vqc_config)
            grads[i] = {"w": dw}
    return grads


def sgd_step(params: Params, grads: Params, lr: float) -> Params:
    """Vanilla gradient descent: ``w <- w - lr * g`` on every tensor."""
    if len(params) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    out: Params = []
    for p, g in zip(params, grads):
        if p.keys() != g.keys():
            raise ValueError("parameter and gradient groups do not match")
        new = {}
        for k, v in p.items():
            if g[k].shape != v.shape:
                raise ValueError(f"gradient shape {g[k].shape} does not match parameter {v.shape}")
            new[k] = v - lr * g[k]
        out.append(new)
    return out


class Network:
    """A spec bound to its parameters, for convenient training loops."""

    def __init__(self, spec: NetworkSpec, params: Params | None = None, seed=None):
        self.spec = spec
        self.params = params if params is not None else init_params(spec, seed)

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        out = [network_forward(self.spec, self.params, x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean BCE over the batch and its parameter gradients."""
        pred, cache = network_forward(self.spec, self.params, x)
        losses = L.bce_loss(pred, y)
        grad_pred = L.bce_grad(pred, y) / len(y)
        return losses, network_backward(self.spec, self.params, cache, grad_pred)

    def step(self, grads: Params, lr: float) -> None:
        self.params = sgd_step(self.params, grads, lr)

    @property
    def n_params(self) -> int:
        return count_params(self.params)
