"""Dressed variational circuit: angle embedding, Rx+CNOT layers, Z readout.

Gradients come from the two-term parameter-shift rule. Every trainable angle
and every embedded input enters through a single Rx gate, so shifting it by
+-pi/2 gives the exact derivative of each <Z> readout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qsim

SHIFT = np.pi / 2


@dataclass(frozen=True)
class VqcConfig:
    n_qubits: int = 2
    n_layers: int = 3
    cnot_control: int = 0
    cnot_target: int = 1

    def __post_init__(self):
        if self.n_qubits < 2:
            raise ValueError("n_qubits must be at least 2")
        if self.n_layers < 1:
            raise ValueError("n_layers must be at least 1")
        if self.cnot_control == self.cnot_target:
            raise ValueError("cnot_control and cnot_target must differ")
        for q in (self.cnot_control, self.cnot_target):
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"CNOT qubit {q} out of range")

    @property
    def weight_shape(self) -> tuple[int, int]:
        return (self.n_layers, self.n_qubits)

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits


DEFAULT_CONFIG = VqcConfig()


def _check(x: np.ndarray, w: np.ndarray, cfg: VqcConfig) -> None:
    if x.shape[-1] != cfg.n_qubits:
        raise ValueError(f"input has {x.shape[-1]} features, circuit has {cfg.n_qubits} qubits")
    if w.shape != cfg.weight_shape:
        raise ValueError(f"weights have shape {w.shape}, expected {cfg.weight_shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite circuit input")
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite circuit weights")


def embed_angles(x) -> np.ndarray:
    """Encode each feature as an Rx angle on its own qubit, starting from |0...0>."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite circuit input")
    n = x.shape[-1]
    state = np.broadcast_to(qsim.zero_state(n), (*x.shape[:-1], 1 << n))
    for q in range(n):
        state = qsim.apply_rx(state, q, x[..., q])
    return state


def _run(x: np.ndarray, w: np.ndarray, cfg: VqcConfig) -> np.ndarray:
    state = embed_angles(x)
    for layer in range(cfg.n_layers):
        for q in range(cfg.n_qubits):
            state = qsim.apply_rx(state, q, w[..., layer, q])
        state = qsim.apply_cnot(state, cfg.cnot_control, cfg.cnot_target)
    return np.stack([qsim.expect_z(state, q) for q in range(cfg.n_qubits)], axis=-1)


def vqc_forward(x, w, cfg: VqcConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Per-qubit <Z> readout. ``x`` is ``(n_qubits,)`` or ``(batch, n_qubits)``."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check(x, w, cfg)
    return _run(x, w, cfg)


def vqc_gradients(x, w, cfg: VqcConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-shift Jacobians ``(dy_dw, dy_dx)``.

    ``dy_dw[..., i, p]`` is d y_i / d w_p with ``p`` running over the flattened
    ``(layer, qubit)`` weight grid; ``dy_dx[..., i, j]`` is d y_i / d x_j.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check(x, w, cfg)
    batch = x.shape[:-1]
    nq = cfg.n_qubits

    # All shifted weight grids evaluated in one batched pass: (2 * n_params, layers, qubits)
    eye_w = np.eye(cfg.n_params).reshape(cfg.n_params, *cfg.weight_shape) * SHIFT
    w_shifted = np.concatenate([w + eye_w, w - eye_w])
    xs = np.broadcast_to(x[..., None, :], (*batch, 2 * cfg.n_params, nq))
    y = _run(xs, w_shifted, cfg)
    dy_dw = (y[..., : cfg.n_params, :] - y[..., cfg.n_params :, :]) / 2.0
    dy_dw = np.swapaxes(dy_dw, -1, -2)

    eye_x = np.eye(nq) * SHIFT
    x_shifted = np.concatenate([x[..., None, :] + eye_x, x[..., None, :] - eye_x], axis=-2)
    y = _run(x_shifted, w, cfg)
    dy_dx = (y[..., :nq, :] - y[..., nq:, :]) / 2.0
    dy_dx = np.swapaxes(dy_dx, -1, -2)
    return dy_dw, dy_dx


def vqc_backward(x, w, grad_out, cfg: VqcConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """Chain an upstream gradient through the circuit.

    Returns ``(grad_x, grad_w)``; ``grad_w`` is summed over the batch and has
    the weight grid's shape.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    dy_dw, dy_dx = vqc_gradients(x, w, cfg)
    grad_x = np.einsum("...i,...ij->...j", grad_out, dy_dx)
    flat_g = grad_out.reshape(-1, cfg.n_qubits)
    flat_j = dy_dw.reshape(-1, cfg.n_qubits, cfg.n_params)
    grad_w = np.einsum("bi,bip->p", flat_g, flat_j).reshape(cfg.weight_shape)
    return grad_x, grad_w


def init_weights(rng: np.random.Generator, cfg: VqcConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Uniform angles on [0, 2*pi)."""
    return rng.uniform(0.0, 2.0 * np.pi, size=cfg.weight_shape)
