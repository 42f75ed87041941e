"""Dense statevector simulation for small qubit registers.

A state is a complex128 array whose last axis holds the ``2**n`` amplitudes.
Any leading axes are treated as a batch of independent registers, which is
how the quantum layer pushes a whole mini-batch through the circuit at once.

Basis index ``b`` encodes the ket ``|q0 q1 ... q(n-1)>`` with qubit 0 as the
most significant bit, so the textbook two-qubit CNOT (control 0, target 1)
and ``Z (x) Z`` matrices apply to a 2-qubit state without any permutation.
"""

from __future__ import annotations

import numpy as np

MAX_QUBITS = 20


class CapacityError(ValueError):
    """Requested register exceeds the simulator's qubit limit."""


def _n_qubits(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for {n}-qubit state")


def n_qubits(state: np.ndarray) -> int:
    return _n_qubits(np.asarray(state))


def zero_state(n_qubits: int) -> np.ndarray:
    """Return ``|0...0>`` on ``n_qubits`` qubits."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be positive")
    if n_qubits > MAX_QUBITS:
        raise CapacityError(
            f"capacity exceeded: {n_qubits} qubits requested, limit is {MAX_QUBITS}"
        )
    state = np.zeros(1 << n_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def apply_rx(state: np.ndarray, q: int, theta) -> np.ndarray:
    """Rotate qubit ``q`` about the X axis by ``theta`` radians.

    ``theta`` is a scalar or an array matching the state's batch axes.
    The update touches amplitude pairs that differ only in bit ``q``.
    """
    state = np.asarray(state, dtype=np.complex128)
    n = _n_qubits(state)
    _check_qubit(q, n)
    lead = state.shape[:-1]
    view = state.reshape(*lead, 1 << q, 2, 1 << (n - q - 1))
    half = np.asarray(theta, dtype=np.float64) / 2.0
    if half.ndim:
        half = half[..., None, None]
    c = np.cos(half)
    s = np.sin(half)
    a = view[..., 0, :]
    b = view[..., 1, :]
    out = np.empty_like(view)
    out[..., 0, :] = c * a - 1j * s * b
    out[..., 1, :] = -1j * s * a + c * b
    return out.reshape(state.shape)


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    """Flip ``target`` on the branch where ``control`` is 1 (pure permutation)."""
    state = np.asarray(state, dtype=np.complex128)
    n = _n_qubits(state)
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError("control and target must differ")
    lead = state.shape[:-1]
    view = state.reshape(*lead, *([2] * n))
    out = view.copy()
    lo = [slice(None)] * n
    hi = [slice(None)] * n
    lo[control] = hi[control] = 1
    lo[target] = 0
    hi[target] = 1
    lo_idx = (Ellipsis, *lo)
    hi_idx = (Ellipsis, *hi)
    out[lo_idx] = view[hi_idx]
    out[hi_idx] = view[lo_idx]
    return out.reshape(state.shape)


def expect_z(state: np.ndarray, q: int) -> np.ndarray | float:
    """<Z_q>: probability of bit ``q`` being 0 minus probability of it being 1."""
    state = np.asarray(state)
    n = _n_qubits(state)
    _check_qubit(q, n)
    probs = np.abs(state) ** 2
    view = probs.reshape(*state.shape[:-1], 1 << q, 2, 1 << (n - q - 1))
    val = view[..., 0, :].sum(axis=(-2, -1)) - view[..., 1, :].sum(axis=(-2, -1))
    return float(val) if np.ndim(val) == 0 else val


def expect_zz(state: np.ndarray, q0: int, q1: int) -> np.ndarray | float:
    """<Z_q0 Z_q1>: parity-weighted probability sum."""
    state = np.asarray(state)
    n = _n_qubits(state)
    _check_qubit(q0, n)
    _check_qubit(q1, n)
    if q0 == q1:
        raise ValueError("q0 and q1 must differ")
    idx = np.arange(1 << n)
    bit0 = (idx >> (n - 1 - q0)) & 1
    bit1 = (idx >> (n - 1 - q1)) & 1
    sign = 1.0 - 2.0 * (bit0 ^ bit1)
    val = (np.abs(state) ** 2) @ sign
    return float(val) if np.ndim(val) == 0 else val


def apply_dense_unitary(state: np.ndarray, u: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """Full matrix-vector product; meant as a reference for the fast gates."""
    state = np.asarray(state, dtype=np.complex128)
    u = np.asarray(u, dtype=np.complex128)
    dim = state.shape[-1]
    if u.shape != (dim, dim):
        raise ValueError(f"unitary of shape {u.shape} does not match state dimension {dim}")
    if not np.allclose(u.conj().T @ u, np.eye(dim), rtol=0.0, atol=atol):
        raise ValueError("matrix is not unitary")
    return state @ u.T


def rx_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)
ZZ_MATRIX = np.diag([1.0, -1.0, -1.0, 1.0]).astype(np.complex128)
