"""Independent reference implementations used only by the tests."""

import itertools
import math

import mpmath
import numpy as np


def rx(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def single_qubit_full(gate, q, n):
    """Embed a 2x2 gate on qubit q (qubit 0 = most significant) via Kronecker products."""
    mats = [np.eye(2)] * n
    mats[q] = gate
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def cnot_full(control, target, n):
    """Permutation matrix built from bit manipulation of basis indices."""
    dim = 1 << n
    u = np.zeros((dim, dim))
    for b in range(dim):
        if (b >> (n - 1 - control)) & 1:
            b2 = b ^ (1 << (n - 1 - target))
        else:
            b2 = b
        u[b2, b] = 1.0
    return u


def brute_auroc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    credit = 0.0
    for p, q in itertools.product(pos, neg):
        if p > q:
            credit += 1.0
        elif p == q:
            credit += 0.5
    return credit / (len(pos) * len(neg))


def t_sf_quadrature(t, df, dps=30):
    """P(T > t) by integrating the Student-t density at high precision."""
    with mpmath.workdps(dps):
        nu = mpmath.mpf(df)
        norm = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))

        def density(x):
            return norm * (1 + x * x / nu) ** (-(nu + 1) / 2)

        t = mpmath.mpf(t)
        if t >= 0:
            val = mpmath.quad(density, [t, t + 10, mpmath.inf])
        else:
            val = mpmath.mpf(1) / 2 + mpmath.quad(density, [t, 0])
        return float(val)


def central_difference(f, x, h):
    """Gradient of scalar (or vector-valued) f at array x by central differences."""
    x = np.array(x, dtype=np.float64)
    base = np.asarray(f(x))
    grad = np.zeros(base.shape + x.shape)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[(Ellipsis, *idx)] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return grad


def rel_err(a, b, floor=1e-6):
    """Elementwise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
