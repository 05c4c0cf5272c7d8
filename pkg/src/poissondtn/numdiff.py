"""Finite-difference weights and small stencil helpers."""
from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = ["fornberg_weights", "central_weights", "partial", "second_partial", "laplacian"]


def fornberg_weights(z: float, nodes: Sequence[float], m: int) -> np.ndarray:
    """Weights c[k, j] for the k-th derivative at ``z`` from values at ``nodes``.

    Returns an array of shape (m + 1, len(nodes)); row k holds the weights of the
    k-th derivative (Fornberg's recursion).
    """
    x = np.asarray(nodes, dtype=float)
    npts = len(x)
    c = np.zeros((m + 1, npts))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


@lru_cache(maxsize=None)
def central_weights(deriv: int, order: int) -> tuple:
    """Offsets and weights of the centred stencil of given accuracy order (even)."""
    if order % 2 or order < 2:
        raise ValueError("order must be a positive even integer")
    half = (deriv + order - 1) // 2
    offsets = tuple(range(-half, half + 1))
    w = fornberg_weights(0.0, offsets, deriv)[deriv]
    return offsets, tuple(float(v) for v in w)


def partial(f: Callable, x: np.ndarray, axis: int, h: float, order: int = 4):
    """Centred approximation of d f / d x_axis at x."""
    offsets, weights = central_weights(1, order)
    e = np.zeros_like(x, dtype=float)
    e[axis] = h
    acc = 0.0
    for o, w in zip(offsets, weights):
        if w != 0.0:
            acc = acc + w * np.asarray(f(x + o * e))
    return acc / h


def second_partial(f: Callable, x: np.ndarray, i: int, j: int, h: float, order: int = 4):
    """Centred approximation of d^2 f / d x_i d x_j at x."""
    if i == j:
        offsets, weights = central_weights(2, order)
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        acc = 0.0
        for o, w in zip(offsets, weights):
            if w != 0.0:
                acc = acc + w * np.asarray(f(x + o * e))
        return acc / h**2
    offsets, weights = central_weights(1, order)
    ei = np.zeros_like(x, dtype=float)
    ej = np.zeros_like(x, dtype=float)
    ei[i] = h
    ej[j] = h
    acc = 0.0
    for oi, wi in zip(offsets, weights):
        if wi == 0.0:
            continue
        for oj, wj in zip(offsets, weights):
            if wj != 0.0:
                acc = acc + wi * wj * np.asarray(f(x + oi * ei + oj * ej))
    return acc / h**2


def laplacian(f: Callable, x: np.ndarray, h: float, order: int = 4):
    x = np.asarray(x, dtype=float)
    return sum(second_partial(f, x, i, i, h, order) for i in range(x.size))
