"""Compiled inner loops (numba)."""

import math
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_GL_T, _GL_W = np.polynomial.legendre.leggauss(12)

SERIES_RATIO = 1e-2
QUADRATURE_RATIO = 0.5


@njit(cache=True)
def _centered_difference(u, h, a, c):
    # Phi(u + h) - Phi(u - h) with Phi(v) = |v|^a / c, written to avoid
    # cancellation when |u| >> h
    au = abs(u)
    if au > h:
        t = h / au
        val = au ** a * (1.0 - t) ** a * math.expm1(2.0 * a * math.atanh(t)) / c
        return val if u > 0 else -val
    return (abs(u + h) ** a - abs(u - h) ** a) / c


@njit(cache=True)
def pair_energy(c1, h1, c2, h2, s):
    """Normalised s-energy of two uniform balls given as (centre, half-width)."""
    d = abs(c1 - c2)
    spread = h1 + h2
    if d > 0.0 and spread <= SERIES_RATIO * d:
        p = h1 / d
        q = h2 / d
        p2 = p * p
        q2 = q * q
        k4 = s * (1.0 + s) / 6.0
        k6 = s * (1.0 + s) * (2.0 + s) * (3.0 + s) / 360.0
        return d ** -s * (1.0 + k4 * (p2 + q2) + k6 * (3.0 * p2 * p2 + 10.0 * p2 * q2 + 3.0 * q2 * q2))
    if d > 0.0 and spread <= QUADRATURE_RATIO * d:
        total = 0.0
        for i in range(_GL_T.size):
            row = 0.0
            for j in range(_GL_T.size):
                row += _GL_W[j] * abs(d + h1 * _GL_T[i] - h2 * _GL_T[j]) ** -s
            total += _GL_W[i] * row
        return 0.25 * total
    a = 2.0 - s
    c = (1.0 - s) * (2.0 - s)
    big = max(h1, h2)
    small = min(h1, h2)
    raw = _centered_difference(d + big, small, a, c) - _centered_difference(d - big, small, a, c)
    return raw / (4.0 * h1 * h2)


@njit(cache=True, parallel=True)
def energy_sum(centers, halfwidths, s):
    """``N^-2 sum_{i,j}`` of pair energies; row sums reduced in index order."""
    n = centers.size
    rows = np.zeros(n)
    for i in prange(n):
        acc = 0.0
        ci = centers[i]
        hi = halfwidths[i]
        for j in range(i + 1, n):
            acc += pair_energy(ci, hi, centers[j], halfwidths[j], s)
        rows[i] = 2.0 * acc + pair_energy(ci, hi, ci, hi, s)
    total = 0.0
    for i in range(n):
        total += rows[i]
    return total / (n * n)


@njit(cache=True)
def _interval_antiderivative(u, t):
    return math.copysign(abs(u) ** (1.0 - t), u) / (1.0 - t)


@njit(cache=True, parallel=True)
def riesz_potential(points, edges, density, t):
    """``∫ |x - y|^-t dμ(y)`` for a piecewise-uniform μ at each x in ``points``."""
    out = np.zeros(points.size)
    for k in prange(points.size):
        x = points[k]
        acc = 0.0
        for i in range(density.size):
            if density[i] != 0.0:
                acc += density[i] * (_interval_antiderivative(edges[i + 1] - x, t)
                                     - _interval_antiderivative(edges[i] - x, t))
        out[k] = acc
    return out


@njit(cache=True)
def mp_return_times(x0, beta, count, cap, out):
    """Successive first returns to [1/2, 1) of a float Manneville-Pomeau orbit.

    Fills ``out[:k]`` and returns ``(k, landing)``; ``k < count`` means the
    cap was hit on return ``k``.
    """
    coef = 2.0 ** (beta - 1.0)
    whole = int(beta)
    integer = whole == beta
    x = x0
    for k in range(count):
        y = 2.0 * x - 1.0
        r = 1
        while y < 0.5:
            if integer:
                p = y
                for _ in range(whole - 1):
                    p *= y
            else:
                p = y ** beta
            y = y + coef * p
            r += 1
            if r > cap:
                return k, y
        out[k] = r
        x = y
    return count, x


def set_threads(n: int) -> None:
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
