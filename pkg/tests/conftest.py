"""Shared test helpers: independent numeric oracles."""

from __future__ import annotations

import numpy as np


def piecewise_constant_mean(f, lo: float, hi: float, coarse: int = 4096) -> float:
    """Density-weighted mean of a piecewise-constant function, near-exactly.

    Samples ``f`` on a fine grid, refines every jump location by
    bisection to ~1e-13, then sums value * interval length exactly.
    Serves as an independent oracle for integrals of step functions
    (midpoint quadrature cannot reach 1e-9 there).
    """
    xs = np.linspace(lo, hi, coarse + 1)
    vals = np.asarray(f(xs), dtype=float)
    breakpoints = [lo]
    for i in range(coarse):
        if vals[i] != vals[i + 1]:
            left, right = xs[i], xs[i + 1]
            fl = vals[i]
            while right - left > 1e-13:
                mid = 0.5 * (left + right)
                if float(f(np.asarray([mid]))[0]) == fl:
                    left = mid
                else:
                    right = mid
            breakpoints.append(0.5 * (left + right))
    breakpoints.append(hi)
    total = 0.0
    for x0, x1 in zip(breakpoints[:-1], breakpoints[1:]):
        mid = 0.5 * (x0 + x1)
        total += float(f(np.asarray([mid]))[0]) * (x1 - x0)
    return total / (hi - lo)


def grid_min(fn, axes: dict[str, np.ndarray]) -> tuple[float, dict[str, float]]:
    """Brute-force minimum of a vectorized function over a full grid."""
    names = list(axes)
    mesh = np.meshgrid(*[axes[n] for n in names], indexing="ij")
    flat = {n: m.ravel() for n, m in zip(names, mesh)}
    values = np.asarray(fn(**flat), dtype=float)
    k = int(np.argmin(values))
    return float(values[k]), {n: float(flat[n][k]) for n in names}
