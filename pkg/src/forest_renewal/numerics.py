"""Quadrature, tail-truncation and scalar root finding."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class BracketError(ValueError):
    """Root finder called on a bracket without a sign change."""


@dataclass(frozen=True)
class QuadTolerance:
    abs_tol: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


def integrate_grid(values: Sequence[float], h: float) -> float:
    """Composite trapezoid rule on a uniform grid."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("integrate_grid needs at least two values")
    if not h > 0:
        raise ValueError("grid step must be positive")
    return float(h * (v.sum() - 0.5 * (v[0] + v[-1])))


def cumulative_trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    """Running trapezoid integral, starting at 0."""
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(0.5 * h * (v[1:] + v[:-1]), out=out[1:])
    return out


def linear_tail(A: float, mu: float, beta0: float, slope: float) -> float:
    """Integral of (beta0 + slope a) e^{-mu a} over [A, inf)."""
    return math.exp(-mu * A) * (beta0 / mu + slope * (A * mu + 1.0) / mu ** 2)


def truncation_horizon(mu: float, linear_bound: tuple, tol: float,
                       step: Optional[float] = None) -> float:
    """Smallest A with ``linear_tail(A) <= tol``; rounded up to a multiple of ``step`` if given."""
    if not (mu > 0 and tol > 0):
        raise ValueError("truncation_horizon needs mu > 0 and tol > 0")
    beta0, slope = linear_bound
    if beta0 < 0 or slope < 0:
        raise ValueError("linear bound coefficients must be non-negative")
    if beta0 == 0 and slope == 0:
        return 0.0
    tail = lambda A: linear_tail(A, mu, beta0, slope)
    if tail(0.0) <= tol:
        return 0.0
    hi = 1.0 / mu
    while tail(hi) > tol:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 / mu else 0.0
    # tail is strictly decreasing on [0, inf)
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if tail(mid) > tol:
            lo = mid
        else:
            hi = mid
    if step is None:
        return hi
    k = math.ceil(hi / step)
    if k > 0 and tail((k - 1) * step) <= tol:
        k -= 1
    return k * step


def find_root_monotone(f: Callable[[float], float], target: float, bracket: Sequence[float],
                       tol: float = 1e-12, max_iter: int = 300) -> float:
    """Bisection for f(x) = target on a bracket where f - target changes sign."""
    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = f(lo) - target, f(hi) - target
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change of f - {target} on [{lo}, {hi}]: "
                           f"f(lo)-target={flo:.3e}, f(hi)-target={fhi:.3e}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid) - target
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def largest_root(f: Callable[[float], float], target: float, scan_from: float,
                 tol: float = 1e-12, per_octave: int = 16, depth: float = 1e-14) -> Optional[float]:
    """Rightmost solution of f(x) = target on [0, scan_from], or None.

    Requires f(scan_from) < target. Scans leftwards on a geometric grid
    (``per_octave`` points per halving, down to ``depth * scan_from``, then 0)
    and bisects the first crossing found.
    """
    if not scan_from > 0:
        raise ValueError("scan_from must be positive")
    prev_x, prev_f = scan_from, f(scan_from)
    if not prev_f < target:
        raise ValueError(f"f(scan_from) = {prev_f} is not below target {target}")
    n = int(math.ceil(per_octave * math.log2(1.0 / depth)))
    xs = list(scan_from * 2.0 ** (-np.arange(1, n + 1) / per_octave)) + [0.0]
    for x in xs:
        fx = f(x)
        if fx >= target:
            if fx == target:
                return x
            return find_root_monotone(f, target, (x, prev_x), tol)
        prev_x = x
    return None
