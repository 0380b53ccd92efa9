"""Model instance: vital rates, constants and the initial birth-rate history.

All objects here are immutable. Rates are vectorised: calling a
:class:`RateSpec` on an array returns an array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

BETA_FAMILIES = ("ramp", "affine", "table")
G_FAMILIES = ("exp_decay", "rational_decay", "table")


class ModelError(ValueError):
    """Invalid model input (bad parameters, domain violation)."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RateSpec:
    """A reproduction rate beta (kind ``"beta"``) or growth rate g (kind ``"g"``).

    ``params`` per family:

    * ramp: ``(c, x_A)`` -> ``c * max(0, x - x_A)``
    * affine: ``(d, c)`` -> ``d + c * (x - origin)``; ``origin`` is the minimal
      height x_m and is filled in by :class:`ModelParams`
    * exp_decay: ``(g0, k)`` -> ``g0 * exp(-k x)``
    * rational_decay: ``(g0, k)`` -> ``g0 / (1 + k x)``
    * table: interleaved nodes ``(x0, y0, x1, y1, ...)``, linear in between.
      Beyond the last node a g-table is constant and a beta-table continues
      its last slope; left of the first node both are constant.
    """

    family: str
    params: tuple
    kind: str
    origin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        allowed = BETA_FAMILIES if self.kind == "beta" else G_FAMILIES
        if self.kind not in ("beta", "g"):
            raise ModelError(f"rate kind must be 'beta' or 'g', got {self.kind!r}")
        if self.family not in allowed:
            raise ModelError(f"unknown {self.kind} family {self.family!r}; expected one of {allowed}")
        p = self.params
        if self.family == "table":
            if len(p) < 4 or len(p) % 2:
                raise ModelError("table params need at least two (x, y) pairs")
            xs, ys = np.asarray(p[0::2]), np.asarray(p[1::2])
            if np.any(np.diff(xs) <= 0):
                raise ModelError("table nodes must be strictly increasing in x")
            if self.kind == "g" and (xs[0] < 0 or np.any(ys <= 0)):
                raise ModelError("g-table needs x >= 0 and strictly positive values")
            if self.kind == "beta" and (np.any(ys < 0) or ys[-1] < ys[-2]):
                # the last slope is continued, so a falling tail would turn negative
                raise ModelError("beta-table needs non-negative values and a non-decreasing last segment")
            return
        if len(p) != 2:
            raise ModelError(f"{self.family} takes exactly 2 params, got {len(p)}")
        a, b = p
        if self.family == "ramp" and not a > 0:
            raise ModelError("ramp slope c must be positive")
        if self.family == "affine" and (a < 0 or b < 0):
            raise ModelError("affine needs d >= 0 and c >= 0")
        if self.family in ("exp_decay", "rational_decay") and not (a > 0 and b > 0):
            raise ModelError(f"{self.family} needs g0 > 0 and k > 0")

    # constructors -------------------------------------------------------
    @classmethod
    def ramp(cls, c, x_A):
        return cls("ramp", (c, x_A), "beta")

    @classmethod
    def affine(cls, d, c):
        return cls("affine", (d, c), "beta")

    @classmethod
    def exp_decay(cls, g0, k):
        return cls("exp_decay", (g0, k), "g")

    @classmethod
    def rational_decay(cls, g0, k):
        return cls("rational_decay", (g0, k), "g")

    @classmethod
    def table(cls, xs: Sequence[float], ys: Sequence[float], kind: str):
        if len(xs) != len(ys):
            raise ModelError("table xs and ys differ in length")
        flat = [v for pair in zip(xs, ys) for v in pair]
        return cls("table", flat, kind)

    @property
    def nodes(self):
        return np.asarray(self.params[0::2]), np.asarray(self.params[1::2])

    # evaluation ---------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        if f == "ramp":
            out = p[0] * np.maximum(0.0, x - p[1])
        elif f == "affine":
            out = p[0] + p[1] * (x - self.origin)
        elif f == "exp_decay":
            out = p[0] * np.exp(-p[1] * x)
        elif f == "rational_decay":
            out = p[0] / (1.0 + p[1] * x)
        else:
            xs, ys = self.nodes
            out = np.interp(x, xs, ys)
            if self.kind == "beta":
                slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
                out = np.where(x > xs[-1], ys[-1] + slope * (x - xs[-1]), out)
        return out if out.ndim else float(out)

    @property
    def lipschitz(self) -> float:
        """Global Lipschitz constant (beta) on its domain."""
        f, p = self.family, self.params
        if f in ("ramp", "affine"):
            return p[0] if f == "ramp" else p[1]
        if f == "table":
            xs, ys = self.nodes
            return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))
        return p[0] * p[1]  # sup |g'| for both decay families

    @property
    def sup(self) -> float:
        """sup of a g-rate over [0, inf)."""
        if self.family == "table":
            return float(np.max(self.nodes[1]))
        return self.params[0]

    @property
    def limit_at_infinity(self) -> float:
        """g(+inf) for g-rates."""
        if self.kind != "g":
            raise ModelError("limit_at_infinity is defined for g-rates only")
        if self.family == "table":
            return float(self.nodes[1][-1])
        return 0.0

    def kinks(self) -> list:
        """Points where the rate is not smooth."""
        if self.family == "ramp":
            return [self.params[1]]
        if self.family == "table":
            return list(self.nodes[0])
        return []

    def antiderivative(self, x):
        """G(x) = integral of g over [0, x] (g-rates only)."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "exp_decay":
            out = p[0] / p[1] * -np.expm1(-p[1] * x)
        elif self.family == "rational_decay":
            out = p[0] / p[1] * np.log1p(p[1] * x)
        elif self.family == "table" and self.kind == "g":
            xs, ys = self.nodes
            # breakpoints 0, nodes; constant left of xs[0] and right of xs[-1]
            bx = np.concatenate([[0.0], xs]) if xs[0] > 0 else xs
            by = np.concatenate([[ys[0]], ys]) if xs[0] > 0 else ys
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (by[1:] + by[:-1]) * np.diff(bx))])
            idx = np.clip(np.searchsorted(bx, x, side="right") - 1, 0, len(bx) - 1)
            nxt = np.minimum(idx + 1, len(bx) - 1)
            x0, y0 = bx[idx], by[idx]
            run = np.where(nxt > idx, bx[nxt] - x0, 1.0)
            slope = np.where(nxt > idx, (by[nxt] - y0) / run, 0.0)
            dx = x - x0
            out = cum[idx] + y0 * dx + 0.5 * slope * dx * dx
        else:
            raise ModelError("antiderivative is defined for g-rates only")
        return out if out.ndim else float(out)

    def log_integral(self, lo, hi):
        """Exact integral of g(x)/x over [lo, hi], 0 < lo <= hi (g-rates only)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        p = self.params
        if self.family == "exp_decay":
            from scipy.special import exp1
            out = p[0] * (exp1(p[1] * lo) - exp1(p[1] * hi))
        elif self.family == "rational_decay":
            out = p[0] * (np.log(hi / lo) - np.log1p(p[1] * hi) + np.log1p(p[1] * lo))
        elif self.family == "table" and self.kind == "g":
            xs, ys = self.nodes
            out = ys[0] * np.log(np.clip(hi, None, xs[0]) / np.clip(lo, None, xs[0])) \
                if xs[0] > 0 else np.zeros(np.broadcast(lo, hi).shape)
            for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
                a = np.clip(lo, x0, x1)
                b = np.clip(hi, x0, x1)
                slope = (y1 - y0) / (x1 - x0)
                inter = y0 - slope * x0
                with np.errstate(divide="ignore", invalid="ignore"):
                    seg = inter * np.log(b / a) + slope * (b - a)
                out = out + np.where(b > a, seg, 0.0)
            a = np.maximum(lo, xs[-1])
            b = np.maximum(hi, xs[-1])
            out = out + ys[-1] * np.log(b / a)
        else:
            raise ModelError("log_integral is defined for g-rates only")
        return out if np.ndim(out) else float(out)


def eval_rate(spec: RateSpec, x, x_m: Optional[float] = None):
    """Evaluate a rate, enforcing its domain: x >= x_m for beta, x >= 0 for g."""
    lo = (spec.origin if x_m is None else x_m) if spec.kind == "beta" else 0.0
    if np.any(np.asarray(x) < lo):
        raise ModelError(f"{spec.kind} evaluated at x < {lo} (outside its domain)")
    return spec(x)


@dataclass(frozen=True)
class ModelParams:
    mu: float
    x_m: float
    rho: float
    beta: RateSpec
    g: RateSpec

    def __post_init__(self):
        if not self.mu > 0:
            raise ModelError("mu must be positive")
        if self.x_m < 0:
            raise ModelError("x_m must be non-negative")
        if not 0 < self.rho < self.mu:
            raise ModelError(f"rho must lie in (0, mu) = (0, {self.mu}), got {self.rho}")
        if self.beta.kind != "beta" or self.g.kind != "g":
            raise ModelError("beta/g specs have the wrong kind")
        if self.beta.family in ("affine", "table") and self.beta.origin != self.x_m:
            object.__setattr__(self, "beta",
                               RateSpec(self.beta.family, self.beta.params, "beta", self.x_m))
        if self.beta_at_xm < 0:
            raise ModelError("beta(x_m) must be non-negative")

    @property
    def beta_at_xm(self) -> float:
        return float(self.beta(self.x_m))

    @property
    def L(self) -> float:
        return self.beta.lipschitz

    @property
    def g_max(self) -> float:
        return self.g.sup

    def majorant(self) -> "ModelParams":
        """Same model with beta replaced by beta_1(x) = beta(x_m) + L (x - x_m)."""
        return ModelParams(self.mu, self.x_m, self.rho,
                           RateSpec("affine", (self.beta_at_xm, self.L), "beta", self.x_m),
                           self.g)


@dataclass(frozen=True)
class History:
    """Initial datum phi on (-inf, 0].

    ``samples[j]`` is phi at s = -S + j h. ``right_limits`` (optional) holds
    the right-hand limits at nodes where phi jumps; cell (j, j+1) starts
    from ``right_limits[j]`` and ends at ``samples[j+1]``. Below -S the
    history is ``tail_value`` (``tail="constant"``) or zero.
    """

    S: float
    h: float
    samples: np.ndarray
    tail: str = "constant"
    tail_value: float = 0.0
    right_limits: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        s = _frozen(self.samples)
        object.__setattr__(self, "samples", s)
        if not (self.S > 0 and self.h > 0):
            raise ModelError("history span S and step h must be positive")
        n = self.S / self.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ModelError(f"history span S={self.S} is not a multiple of h={self.h}")
        if s.ndim != 1 or len(s) != round(n) + 1:
            raise ModelError(f"expected {round(n) + 1} samples for S={self.S}, h={self.h}; got {s.size}")
        if self.tail not in ("constant", "zero"):
            raise ModelError("tail must be 'constant' or 'zero'")
        if self.tail == "zero":
            object.__setattr__(self, "tail_value", 0.0)
        r = s if self.right_limits is None else _frozen(self.right_limits)
        if r.shape != s.shape:
            raise ModelError("right_limits must match samples in shape")
        object.__setattr__(self, "right_limits", r)
        if np.any(s < 0) or np.any(r < 0) or self.tail_value < 0:
            raise ModelError("history values must be non-negative")

    @property
    def n_cells(self) -> int:
        return len(self.samples) - 1

    @property
    def grid(self) -> np.ndarray:
        return -self.S + self.h * np.arange(len(self.samples))

    @property
    def is_zero(self) -> bool:
        return self.tail_value == 0 and not np.any(self.samples) and not np.any(self.right_limits)

    def node_mass(self) -> np.ndarray:
        """Trapezoid weight times value at each node (jumps split per side)."""
        m = 0.5 * self.h * (self.samples + self.right_limits)
        m[0] = 0.5 * self.h * self.right_limits[0]
        m[-1] = 0.5 * self.h * self.samples[-1]
        return m

    @classmethod
    def constant(cls, c: float, S: float, h: float) -> "History":
        n = int(round(S / h))
        return cls(S, h, np.full(n + 1, float(c)), "constant", float(c))

    @classmethod
    def from_function(cls, fn, S: float, h: float, tail: str = "constant",
                      tail_value: Optional[float] = None) -> "History":
        n = int(round(S / h))
        s = -S + h * np.arange(n + 1)
        vals = np.asarray(fn(s), dtype=float) * np.ones_like(s)
        if tail_value is None:
            tail_value = float(vals[0]) if tail == "constant" else 0.0
        return cls(S, h, vals, tail, tail_value)

    def resample(self, h: float) -> "History":
        """Linear interpolation onto a grid with step h (S must be a multiple of h)."""
        if abs(h - self.h) <= 1e-12 * self.h:
            return self
        if np.any(self.right_limits != self.samples):
            raise ModelError("cannot resample a history with interior jumps")
        n = int(round(self.S / h))
        s = -self.S + h * np.arange(n + 1)
        return History(self.S, h, np.interp(s, self.grid, self.samples), self.tail, self.tail_value)

    def extended(self, S_new: float) -> "History":
        """Same function on a longer window: the constant tail is written out as samples."""
        extra = int(round((S_new - self.S) / self.h))
        if extra <= 0:
            return self
        pad = np.full(extra, self.tail_value)
        samples = np.concatenate([pad, [self.tail_value], self.samples[1:]])
        right = np.concatenate([pad, [self.right_limits[0]], self.right_limits[1:]])
        return History(self.S + extra * self.h, self.h, samples, self.tail, self.tail_value, right)


def weighted_norm(phi: History, q: float) -> float:
    """|phi|_q: integral of phi(s) e^{q s} over s <= 0."""
    if not q > 0:
        raise ModelError("weighted norm needs q > 0")
    w = np.exp(q * phi.grid)
    body = float(np.dot(phi.node_mass(), w))
    tail = phi.tail_value * math.exp(-q * phi.S) / q if phi.tail == "constant" else 0.0
    return body + tail


@dataclass(frozen=True)
class HypothesisReport:
    beta_increasing: bool
    g_decreasing: bool
    g_vanishes: bool

    @property
    def holds(self) -> bool:
        return self.beta_increasing and self.g_decreasing and self.g_vanishes


def check_hypothesis_M(params: ModelParams, grid: int = 400, cutoff: float = 1e6) -> HypothesisReport:
    """Monotonicity hypothesis: beta non-decreasing, g non-increasing with g(inf) = 0.

    Analytic families are decided from their parameters; tables are sampled on a
    geometric grid (plus their nodes, which makes the check exact for them).
    """
    beta, g = params.beta, params.g
    if beta.family in ("ramp", "affine"):
        beta_inc = True  # parameter checks already force c >= 0
    else:
        beta_inc = _monotone(beta, params.x_m, grid, cutoff, increasing=True)
    if g.family in ("exp_decay", "rational_decay"):
        g_dec, g_van = True, True
    else:
        g_dec = _monotone(g, 0.0, grid, cutoff, increasing=False)
        g_van = g.limit_at_infinity == 0.0
    return HypothesisReport(bool(beta_inc), bool(g_dec), bool(g_van))


def _monotone(spec: RateSpec, start: float, n: int, cutoff: float, increasing: bool) -> bool:
    pts = start + np.concatenate([[0.0], np.geomspace(1e-6, cutoff, n)])
    if spec.family == "table":
        pts = np.union1d(pts, spec.nodes[0][spec.nodes[0] >= start])
    v = spec(pts)
    d = np.diff(v)
    return bool(np.all(d >= -1e-14) if increasing else np.all(d <= 1e-14))
