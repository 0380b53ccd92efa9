"""Scalar quantities of the renewal model: reproduction numbers, equilibria,
the upper bound theta2 and the exponential growth envelope xi(t)."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import integrate

from .model import HypothesisReport, ModelParams, RateSpec, check_hypothesis_M
from .numerics import (QuadTolerance, cumulative_trapezoid, find_root_monotone, integrate_grid,
                       largest_root, truncation_horizon)

DEFAULT_DA = 1e-3
DEFAULT_TAIL_TOL = 1e-10
EQUILIBRIUM_TOL = 1e-8
OVERFLOW_GUARD = 1e15


class NumericError(ArithmeticError):
    pass


class UnsupportedRegimeError(ValueError):
    pass


class NonUniquenessWarning(UserWarning):
    pass


class Case(str, Enum):
    ConvergentA = "ConvergentA"
    UnboundedB = "UnboundedB"
    ExtinctC = "ExtinctC"


def R_of_b(params: ModelParams, b: float, da: float = DEFAULT_DA,
           tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """R(b) = int_0^inf beta(x_m + int_0^a g(e^{-mu tau} b / mu) dtau) e^{-mu a} da.

    Nested trapezoid on one grid; the inner integral is accumulated along a.
    """
    if b < 0:
        raise ValueError("R(b) needs b >= 0")
    mu = params.mu
    A = truncation_horizon(mu, (params.beta_at_xm, params.L * params.g_max), tail_tol, step=da)
    if A == 0:
        return 0.0
    a = da * np.arange(int(round(A / da)) + 1)
    decay = np.exp(-mu * a)
    X = cumulative_trapezoid(params.g(decay * (b / mu)), da)
    return integrate_grid(params.beta(params.x_m + X) * decay, da)


def F_of_b(params: ModelParams, b: float, **kw) -> float:
    return b * R_of_b(params, b, **kw)


def R1_of_c(params: ModelParams, c: float, **kw) -> float:
    """R for the affine majorant beta_1(x) = beta(x_m) + L (x - x_m)."""
    return R_of_b(params.majorant(), c, **kw)


def basic_reproduction_number(params: ModelParams, quad: QuadTolerance = QuadTolerance(),
                              check: bool = True) -> float:
    """R(0) = int_0^inf beta(x_m + a g(0)) e^{-mu a} da, by adaptive quadrature.

    With ``check`` the value is compared against the nested-trapezoid R(0).
    """
    mu, g0, x_m = params.mu, float(params.g(0.0)), params.x_m
    f = lambda a: float(params.beta(x_m + a * g0)) * math.exp(-mu * a)
    cuts = sorted({(k - x_m) / g0 for k in params.beta.kinks() if k > x_m})
    edges = [0.0] + cuts
    total = 0.0
    for lo, hi in zip(edges, edges[1:] + [math.inf]):
        val, _ = integrate.quad(f, lo, hi, epsabs=quad.abs_tol * 1e-2, epsrel=1e-12,
                                limit=quad.max_subdivisions)
        total += val
    if check:
        grid_val = R_of_b(params, 0.0)
        if abs(grid_val - total) > 1e-6:
            raise NumericError(f"R(0) disagreement: quadrature {total!r} vs nested grid {grid_val!r}")
    return total


def _grow_bracket(fn, level: float, start: float = 1.0) -> float:
    B = start
    while fn(B) >= level:
        B *= 2.0
        if B > OVERFLOW_GUARD:
            raise NumericError(f"equilibrium bracket exceeded {OVERFLOW_GUARD:g} without crossing {level}")
    return B


def positive_equilibrium(params: ModelParams, R0: Optional[float] = None, **kw) -> Optional[float]:
    """Positive root b* of R(b) = 1, or None when R(0) <= 1 or beta(x_m) >= mu."""
    if R0 is None:
        R0 = basic_reproduction_number(params)
    if R0 <= 1 or params.beta_at_xm >= params.mu:
        return None
    if not check_hypothesis_M(params).holds:
        warnings.warn("monotonicity hypothesis fails: the root found may not be unique",
                      NonUniquenessWarning, stacklevel=2)
    R = lambda b: R_of_b(params, b, **kw)
    B = _grow_bracket(R, 1.0)
    lo = B / 2 if B > 1.0 else 0.0
    b_star = find_root_monotone(R, 1.0, (lo, B), tol=1e-13 * B)
    if abs(R(b_star) - 1.0) > EQUILIBRIUM_TOL:
        raise NumericError(f"|R(b*) - 1| = {abs(R(b_star) - 1):.3e} exceeds {EQUILIBRIUM_TOL}")
    return b_star


def theta2(params: ModelParams, **kw) -> Optional[float]:
    """Largest root of R1(c) = 1: a uniform bound for bounded entire solutions."""
    if params.beta_at_xm >= params.mu:
        return None
    R1 = lambda c: R1_of_c(params, c, **kw)
    if R1(0.0) <= 1.0:
        return None
    B = _grow_bracket(R1, 1.0 - 1e-6)
    return largest_root(R1, 1.0, B, tol=1e-13 * B)


def G_of_x(g: RateSpec, x):
    return g.antiderivative(x)


def C_eps(g: RateSpec, eps: float) -> float:
    """sup over x >= 0 of G(x) - eps x."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if eps >= g.sup:
        return 0.0
    g0, k = g.params[:2]
    if g.family == "exp_decay":
        x = math.log(g0 / eps) / k
    elif g.family == "rational_decay":
        x = (g0 / eps - 1.0) / k
    else:
        return _table_C_eps(g, eps)
    return float(G_of_x(g, x)) - eps * x


def _table_C_eps(g: RateSpec, eps: float) -> float:
    if eps < g.limit_at_infinity:
        raise UnsupportedRegimeError(f"eps={eps} below g(+inf)={g.limit_at_infinity}: C_eps is infinite")
    xs, ys = g.nodes
    cand = [0.0, *xs]
    # G - eps x is piecewise quadratic; interior stationary points solve g(x) = eps
    for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        if (y0 - eps) * (y1 - eps) < 0:
            cand.append(x0 + (eps - y0) * (x1 - x0) / (y1 - y0))
    cand = np.asarray(cand)
    return float(max(0.0, np.max(G_of_x(g, cand) - eps * cand)))


@dataclass(frozen=True)
class EnvelopeBundle:
    """Constants of the majorant xi(t) = alpha1 e^{mu t} + a1 e^{lam+ t} + a2 e^{lam- t}
    of e^{mu t} b(t)."""

    mu: float
    eps: float
    C_eps: float
    A_bound: float
    alpha1: float
    lambda_plus: float
    lambda_minus: float
    a1: float
    a2: float
    L: float
    beta_xm: float
    phi_norm_mu: float

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return (self.alpha1 * np.exp(self.mu * t) + self.a1 * np.exp(self.lambda_plus * t)
                + self.a2 * np.exp(self.lambda_minus * t))

    def xi_prime(self, t):
        t = np.asarray(t, dtype=float)
        return (self.alpha1 * self.mu * np.exp(self.mu * t)
                + self.a1 * self.lambda_plus * np.exp(self.lambda_plus * t)
                + self.a2 * self.lambda_minus * np.exp(self.lambda_minus * t))

    def xi_second(self, t):
        t = np.asarray(t, dtype=float)
        return (self.alpha1 * self.mu ** 2 * np.exp(self.mu * t)
                + self.a1 * self.lambda_plus ** 2 * np.exp(self.lambda_plus * t)
                + self.a2 * self.lambda_minus ** 2 * np.exp(self.lambda_minus * t))

    def b_envelope(self, t):
        """e^{-mu t} xi(t), computed without overflow."""
        t = np.asarray(t, dtype=float)
        return (self.alpha1 + self.a1 * np.exp((self.lambda_plus - self.mu) * t)
                + self.a2 * np.exp((self.lambda_minus - self.mu) * t))

    @property
    def b_bound(self) -> float:
        return self.alpha1 + abs(self.a1) + abs(self.a2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b_bound"] = self.b_bound
        return d


def default_eps(params: ModelParams) -> float:
    mu, b0, L = params.mu, params.beta_at_xm, params.L
    if L == 0:
        return 0.5
    return min(0.5, 0.5 * mu * (mu - b0) / L)


def growth_envelope(params: ModelParams, phi_norm_rho: float, phi_norm_mu: float,
                    eps: Optional[float] = None) -> EnvelopeBundle:
    mu, b0, L = params.mu, params.beta_at_xm, params.L
    if b0 >= mu:
        raise UnsupportedRegimeError(f"beta(x_m)={b0} >= mu={mu}: no growth envelope")
    eps = default_eps(params) if eps is None else float(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    denom = mu * mu - mu * b0 - eps * L
    if denom <= 0:
        raise UnsupportedRegimeError(f"eps={eps} too large: mu^2 - mu beta(x_m) - eps L = {denom}")
    C = C_eps(params.g, eps)
    rho = params.rho
    A = (b0 + L / (mu - rho)) * phi_norm_rho + L * C / mu
    alpha1 = mu * L * C / denom
    disc = math.sqrt(b0 * b0 + 4.0 * eps * L)
    lam_p, lam_m = 0.5 * (b0 + disc), 0.5 * (b0 - disc)
    if lam_p == lam_m:
        raise UnsupportedRegimeError("degenerate envelope: beta vanishes identically")
    rhs0 = A - alpha1
    rhs1 = -alpha1 * mu + eps * L * phi_norm_mu + L * C + b0 * A
    a1, a2 = np.linalg.solve(np.array([[1.0, 1.0], [lam_p, lam_m]]), np.array([rhs0, rhs1]))
    return EnvelopeBundle(mu, eps, C, A, alpha1, lam_p, lam_m, float(a1), float(a2),
                          L, b0, float(phi_norm_mu))


def derivative_bound(params: ModelParams, phi_norm_rho: float, alpha2_3_bound: float) -> float:
    """Uniform bound on |b'(t)| given the solution bound B = alpha1 + |a1| + |a2|."""
    B = alpha2_3_bound
    mu = params.mu
    return abs(mu - params.beta_at_xm) * B + params.L * params.g_max * (phi_norm_rho + B / mu)


@dataclass
class AnalysisReport:
    R0: float
    beta_at_xm: float
    mu: float
    case: Case
    b_star: Optional[float] = None
    theta2: Optional[float] = None
    theta3: Optional[float] = None
    hypothesis: Optional[HypothesisReport] = None
    envelope: Optional[EnvelopeBundle] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"R0": self.R0, "beta_xm": self.beta_at_xm, "mu": self.mu, "case": self.case.value,
               "b_star": self.b_star, "theta2": self.theta2, "theta3": self.theta3}
        if self.hypothesis is not None:
            out["hypothesis_M"] = asdict(self.hypothesis) | {"holds": self.hypothesis.holds}
        if self.envelope is not None:
            out["envelope"] = self.envelope.to_dict()
        out["notes"] = list(self.notes)
        return out


def classify(params: ModelParams, phi_norms: Optional[tuple] = None,
             eps: Optional[float] = None) -> AnalysisReport:
    """Trichotomy: convergence to b*, unbounded growth, or extinction.

    ``phi_norms`` = (|phi|_rho, |phi|_mu) attaches the growth envelope when it applies.
    """
    hyp = check_hypothesis_M(params)
    R0 = basic_reproduction_number(params)
    b0, mu = params.beta_at_xm, params.mu
    notes = []
    if not hyp.holds:
        notes.append("monotonicity hypothesis fails; classification is advisory")
    if R0 > 1 and b0 < mu:
        case = Case.ConvergentA
    elif R0 > 1:
        case = Case.UnboundedB
    else:
        case = Case.ExtinctC
        if R0 == 1:
            notes.append("R(0) = 1: the equilibrium degenerates to b* = 0")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonUniquenessWarning)
        b_star = positive_equilibrium(params, R0=R0) if case is Case.ConvergentA else None
    th2 = theta2(params)
    th3 = None
    if th2 is not None:
        # a past bounded by theta2 has weighted norm at most theta2 / rho
        th3 = derivative_bound(params, th2 / params.rho, th2)
        notes.append("theta1 (persistence floor) is not constructive; estimate it from paths")
    env = None
    if phi_norms is not None and b0 < mu:
        try:
            env = growth_envelope(params, phi_norms[0], phi_norms[1], eps)
        except UnsupportedRegimeError as exc:
            notes.append(f"no growth envelope: {exc}")
    return AnalysisReport(R0, b0, mu, case, b_star, th2, th3, hyp, env, notes)
