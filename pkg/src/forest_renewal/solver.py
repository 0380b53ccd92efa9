"""Time stepping for the renewal equation and evaluation of the history functional.

The birth rate is advanced on a uniform grid through the reformulation

    b(t) = int_{-inf}^t beta(x_m + int_a^t g(e^{-mu tau} P(a)) dtau) e^{-mu (t-a)} b(a) da,
    P(a) = int_{-inf}^a e^{mu s} b(s) ds.

Every quadrature is a trapezoid rule with the same step h. For each past node
a_k the inner integral I_k(t) = int_{a_k}^t g(...) dtau is cached and extended
by one trapezoid cell per step, which makes a solve O(N (N + M)) for N steps
and M history nodes. Internally P is carried as Q(a) = e^{-mu a} P(a) so that
nothing overflows on long horizons.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import History, ModelParams
from .numerics import truncation_horizon

_CHUNK = 4_000_000  # elements per block in the O(M^2) history pass


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    h: float
    T: float
    trunc_tol: float = 1e-10
    picard_tol: float = 1e-14
    picard_max: int = 0
    # "left" replaces the trapezoid mass update by a left rectangle rule
    # (first order); it exists only to mutation-test the convergence study.
    mass_rule: str = "trapezoid"

    def __post_init__(self):
        if not (self.h > 0 and self.T > 0):
            raise ValueError("h and T must be positive")
        n = self.T / self.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T={self.T} is not a multiple of h={self.h}")
        if not self.trunc_tol > 0:
            raise ValueError("trunc_tol must be positive")
        if self.mass_rule not in ("trapezoid", "left"):
            raise ValueError("mass_rule must be 'trapezoid' or 'left'")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))


@dataclass(frozen=True)
class SolutionPath:
    t: np.ndarray
    b: np.ndarray
    P: np.ndarray
    residual: np.ndarray
    clamped: int
    history: History = field(repr=False)  # the history as extended for the solve

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))

    @property
    def h(self) -> float:
        return self.history.h

    def as_history(self) -> History:
        """The computed path, together with its past, as the history of a new problem."""
        hist = self.history
        samples = np.concatenate([hist.samples, self.b[1:]])
        right = np.concatenate([hist.right_limits, self.b[1:]])
        right[len(hist.samples) - 1] = self.b[0]
        S = hist.S + self.t[-1]
        return History(S, hist.h, samples, hist.tail, hist.tail_value, right)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "b", "P", "residual"])
            for row in zip(self.t, self.b, self.P, self.residual):
                w.writerow([f"{v:.11e}" for v in row])


def history_horizon(params: ModelParams, phi: History, trunc_tol: float) -> float:
    """Window length beyond which the constant tail contributes at most trunc_tol."""
    if phi.tail != "constant" or phi.tail_value == 0:
        return phi.S
    c = phi.tail_value
    bound = (c * params.beta_at_xm, c * params.L * params.g_max)
    return max(phi.S, truncation_horizon(params.mu, bound, trunc_tol, step=phi.h))


def extend_history(params: ModelParams, phi: History, trunc_tol: float) -> History:
    ext = phi.extended(history_horizon(params, phi, trunc_tol))
    if params.mu * ext.S > 700:
        raise ValueError(f"history window mu*S = {params.mu * ext.S:.0f} is too long for float64")
    return ext


@dataclass(frozen=True)
class _PastState:
    s: np.ndarray       # node positions
    mass: np.ndarray    # trapezoid weight times value
    Q: np.ndarray       # e^{-mu s} P(s)
    I0: np.ndarray      # int_s^0 g(e^{-mu tau} P(s)) dtau


def _past_state(params: ModelParams, phi: History) -> _PastState:
    mu, h = params.mu, phi.h
    s = phi.grid
    w = np.exp(mu * s)
    cells = 0.5 * h * (w[:-1] * phi.right_limits[:-1] + w[1:] * phi.samples[1:])
    P_tail = phi.tail_value * math.exp(-mu * phi.S) / mu if phi.tail == "constant" else 0.0
    P = P_tail + np.concatenate([[0.0], np.cumsum(cells)])
    Q = P / w
    return _PastState(s, phi.node_mass(), Q, _history_inner(params, Q, h))


def _history_inner(params: ModelParams, Q: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid of g(Q_j e^{-mu v}) over v in [0, -s_j] for every node j."""
    K = len(Q) - 1
    y = np.exp(-params.mu * h * np.arange(K + 1))
    out = np.zeros(K + 1)
    j = 0
    while j < K:
        width = K - j + 1
        rows = max(1, min(K - j, _CHUNK // width))
        idx = np.arange(j, j + rows)
        n_cells = K - idx
        vals = params.g(Q[idx, None] * y[None, :width])
        csum = np.cumsum(vals, axis=1)
        r = np.arange(rows)
        out[idx] = h * (csum[r, n_cells] - 0.5 * (vals[:, 0] + vals[r, n_cells]))
        j += rows
    return out


def apply_F(params: ModelParams, phi: History, trunc_tol: float = 1e-10) -> float:
    """The history functional: the birth rate at t = 0+ produced by phi."""
    st = _past_state(params, extend_history(params, phi, trunc_tol))
    return float(np.dot(st.mass, params.beta(params.x_m + st.I0) * np.exp(params.mu * st.s)))


def r_phi_at(params: ModelParams, phi: History, t: float, trunc_tol: float = 1e-10) -> float:
    """Forcing of the Volterra form: the part of b(t) generated by the history alone."""
    if t < 0:
        raise ValueError("r_phi is defined for t >= 0")
    st = _past_state(params, extend_history(params, phi, trunc_tol))
    mu, h = params.mu, phi.h
    I = st.I0.copy()
    n = int(math.ceil(t / h - 1e-9))
    if n > 0:
        dt = t / n
        g_prev = params.g(st.Q * np.exp(mu * st.s))
        for i in range(1, n + 1):
            g_new = params.g(st.Q * np.exp(-mu * (i * dt - st.s)))
            I += 0.5 * dt * (g_prev + g_new)
            g_prev = g_new
    return float(np.dot(st.mass, params.beta(params.x_m + I) * np.exp(-mu * (t - st.s))))


def solve_ivp(params: ModelParams, phi: History, cfg: SolverConfig) -> SolutionPath:
    """Solve the initial value problem b = phi on (-inf, 0] over [0, T]."""
    h, mu, x_m = cfg.h, params.mu, params.x_m
    if abs(phi.h - h) > 1e-12 * h:
        raise ValueError(f"history step {phi.h} differs from solver step {h}")
    beta0 = params.beta_at_xm
    c_end = 0.5 * h * beta0
    if c_end >= 1:
        raise StepSizeError(f"(h/2) beta(x_m) = {c_end:.4g} >= 1; reduce h below {2 / beta0:.4g}")
    beta, g = params.beta, params.g

    ext = extend_history(params, phi, cfg.trunc_tol)
    st = _past_state(params, ext)
    K1, N = len(st.s), cfg.n_steps
    tot = K1 + N
    pos = np.empty(tot)
    Q = np.empty(tot)
    I = np.empty(tot)
    mass = np.empty(tot)
    g_prev = np.empty(tot)
    pos[:K1], Q[:K1], I[:K1], mass[:K1] = st.s, st.Q, st.I0, st.mass
    g_prev[:K1] = g(st.Q * np.exp(mu * st.s))

    b = np.empty(N + 1)
    Qf = np.empty(N + 1)
    res = np.zeros(N + 1)
    clamped = 0
    b[0] = float(np.dot(st.mass, beta(x_m + st.I0) * np.exp(mu * st.s)))
    Qf[0] = st.Q[-1]
    mass[K1 - 1] += 0.5 * h * b[0]  # the cell [0, h] starts from b(0+), not phi(0)
    decay = math.exp(-mu * h)

    for n in range(1, N + 1):
        act = K1 + n - 1
        t = n * h
        E = np.exp(-mu * (t - pos[:act]))
        g_new = g(Q[:act] * E)
        I[:act] += 0.5 * h * (g_prev[:act] + g_new)
        g_prev[:act] = g_new
        S = float(np.dot(mass[:act], beta(x_m + I[:act]) * E))
        bn = S / (1.0 - c_end)
        r = abs(bn - (S + c_end * bn))
        if cfg.picard_max > 0:
            x = S
            for _ in range(cfg.picard_max):
                x_new = S + c_end * x
                if abs(x_new - x) <= cfg.picard_tol * max(1.0, abs(x)):
                    x = x_new
                    break
                x = x_new
            r = max(r, abs(x - bn))
        res[n] = r / max(1.0, abs(bn))
        if bn < 0:
            bn = 0.0
            clamped += 1
        b[n] = bn
        if cfg.mass_rule == "trapezoid":
            Qf[n] = decay * Qf[n - 1] + 0.5 * h * (decay * b[n - 1] + bn)
        else:
            Qf[n] = decay * (Qf[n - 1] + h * b[n - 1])
        pos[act], Q[act], I[act], mass[act] = t, Qf[n], 0.0, h * bn
        g_prev[act] = g(Qf[n])

    tgrid = h * np.arange(N + 1)
    return SolutionPath(tgrid, b, Qf * np.exp(mu * tgrid), res, clamped, ext)


def apply_F_change_of_vars(params: ModelParams, phi: History, gl_points: int = 6,
                           grading: int = 40) -> float:
    """The history functional in the substituted variable theta = H(u).

    H(u) = int_{-inf}^u phi(s) e^{mu s} ds is built cell by cell and inverted
    piecewise linearly; the inner integral over s is done exactly through
    int g(x)/x dx. Gauss-Legendre on each interval [H_j, H_{j+1}], and on a
    geometric mesh (ratio 2, smallest cell H(0) 2^-grading) under the
    constant tail, where the integrand is log-singular at theta = 0.
    """
    if phi.is_zero:
        return 0.0
    mu, h = params.mu, phi.h
    s = phi.grid
    w = np.exp(mu * s)
    H_tail = phi.tail_value * math.exp(-mu * phi.S) / mu if phi.tail == "constant" else 0.0
    H = H_tail + np.concatenate([[0.0], np.cumsum(0.5 * h * (w[:-1] * phi.right_limits[:-1]
                                                              + w[1:] * phi.samples[1:]))])
    if not H[-1] > 0:
        return 0.0
    x_gl, w_gl = np.polynomial.legendre.leggauss(gl_points)

    los, his, kinds = [], [], []
    theta_min = H[-1] * 2.0 ** (-grading)
    if H_tail > theta_min:
        edges = [theta_min]
        while edges[-1] * 2 < H_tail:
            edges.append(edges[-1] * 2)
        edges.append(H_tail)
        los += edges[:-1]
        his += edges[1:]
        kinds += [-1] * (len(edges) - 1)
    live = np.nonzero(H[1:] > H[:-1])[0]
    los += list(H[live])
    his += list(H[live + 1])
    kinds += list(live)
    lo, hi, kind = np.asarray(los), np.asarray(his), np.asarray(kinds)

    half = 0.5 * (hi - lo)
    theta = (0.5 * (hi + lo))[:, None] + half[:, None] * x_gl[None, :]
    weight = half[:, None] * w_gl[None, :]
    j = np.maximum(kind, 0)[:, None]
    u_cell = s[j] + (theta - H[j]) / (H[j + 1] - H[j]) * h
    u_tail = -phi.S + np.log(theta / H_tail) / mu if H_tail > 0 else u_cell
    u = np.where(kind[:, None] < 0, u_tail, u_cell)
    inner = params.g.log_integral(theta, theta * np.exp(-mu * u)) / mu
    return float(np.sum(weight * params.beta(params.x_m + inner)))
