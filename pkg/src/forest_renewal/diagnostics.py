"""Numerical certificates for the qualitative behaviour of computed paths.

Each check returns a :class:`CertificationResult`. A failing check always
carries the worst offending grid point as a witness. Verdicts are numerical
evidence at the chosen resolution, not proofs.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .equilibrium import (AnalysisReport, Case, EnvelopeBundle, F_of_b, UnsupportedRegimeError,
                          classify, growth_envelope)
from .model import History, ModelParams, check_hypothesis_M, weighted_norm
from .solver import SolutionPath, SolverConfig, apply_F, solve_ivp


@dataclass(frozen=True)
class Tolerances:
    terminal: float = 1e-3          # ConvergentA: |b(T) - b*| <= terminal * max(1, b*)
    extinct: float = 1e-4           # ExtinctC: b(T) <= extinct * max(1, max phi)
    growth_factor: float = 10.0     # UnboundedB: b(T) >= growth_factor * max phi
    monotone_slack: float = 1e-9    # UnboundedB: b(t_{n+1}) >= b(t_n) - slack
    envelope_rel: float = 1e-6
    envelope_abs: float = 1e-9
    ultimate_rel: float = 1e-3
    transient: float = 1e-3         # need e^{(lambda_+ - mu) T} <= transient
    window: float = 0.25            # trailing fraction for the ultimate bound
    box_rel: float = 1e-3
    burn_in: float = 0.5
    squeeze_rel: float = 1e-3
    order_slack: float = 1e-8
    volterra_factor: float = 10.0   # |b(0) - F phi| <= factor * trunc_tol

    def override(self, **kw) -> "Tolerances":
        names = {f.name for f in fields(self)}
        bad = sorted(set(kw) - names)
        if bad:
            raise KeyError(f"unknown tolerance key(s) {bad}; known: {sorted(names)}")
        return replace(self, **{k: float(v) for k, v in kw.items()})


@dataclass(frozen=True)
class Witness:
    t: float
    lhs: float
    rhs: float


@dataclass(frozen=True)
class CertificationResult:
    check: str
    verdict: str                      # "pass" | "fail" | "skipped"
    witness: Optional[Witness] = None
    margin: Optional[float] = None    # min over the grid of rhs - lhs (negative on failure)
    reason: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "skipped"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "fail" and self.witness is None:
            raise ValueError("a failing check needs a witness")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def failed(self) -> bool:
        return self.verdict == "fail"

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.witness is None:
            d["witness"] = None
        return d


def _skip(name: str, reason: str, **details) -> CertificationResult:
    return CertificationResult(name, "skipped", reason=reason, details=details)


def _compare(name: str, t: np.ndarray, lhs: np.ndarray, rhs: np.ndarray, **details) -> CertificationResult:
    """pass iff lhs <= rhs everywhere; the witness is the point of smallest rhs - lhs."""
    lhs, rhs = np.broadcast_arrays(np.asarray(lhs, float), np.asarray(rhs, float))
    gap = rhs - lhs
    k = int(np.argmin(gap))
    w = Witness(float(np.broadcast_to(t, gap.shape)[k]), float(lhs[k]), float(rhs[k]))
    verdict = "pass" if gap[k] >= 0 else "fail"
    return CertificationResult(name, verdict, w, float(gap[k]), details=details)


def _burn_in_slice(path: SolutionPath, fraction: float) -> slice:
    start = int(math.floor(fraction * (len(path.t) - 1)))
    return slice(start, None)


def history_max(phi: History) -> float:
    return float(max(np.max(phi.samples), np.max(phi.right_limits), phi.tail_value))


def envelope_for(params: ModelParams, phi: History, eps: Optional[float] = None) -> EnvelopeBundle:
    """Growth envelope built from the weighted norms of phi itself."""
    return growth_envelope(params, weighted_norm(phi, params.rho), weighted_norm(phi, params.mu), eps)


# --- single-path checks -----------------------------------------------------
def check_envelope(path: SolutionPath, env: EnvelopeBundle, mu: Optional[float] = None,
                   tol: Tolerances = Tolerances()) -> CertificationResult:
    """e^{mu t} b(t) <= xi(t) and b(t) <= alpha1 + |a1| + |a2| on the whole path.

    Compared after dividing by e^{mu t}, which is the same inequality without overflow.
    """
    mu = env.mu if mu is None else mu
    t, b = path.t, path.b
    rhs = env.b_envelope(t) * (1 + tol.envelope_rel) + tol.envelope_abs * np.exp(-mu * t)
    res = _compare("envelope", t, b, rhs, b_bound=env.b_bound)
    if res.failed:
        return res
    flat = _compare("envelope", t, b, np.full_like(b, env.b_bound * (1 + tol.envelope_rel)))
    if flat.failed:
        return replace(flat, details={"flat_bound": env.b_bound})
    return replace(res, details={"b_bound": env.b_bound, "flat_margin": flat.margin})


def check_ultimate_bound(path: SolutionPath, env: Optional[EnvelopeBundle],
                         window_fraction: Optional[float] = None,
                         tol: Tolerances = Tolerances()) -> CertificationResult:
    """Trailing-window maximum of b against alpha1 (the limsup bound)."""
    name = "ultimate_bound"
    if env is None:
        return _skip(name, "no growth envelope in this regime (beta(x_m) >= mu)")
    frac = tol.window if window_fraction is None else window_fraction
    T = float(path.t[-1])
    rate = env.lambda_plus - env.mu
    if math.exp(rate * T) > tol.transient:
        need = math.log(tol.transient) / rate
        return _skip(name, f"transient not decayed: need T >= {need:.4g}, have {T:.4g}", required_T=need)
    start = int(math.floor((1 - frac) * (len(path.t) - 1)))
    seg = slice(start, None)
    return _compare(name, path.t[seg], path.b[seg], env.alpha1 * (1 + tol.ultimate_rel),
                    alpha1=env.alpha1, window_start=float(path.t[start]))


def check_attractor_box(path: SolutionPath, theta2: Optional[float], b_star: Optional[float] = None,
                        burn_in: Optional[float] = None, tol: Tolerances = Tolerances()) -> CertificationResult:
    """Post-burn-in values inside [floor, theta2]; the floor is the persistence estimate."""
    name = "attractor_box"
    if path.history.is_zero:
        return _skip(name, "zero history: no persistence claim")
    if theta2 is None:
        return _skip(name, "no upper bound theta2 in this regime")
    seg = _burn_in_slice(path, tol.burn_in if burn_in is None else burn_in)
    t, b = path.t[seg], path.b[seg]
    floor = float(np.min(b))
    details = {"theta1_estimate": floor, "theta2": theta2,
               "note": "theta1 is not constructive; this is the empirical floor of the path"}
    if b_star is not None:
        details["floor_over_b_star"] = floor / b_star
    res = _compare(name, t, b, theta2 * (1 + tol.box_rel), **details)
    if res.failed:
        return res
    if not floor > 0:
        k = int(np.argmin(b))
        return CertificationResult(name, "fail", Witness(float(t[k]), 0.0, floor), floor, details=details)
    return res


def check_squeeze(m: float, M: float, params: ModelParams, b_star: Optional[float] = None,
                  tol: Tolerances = Tolerances(), zero_floor: float = 0.0) -> CertificationResult:
    """F(m) <= m and M <= F(M) for the post-burn-in range [m, M] of a path.

    ``zero_floor`` is an absolute slack: on a decaying path the range is a
    transient of the size of the numerical zero, not a limit set.
    """
    name = "squeeze"
    if not 0 <= m <= M:
        raise ValueError("need 0 <= m <= M")
    Fm, FM = F_of_b(params, m), F_of_b(params, M)
    rel = tol.squeeze_rel
    details = {"m": m, "M": M, "F_m": Fm, "F_M": FM, "zero_floor": zero_floor}
    if b_star is not None:
        details["gap"] = max(abs(m - b_star), abs(M - b_star))
    lo = m * (1 + rel) + zero_floor - Fm
    hi = FM * (1 + rel) + zero_floor - M
    if lo < 0:
        return CertificationResult(name, "fail", Witness(math.nan, Fm, m * (1 + rel) + zero_floor),
                                   lo, details=details)
    if hi < 0:
        return CertificationResult(name, "fail", Witness(math.nan, M, FM * (1 + rel) + zero_floor),
                                   hi, details=details)
    return CertificationResult(name, "pass", margin=min(lo, hi), details=details)


def check_positivity(path: SolutionPath, params: ModelParams) -> CertificationResult:
    """Eventual positivity: a nonzero history gives b(T) > 0; the zero history gives b = 0."""
    name = "positivity"
    if path.clamped:
        k = int(np.argmin(path.b))
        return CertificationResult(name, "fail", Witness(float(path.t[k]), 0.0, float(path.clamped)),
                                   -float(path.clamped), reason="negative values were clamped")
    if path.history.is_zero:
        return _compare(name, path.t, np.abs(path.b), 0.0)
    inf_g = params.g.nodes[1].min() if params.g.family == "table" else 0.0
    if params.beta_at_xm >= params.mu and inf_g == 0:
        return _skip(name, "path may be unbounded and inf g = 0: hypothesis of the positivity result unmet")
    T, bT = float(path.t[-1]), float(path.b[-1])
    if bT > 0:
        return CertificationResult(name, "pass", Witness(T, 0.0, bT), bT)
    return CertificationResult(name, "fail", Witness(T, 0.0, bT), bT)


def check_volterra(path: SolutionPath, params: ModelParams, phi: History, trunc_tol: float,
                   tol: Tolerances = Tolerances()) -> CertificationResult:
    """b(0) of the solve against an independent evaluation of the history functional."""
    ref = apply_F(params, phi, trunc_tol)
    diff = abs(path.b[0] - ref)
    return _compare("volterra", np.array([0.0]), np.array([diff]),
                    np.array([tol.volterra_factor * trunc_tol]), b0=float(path.b[0]), F_phi=ref)


def check_classification(path: SolutionPath, report: AnalysisReport,
                         tol: Tolerances = Tolerances()) -> CertificationResult:
    name = f"classification[{report.case.value}]"
    t, b = path.t, path.b
    T = float(t[-1])
    top = history_max(path.history)
    if report.case is Case.ConvergentA:
        if path.history.is_zero:
            return _skip(name, "the zero history stays at the trivial equilibrium")
        bs = report.b_star
        return _compare(name, np.array([T]), np.array([abs(b[-1] - bs)]),
                        np.array([tol.terminal * max(1.0, bs)]), b_star=bs, b_T=float(b[-1]))
    if report.case is Case.UnboundedB:
        if path.history.is_zero:
            return _skip(name, "the zero history stays at zero")
        # b(t_{n+1}) >= b(t_n) - slack, witness at the worst drop
        mono = _compare(name, t[1:], b[:-1] - tol.monotone_slack, b[1:])
        if mono.failed:
            return replace(mono, reason="path is not non-decreasing")
        return _compare(name, np.array([T]), np.array([tol.growth_factor * top]),
                        np.array([b[-1]]), b_T=float(b[-1]), history_max=top)
    return _compare(name, np.array([T]), np.array([b[-1]]),
                    np.array([tol.extinct * max(1.0, top)]), b_T=float(b[-1]))


# --- batteries --------------------------------------------------------------
def run_parallel(fn: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """Map fn over items, keeping input order; threads when workers > 1."""
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def certify_classification(params: ModelParams, scenarios: Sequence[History], cfg: SolverConfig,
                           tol: Tolerances = Tolerances(), report: Optional[AnalysisReport] = None,
                           workers: Optional[int] = None, solver=solve_ivp) -> list:
    report = classify(params) if report is None else report

    def one(phi):
        return check_classification(solver(params, phi, cfg), report, tol)

    out = run_parallel(one, scenarios, workers)
    return [replace(r, check=f"{r.check}#{i}") for i, r in enumerate(out)]


def random_history(rng: np.random.Generator, S: float, h: float, scale: float = 1.0) -> History:
    """A random non-negative history: constant, decaying into the past, or oscillatory."""
    kind = rng.integers(3)
    if kind == 0:
        return History.constant(scale * rng.uniform(0.05, 3.0), S, h)
    if kind == 1:
        c, k = scale * rng.uniform(0.2, 3.0), rng.uniform(0.1, 1.0)
        return History.from_function(lambda s: c * np.exp(k * s), S, h, tail="zero")
    base = scale * rng.uniform(0.3, 2.0)
    amp = base * rng.uniform(0.1, 0.9)
    freq, phase = rng.uniform(0.2, 3.0), rng.uniform(0, 2 * np.pi)
    return History.from_function(lambda s: base + amp * np.sin(freq * s + phase), S, h,
                                 tail="constant", tail_value=base)


def ordered_pairs(rng: np.random.Generator, n: int, S: float, h: float, scale: float = 1.0) -> list:
    """n pairs (phi1, phi2) with phi1 <= phi2 at every node and in the tail."""
    pairs = []
    for _ in range(n):
        lo = random_history(rng, S, h, scale)
        bump = random_history(rng, S, h, scale * rng.uniform(0.01, 1.0))
        hi = History(S, h, lo.samples + bump.samples, "constant",
                     lo.tail_value + bump.tail_value)
        pairs.append((lo, hi))
    return pairs


def _dominance(name: str, low: SolutionPath, high: SolutionPath, slack: float) -> CertificationResult:
    return _compare(name, low.t, low.b, high.b + slack)


def monotone_pair_battery(params: ModelParams, pairs: Sequence, cfg: SolverConfig,
                          tol: Tolerances = Tolerances(), workers: Optional[int] = None,
                          solver=solve_ivp) -> CertificationResult:
    """Order preservation phi1 <= phi2 => b1 <= b2, gated on the monotonicity hypothesis."""
    name = "monotone_semiflow"
    hyp = check_hypothesis_M(params)
    if not hyp.holds:
        return _skip(name, "monotonicity hypothesis (beta increasing, g decreasing to 0) fails",
                     hypothesis=asdict(hyp))

    def one(pair):
        lo, hi = pair
        return _dominance(name, solver(params, lo, cfg), solver(params, hi, cfg), tol.order_slack)

    results = run_parallel(one, pairs, workers)
    return _worst(name, results, n_pairs=len(results))


def majorant_domination(params: ModelParams, scenarios: Sequence[History], cfg: SolverConfig,
                        tol: Tolerances = Tolerances(), workers: Optional[int] = None,
                        solver=solve_ivp) -> CertificationResult:
    """The solve with beta replaced by its affine majorant lies above the original."""
    name = "majorant_domination"
    hyp = check_hypothesis_M(params)
    if not hyp.holds:
        return _skip(name, "comparison needs the monotonicity hypothesis", hypothesis=asdict(hyp))
    big = params.majorant()
    if 0.5 * cfg.h * big.beta_at_xm >= 1:
        return _skip(name, "step too large for the majorant model")

    def one(phi):
        return _dominance(name, solver(params, phi, cfg), solver(big, phi, cfg), tol.order_slack)

    results = run_parallel(one, scenarios, workers)
    return _worst(name, results, n_scenarios=len(results))


def _worst(name: str, results: list, **details) -> CertificationResult:
    k = int(np.argmin([r.margin for r in results]))
    worst = results[k]
    return CertificationResult(name, worst.verdict, worst.witness, worst.margin,
                               details={**details, "worst_index": k})


# --- convergence study ------------------------------------------------------
@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    error: float
    ratio: Optional[float]   # error(previous, coarser level) / error(this level)


def convergence_study(params: ModelParams, phi, cfg: SolverConfig, levels: int = 4,
                      hs: Optional[Sequence[float]] = None, ref_factor: int = 8,
                      floor: float = 1e-12, solver=None) -> list:
    """Max-norm errors against a reference path at (finest h) / ref_factor.

    ``phi`` is either a History (resampled to each level by linear
    interpolation) or a callable h -> History. Levels halve h starting from
    cfg.h unless ``hs`` is given. Grid points in the first coarse cell
    [0, h_coarsest] are excluded: b jumps at t = 0 and the error there is
    dominated by how the jump is resolved. Ratios are None when either error
    sits at the roundoff floor.
    """
    if levels < 3 and hs is None:
        raise ValueError("a convergence study needs at least 3 levels")
    hs = list(hs) if hs is not None else [cfg.h / 2 ** k for k in range(levels)]
    make = phi if callable(phi) else (lambda h: phi.resample(h))
    run = solver or solve_ivp
    h_ref = hs[-1] / ref_factor
    ref = solve_ivp(params, make(h_ref), replace(cfg, h=h_ref, mass_rule="trapezoid"))
    scale = max(1.0, float(np.max(np.abs(ref.b))))
    rows, prev = [], None
    for h in hs:
        path = run(params, make(h), replace(cfg, h=h))
        k = int(round(h / h_ref))
        keep = path.t > hs[0] * (1 + 1e-9)
        err = float(np.max(np.abs(path.b[keep] - ref.b[::k][keep])))
        ratio = None
        if prev is not None and prev > floor * scale and err > floor * scale:
            ratio = prev / err
        rows.append(ConvergenceRow(h, err, ratio))
        prev = err
    return rows
