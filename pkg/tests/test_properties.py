"""Property-based checks of monotonicity and scaling invariants."""
import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from forest_renewal import (F_of_b, History, ModelParams, R_of_b, RateSpec, SolverConfig,
                            apply_F, find_root_monotone, integrate_grid, solve_ivp)

rates = st.sampled_from([
    ModelParams(1.0, 0.0, 0.5, RateSpec.affine(0.0, 2.0), RateSpec.exp_decay(1.0, 1.0)),
    ModelParams(1.0, 0.0, 0.5, RateSpec.ramp(4.0, 1.0), RateSpec.rational_decay(1.0, 1.0)),
    ModelParams(0.8, 0.5, 0.3, RateSpec.affine(0.2, 1.0), RateSpec.exp_decay(2.0, 0.5)),
])
values = st.floats(0.0, 5.0, allow_nan=False)
slow = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@slow
@given(rates, st.lists(values, min_size=41, max_size=41), st.lists(values, min_size=41, max_size=41))
def test_solver_preserves_order(p, a, d):
    lo = np.asarray(a)
    hi = lo + np.asarray(d)
    phi_lo = History(4.0, 0.1, lo, "constant", float(lo[0]))
    phi_hi = History(4.0, 0.1, hi, "constant", float(hi[0]))
    cfg = SolverConfig(h=0.1, T=6.0)
    b_lo, b_hi = solve_ivp(p, phi_lo, cfg).b, solve_ivp(p, phi_hi, cfg).b
    assert np.all(b_lo <= b_hi + 1e-8)


@slow
@given(rates, st.lists(values, min_size=41, max_size=41))
def test_solver_nonnegative_and_consistent(p, a):
    phi = History(4.0, 0.1, np.asarray(a), "constant", float(a[0]))
    path = solve_ivp(p, phi, SolverConfig(h=0.1, T=4.0))
    assert path.clamped == 0 and np.all(path.b >= 0)
    assert np.all(np.diff(path.P) >= 0)
    assert abs(path.b[0] - apply_F(p, phi)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(rates, st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_R_antitone_F_monotone(p, x, y):
    lo, hi = sorted((x, y))
    assert R_of_b(p, hi) <= R_of_b(p, lo) + 1e-12
    assert F_of_b(p, lo) <= F_of_b(p, hi) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 4), st.floats(0.1, 4))
def test_root_finder_bracket_independent(target, w1, w2):
    f = lambda x: x ** 3 + 2 * x
    a = find_root_monotone(f, target, (-1.5 - w1, 1.5 + w2), tol=1e-12)
    b = find_root_monotone(f, target, (-1.5 - w2, 1.5 + w1), tol=1e-12)
    assert abs(a - b) <= 2e-12 + 1e-12 * abs(a)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(2, 200), st.floats(0.01, 3))
def test_trapezoid_exact_for_affine(c0, c1, n, h):
    x = h * np.arange(n)
    exact = c0 * x[-1] + 0.5 * c1 * x[-1] ** 2
    assert abs(integrate_grid(c0 + c1 * x, h) - exact) <= 1e-9 * (1 + abs(exact))
