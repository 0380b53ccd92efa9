import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from conftest import e1_params, ramp_params, unbounded_params
from forest_renewal import (Case, C_eps, F_of_b, G_of_x, ModelParams, NonUniquenessWarning,
                            R1_of_c, R_of_b, RateSpec, UnsupportedRegimeError,
                            basic_reproduction_number, classify, derivative_bound,
                            growth_envelope, positive_equilibrium, theta2)


def R_quad(params, b):
    """Independent oracle: nested adaptive quadrature of R(b)."""
    mu, g, beta = params.mu, params.g, params.beta
    inner = lambda a: quad(lambda tau: g(math.exp(-mu * tau) * b / mu), 0, a, epsabs=1e-13)[0]
    return quad(lambda a: beta(params.x_m + inner(a)) * math.exp(-mu * a), 0, 60,
                limit=200, epsabs=1e-12)[0]


def test_R_constant_beta():
    p = ModelParams(2.0, 0.0, 0.5, RateSpec.affine(0.6, 0.0), RateSpec.exp_decay(1, 1))
    for b in (0.0, 1.0, 25.0):
        assert R_of_b(p, b) == pytest.approx(0.3, rel=1e-6)  # trapezoid error mu^2 da^2 / 12


def test_R_analytic_values():
    assert R_of_b(e1_params(), 0.0) == pytest.approx(2.0, abs=1e-6)
    assert R_of_b(ramp_params(), 0.0) == pytest.approx(math.exp(-1), abs=1e-6)
    # E1 closed form R(b) = 2 (1 - e^{-b}) / b
    for b in (0.3, 1.0, 4.0):
        assert R_of_b(e1_params(), b) == pytest.approx(2 * (1 - math.exp(-b)) / b, rel=1e-6)


def test_R_against_nested_quad():
    p = ramp_params(4.0, 1.0)
    for b in (0.2, 1.5):
        assert R_of_b(p, b) == pytest.approx(R_quad(p, b), rel=1e-6)


def test_basic_reproduction_number_examples():
    p = ModelParams(1.0, 0.0, 0.5, RateSpec.affine(0.4, 0.0), RateSpec.exp_decay(1, 1))
    assert basic_reproduction_number(p) == pytest.approx(0.4, abs=1e-9)
    assert basic_reproduction_number(e1_params()) == pytest.approx(2.0, abs=1e-6)
    assert basic_reproduction_number(e1_params(mu=2.0)) == pytest.approx(0.5, abs=1e-6)
    assert basic_reproduction_number(ramp_params()) == pytest.approx(math.exp(-1), abs=1e-6)
    assert basic_reproduction_number(unbounded_params()) == pytest.approx(2.0, abs=1e-6)


def test_basic_reproduction_number_matches_R_at_zero():
    for p in (e1_params(), ramp_params(), ramp_params(4.0, 1.0), unbounded_params()):
        assert abs(basic_reproduction_number(p) - R_of_b(p, 0.0)) <= 1e-6


def test_positive_equilibrium_e1(b_star_e1):
    bs = positive_equilibrium(e1_params())
    assert bs == pytest.approx(b_star_e1, abs=1e-6)
    assert abs(R_of_b(e1_params(), bs) - 1) <= 1e-8


def test_positive_equilibrium_absent():
    p = ModelParams(1.0, 0.0, 0.5, RateSpec.affine(0.5, 0.0), RateSpec.exp_decay(1, 1))
    assert positive_equilibrium(p) is None
    assert positive_equilibrium(ramp_params()) is None
    assert positive_equilibrium(unbounded_params()) is None


def test_positive_equilibrium_flags_non_monotone_g():
    g = RateSpec.table([0, 1, 3, 10], [1.0, 1.5, 0.3, 0.1], "g")
    p = ModelParams(1.0, 0.0, 0.5, RateSpec.affine(0, 2), g)
    with pytest.warns(NonUniquenessWarning):
        bs = positive_equilibrium(p)
    assert abs(R_of_b(p, bs) - 1) <= 1e-8


def test_F_examples(b_star_e1):
    p = e1_params()
    assert F_of_b(p, 0.0) == 0.0
    bs = positive_equilibrium(p)
    assert F_of_b(p, bs) == pytest.approx(bs, rel=1e-8)
    grid = np.linspace(0, 4 * b_star_e1, 50)
    vals = [F_of_b(p, b) for b in grid]
    assert np.all(np.diff(vals) > 0)


def test_R_non_increasing_under_M():
    for p in (e1_params(), ramp_params(4.0, 1.0)):
        vals = [R_of_b(p, b) for b in np.geomspace(1e-3, 50, 30)]
        assert np.all(np.diff(vals) <= 1e-12)


def test_theta2_coincides_for_affine_beta(b_star_e1):
    p = e1_params()
    assert theta2(p) == pytest.approx(positive_equilibrium(p), abs=1e-9)
    assert theta2(p) == pytest.approx(b_star_e1, abs=1e-6)


def test_theta2_dominates_for_ramp():
    # ramp(c=4, x_A=1): majorant 4x gives R_1(c) = 4 (1 - e^{-c}) / c in closed form
    p = ramp_params(4.0, 1.0)
    th2_oracle = brentq(lambda c: 4 * (1 - math.exp(-c)) - c, 1.0, 10.0, xtol=1e-14)
    bs_oracle = brentq(lambda b: R_quad(p, b) - 1, 0.1, 2.0, xtol=1e-10)
    assert theta2(p) == pytest.approx(th2_oracle, abs=1e-6)
    assert positive_equilibrium(p) == pytest.approx(bs_oracle, abs=1e-6)
    assert theta2(p) > positive_equilibrium(p)


def test_R1_dominates_R():
    p = ramp_params(4.0, 1.0)
    for c in np.linspace(0, 6, 13):
        assert R1_of_c(p, c) >= R_of_b(p, c) - 1e-12


def test_theta2_none_when_R1_below_one():
    p = ModelParams(1.0, 0.0, 0.5, RateSpec.affine(0.2, 0.3), RateSpec.exp_decay(1, 1))
    assert theta2(p) is None


def test_C_eps_examples():
    g = RateSpec.exp_decay(1, 1)
    assert C_eps(g, 0.1) == pytest.approx(1 - 0.1 - 0.1 * math.log(10), abs=1e-12)
    assert C_eps(g, 1.0) == 0.0
    assert C_eps(g, 1.5) == 0.0
    assert C_eps(RateSpec.rational_decay(1, 1), 0.1) == pytest.approx(math.log(10) - 0.9, abs=1e-12)


def test_C_eps_table_against_scan():
    g = RateSpec.table([0, 1, 3, 10], [1.0, 1.5, 0.3, 0.1], "g")
    x = np.linspace(0, 200, 400001)
    brute = np.max(G_of_x(g, x) - 0.2 * x)
    assert C_eps(g, 0.2) == pytest.approx(brute, abs=1e-6)
    with pytest.raises(UnsupportedRegimeError):
        C_eps(g, 0.05)  # g(+inf) = 0.1 > eps: G - eps x is unbounded


def test_G_of_x():
    assert G_of_x(RateSpec.exp_decay(1, 1), 2.0) == pytest.approx(1 - math.exp(-2))


def test_growth_envelope_hand_values():
    env = growth_envelope(e1_params(), 2.0, 1.0, eps=0.1)
    C = 1 - 0.1 - 0.1 * math.log(10)
    assert env.C_eps == pytest.approx(C, abs=1e-12)
    assert env.alpha1 == pytest.approx(2 * C / 0.8, rel=1e-12)
    assert env.alpha1 == pytest.approx(1.674353, abs=1e-6)
    assert env.lambda_plus == pytest.approx(0.447214, abs=1e-6)
    assert env.lambda_minus == pytest.approx(-0.447214, abs=1e-6)
    # A bound = (beta(x_m) + L / (mu - rho)) |phi|_rho + L C / mu
    assert env.A_bound == pytest.approx(4.0 * 2.0 + 2 * C, rel=1e-12)


def test_growth_envelope_zero_history():
    p = e1_params()
    env = growth_envelope(p, 0.0, 0.0, eps=0.1)
    assert env.A_bound == pytest.approx(p.L * env.C_eps / p.mu, rel=1e-12)
    assert env.a1 + env.a2 == pytest.approx(env.A_bound - env.alpha1, rel=1e-12)


def test_growth_envelope_rejects_critical_beta():
    with pytest.raises(UnsupportedRegimeError):
        growth_envelope(unbounded_params(), 1.0, 1.0)


def test_growth_envelope_identities():
    p = ModelParams(1.3, 0.2, 0.4, RateSpec.affine(0.5, 1.5), RateSpec.rational_decay(2, 0.5))
    env = growth_envelope(p, 1.7, 0.9)
    lp, lm = env.lambda_plus, env.lambda_minus
    assert lp * lm == pytest.approx(-env.eps * p.L, rel=1e-12)
    assert lp + lm == pytest.approx(p.beta_at_xm, rel=1e-12)
    assert lm < lp < p.mu
    assert p.mu ** 2 - p.mu * p.beta_at_xm - env.eps * p.L > 0
    assert env.xi(0.0) == pytest.approx(env.A_bound, rel=1e-12)
    d0 = env.eps * p.L * 0.9 + p.L * env.C_eps + p.beta_at_xm * env.A_bound
    fd = (env.xi(1e-6) - env.xi(-1e-6)) / 2e-6
    assert fd == pytest.approx(d0, rel=1e-6)


def test_xi_solves_its_ode():
    p = e1_params()
    env = growth_envelope(p, 2.0, 1.0, eps=0.1)
    t = np.random.default_rng(7).uniform(0, 10, 20)
    lhs = env.xi_second(t)
    res = lhs - p.mu * p.L * env.C_eps * np.exp(p.mu * t) - p.beta_at_xm * env.xi_prime(t) \
        - env.eps * p.L * env.xi(t)
    assert np.all(np.abs(res) <= 1e-8 * np.abs(lhs))


def test_derivative_bound():
    p = e1_params()
    assert derivative_bound(p, 0.0, 0.0) == 0.0
    env = growth_envelope(p, 2.0, 1.0, eps=0.1)
    B = env.alpha1 + abs(env.a1) + abs(env.a2)
    assert derivative_bound(p, 2.0, B) == pytest.approx(1.0 * B + 2.0 * 1.0 * (2.0 + B), rel=1e-14)
    u = unbounded_params()
    assert derivative_bound(u, 2.0, 3.0) == pytest.approx(u.L * u.g_max * (2.0 + 3.0), rel=1e-14)


def test_classify_examples(b_star_e1):
    r = classify(e1_params())
    assert r.case is Case.ConvergentA and r.R0 == pytest.approx(2.0, abs=1e-6)
    assert r.b_star == pytest.approx(b_star_e1, abs=1e-6)
    assert classify(unbounded_params()).case is Case.UnboundedB
    r = classify(ramp_params())
    assert r.case is Case.ExtinctC and r.b_star is None


def test_classify_flags_failed_hypothesis():
    g = RateSpec.table([0, 1, 3, 10], [1.0, 1.5, 0.3, 0.1], "g")
    r = classify(ModelParams(1.0, 0.0, 0.5, RateSpec.affine(0, 2), g))
    assert not r.hypothesis.holds
    assert any("advisory" in n for n in r.notes)


def test_report_serialises():
    d = classify(e1_params(), (2.0, 1.0)).to_dict()
    for key in ("R0", "beta_xm", "mu", "case", "b_star", "theta2", "envelope"):
        assert key in d
    assert d["case"] == "ConvergentA"
    assert "alpha1" in d["envelope"]
