import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaoskit import bounds as B
from chaoskit import oracle
from chaoskit.chaos import ChaosError, ChaosFunctional
from chaoskit.kernels import SymKernel, random_kernel
from chaoskit.space import DiscreteSpace, rng_for


def unit_integral(q, cells, seed, lo=0.5, hi=2.0):
    rng = rng_for(seed, q, cells)
    space = DiscreteSpace(rng.uniform(lo, hi, cells))
    F = ChaosFunctional.integral(random_kernel(q, cells, rng), space)
    return F / math.sqrt(F.variance())


def test_rhs_vanish_at_gaussian_fourth_moment():
    for q in (1, 2, 3, 4):
        assert B.fm_w1_rhs(q, 3.0) == 0.0
    assert B.fm_w1_rhs_simple(3.0) == 0.0
    assert B.fm_kol_rhs(3.0) == 0.0


def test_rhs_constants():
    assert B.SIMPLE_W1_COEF == pytest.approx(2.79788, abs=1e-5)
    assert B.fm_w1_rhs(1, 4.0) == pytest.approx(math.sqrt(2 / math.pi) / 2 + math.sqrt(3), rel=1e-14)
    assert B.fm_w1_rhs(1, 4.0) == pytest.approx(2.130993, abs=1e-6)
    assert B.fm_kol_rhs(4.0) == pytest.approx(11 + 2 * math.sqrt(2) * (2 + math.sqrt(2)), rel=1e-14)
    assert B.fm_kol_rhs(4.0) == pytest.approx(20.657, abs=1e-3)


def test_rhs_noise_flag():
    r = B.fm_w1_rhs_simple(2.9)
    assert r == 0.0 and r.noise
    assert not B.fm_w1_rhs_simple(3.1).noise


def test_kol_monotone():
    vals = [B.fm_kol_rhs(m) for m in np.linspace(3, 30, 200)]
    assert np.all(np.diff(vals) > 0)


@given(st.integers(1, 6), st.floats(3.0, 100.0))
def test_w1_coefficient_below_simple(q, m4):
    assert B.fm_w1_rhs(q, m4) <= B.fm_w1_rhs_simple(m4) + 1e-12


def test_gamma_constants_and_bracket():
    c1, c2 = B.gamma_constants(2.0)
    assert c1 == pytest.approx(1 / math.sqrt(3), rel=1e-14)
    assert c2 == pytest.approx(1 / math.sqrt(6) + 2, rel=1e-14)
    for nu in (0.5, 1.0, 2.0, 8.0):
        _, m3, m4 = B.centered_gamma_moments(nu)
        assert B.gamma_bracket(nu, m3, m4) == pytest.approx(0.0, abs=1e-10 * m4)
        assert B.fm_gamma_rhs(nu, 2, m3, m4, 0.0) == pytest.approx(0.0, abs=1e-4)
    with pytest.raises(ValueError):
        B.gamma_constants(0.0)


def test_centered_gamma_moments_against_scipy():
    from scipy import stats

    for nu in (1.0, 3.0):
        Z = stats.gamma(nu / 2, loc=-nu, scale=2)
        m2, m3, m4 = B.centered_gamma_moments(nu)
        assert (m2, m3, m4) == pytest.approx((Z.moment(2), Z.moment(3), Z.moment(4)), rel=1e-10)


def test_ingredients_first_order_exact_values():
    lam = 9.0
    F = ChaosFunctional.integral(SymKernel(1, 1, [1 / 3.0]), DiscreteSpace(np.array([lam])))
    rep = B.estimate_ingredients(F, 20_000, seed=1)
    ing = rep.ingredients
    # D+F = 1/3 deterministically, so Gamma0(F, -L^{-1}F) = (lam + N) / 18
    assert ing["gamma0_mean"].within(1.0)
    assert ing["gamma0_var"].within(lam / 18**2)
    assert ing["t3"].value == pytest.approx(lam / 27, rel=1e-12)
    assert ing["d4"].value == pytest.approx(lam / 81, rel=1e-12)
    assert rep.rhs["sb1"] == pytest.approx(rep.rhs["gb2"], rel=1e-12)
    assert ing["m4"].within(3 + 1 / lam)
    assert all(v.se >= 0 for v in ing.values())
    assert all(float(v) >= 0 for v in rep.rhs.values())


@pytest.mark.parametrize("q", [1, 2, 3])
def test_ingredient_expectations(q):
    F = unit_integral(q, 4, seed=10 + q)
    rep = B.estimate_ingredients(F, 30_000, seed=q)
    ing = rep.ingredients
    assert ing["gamma0_mean"].within(1.0)
    assert ing["s2"].within(q * 1.0)
    assert ing["indicator"].value >= 0
    assert all(rep.ordering().values())


def test_gamma_ingredients():
    nu, mu = 2, 40.0
    space = DiscreteSpace(np.full(nu, mu))
    F = ChaosFunctional.integral(SymKernel.from_function(2, nu, lambda i, j: 1 / mu if i == j else 0.0), space)
    rep = B.estimate_ingredients(F, 20_000, seed=3, nu=float(nu))
    for key in ("gbg1", "gbg2", "sbg1", "fm_gamma"):
        assert key in rep.rhs and float(rep.rhs[key]) >= 0
    assert all(rep.ordering().values())


def test_ingredients_need_centered():
    F = unit_integral(1, 3, seed=4) + 1.0
    with pytest.raises(ChaosError):
        B.estimate_ingredients(F, 100, seed=0)


def test_indicator_interval_sum_matches_brute_force(rng):
    n, m = 200, 3
    f = rng.standard_normal(n)
    dpf, dpg = rng.standard_normal((n, m)), rng.standard_normal((n, m))
    mu = np.array([0.5, 1.0, 2.0])
    grid = np.linspace(-3, 3, 61)
    val, x = B.indicator_sup(f, dpf, dpg, mu, grid=grid)
    brute = []
    for t in grid:
        ind = (f[:, None] + dpf > t).astype(float) - (f[:, None] > t)
        brute.append(np.mean((ind * np.abs(dpg) * dpf) @ mu))
    assert val == pytest.approx(max(max(brute), 0.0), abs=1e-12)
    assert min(brute) >= -1e-15


def test_bound_report_serialization():
    F = unit_integral(2, 3, seed=5)
    rep = B.estimate_ingredients(F, 2000, seed=5)
    doc = rep.to_json()
    assert doc["q"] == 2 and "gb1" in doc["rhs"]
    lines = rep.to_csv().strip().splitlines()
    assert lines[0].startswith("functional,bound") and len(lines) == 1 + len(rep.rhs)


@pytest.mark.parametrize("q,cells", [(1, 4), (2, 4), (3, 3)])
def test_lemma_suite_exact(q, cells):
    F = unit_integral(q, cells, seed=20 + q) * 1.7
    rep = B.lemma_suite(F, "exact")
    assert rep.all_passed(), [(c.name, c.lhs, c.rhs) for c in rep.checks if not c.passed()]
    assert rep["remlemma_identity"].residual <= 1e-9
    assert rep["cb1_equality"].residual <= 1e-9


def test_lemma_q1_coefficient():
    F = unit_integral(1, 3, seed=30)
    rep = B.lemma_suite(F, "exact")
    c = rep["cb1_bound"]
    m4 = oracle.exact_moment(F, 4)
    assert c.rhs == pytest.approx(0.25 * (m4 - 3), rel=1e-9)


@pytest.mark.parametrize("q", [1, 2])
def test_lemma_suite_monte_carlo(q):
    F = unit_integral(q, 4, seed=40 + q)
    rep = B.lemma_suite(F, "mc", n=20_000, seed=q)
    assert rep.all_passed(tol=1e-9, k=3.0), [(c.name, c.lhs, c.rhs, c.se) for c in rep.checks if not c.passed()]


def test_lemma_suite_rejects_mixed():
    rng = rng_for(1)
    space = DiscreteSpace(np.ones(3))
    F = ChaosFunctional(space, 0.0, {1: random_kernel(1, 3, rng), 2: random_kernel(2, 3, rng)})
    with pytest.raises(ChaosError):
        B.lemma_suite(F)
