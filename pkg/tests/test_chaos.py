import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaoskit.chaos import (
    ChaosError,
    ChaosFunctional,
    TruncationError,
    estimate_moments,
    extract_kernel,
    integral_pointwise,
    product_top_kernel_check,
)
from chaoskit.kernels import SymKernel, inner, random_kernel, symmetrize, sym_tensor_product
from chaoskit.space import DiscreteSpace, rng_for, sample_counts


def indicator(cells, n_cells):
    return SymKernel.from_entries(1, n_cells, [((c,), 1.0) for c in cells])


def test_first_order_indicator_is_compensated_count(space4):
    F = ChaosFunctional.integral(indicator([1], 4), space4)
    c = sample_counts(space4, 500, seed=1)
    assert np.allclose(F(c), c[:, 1] - space4.masses[1], rtol=0, atol=1e-13)


def test_empty_configuration_first_order(space4, rng):
    f = random_kernel(1, 4, rng)
    F = ChaosFunctional.integral(f, space4)
    assert F(np.zeros(4, dtype=int)) == pytest.approx(-float(f.values @ space4.masses), rel=1e-14)


def test_disjoint_rectangle_product(space4):
    t = np.zeros((4, 4))
    t[0, 2] = 1.0
    F = ChaosFunctional.integral(symmetrize(t), space4)
    c = sample_counts(space4, 1000, seed=2)
    comp = c - space4.masses
    expect = comp[:, 0] * comp[:, 2]
    assert np.allclose(F(c), expect, rtol=1e-10, atol=1e-12)


def test_charlier_matches_point_enumeration(rng):
    space = DiscreteSpace(rng.uniform(0.3, 1.5, 3))
    c = sample_counts(space, 30, seed=3)
    for q in (1, 2, 3):
        F = ChaosFunctional.integral(random_kernel(q, 3, rng), space)
        fast = F(c)
        slow = np.array([F.evaluate_pointwise(row) for row in c])
        assert np.allclose(fast, slow, rtol=1e-10, atol=1e-10)


def test_pointwise_accepts_nonsymmetric_tensor(rng):
    space = DiscreteSpace(np.array([0.5, 1.2, 0.8]))
    t = rng.standard_normal((3, 3))
    F = ChaosFunctional.integral(symmetrize(t), space)
    for row in sample_counts(space, 20, seed=4):
        assert integral_pointwise(t, row, space.masses) == pytest.approx(F(row), rel=1e-10, abs=1e-12)


def test_pointwise_truncation_is_reported():
    space = DiscreteSpace(np.array([1.0]))
    F = ChaosFunctional.integral(SymKernel(2, 1, [1.0]), space)
    with pytest.raises(TruncationError):
        F.evaluate_pointwise([100], max_points=40)


def test_space_mismatch(space4):
    F = ChaosFunctional.integral(SymKernel(1, 4, np.ones(4)), space4)
    with pytest.raises(ChaosError):
        F([1, 2])


def test_linearity(space4, rng):
    F = ChaosFunctional(space4, 0.5, {1: random_kernel(1, 4, rng), 2: random_kernel(2, 4, rng)})
    G = ChaosFunctional(space4, -1.0, {2: random_kernel(2, 4, rng), 3: random_kernel(3, 4, rng)})
    c = sample_counts(space4, 200, seed=5)
    lhs = (F * 2.5 + G * -0.7)(c)
    rhs = 2.5 * F(c) - 0.7 * G(c)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_isometry_single_cell_first_order():
    lam = 3.0
    F = ChaosFunctional.integral(SymKernel(1, 1, [1.0]), DiscreteSpace(np.array([lam])))
    est = estimate_moments(F, (2,), 100_000, seed=6)[2]
    assert est.within(lam)


def test_constant_has_zero_central_moments():
    F = ChaosFunctional(DiscreteSpace(np.array([1.0, 2.0])), 5.0)
    est = estimate_moments(F - 5.0, (1, 2, 3, 4), 1000, seed=7)
    assert all(e.value == 0.0 and e.se == 0.0 for e in est.values())


@pytest.mark.parametrize("lam", [1.0, 4.0])
def test_standardized_fourth_moment(lam):
    F = ChaosFunctional.integral(SymKernel(1, 1, [1 / math.sqrt(lam)]), DiscreteSpace(np.array([lam])))
    est = estimate_moments(F, (4,), 100_000, seed=8)[4]
    assert est.within(3 + 1 / lam)


def test_centered_and_orthogonal(space4, rng):
    ks = {p: random_kernel(p, 4, rng) for p in (1, 2, 3)}
    n = 50_000
    c = sample_counts(space4, n, seed=9)
    vals = {p: ChaosFunctional.integral(k, space4)(c) for p, k in ks.items()}
    for p in ks:
        x = vals[p]
        assert abs(x.mean()) <= 3 * x.std(ddof=1) / math.sqrt(n)
    for p in ks:
        for q in ks:
            x = vals[p] * vals[q]
            ref = math.factorial(p) * inner(ks[p], ks[q], space4.masses) if p == q else 0.0
            assert abs(x.mean() - ref) <= 3 * x.std(ddof=1) / math.sqrt(n)


def test_extract_first_order_kernel(space4, rng):
    f = random_kernel(1, 4, rng)
    k, se = extract_kernel(ChaosFunctional.integral(f, space4), 1, 2000, seed=10)
    assert np.all(np.abs(k.values - f.values) <= 3 * se + 1e-12)


def test_extract_vanishing_higher_kernel(space4, rng):
    F = ChaosFunctional.integral(random_kernel(2, 4, rng), space4)
    k, se = extract_kernel(F, 3, 2000, seed=11)
    assert np.all(np.abs(k.values) <= 3 * se + 1e-9)


def test_extract_second_order_kernel(space4, rng):
    f = random_kernel(2, 4, rng)
    F = ChaosFunctional(space4, 1.0, {1: random_kernel(1, 4, rng), 2: f})
    k, se = extract_kernel(F, 2, 5000, seed=12)
    assert np.all(np.abs(k.values - f.values) <= 3 * se + 1e-9)


def test_extract_from_constant():
    F = ChaosFunctional(DiscreteSpace(np.array([1.0, 2.0])), 3.0)
    k, se = extract_kernel(F, 1, 100, seed=13)
    assert np.all(k.values == 0.0)


def test_extract_black_box_callable(space4, rng):
    f = random_kernel(1, 4, rng)
    F = ChaosFunctional.integral(f, space4)
    k, _ = extract_kernel(lambda c: F(c) ** 1, 1, 500, seed=14, space=space4)
    assert np.allclose(k.values, f.values, atol=1e-12)


def test_top_kernel_basis_vectors():
    space = DiscreteSpace(np.array([0.7, 1.1, 0.5]))
    e0 = SymKernel.from_entries(1, 3, [((0,), 1.0)])
    e1 = SymKernel.from_entries(1, 3, [((1,), 1.0)])
    exact, pred, diff = product_top_kernel_check(e0, e1, space)
    assert diff <= 1e-9
    assert exact[(0, 1)] == pytest.approx(0.5, abs=1e-9)


def test_top_kernel_zero_factor():
    space = DiscreteSpace(np.array([0.7, 1.1]))
    f = SymKernel.from_entries(1, 2, [((0,), 1.0)])
    exact, pred, diff = product_top_kernel_check(f, SymKernel(1, 2), space)
    assert diff <= 1e-12 and np.all(pred.values == 0)


def test_top_kernel_diagonal_single_cell():
    space = DiscreteSpace(np.array([1.3]))
    e0 = SymKernel(1, 1, [1.0])
    exact, pred, diff = product_top_kernel_check(e0, e0, space)
    assert diff <= 1e-9 and exact[(0, 0)] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("p,q", [(1, 1), (1, 2), (2, 2), (1, 3)])
def test_top_kernel_random(p, q, rng):
    space = DiscreteSpace(rng.uniform(0.3, 2.0, 5 if p + q < 4 else 4))
    f, g = random_kernel(p, space.n_cells, rng), random_kernel(q, space.n_cells, rng)
    assert product_top_kernel_check(f, g, space).max_abs_diff <= 1e-9


def test_top_kernel_too_large():
    space = DiscreteSpace(np.ones(7))
    with pytest.raises(ChaosError):
        product_top_kernel_check(SymKernel(1, 7), SymKernel(1, 7), space)


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_symmetrization_does_not_change_integral(q, seed):
    rng = rng_for(seed)
    space = DiscreteSpace(rng.uniform(0.2, 1.5, 3))
    t = rng.standard_normal((3,) * q)
    F = ChaosFunctional.integral(symmetrize(t), space)
    row = rng.poisson(space.masses)
    assert integral_pointwise(t, row, space.masses) == pytest.approx(F(row), rel=1e-9, abs=1e-9)


def test_json_roundtrip(space4, rng):
    F = ChaosFunctional(space4, 0.25, {1: random_kernel(1, 4, rng), 3: random_kernel(3, 4, rng)})
    G = ChaosFunctional.from_json(F.to_json(), space4)
    c = sample_counts(space4, 50, seed=15)
    assert np.allclose(F(c), G(c), rtol=1e-14, atol=1e-14)


def test_json_symmetrizes_raw_entries():
    space = DiscreteSpace(np.array([1.0, 1.0]))
    doc = {"constant": 0, "kernels": {"2": {"order": 2, "entries": [{"idx": [0, 1], "val": 1.0}]}}}
    F = ChaosFunctional.from_json(doc, space)
    assert F.kernel(2)[(1, 0)] == 0.5
