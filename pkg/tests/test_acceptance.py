"""Acceptance suite: one check per criterion at the stated tolerances.

Every criterion prints a single ``[PASS]``/``[FAIL]`` line.  Run directly with
``python tests/test_acceptance.py`` for the bare listing, or through pytest.
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from chaoskit import bounds as B
from chaoskit import harness as H
from chaoskit import malliavin as M
from chaoskit import oracle as O
from chaoskit.chaos import ChaosFunctional, extract_kernel, mean_se, product_top_kernel_check
from chaoskit.kernels import SymKernel, inner, random_kernel
from chaoskit.space import DiscreteSpace, map_blocks, mecke_check, rng_for, sample_counts
from chaoskit.stein import (
    STEIN_G_BOUND,
    Target,
    d2_family_gaps,
    ks_distance,
    sample_target,
    stein_g,
    stein_g_prime,
    stein_property_excess,
    stein_residual,
    w1_distance,
)

SEED = 0


def _random_functional(rng, space, orders):
    return ChaosFunctional(space, float(rng.normal()), {p: random_kernel(p, space.n_cells, rng) for p in orders})


def _corpus(n_pairs=60, configs=200):
    """Random ``(space, F, G, counts)`` tuples shared by the pathwise criteria."""
    rng = rng_for(SEED, 1)
    out = []
    for i in range(n_pairs):
        cells = int(rng.integers(1, 9))
        space = DiscreteSpace(rng.uniform(0.1, 3.0, cells))
        qf = int(rng.integers(1, 4))
        F = _random_functional(rng, space, range(1, qf + 1))
        G = _random_functional(rng, space, (1, int(rng.integers(1, 4))))
        out.append((space, F, G, sample_counts(space, configs, seed=1000 + i)))
    return out


def criterion_1():
    t0 = time.perf_counter()
    worst, triples = 0.0, 0
    for space, F, G, c in _corpus():
        res = M.identity_residuals(F, G, c)
        worst = max(worst, max(float(v.max()) for v in res.values()))
        triples += c.shape[0] * space.n_cells
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and triples >= 10_000 and dt < 10
    return ok, f"max rel residual {worst:.2e} over {triples} triples in {dt:.2f}s (need <=1e-10, >=1e4, <10s)"


def criterion_2():
    rng = rng_for(SEED, 2)
    worst = 0.0
    for q in (1, 2, 3):
        for cells in (1, 4, 8):
            space = DiscreteSpace(rng.uniform(0.1, 3.0, cells))
            F = ChaosFunctional.integral(random_kernel(q, cells, rng), space)
            c = sample_counts(space, 1000, seed=10 * q + cells)
            lf, f = M.apply_L(F, c, space), F(c)
            rel = np.abs(lf + q * f) / np.maximum.reduce([np.ones_like(f), np.abs(f), np.abs(lf)])
            worst = max(worst, float(rel.max()))
    return worst <= 1e-8, f"max rel residual of L I_q(f) + q I_q(f): {worst:.2e} (need <=1e-8)"


def criterion_3():
    worst = 0.0
    for space, F, G, c in _corpus():
        a = np.atleast_1d(M.carre_du_champ(F, G, c, space))
        b = np.atleast_1d(M.gamma0(F, G, c, space))
        rel = np.abs(a - b) / np.maximum.reduce([np.ones_like(a), np.abs(a), np.abs(b)])
        worst = max(worst, float(rel.max()))
    return worst <= 1e-8, f"max residual Gamma - Gamma0: {worst:.2e} (need <=1e-8)"


def _mecke_polys():
    """Ten polynomial test functionals ``h(chi, z)`` on a 3-cell space."""
    w = np.array([1.0, -0.5, 2.0])

    def col(c, j):
        return np.atleast_2d(c)[:, j].astype(float)

    return [
        lambda c, z: col(c, 0),
        lambda c, z: col(c, z),
        lambda c, z: col(c, z) ** 2,
        lambda c, z: col(c, 0) * col(c, 1),
        lambda c, z: w[z] * col(c, 2),
        lambda c, z: (col(c, 0) + col(c, 1) + col(c, 2)) ** 2,
        lambda c, z: col(c, z) * col(c, (z + 1) % 3),
        lambda c, z: col(c, 1) ** 3 - 2 * col(c, 0),
        lambda c, z: (z + 1.0) * col(c, z) * col(c, 2),
        lambda c, z: 1.0 + col(c, 0) ** 2 * col(c, 1),
    ]


def criterion_4():
    space = DiscreteSpace(np.array([0.7, 1.3, 2.0]))
    zs = []
    for i, h in enumerate(_mecke_polys()):
        r = mecke_check(space, h, 100_000, seed=SEED + i)
        zs.append(r.z_score)
    one = DiscreteSpace(np.array([2.0]))
    lhs, rhs = O.mecke_sides([O.CountPolynomial.variable(0, 1)], one.masses)
    exact = lhs == pytest.approx(6.0, abs=1e-12) and rhs == pytest.approx(6.0, abs=1e-12)
    lhs2, rhs2 = O.mecke_sides([O.CountPolynomial.variable(0, 1) ** 2], [1.0])
    exact2 = lhs2 == pytest.approx(5.0, abs=1e-12) and rhs2 == pytest.approx(5.0, abs=1e-12)
    r = mecke_check(one, lambda c, z: np.atleast_2d(c)[:, 0].astype(float), 100_000, seed=SEED + 99)
    mc6 = abs(r.lhs - 6) <= 3 * r.se_lhs and abs(r.rhs - 6) <= 3 * r.se_rhs
    ok = max(zs) <= 3 and exact and exact2 and mc6
    return ok, (
        f"max |lhs-rhs|/(se_l+se_r) over 10 polynomials {max(zs):.2f} (need <=3); "
        f"worked example lhs={lhs:g} rhs={rhs:g} (=6), square example {lhs2:g}/{rhs2:g} (=5)"
    )


def criterion_5():
    rng = rng_for(SEED, 5)
    space = DiscreteSpace(rng.uniform(0.2, 2.0, 4))
    ks = {q: random_kernel(q, 4, rng) for q in (1, 2, 3)}
    Fs = {q: ChaosFunctional.integral(k, space) for q, k in ks.items()}
    rel_iso = max(
        abs(O.exact_moment(Fs[q], 2) / (math.factorial(q) * inner(ks[q], ks[q], space.masses)) - 1) for q in ks
    )
    scale = max(O.exact_moment(F, 2) for F in Fs.values())
    orth = max(abs(O.exact_product_expectation(Fs[p], Fs[q])) / scale for p in ks for q in ks if p < q)
    f = ks[1]
    ref4 = 3 * inner(f, f, space.masses) ** 2 + float(np.sum(f.values**4 * space.masses))
    rel4 = abs(O.exact_moment(Fs[1], 4) / ref4 - 1)
    ok = max(rel_iso, orth, rel4) <= 1e-9
    return ok, f"isometry rel {rel_iso:.1e}, orthogonality rel {orth:.1e}, I1 fourth moment rel {rel4:.1e} (need <=1e-9)"


def criterion_6():
    rng = rng_for(SEED, 6)
    worst = 0.0
    for cells in (1, 3, 5):
        space = DiscreteSpace(rng.uniform(0.3, 2.0, cells))
        for p, q in ((1, 1), (1, 2), (2, 2)):
            chk = product_top_kernel_check(random_kernel(p, cells, rng), random_kernel(q, cells, rng), space)
            worst = max(worst, chk.max_abs_diff)
    return worst <= 1e-9, f"max |top kernel - f (x)~ g| {worst:.1e} over (1,1),(1,2),(2,2) on 1,3,5 cells (need <=1e-9)"


def cyclic_triple_integral(m=6, mass=8.0):
    """``I_3`` of the indicator of the ``m`` cyclic consecutive triples, unit variance."""
    space = DiscreteSpace(np.full(m, mass))
    triples = {tuple(sorted((i % m, (i + 1) % m, (i + 2) % m))) for i in range(m)}
    F = ChaosFunctional.integral(SymKernel.from_entries(3, m, [(t, 1.0) for t in triples]), space)
    return F / math.sqrt(F.variance())


def criterion_7():
    rng = rng_for(SEED, 7)
    space = DiscreteSpace(rng.uniform(0.3, 2.0, 4))
    F2 = ChaosFunctional.integral(random_kernel(2, 4, rng), space)
    ex = B.lemma_suite(F2, "exact")
    r_rem, r_cb1 = ex["remlemma_identity"].residual, ex["cb1_equality"].residual
    mc = B.lemma_suite(cyclic_triple_integral(), "mc", n=20_000, seed=SEED)
    z = {}
    for name in ("remlemma_identity", "cb1_equality"):
        c = mc[name]
        z[name] = abs(c.lhs - c.rhs) / c.se if c.se > 0 else math.inf
    ok = r_rem <= 1e-9 and r_cb1 <= 1e-9 and max(z.values()) <= 3
    return ok, (
        f"exact q=2 residuals remlemma {r_rem:.1e}, cb1 {r_cb1:.1e} (need <=1e-9); "
        f"MC q=3 |z| remlemma {z['remlemma_identity']:.2f}, cb1 {z['cb1_equality']:.2f} (need <=3)"
    )


def poisson_clt_distances(lam, n=100_000, seed=SEED, threads=1):
    space = DiscreteSpace(np.array([float(lam)]))
    F = ChaosFunctional.integral(SymKernel(1, 1, [1 / math.sqrt(lam)]), space)
    blocks = map_blocks(space, n, seed, F, blocks=8, threads=threads)
    target = Target.normal()
    d1, se1, _, _ = H.corrected_distance(blocks, target, seed, w1_distance)
    dk, sek, _, _ = H.corrected_distance(blocks, target, seed, ks_distance)
    return d1, se1, dk, sek


def criterion_8():
    lams = (1, 4, 25, 100)
    rows, ok, times = [], True, []
    prev_d1 = prev_dk = math.inf
    for lam in lams:
        t0 = time.perf_counter()
        d1, se1, dk, sek = poisson_clt_distances(lam)
        times.append(time.perf_counter() - t0)
        m4 = 3 + 1 / lam
        w_ok = d1 <= float(B.fm_w1_rhs_simple(m4)) + 3 * se1
        k_ok = dk <= float(B.fm_kol_rhs(m4)) + 3 * sek
        ok &= w_ok and k_ok and d1 < prev_d1 and dk < prev_dk and times[-1] < 60
        prev_d1, prev_dk = d1, dk
        rows.append(f"lam={lam}: d1={d1:.4f}<={float(B.fm_w1_rhs_simple(m4)):.3f}, ks={dk:.4f}<={float(B.fm_kol_rhs(m4)):.2f}")
    return ok, "; ".join(rows) + f"; monotone decreasing; max {max(times):.1f}s per lambda"


def _gamma_functional(nu, mu=50.0):
    space = DiscreteSpace(np.full(nu, mu))
    k = SymKernel.from_function(2, nu, lambda i, j: 1.0 / mu if i == j else 0.0)
    return ChaosFunctional.integral(k, space)


def criterion_9():
    rows, ok = [], True
    for nu in (1, 2):
        F = _gamma_functional(nu)
        m2 = O.exact_moment(F, 2)
        n = 50_000
        x = np.concatenate(map_blocks(F.space, n, SEED, F, blocks=8))
        d2 = d2_family_gaps(x, Target.gamma(nu))
        rep = B.estimate_ingredients(F, n, SEED, nu=float(nu), blocks=8)
        rhs = float(rep.rhs["fm_gamma"])
        z = sample_target(Target.gamma(nu), 200_000, SEED + nu)
        lcm = mean_se(z**4 - 12 * z**3 - 12 * nu * nu + 48 * nu)
        this = abs(m2 - 2 * nu) <= 1e-9 and d2.value <= rhs + 3 * d2.se and lcm.within(0.0)
        ok &= this
        rows.append(f"nu={nu}: E F^2={m2:g}, d2_lb={d2.value:.4f}<=fm_gamma={rhs:.3f}, lcm z={abs(lcm.value) / lcm.se:.2f}")
    return ok, "; ".join(rows)


def criterion_10():
    xs = np.linspace(-6, 6, 100)
    ws = xs + 0.0191  # keep w != x on the mesh
    x, w = np.meshgrid(xs, ws, indexing="ij")
    g, gp = stein_g(x, w), stein_g_prime(x, w)
    res = float(np.abs(stein_residual(x, w)).max())
    grid_ok = g.size >= 10_000 and g.min() > 0 and g.max() <= STEIN_G_BOUND + 1e-12 and np.abs(gp).max() <= 1 + 1e-12
    rng = rng_for(SEED, 10)
    n = 10_000
    ex = stein_property_excess(
        rng.uniform(-4, 4, n), rng.uniform(-4, 4, n), rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    )
    worst = max(float(v.max()) for v in ex.values())
    ok = grid_ok and res <= 1e-10 and worst <= 1e-10
    return ok, (
        f"grid {g.size}: min g={g.min():.2e}>0, max g={g.max():.5f}<={STEIN_G_BOUND:.5f}, "
        f"max|g'|={np.abs(gp).max():.4f}<=1, residual {res:.1e}; max excess over {n} tuples {worst:.2e}<=0"
    )


def criterion_11():
    rng = rng_for(SEED, 11)
    space = DiscreteSpace(rng.uniform(0.3, 2.0, 4))
    f1, f2 = random_kernel(1, 4, rng), random_kernel(2, 4, rng)
    F = ChaosFunctional(space, 0.5, {1: f1, 2: f2})
    zmax, exact = 0.0, 0.0
    for p, f in ((1, f1), (2, f2)):
        k, se = extract_kernel(F, p, 20_000, SEED + p, blocks=8)
        # deterministic differences have SE ~ 1e-16; rounding is absorbed by a 1e-9 floor
        excess = np.maximum(np.abs(k.values - f.values) - 1e-9, 0.0)
        z = np.divide(excess, se, out=np.where(excess > 0, np.inf, 0.0), where=se > 0)
        zmax = max(zmax, float(z.max()))
        exact = max(exact, float(np.abs(O.exact_kernel(F, p, space).values - f.values).max()))
    return zmax <= 3 and exact <= 1e-9, f"MC max |z| {zmax:.2f} (need <=3); oracle max abs error {exact:.1e} (need <=1e-9)"


def criterion_12():
    rng = rng_for(SEED, 12)
    space = DiscreteSpace(rng.uniform(0.3, 2.0, 4))
    G = _random_functional(rng, space, (1, 2))
    a = rng.standard_normal(4)
    u = lambda c: a * np.tanh(np.atleast_2d(c).sum(axis=1, keepdims=True) - 3.0)
    lhs, rhs = M.duality_terms(G, u, sample_counts(space, 100_000, seed=SEED + 12), space)
    d = mean_se(lhs - rhs)
    g = random_kernel(1, 4, rng)
    det = lambda c: np.broadcast_to(g.values, np.atleast_2d(c).shape)
    c = sample_counts(space, 10_000, seed=SEED + 13)
    err = float(np.abs(M.skorohod(det, c, space) - ChaosFunctional.integral(g, space)(c)).max())
    z = abs(d.value) / d.se
    return z <= 3 and err <= 1e-10, f"duality |z| {z:.2f} (need <=3); deterministic delta(u) - I1(u) max {err:.1e} (need <=1e-10)"


def criterion_13():
    configs = [H.ExperimentConfig(scenario=s, n=20_000, seed=7) for s in sorted(H.SCENARIOS)]
    same = []
    for cfg in configs:
        a = H.run(H.ExperimentConfig(**{**cfg.__dict__, "threads": 1}), write=False)
        b = H.run(H.ExperimentConfig(**{**cfg.__dict__, "threads": 8}), write=False)
        same.append(a.numbers() == b.numbers() and len(a.records) > 0)
    return all(same), f"{sum(same)}/{len(same)} scenarios give identical reports with 1 and 8 threads"


CRITERIA = [
    (1, "pathwise difference identities", criterion_1),
    (2, "generator eigen-identity", criterion_2),
    (3, "carre du champ equals Gamma0", criterion_3),
    (4, "Mecke formula", criterion_4),
    (5, "oracle vs isometry / orthogonality / I1 fourth moment", criterion_5),
    (6, "top kernel of a product", criterion_6),
    (7, "remainder identity and Gamma variance equality", criterion_7),
    (8, "fourth moment bounds, standardized Poisson family", criterion_8),
    (9, "Gamma fourth moment bound and moment identity", criterion_9),
    (10, "Stein solution properties", criterion_10),
    (11, "kernel extraction", criterion_11),
    (12, "Skorohod duality", criterion_12),
    (13, "reproducibility across thread counts", criterion_13),
]


def _line(num, title, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2} {title}: {detail}"


@pytest.mark.parametrize("num,title,fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, title, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + _line(num, title, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, title, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(_line(num, title, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
