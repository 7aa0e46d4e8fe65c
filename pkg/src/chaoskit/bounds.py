"""Fourth-moment bounds for normal and centered-Gamma approximation.

Three layers:

* closed-form right-hand sides in terms of moments (``fm_*``),
* Monte-Carlo estimates of the Malliavin ingredients of the general bounds
  (:func:`estimate_ingredients` returning a :class:`BoundReport`),
* the identities and inequalities for multiple integrals that link the two
  (:func:`lemma_suite`), exact through the polynomial oracle or by Monte Carlo.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from ._diff import iterated_differences_upto
from .chaos import ChaosError, ChaosFunctional, Estimate, mean_se
from .kernels import multiset_index
from .malliavin import apply_Linv, minus_all, plus_all
from .space import map_blocks
from .stein import STEIN_G_BOUND

SQRT_2_PI = math.sqrt(2.0 / math.pi)
SIMPLE_W1_COEF = SQRT_2_PI + 2.0
PERMILLES = np.arange(1, 1000) / 1000.0


class RhsValue(float):
    """A bound value carrying a ``noise`` flag for a clamped negative radicand."""

    noise: bool

    def __new__(cls, value: float, noise: bool = False):
        obj = super().__new__(cls, value)
        obj.noise = bool(noise)
        return obj


def _root(x: float) -> tuple[float, bool]:
    return (math.sqrt(x), False) if x >= 0 else (0.0, True)


def fm_w1_coefficient(q: int) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    return SQRT_2_PI * (2 * q - 1) / (2 * q) + math.sqrt(4 * q - 1) / math.sqrt(q)


def fm_w1_rhs(q: int, m4: float) -> RhsValue:
    """Wasserstein bound for a unit-variance ``q``-th chaos element with fourth moment ``m4``."""
    r, noise = _root(m4 - 3.0)
    return RhsValue(fm_w1_coefficient(q) * r, noise)


def fm_w1_rhs_simple(m4: float) -> RhsValue:
    """Order-free version with coefficient ``sqrt(2/pi) + 2``."""
    r, noise = _root(m4 - 3.0)
    return RhsValue(SIMPLE_W1_COEF * r, noise)


def fm_kol_rhs(m4: float) -> RhsValue:
    """Kolmogorov bound ``(11 + 2^{3/2}(m4^{1/2} + m4^{1/4})) sqrt(m4 - 3)``."""
    r, noise = _root(m4 - 3.0)
    m4p = max(m4, 0.0)
    return RhsValue((11.0 + 2.0**1.5 * (m4p**0.5 + m4p**0.25)) * r, noise)


def gamma_constants(nu: float) -> tuple[float, float]:
    """``(C1, C2)`` of the centered-Gamma fourth-moment bound."""
    if not nu > 0:
        raise ValueError("nu must be > 0")
    a = max(1.0, 2.0 / nu)
    c1 = a / math.sqrt(3.0)
    c2 = a / math.sqrt(6.0) + max(math.sqrt(2 * nu), math.sqrt(2 / nu) + math.sqrt(nu / 2))
    return c1, c2


def gamma_bracket(nu: float, m3: float, m4: float) -> float:
    """``m4 - 12 m3 - 12 nu^2 + 48 nu``; zero for exact centered-Gamma moments."""
    return m4 - 12.0 * m3 - 12.0 * nu * nu + 48.0 * nu


def fm_gamma_rhs(nu: float, q: int, m3: float, m4: float, d4term: float) -> RhsValue:
    """``C1 sqrt|bracket| + C2 sqrt(d4term / q)`` with ``d4term = sum_z E[(D+F)^4] mu(z)``."""
    c1, c2 = gamma_constants(nu)
    if q < 1:
        raise ValueError("q must be >= 1")
    if d4term < 0:
        raise ValueError("d4term must be >= 0")
    b = gamma_bracket(nu, m3, m4)
    return RhsValue(c1 * math.sqrt(abs(b)) + c2 * math.sqrt(d4term / q), b < 0)


def centered_gamma_moments(nu: float) -> tuple[float, float, float]:
    """``(E Z^2, E Z^3, E Z^4)`` for ``Z = 2 X - nu``, ``X ~ Gamma(nu/2)``."""
    k = nu / 2.0
    # central moments of X: k, 2k, 3k^2 + 6k; Z scales them by 2^j
    return 4 * k, 16 * k, 16 * (3 * k * k + 6 * k)


# -- ingredient estimation ---------------------------------------------------------


def _pathwise(F: ChaosFunctional, G: ChaosFunctional, counts: np.ndarray) -> dict:
    mu = F.space.masses
    f = F(counts)
    g = G(counts)
    dpf, dmf = plus_all(F, counts, f), minus_all(F, counts, f)
    dpg, dmg = plus_all(G, counts, g), minus_all(G, counts, g)
    gam = 0.5 * ((dpf * dpg) @ mu + np.sum(counts * dmf * dmg, axis=1))
    return {"f": f, "dpf": dpf, "dpg": dpg, "gam": gam}


def _indicator_parts(f, dpf, dpg, masses):
    """Intervals ``[lo, hi)`` and weights whose overlap with ``x`` gives the indicator integrand.

    ``D+_z 1{F > x} * D+_z F`` equals ``|D+_z F|`` when ``x`` lies between
    ``F`` and ``F + D+_z F`` and 0 otherwise.
    """
    a = np.abs(dpf) * np.abs(dpg) * masses
    up = f[:, None] + dpf
    lo = np.minimum(f[:, None], up)
    hi = np.maximum(f[:, None], up)
    return lo.ravel(), hi.ravel(), a.ravel()


def _interval_sum(lo, hi, w, xs):
    """``sum_i w_i 1{lo_i <= x < hi_i}`` for each ``x`` in ``xs``."""
    keep = (hi > lo) & (w != 0)
    lo, hi, w = lo[keep], hi[keep], w[keep]
    ol, oh = np.argsort(lo, kind="stable"), np.argsort(hi, kind="stable")
    cl = np.concatenate([[0.0], np.cumsum(w[ol])])
    ch = np.concatenate([[0.0], np.cumsum(w[oh])])
    il = np.searchsorted(lo[ol], xs, side="right")
    ih = np.searchsorted(hi[oh], xs, side="right")
    return cl[il] - ch[ih]


def indicator_sup(f, dpf, dpg, masses, weights=None, grid=None):
    """``sup_x E[sum_z D+_z 1{F > x} |D+_z G| D+_z F mu(z)]`` over ``grid``.

    With ``weights=None`` rows are equally weighted samples and the grid
    defaults to the 999 empirical permilles of ``f``; with exact
    probabilities as ``weights`` every breakpoint is examined, which gives
    the supremum over all real ``x``.  Returns ``(value, argmax_x)``.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    w_row = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    lo, hi, a = _indicator_parts(f, dpf, dpg, masses)
    w = a * np.repeat(w_row, dpf.shape[1])
    if grid is None:
        grid = np.quantile(f, PERMILLES) if weights is None else np.unique(lo)
    grid = np.concatenate([[-np.inf], np.asarray(grid, dtype=float), [np.inf]])
    vals = _interval_sum(lo, hi, w, grid)
    j = int(np.argmax(vals))
    return max(float(vals[j]), 0.0), float(grid[j])


def _indicator_rows(f, dpf, dpg, masses, x):
    lo, hi, a = _indicator_parts(f, dpf, dpg, masses)
    inside = ((lo <= x) & (x < hi)).astype(float) * a
    return inside.reshape(dpf.shape).sum(axis=1)


def _var_estimate(x) -> Estimate:
    """Sample variance with a delta-method standard error."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = (x - x.mean()) ** 2
    return Estimate(float(x.var(ddof=1)), float(c.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf)


def single_order(F: ChaosFunctional) -> int | None:
    """``q`` when ``F`` is a single centered multiple integral, else ``None``."""
    if F.constant == 0.0 and len(F.kernels) == 1:
        return F.orders[0]
    return None


@dataclass
class BoundReport:
    """Ingredient estimates, bound values and optional distance estimates for one functional."""

    functional: str
    q: int | None
    nu: float | None
    n: int
    seed: int
    ingredients: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    lhs: dict = field(default_factory=dict)
    noise: bool = False

    def margin(self, bound: str, distance: str, k: float = 3.0) -> float:
        """``RHS - LHS - k SE``; negative means the bound is not confirmed."""
        est = self.lhs[distance]
        return float(self.rhs[bound]) - est.value - k * est.se

    def ordering(self) -> dict[str, bool]:
        """Chain checks between the general and specialized bounds."""
        r = self.rhs
        tol = self.ingredients["m2_minus_gamma"].se * 3.0
        out = {}
        if "gb1" in r:
            out["gb1<=gb2"] = r["gb1"] <= r["gb2"] + SQRT_2_PI * tol + 1e-12
        if "sb1" in r:
            out["gb2<=sb1"] = r["gb2"] <= r["sb1"] + 1e-12
        if "k1" in r:
            out["k1<=k2"] = r["k1"] <= r["k2"] + tol + 1e-12 + self._k_slack()
        if "gbg1" in r:
            a = max(1.0, 2.0 / self.nu)
            out["gbg1<=gbg2"] = r["gbg1"] <= r["gbg2"] + a * tol + 1e-12
        if "sbg1" in r:
            out["gbg2<=sbg1"] = r["gbg2"] <= r["sbg1"] + 1e-12
        return out

    def _k_slack(self) -> float:
        # Cauchy-Schwarz in the middle term holds in-sample; allow its SE
        return 3.0 * self.ingredients["k1_middle"].se

    def to_json(self) -> dict:
        return {
            "functional": self.functional,
            "q": self.q,
            "nu": self.nu,
            "n": self.n,
            "seed": self.seed,
            "noise": self.noise,
            "ingredients": {k: {"value": v.value, "se": v.se} for k, v in self.ingredients.items()},
            "rhs": {k: float(v) for k, v in self.rhs.items()},
            "lhs": {k: {"value": v.value, "se": v.se} for k, v in self.lhs.items()},
        }

    def csv_rows(self) -> list[dict]:
        """One flat row per bound, paired with the distance it controls."""
        rows = []
        for name, val in self.rhs.items():
            dist = _BOUND_DISTANCE.get(name)
            est = self.lhs.get(dist) if dist else None
            rows.append(
                {
                    "functional": self.functional,
                    "bound": name,
                    "rhs": float(val),
                    "distance": dist or "",
                    "lhs": "" if est is None else est.value,
                    "lhs_se": "" if est is None else est.se,
                    "margin": "" if est is None else self.margin(name, dist),
                }
            )
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["functional", "bound", "rhs", "distance", "lhs", "lhs_se", "margin"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(self.csv_rows())
        return buf.getvalue()


_BOUND_DISTANCE = {
    "gb1": "w1", "gb2": "w1", "sb1": "w1", "fm_w1": "w1", "fm_w1_simple": "w1",
    "k1": "ks", "k2": "ks", "fm_kol": "ks",
    "gbg1": "d2", "gbg2": "d2", "sbg1": "d2", "fm_gamma": "d2",
}


def estimate_ingredients(
    F: ChaosFunctional,
    n: int,
    seed: int,
    *,
    nu: float | None = None,
    name: str = "F",
    blocks=None,
    threads: int = 1,
) -> BoundReport:
    """Monte-Carlo ingredients of the general bounds and the bounds they imply.

    ``F`` must be centered.  Gaussian bounds are always produced; the Gamma
    bounds are added when ``nu`` is given.  Specialized single-chaos bounds
    are added when ``F`` is a single multiple integral.
    """
    if F.constant != 0.0:
        raise ChaosError("bounds need a centered functional")
    if n < 2:
        raise ValueError("need n >= 2")
    G = -apply_Linv(F)  # -L^{-1} F
    mu = F.space.masses
    parts = map_blocks(F.space, n, seed, lambda c: _pathwise(F, G, c), blocks=blocks, threads=threads)
    d = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    f, dpf, dpg, gam = d["f"], d["dpf"], d["dpg"], d["gam"]
    q = single_order(F)

    t3_rows = (dpf**2 * np.abs(dpg)) @ mu
    d4_rows = dpf**4 @ mu
    s2_rows = dpf**2 @ mu
    ing = {
        "m1": mean_se(f),
        "m2": mean_se(f**2),
        "m3": mean_se(f**3),
        "m4": mean_se(f**4),
        "gamma0_mean": mean_se(gam),
        "gamma0_var": _var_estimate(gam),
        "abs_1_minus_gamma0": mean_se(np.abs(1.0 - gam)),
        "m2_minus_gamma": mean_se(f**2 - gam),
        "t3": mean_se(t3_rows),
        "d4": mean_se(d4_rows),
        "s2": mean_se(s2_rows),
        "s2_sq": mean_se(s2_rows**2),
        "t22": mean_se((dpf**2 * dpg**2) @ mu),
        "k1_middle": mean_se((np.abs(f) + STEIN_G_BOUND) * t3_rows),
    }
    ind, x_star = indicator_sup(f, dpf, dpg, mu)
    ind_rows = _indicator_rows(f, dpf, dpg, mu, x_star)
    ing["indicator"] = Estimate(ind, mean_se(ind_rows).se)

    r = {}
    m2, m4 = ing["m2"].value, ing["m4"].value
    var_g = ing["gamma0_var"].value
    t3, d4, s2 = ing["t3"].value, ing["d4"].value, ing["s2"].value
    r["gb1"] = SQRT_2_PI * ing["abs_1_minus_gamma0"].value + t3
    r["gb2"] = SQRT_2_PI * abs(1.0 - m2) + SQRT_2_PI * math.sqrt(var_g) + t3
    r["k1"] = ing["abs_1_minus_gamma0"].value + ing["k1_middle"].value + ind
    r["k2"] = (
        abs(1.0 - m2)
        + math.sqrt(var_g)
        + ing["s2_sq"].value ** 0.25 * (1.0 + max(m4, 0.0) ** 0.25) * math.sqrt(ing["t22"].value)
        + ind
    )
    noise = False
    if q is not None:
        # in-sample Cauchy-Schwarz factor sqrt(s2/q); equals sqrt(E F^2) = 1 in the limit
        r["sb1"] = r["gb2"] - t3 + math.sqrt(d4 / q) * math.sqrt(s2 / q)
        m4_unit = m4 / m2**2
        for key, val in (
            ("fm_w1", fm_w1_rhs(q, m4_unit)),
            ("fm_w1_simple", fm_w1_rhs_simple(m4_unit)),
            ("fm_kol", fm_kol_rhs(m4_unit)),
        ):
            r[key] = val
            noise |= val.noise
    if nu is not None:
        a = max(1.0, 2.0 / nu)
        b = max(1.0, 1.0 / nu + 0.5)
        ing["var_2f_minus_gamma0"] = _var_estimate(2.0 * f - gam)
        ing["abs_2f_nu_minus_gamma0"] = mean_se(np.abs(2.0 * (f + nu) - gam))
        vg = ing["var_2f_minus_gamma0"].value
        r["gbg1"] = a * ing["abs_2f_nu_minus_gamma0"].value + b * t3
        r["gbg2"] = a * abs(2 * nu - m2) + a * math.sqrt(vg) + b * t3
        if q is not None:
            r["sbg1"] = r["gbg2"] - b * t3 + b * math.sqrt(d4 / q) * math.sqrt(s2 / q)
            val = fm_gamma_rhs(nu, q, ing["m3"].value, m4, d4)
            r["fm_gamma"] = val
            noise |= val.noise
    return BoundReport(name, q, nu, n, seed, ing, r, {}, noise)


# -- lemma suite -------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaCheck:
    """One identity (``kind='eq'``) or inequality (``kind='le'``, ``lhs <= rhs``)."""

    name: str
    kind: str
    lhs: float
    rhs: float
    se: float = 0.0
    scale: float = 1.0  # magnitude of the terms that cancel on either side

    def _scale(self) -> float:
        return max(1.0, abs(self.scale), abs(self.lhs), abs(self.rhs))

    @property
    def residual(self) -> float:
        scale = self._scale()
        if self.kind == "eq":
            return abs(self.lhs - self.rhs) / scale
        return max(self.lhs - self.rhs, 0.0) / scale

    def passed(self, tol: float = 1e-9, k: float = 3.0) -> bool:
        slack = tol * self._scale() + k * self.se
        if self.kind == "eq":
            return abs(self.lhs - self.rhs) <= slack
        return self.lhs <= self.rhs + slack


@dataclass
class LemmaReport:
    mode: str
    q: int
    nu: float
    checks: list
    skipped: list = field(default_factory=list)

    def __getitem__(self, name: str) -> LemmaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def all_passed(self, tol: float = 1e-9, k: float = 3.0) -> bool:
        return all(c.passed(tol, k) for c in self.checks)

    def names(self) -> list[str]:
        return [c.name for c in self.checks]


def _unit(F: ChaosFunctional, m2: float) -> ChaosFunctional:
    return F / math.sqrt(m2)


def _gamma_checks(q, nu, var_gamma_f, var_proj, var_proj_q_minus_4f, m3, m4, d4, se=None, scale=1.0):
    """Vargamma2 decomposition and the sandwich for ``E F^2 = 2 nu``."""
    se = se or {}
    v1 = sum((1 - p / (2 * q)) ** 2 * var_proj[p] for p in range(1, 2 * q) if p != q)
    v2 = 0.25 * var_proj[q] + 8 * nu - 2 * m3
    br = gamma_bracket(nu, m3, m4)
    lower = br / (6 * q) + d4 / (12 * q * q)
    upper = br / 3 + d4 / (6 * q)
    return [
        LemmaCheck("vargamma2_decomposition", "eq", var_gamma_f, v1 + v2, se.get("v12", 0.0), scale),
        LemmaCheck("vargamma2_v2_form", "eq", v2, 0.25 * var_proj_q_minus_4f, se.get("v2", 0.0), scale),
        LemmaCheck("sandwich_lower", "le", lower, var_gamma_f, se.get("lower", 0.0)),
        LemmaCheck("sandwich_upper", "le", var_gamma_f, upper, se.get("upper", 0.0)),
    ]


def lemma_suite(F: ChaosFunctional, mode: str = "exact", *, n: int = 20_000, seed: int = 0, threads: int = 1) -> LemmaReport:
    """Identities and inequalities for a single multiple integral ``F = I_q(f)``.

    The normal-approximation checks run on ``F`` rescaled to unit variance.
    The Gamma checks run on ``F`` itself with ``nu = E[F^2] / 2``.

    ``mode='exact'`` uses the polynomial oracle (raising
    :class:`~chaoskit.oracle.InstanceTooLarge` for big instances);
    ``mode='mc'`` uses ``n`` Monte-Carlo draws and attaches standard errors.
    """
    q = single_order(F)
    if q is None:
        raise ChaosError("lemma suite needs a single centered multiple integral")
    if mode == "exact":
        return _lemma_exact(F, q)
    if mode == "mc":
        return _lemma_mc(F, q, n, seed, threads)
    raise ValueError(f"unknown mode {mode!r}")


def _lemma_exact(F: ChaosFunctional, q: int) -> LemmaReport:
    space = F.space
    mu = space.masses
    m2_raw = F.variance()
    nu = m2_raw / 2.0
    checks = []

    # normal-side checks on the unit-variance copy
    U = _unit(F, m2_raw)
    P = oracle.to_polynomial(U)
    P2 = P * P
    m2 = oracle.pair_expectation(P, P, mu)
    m4 = oracle.pair_expectation(P2, P2, mu)
    cum = m4 - 3 * m2 * m2
    gam = oracle.gamma0_polynomial(P, P, mu)
    var_g = oracle.exact_variance(gam * (1.0 / q), mu)
    dec = oracle.exact_chaos_decomposition(P2, space, 2 * q)
    var_proj = {p: dec.project(p).variance() for p in range(1, 2 * q + 1)}
    cb1_sum = sum((1 - p / (2 * q)) ** 2 * var_proj[p] for p in range(1, 2 * q))
    e_g2 = oracle.pair_expectation(gam, gam, mu)
    e_f2g = oracle.pair_expectation(P2, gam, mu)
    d4 = oracle.add_one_power_integral(P, mu, 4).expectation(mu)
    checks += [
        LemmaCheck("cb1_equality", "eq", var_g, cb1_sum, scale=e_g2 / q**2),
        LemmaCheck("cb1_bound", "le", var_g, ((2 * q - 1) / (2 * q)) ** 2 * cum),
        LemmaCheck("cb2", "le", e_g2 / q**2, m4),
        LemmaCheck("cb3", "le", e_f2g / q, m4),
        LemmaCheck("remlemma_identity", "eq", d4 / (2 * q), 3 * e_f2g / q - m4, scale=m4),
        LemmaCheck("remlemma_bound", "le", d4 / (2 * q), (4 * q - 3) / (2 * q) * cum),
    ]
    skipped = []
    try:
        mesh, prob, _lost = oracle.count_law(space)
    except oracle.InstanceTooLarge:
        skipped += ["indicator_bound", "indicator_nonnegative"]
    else:
        fv = U(mesh)
        dpf = plus_all(U, mesh, fv)
        ind, _ = indicator_sup(fv, dpf, dpf, mu, weights=prob)
        checks.append(LemmaCheck("indicator_bound", "le", ind / q, 10 * math.sqrt(max(cum, 0.0))))
        checks.append(LemmaCheck("indicator_nonnegative", "le", 0.0, ind))

    # Gamma-side checks on F itself
    R = oracle.to_polynomial(F)
    R2 = R * R
    m3r = oracle.pair_expectation(R2, R, mu)
    m4r = oracle.pair_expectation(R2, R2, mu)
    d4r = oracle.add_one_power_integral(R, mu, 4).expectation(mu)
    gr = oracle.gamma0_polynomial(R, R, mu)
    var_gf = oracle.exact_variance(R * 2.0 - gr * (1.0 / q), mu)
    decr = oracle.exact_chaos_decomposition(R2, space, 2 * q)
    vpr = {p: decr.project(p).variance() for p in range(1, 2 * q + 1)}
    vq4 = (decr.project(q) - F * 4.0).variance()
    checks += _gamma_checks(q, nu, var_gf, vpr, vq4, m3r, m4r, d4r, scale=m4r)
    return LemmaReport("exact", q, nu, checks, skipped)


def _proj_var_estimate(d: np.ndarray, w: np.ndarray):
    """Bias-corrected ``p! ||h_p||^2`` and its per-row linearization."""
    n = d.shape[0]
    h = d.mean(axis=0)
    s2 = d.var(axis=0, ddof=1)
    value = float(np.sum(w * (h * h - s2 / n)))
    lin = (d - h) @ (2.0 * w * h)
    return value, lin


def _lemma_mc(F: ChaosFunctional, q: int, n: int, seed: int, threads: int) -> LemmaReport:
    space = F.space
    mu = space.masses
    m2_raw = F.variance()
    nu = m2_raw / 2.0
    U = _unit(F, m2_raw)
    Usq = lambda c: U(c) ** 2

    def block(c):
        fu = U(c)
        dpu, dmu = plus_all(U, c, fu), minus_all(U, c, fu)
        gu = 0.5 * ((dpu * dpu) @ mu + np.sum(c * dmu * dmu, axis=1))
        fr = F(c)
        dpr, dmr = plus_all(F, c, fr), minus_all(F, c, fr)
        gr = 0.5 * ((dpr * dpr) @ mu + np.sum(c * dmr * dmr, axis=1))
        out = {"fu": fu, "dpu": dpu, "gu": gu, "fr": fr, "dpr": dpr, "gr": gr}
        # D^(p) U^2 / p! estimates the order-p kernel of U^2; F^2 = m2 U^2
        for p, dp in iterated_differences_upto(Usq, c, range(1, 2 * q)).items():
            out[f"du{p}"] = dp / math.factorial(p)
        return out

    parts = map_blocks(space, n, seed, block, threads=threads)
    d = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    fu, dpu, gu = d["fu"], d["dpu"], d["gu"]
    rows = fu.shape[0]
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(rows))

    m2, m4 = mean_se(fu**2), mean_se(fu**4)
    cum = m4.value - 3 * m2.value**2
    cum_rows = fu**4 - 6 * m2.value * fu**2  # linearization of m4 - 3 m2^2
    gq = gu / q
    var_g = _var_estimate(gq)
    var_g_rows = (gq - gq.mean()) ** 2

    cb1_sum, cb1_rows = 0.0, np.zeros(rows)
    for p in range(1, 2 * q):
        w = multiset_index(space.n_cells, p).weights(mu) * math.factorial(p)
        v, lin = _proj_var_estimate(d[f"du{p}"], w)
        cb1_sum += (1 - p / (2 * q)) ** 2 * v
        cb1_rows += (1 - p / (2 * q)) ** 2 * lin
    d4_rows = dpu**4 @ mu
    rem_rows = d4_rows / (2 * q) - 3 * fu**2 * gu / q + fu**4
    c = ((2 * q - 1) / (2 * q)) ** 2
    checks = [
        LemmaCheck("cb1_equality", "eq", var_g.value, cb1_sum, se(var_g_rows - cb1_rows)),
        LemmaCheck("cb1_bound", "le", var_g.value, c * cum, se(var_g_rows - c * cum_rows)),
        LemmaCheck("cb2", "le", float(np.mean(gu**2)) / q**2, m4.value, se(gu**2 / q**2 - fu**4)),
        LemmaCheck("cb3", "le", float(np.mean(fu**2 * gu)) / q, m4.value, se(fu**2 * gu / q - fu**4)),
        LemmaCheck("remlemma_identity", "eq", float(np.mean(rem_rows)), 0.0, se(rem_rows)),
        LemmaCheck(
            "remlemma_bound", "le", float(np.mean(d4_rows)) / (2 * q), (4 * q - 3) / (2 * q) * cum,
            se(d4_rows / (2 * q) - (4 * q - 3) / (2 * q) * cum_rows),
        ),
    ]
    ind, x_star = indicator_sup(fu, dpu, dpu, mu)
    ind_se = mean_se(_indicator_rows(fu, dpu, dpu, mu, x_star)).se
    checks.append(LemmaCheck("indicator_bound", "le", ind / q, 10 * math.sqrt(max(cum, 0.0)), ind_se / q))
    checks.append(LemmaCheck("indicator_nonnegative", "le", 0.0, ind))

    fr, dpr, gr = d["fr"], d["dpr"], d["gr"]
    x = 2.0 * fr - gr / q
    var_gf = _var_estimate(x)
    vgf_rows = (x - x.mean()) ** 2
    vpr, lins = {}, {}
    for p in range(1, 2 * q):
        w = multiset_index(space.n_cells, p).weights(mu) * math.factorial(p)
        dd = d[f"du{p}"] * m2_raw
        if p == q:
            # projection of F^2 - 4F onto order q: subtract the kernel of 4F row-wise
            vq4, lin4 = _proj_var_estimate(dd - 4.0 * F.kernel(q).values, w)
        vpr[p], lins[p] = _proj_var_estimate(dd, w)
    m3r = mean_se(fr**3)
    m4r = mean_se(fr**4)
    d4r_rows = dpr**4 @ mu
    d4r = float(np.mean(d4r_rows))
    v1_rows = sum((1 - p / (2 * q)) ** 2 * lins[p] for p in range(1, 2 * q) if p != q)
    v2_rows = 0.25 * lins[q] - 2 * fr**3
    br_rows = fr**4 - 12 * fr**3
    ses = {
        "v12": se(vgf_rows - v1_rows - v2_rows),
        "v2": se(v2_rows - 0.25 * lin4),
        "lower": se(br_rows / (6 * q) + d4r_rows / (12 * q * q) - vgf_rows),
        "upper": se(vgf_rows - br_rows / 3 - d4r_rows / (6 * q)),
    }
    checks += _gamma_checks(q, nu, var_gf.value, vpr, vq4, m3r.value, m4r.value, d4r, ses)
    return LemmaReport("mc", q, nu, checks)
