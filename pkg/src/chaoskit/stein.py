"""Target laws, distances between a sample and a target, and the Stein solution.

Targets are the standard normal and the centered Gamma law ``2 X - nu`` with
``X ~ Gamma(nu/2, 1)``.  Distances are computed between the empirical CDF of a
sample and the exact target CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

SQRT2PI = math.sqrt(2.0 * math.pi)
STEIN_G_BOUND = SQRT2PI / 4.0
NORMAL_DENSITY_BOUND = 1.0 / SQRT2PI


@dataclass(frozen=True)
class Target:
    """Either ``Target.normal()`` or ``Target.gamma(nu)``."""

    kind: str
    nu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("normal", "gamma"):
            raise ValueError(f"unknown target {self.kind!r}")
        if self.kind == "gamma" and not self.nu > 0:
            raise ValueError("centered Gamma needs nu > 0")

    @classmethod
    def normal(cls) -> "Target":
        return cls("normal")

    @classmethod
    def gamma(cls, nu: float) -> "Target":
        return cls("gamma", float(nu))

    @classmethod
    def from_json(cls, doc) -> "Target":
        if isinstance(doc, str):
            doc = {"kind": doc}
        kind = doc.get("kind", "normal")
        return cls.gamma(doc["nu"]) if kind == "gamma" else cls.normal()

    def to_json(self) -> dict:
        return {"kind": self.kind, "nu": self.nu} if self.kind == "gamma" else {"kind": "normal"}

    @property
    def label(self) -> str:
        return "N(0,1)" if self.kind == "normal" else f"Gamma_bar({self.nu:g})"

    @property
    def shape(self) -> float:
        return self.nu / 2.0

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return 1.0 if self.kind == "normal" else 2.0 * self.nu

    # -- distribution functions ------------------------------------------

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "normal":
            return special.ndtr(t)
        s = np.maximum((t + self.nu) / 2.0, 0.0)
        return special.gammainc(self.shape, s)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "normal":
            return special.ndtr(-t)
        s = np.maximum((t + self.nu) / 2.0, 0.0)
        return special.gammaincc(self.shape, s)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "normal":
            return np.exp(-0.5 * t * t) / SQRT2PI
        s = (t + self.nu) / 2.0
        k = self.shape
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (k - 1) * np.log(s) - s - special.gammaln(k) - math.log(2.0)
            out = np.where(s > 0, np.exp(logp), 0.0)
        return out

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "normal":
            return special.ndtri(u)
        return 2.0 * special.gammaincinv(self.shape, u) - self.nu

    def lower_partial(self, t):
        """``int_{-inf}^t CDF(s) ds = E[(t - Y)^+]``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "normal":
            return t * special.ndtr(t) + np.exp(-0.5 * t * t) / SQRT2PI
        k = self.shape
        s = np.maximum((t + self.nu) / 2.0, 0.0)
        return 2.0 * (s * special.gammainc(k, s) - k * special.gammainc(k + 1, s))

    def upper_partial(self, t):
        """``int_t^inf (1 - CDF(s)) ds = E[(Y - t)^+]``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "normal":
            return np.exp(-0.5 * t * t) / SQRT2PI - t * special.ndtr(-t)
        k = self.shape
        s = (t + self.nu) / 2.0
        sp = np.maximum(s, 0.0)
        val = 2.0 * (k * special.gammaincc(k + 1, sp) - sp * special.gammaincc(k, sp))
        # below the support the law is entirely to the right: E[Y] - t
        return np.where(s > 0, val, -t)

    @property
    def density_bound(self) -> float:
        """Sup of the density (infinite for Gamma shapes below 1)."""
        if self.kind == "normal":
            return NORMAL_DENSITY_BOUND
        k = self.shape
        if k < 1:
            return math.inf
        if k == 1:
            return 0.5
        mode = k - 1
        return float(math.exp((k - 1) * math.log(mode) - mode - math.lgamma(k)) / 2.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(n)
        return 2.0 * rng.standard_gamma(self.shape, n) - self.nu

    def expect(self, h) -> float:
        """``E[h(Y)]`` by adaptive quadrature against the density."""
        if self.kind == "normal":
            f = lambda x: h(x) * math.exp(-0.5 * x * x) / SQRT2PI
            return float(integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)[0])
        # in s = (x + nu)/2 the density is s^(k-1) e^-s / Gamma(k); the power
        # singularity at 0 goes into the quadrature weight
        k = self.shape
        norm = math.exp(-math.lgamma(k))
        g = lambda s: h(2.0 * s - self.nu) * math.exp(-s) * norm
        val = integrate.quad(g, 0.0, 1.0, weight="alg", wvar=(k - 1.0, 0.0), epsabs=1e-13, epsrel=1e-12)[0]
        f = lambda s: g(s) * s ** (k - 1.0)
        val += integrate.quad(f, 1.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        return float(val)


def sample_target(target: Target, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws, deterministic in ``seed``."""
    from .space import rng_for

    if n < 1:
        raise ValueError("n must be >= 1")
    return target.sample(n, rng_for(seed, 0x57E1))


# -- distances ---------------------------------------------------------------------


def _sorted(sample) -> np.ndarray:
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    if x.size < 1:
        raise ValueError("empty sample")
    return x


def w1_distance(sample, target: Target) -> float:
    """``int |F_n(t) - G(t)| dt`` computed exactly piece by piece.

    Between consecutive order statistics the empirical CDF is a constant
    ``c``; the integral of ``|c - G|`` splits at ``G^{-1}(c)`` and each part is
    a difference of the closed-form partial integrals of ``G``.
    """
    x = _sorted(sample)
    n = x.size
    total = float(target.lower_partial(x[0])) + float(target.upper_partial(x[-1]))
    if n == 1:
        return total
    a, b = x[:-1], x[1:]
    c = np.arange(1, n) / n
    Ia, Ib = target.lower_partial(a), target.lower_partial(b)
    tstar = target.ppf(c)
    inside = (tstar > a) & (tstar < b)
    # G <= c on [a, t*], G >= c on [t*, b]
    ts = np.where(inside, tstar, a)
    Its = target.lower_partial(ts)
    split = c * (ts - a) - (Its - Ia) + (Ib - Its) - c * (b - ts)
    below = c * (b - a) - (Ib - Ia)  # G <= c on the whole piece
    above = (Ib - Ia) - c * (b - a)
    whole = np.where(tstar >= b, below, above)
    pieces = np.where(inside, split, whole)
    return total + float(np.sum(np.maximum(pieces, 0.0)))


def ks_distance(sample, target: Target) -> float:
    """``sup_x |F_n(x) - G(x)|`` via the two-sided scan over order statistics."""
    x = _sorted(sample)
    n = x.size
    g = target.cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - g), np.max(g - (i - 1) / n)))


# -- smooth test-function family -------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """``h(x) = scale * base((x - center) / scale)`` with ``base`` tanh or log-cosh.

    Both bases have ``|base'| <= 1`` and ``|base''| <= 1``; dilation by
    ``scale >= 1`` keeps ``|h'| <= 1`` and gives ``|h''| <= 1/scale``.
    """

    __test__ = False

    base: str
    center: float
    scale: float

    def __call__(self, x):
        y = (np.asarray(x, dtype=float) - self.center) / self.scale
        if self.base == "tanh":
            return self.scale * np.tanh(y)
        # log cosh, overflow-free
        ay = np.abs(y)
        return self.scale * (ay + np.log1p(np.exp(-2.0 * ay)) - math.log(2.0))

    def d1(self, x):
        y = (np.asarray(x, dtype=float) - self.center) / self.scale
        return 1.0 / np.cosh(y) ** 2 if self.base == "tanh" else np.tanh(y)

    def d2(self, x):
        y = (np.asarray(x, dtype=float) - self.center) / self.scale
        if self.base == "tanh":
            return -2.0 * np.tanh(y) / np.cosh(y) ** 2 / self.scale
        return 1.0 / np.cosh(y) ** 2 / self.scale

    @property
    def lipschitz_bounds(self) -> tuple[float, float]:
        """Analytic sup norms of ``h'`` and ``h''``."""
        if self.base == "tanh":
            return 1.0, 4.0 / (3.0 * math.sqrt(3.0)) / self.scale
        return 1.0, 1.0 / self.scale


def h2_family(target: Target, k: int = 64) -> list[TestFunction]:
    """``k`` functions in the class with ``|h'|, |h''| <= 1``, spread over the target's bulk."""
    if k < 1:
        raise ValueError("family size must be >= 1")
    sd = math.sqrt(target.variance)
    n_t = (k + 1) // 2
    n_l = k - n_t
    fam = []
    scales = (1.0, max(1.0, sd))
    for j in range(n_t):
        u = (j + 0.5) / n_t
        center = float(target.ppf(0.02 + 0.96 * u))
        fam.append(TestFunction("tanh", center, scales[j % 2]))
    for j in range(n_l):
        u = (j + 0.5) / n_l
        center = float(target.ppf(0.02 + 0.96 * u))
        fam.append(TestFunction("logcosh", center, scales[j % 2]))
    for h in fam:
        d1, d2 = h.lipschitz_bounds
        assert d1 <= 1.0 and d2 <= 1.0
    return fam


_EXPECT_CACHE: dict = {}


def _target_expectations(target: Target, fam) -> np.ndarray:
    key = (target, tuple(fam))
    if key not in _EXPECT_CACHE:
        _EXPECT_CACHE[key] = np.array([target.expect(lambda x, h=h: float(h(x))) for h in fam])
    return _EXPECT_CACHE[key]


@dataclass(frozen=True)
class D2LowerBound:
    value: float
    se: float
    gaps: np.ndarray
    ses: np.ndarray

    def __float__(self):
        return self.value


def d2_family_gaps(sample, target: Target, k: int = 64) -> D2LowerBound:
    """``|mean h(sample) - E h(target)|`` over the family, with per-function SEs."""
    x = np.asarray(sample, dtype=float).reshape(-1)
    fam = h2_family(target, k)
    ref = _target_expectations(target, fam)
    gaps = np.empty(len(fam))
    ses = np.empty(len(fam))
    for i, h in enumerate(fam):
        v = h(x)
        gaps[i] = abs(float(v.mean()) - ref[i])
        ses[i] = float(v.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    j = int(np.argmax(gaps))
    return D2LowerBound(float(gaps[j]), float(ses[j]), gaps, ses)


def d2_lower_bound(sample, target: Target, k: int = 64) -> float:
    """Lower bound for ``d_2`` from a finite test-function family."""
    return d2_family_gaps(sample, target, k).value


# -- Stein equation for half-line indicators ---------------------------------------


def stein_g(x, w):
    """Bounded solution of ``g'(w) - w g(w) = 1{w <= x} - Phi(x)``.

    ``g_x(w) = sqrt(2 pi) exp(w^2/2) Phi(min(w, x)) (1 - Phi(max(w, x)))``,
    evaluated in log space.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    lo, hi = np.minimum(w, x), np.maximum(w, x)
    return SQRT2PI * np.exp(0.5 * w * w + special.log_ndtr(lo) + special.log_ndtr(-hi))


def _mills(w):
    """``sqrt(2 pi) exp(w^2/2) (1 - Phi(w))``."""
    return SQRT2PI * np.exp(0.5 * w * w + special.log_ndtr(-w))


def stein_g_prime(x, w):
    """Derivative of :func:`stein_g` in ``w``, from its closed form on each side of ``x``.

    At ``w = x`` the value ``x g_x(x) + 1 - Phi(x)`` is used.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    px, qx = special.ndtr(x), special.ndtr(-x)
    # w < x: g = (1 - Phi(x)) * M(-w)  with M the Mills-type function above
    left = qx * (w * _mills(-w) + 1.0)
    # w > x: g = Phi(x) * M(w)
    right = px * (w * _mills(w) - 1.0)
    at = x * stein_g(x, x) + 1.0 - px
    return np.where(w < x, left, np.where(w > x, right, at))


def stein_residual(x, w):
    """``g'(w) - w g(w) - (1{w <= x} - Phi(x))``."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    return stein_g_prime(x, w) - w * stein_g(x, w) - ((w <= x).astype(float) - special.ndtr(x))


def _ind(lo, hi, x):
    """``1_{[lo, hi)}(x)``, empty when ``hi <= lo``."""
    return ((x >= lo) & (x < hi)).astype(float)


def stein_property_excess(x, w, u, v, h):
    """Excess (LHS - RHS) of the solution's Lipschitz-type inequalities.

    Returns a dict with arrays for the product-difference bound, the forward
    Taylor bound and the backward Taylor bound; every entry is ``<= 0`` when
    the inequality holds.
    """
    x, w, u, v, h = (np.asarray(a, dtype=float) for a in (x, w, u, v, h))
    c = STEIN_G_BOUND
    g = lambda t: stein_g(x, t)
    gp = stein_g_prime(x, w)
    lhs_d = np.abs((w + u) * g(w + u) - (w + v) * g(w + v))
    rhs_d = (np.abs(w) + c) * (np.abs(u) + np.abs(v))
    lhs_f = np.abs(g(w + h) - g(w) - gp * h)
    rhs_f = 0.5 * h * h * (np.abs(w) + c) + np.abs(h) * (_ind(w, w + h, x) + _ind(w + h, w, x))
    lhs_g = np.abs(g(w) - g(w - h) - gp * h)
    rhs_g = 1.5 * h * h * (np.abs(w - h) + c) + np.abs(h) * (_ind(w - h, w, x) + _ind(w, w - h, x))
    return {"lipschitz_product": lhs_d - rhs_d, "taylor_forward": lhs_f - rhs_f, "taylor_backward": lhs_g - rhs_g}
