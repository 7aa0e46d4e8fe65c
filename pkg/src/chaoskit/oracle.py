"""Exact expectations on finite spaces.

Every finite chaos functional on an atomized space is a polynomial in the
independent Poisson counts ``N_1..N_m``.  Monomials factor over cells and
``E[N^k] = T_k(mu)`` (Touchard polynomial), so any such polynomial has an
exact expectation.  This module is the ground truth used to validate the
Monte-Carlo paths.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from ._diff import shift_plan
from .kernels import SymKernel, multiset_index

TERM_CAP = 1_000_000
MAX_TOUCHARD = 32


class InstanceTooLarge(ValueError):
    """The requested exact computation exceeds the configured size caps."""


@lru_cache(maxsize=None)
def stirling2_row(k: int) -> tuple[int, ...]:
    """Stirling numbers of the second kind ``S(k, j)``, ``j = 0..k``, exact."""
    if k == 0:
        return (1,)
    prev = stirling2_row(k - 1)
    row = [0] * (k + 1)
    for j in range(1, k + 1):
        row[j] = j * (prev[j] if j < len(prev) else 0) + prev[j - 1]
    return tuple(row)


def touchard(k: int, mu: float) -> float:
    """``E[N^k]`` for ``N ~ Poisson(mu)``."""
    if k > MAX_TOUCHARD:
        raise InstanceTooLarge(f"moment degree {k} exceeds {MAX_TOUCHARD}")
    return float(sum(s * mu**j for j, s in enumerate(stirling2_row(k))))


def touchard_table(masses, kmax: int) -> np.ndarray:
    """``T[c, k] = E[N_c^k]``."""
    mu = np.asarray(masses, dtype=float)
    return np.array([[touchard(k, m) for k in range(kmax + 1)] for m in mu]).reshape(mu.size, kmax + 1)


def shifted_moment_table(masses, smax: int, kmax: int) -> np.ndarray:
    """``M[c, s, k] = E[(N_c + s)^k]``."""
    T = touchard_table(masses, kmax)
    m = T.shape[0]
    out = np.zeros((m, smax + 1, kmax + 1))
    for s in range(smax + 1):
        for k in range(kmax + 1):
            out[:, s, k] = sum(math.comb(k, i) * float(s) ** (k - i) * T[:, i] for i in range(k + 1))
    return out


class CountPolynomial:
    """Sparse real polynomial in the cell counts ``N_1..N_m``.

    Stored as an exponent matrix ``(K, m)`` and a coefficient vector ``(K,)``
    with unique rows.
    """

    __slots__ = ("n_cells", "exps", "coefs")

    def __init__(self, n_cells: int, exps=None, coefs=None, *, canonical: bool = False):
        self.n_cells = int(n_cells)
        if exps is None:
            exps = np.zeros((0, self.n_cells), dtype=np.int64)
            coefs = np.zeros(0)
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, self.n_cells)
        coefs = np.asarray(coefs, dtype=float).reshape(-1)
        if exps.shape[0] != coefs.size:
            raise ValueError("exponent rows and coefficients differ in length")
        if np.any(exps < 0):
            raise ValueError("exponents must be nonnegative")
        if not canonical:
            exps, coefs = _combine(exps, coefs)
        if exps.shape[0] > TERM_CAP:
            raise InstanceTooLarge(f"{exps.shape[0]} terms exceeds the cap of {TERM_CAP}")
        self.exps = exps
        self.coefs = coefs

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, c: float, n_cells: int) -> "CountPolynomial":
        return cls(n_cells, np.zeros((1, n_cells), dtype=np.int64), [c])

    @classmethod
    def variable(cls, cell: int, n_cells: int) -> "CountPolynomial":
        e = np.zeros((1, n_cells), dtype=np.int64)
        e[0, cell] = 1
        return cls(n_cells, e, [1.0])

    @classmethod
    def from_dict(cls, terms: dict, n_cells: int) -> "CountPolynomial":
        if not terms:
            return cls(n_cells)
        keys = list(terms)
        return cls(n_cells, np.array(keys, dtype=np.int64), [terms[k] for k in keys])

    def to_dict(self) -> dict:
        return {tuple(int(x) for x in e): float(c) for e, c in zip(self.exps, self.coefs)}

    # -- algebra ------------------------------------------------------------

    def __len__(self):
        return self.coefs.size

    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if len(self) else 0

    def max_exponent(self) -> int:
        return int(self.exps.max()) if len(self) else 0

    def _coerce(self, other):
        if isinstance(other, CountPolynomial):
            if other.n_cells != self.n_cells:
                raise ValueError("polynomials on different numbers of cells")
            return other
        if np.isscalar(other):
            return CountPolynomial.constant(float(other), self.n_cells)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return CountPolynomial(
            self.n_cells,
            np.vstack([self.exps, other.exps]),
            np.concatenate([self.coefs, other.coefs]),
        )

    __radd__ = __add__

    def __neg__(self):
        return CountPolynomial(self.n_cells, self.exps, -self.coefs, canonical=True)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return CountPolynomial(self.n_cells, self.exps, self.coefs * float(other), canonical=float(other) != 0)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if len(self) * len(other) > 50 * TERM_CAP:
            raise InstanceTooLarge("polynomial product too large")
        exps = (self.exps[:, None, :] + other.exps[None, :, :]).reshape(-1, self.n_cells)
        coefs = np.multiply.outer(self.coefs, other.coefs).reshape(-1)
        return CountPolynomial(self.n_cells, exps, coefs)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = CountPolynomial.constant(1.0, self.n_cells)
        for _ in range(int(k)):
            out = out * self
        return out

    def shift(self, cell: int, delta: int) -> "CountPolynomial":
        """``P(N + delta e_cell)`` expanded in monomials."""
        if delta == 0 or not len(self):
            return self
        rows, vals = [], []
        for e, c in zip(self.exps, self.coefs):
            k = int(e[cell])
            for i in range(k + 1):
                ne = e.copy()
                ne[cell] = i
                rows.append(ne)
                vals.append(c * math.comb(k, i) * float(delta) ** (k - i))
        return CountPolynomial(self.n_cells, np.array(rows), vals)

    def times_variable(self, cell: int) -> "CountPolynomial":
        e = self.exps.copy()
        e[:, cell] += 1
        return CountPolynomial(self.n_cells, e, self.coefs, canonical=True)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, counts):
        return self.evaluate(counts)

    def evaluate(self, counts):
        c = np.asarray(getattr(counts, "counts", counts), dtype=float)
        single = c.ndim == 1
        c = np.atleast_2d(c)
        if not len(self):
            out = np.zeros(c.shape[0])
        else:
            kmax = self.max_exponent()
            powers = c[..., None] ** np.arange(kmax + 1)  # (B, m, kmax+1)
            cols = np.arange(self.n_cells)
            out = np.empty(c.shape[0])
            step = max(1, (1 << 22) // max(1, len(self) * self.n_cells))
            for s in range(0, c.shape[0], step):
                fac = powers[s : s + step][:, cols, self.exps]  # (b, K, m)
                out[s : s + step] = np.prod(fac, axis=2) @ self.coefs
        return float(out[0]) if single else out

    def expectation(self, masses) -> float:
        if not len(self):
            return 0.0
        T = touchard_table(masses, self.max_exponent())
        cols = np.arange(self.n_cells)
        return float(np.prod(T[cols, self.exps], axis=1) @ self.coefs)

    def __repr__(self):
        return f"CountPolynomial(n_cells={self.n_cells}, terms={len(self)}, degree={self.degree})"


def _combine(exps, coefs):
    if exps.shape[0] == 0:
        return exps, coefs
    uniq, inv = np.unique(exps, axis=0, return_inverse=True)
    summed = np.zeros(uniq.shape[0])
    np.add.at(summed, inv.reshape(-1), coefs)
    keep = summed != 0.0
    return np.ascontiguousarray(uniq[keep]), summed[keep]


# -- functionals to polynomials ----------------------------------------------


@lru_cache(maxsize=None)
def _charlier_coeffs(k: int, mu: float) -> tuple[float, ...]:
    """Monomial coefficients of the monic Charlier polynomial ``C_k(x; mu)``."""
    prev = np.array([1.0])
    if k == 0:
        return tuple(prev)
    cur = np.array([-mu, 1.0])
    for j in range(1, k):
        nxt = np.zeros(j + 2)
        nxt[1:] += cur
        nxt[: j + 1] += (-mu - j) * cur
        nxt[: j] += -j * mu * prev
        prev, cur = cur, nxt
    return tuple(cur)


def to_polynomial(F, max_terms: int = TERM_CAP) -> CountPolynomial:
    """Expand a :class:`~chaoskit.chaos.ChaosFunctional` in the cell counts."""
    space = F.space
    m = space.n_cells
    mu = space.masses
    rows, vals = [np.zeros(m, dtype=np.int64)], [F.constant]
    est = sum(len(k.index) * (k.order + 1) ** k.order for k in F.kernels.values())
    if est > max_terms:
        raise InstanceTooLarge(f"expansion would produce about {est} terms")
    for p, k in F.kernels.items():
        ix = k.index
        for occ, mult, val in zip(ix.occupation, ix.multiplicity, k.values):
            if val == 0.0:
                continue
            cells = np.nonzero(occ)[0]
            factors = [_charlier_coeffs(int(occ[c]), float(mu[c])) for c in cells]
            for powers in itertools.product(*[range(len(f)) for f in factors]):
                coef = mult * val
                for f, j in zip(factors, powers):
                    coef *= f[j]
                if coef == 0.0:
                    continue
                e = np.zeros(m, dtype=np.int64)
                e[cells] = powers
                rows.append(e)
                vals.append(coef)
    return CountPolynomial(m, np.array(rows), vals)


def _as_poly(F):
    return F if isinstance(F, CountPolynomial) else to_polynomial(F)


# -- exact expectations ------------------------------------------------------


def exact_expectation(P: CountPolynomial, masses) -> float:
    return P.expectation(masses)


def pair_expectation(P: CountPolynomial, Q: CountPolynomial, masses) -> float:
    """``E[P Q]`` without materializing the product polynomial."""
    if not len(P) or not len(Q):
        return 0.0
    kmax = P.max_exponent() + Q.max_exponent()
    T = touchard_table(masses, kmax)
    cols = np.arange(P.n_cells)
    total = 0.0
    step = max(1, (1 << 22) // max(1, len(Q) * P.n_cells))
    for s in range(0, len(P), step):
        e = P.exps[s : s + step, None, :] + Q.exps[None, :, :]  # (a, b, m)
        mom = np.prod(T[cols, e], axis=2)
        total += float(P.coefs[s : s + step] @ mom @ Q.coefs)
    return total


def exact_moment(F, k: int, masses=None) -> float:
    """``E[F^k]`` for ``k <= 4``."""
    P = _as_poly(F)
    masses = F.space.masses if masses is None else masses
    if k == 0:
        return 1.0
    if k == 1:
        return P.expectation(masses)
    if k == 2:
        return pair_expectation(P, P, masses)
    if k == 3:
        return pair_expectation(P * P, P, masses)
    if k == 4:
        P2 = P * P
        return pair_expectation(P2, P2, masses)
    raise ValueError("exact moments are implemented up to order 4")


def exact_central_moment(F, k: int, masses=None) -> float:
    masses = F.space.masses if masses is None else masses
    P = _as_poly(F)
    return exact_moment(P - P.expectation(masses), k, masses)


def exact_product_expectation(F, G, masses=None) -> float:
    masses = F.space.masses if masses is None else masses
    return pair_expectation(_as_poly(F), _as_poly(G), masses)


def exact_variance(P, masses) -> float:
    P = _as_poly(P)
    m = P.expectation(masses)
    return pair_expectation(P, P, masses) - m * m


def shifted_expectations(P: CountPolynomial, shifts: np.ndarray, masses) -> np.ndarray:
    """``E[P(N + s)]`` for each row ``s`` of ``shifts``."""
    if not len(P):
        return np.zeros(len(shifts))
    smax = int(np.max(shifts)) if len(shifts) else 0
    M = shifted_moment_table(masses, smax, P.max_exponent())
    cols = np.arange(P.n_cells)
    out = np.empty(len(shifts))
    for i, s in enumerate(shifts):
        out[i] = np.prod(M[cols, s[None, :], P.exps], axis=1) @ P.coefs
    return out


def exact_kernel(F, p: int, space) -> SymKernel:
    """Order-``p`` chaos kernel ``E[D^(p) F] / p!`` computed exactly."""
    P = _as_poly(F)
    if p == 0:
        return SymKernel.scalar(P.expectation(space.masses), space.n_cells)
    shifts, coef = shift_plan(space.n_cells, p)
    e = shifted_expectations(P, shifts, space.masses)
    return SymKernel(p, space.n_cells, coef @ e / math.factorial(p))


def exact_chaos_decomposition(F, space, max_order: int | None = None):
    """All kernels of a count polynomial, as a ``ChaosFunctional``.

    The chaos order of a polynomial never exceeds its total degree.
    """
    from .chaos import ChaosFunctional

    P = _as_poly(F)
    top = P.degree if max_order is None else max_order
    kernels = {}
    for p in range(1, top + 1):
        k = exact_kernel(P, p, space)
        if np.any(k.values != 0):
            kernels[p] = k
    return ChaosFunctional(space, P.expectation(space.masses), kernels)


# -- Malliavin operators on polynomials ------------------------------------------


def add_one_cost(P: CountPolynomial, cell: int) -> CountPolynomial:
    return P.shift(cell, 1) - P


def remove_one_cost(P: CountPolynomial, cell: int) -> CountPolynomial:
    """``N_cell * (P - P(N - e_cell))``; zero off the support via the factor ``N_cell``.

    Returned already multiplied by the count, i.e. the integrand of the
    ``eta(dz)`` integral at ``cell``.
    """
    return (P - P.shift(cell, -1)).times_variable(cell)


def gamma0_polynomial(P, Q, masses) -> CountPolynomial:
    """``Gamma_0(P, Q)`` as a count polynomial."""
    P, Q = _as_poly(P), _as_poly(Q)
    m = P.n_cells
    out = CountPolynomial(m)
    for c in range(m):
        dp, dq = add_one_cost(P, c), add_one_cost(Q, c)
        out = out + (dp * dq) * float(masses[c])
        mp, mq = P - P.shift(c, -1), Q - Q.shift(c, -1)
        out = out + (mp * mq).times_variable(c)
    return out * 0.5


def generator_polynomial(P, masses) -> CountPolynomial:
    """``L P = sum_z D+_z P mu(z) - sum_{z in eta} D-_z P``."""
    P = _as_poly(P)
    out = CountPolynomial(P.n_cells)
    for c in range(P.n_cells):
        out = out + add_one_cost(P, c) * float(masses[c]) - remove_one_cost(P, c)
    return out


def add_one_power_integral(P, masses, power: int) -> CountPolynomial:
    """``sum_z (D+_z P)^power mu(z)``."""
    P = _as_poly(P)
    out = CountPolynomial(P.n_cells)
    for c in range(P.n_cells):
        out = out + (add_one_cost(P, c) ** power) * float(masses[c])
    return out


def mecke_sides(h_polys, masses) -> tuple[float, float]:
    """Exact ``(lhs, rhs)`` of the Mecke identity for ``h(chi, c) = h_polys[c](chi)``."""
    lhs = rhs = 0.0
    for c, h in enumerate(h_polys):
        lhs += float(masses[c]) * h.shift(c, 1).expectation(masses)
        rhs += h.times_variable(c).expectation(masses)
    return lhs, rhs


# -- enumeration over the (truncated) count law ------------------------------------


def count_law(space, tail: float = 1e-15, max_states: int = 2_000_000):
    """Support grid and probabilities of the product Poisson law.

    Each cell is truncated where its upper tail drops below ``tail``; the
    discarded mass is returned so callers can bound the error.
    """
    from scipy.stats import poisson

    grids, pmfs = [], []
    for mu in space.masses:
        kmax = int(poisson.isf(tail, mu)) + 1 if mu > 0 else 0
        ks = np.arange(kmax + 1)
        grids.append(ks)
        pmfs.append(poisson.pmf(ks, mu))
    size = int(np.prod([g.size for g in grids]))
    if size > max_states:
        raise InstanceTooLarge(f"count law has {size} states, cap is {max_states}")
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, space.n_cells)
    prob = np.ones(mesh.shape[0])
    for c, pmf in enumerate(pmfs):
        prob *= pmf[mesh[:, c]]
    return mesh, prob, float(1.0 - prob.sum())


def multisets(n_cells: int, order: int):
    return multiset_index(n_cells, order).tuples
