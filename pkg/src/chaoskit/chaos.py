"""Finite chaos functionals and pathwise multiple Wiener-Ito integrals.

A :class:`ChaosFunctional` is ``c0 + sum_p I_p(f_p)`` with finitely many
symmetric kernels.  On an atomized space the factorial-measure expansion of
``I_p(f)`` groups by cell: points in one cell contribute through falling
factorials of its count, and the sum over ``J`` collapses cell by cell into
the monic Charlier polynomial ``C_k(N; mu)``.  Hence

    I_p(f) = sum_alpha f(alpha) * p!/prod(alpha_c!) * prod_c C_{alpha_c}(N_c; mu_c)

over canonical multisets ``alpha``.  :meth:`ChaosFunctional.evaluate` uses this
form; :meth:`ChaosFunctional.evaluate_pointwise` enumerates distinct point
tuples literally and serves as its cross-check.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from ._diff import iterated_differences
from .kernels import KernelError, SymKernel, inner, multiset_index, sym_tensor_product
from .space import DiscreteSpace, PointConfig, as_counts, map_blocks

MAX_POINTS = 40
_CHUNK_ELEMS = 1 << 22


class ChaosError(ValueError):
    pass


class TruncationError(ChaosError):
    """Raised instead of silently truncating an oversized enumeration."""


def charlier_table(counts: np.ndarray, masses: np.ndarray, kmax: int) -> np.ndarray:
    """``C_k(N_c; mu_c)`` for ``k = 0..kmax``; shape ``counts.shape + (kmax+1,)``.

    Uses ``C_{k+1} = (N - mu - k) C_k - k mu C_{k-1}``.
    """
    n = np.asarray(counts, dtype=float)
    mu = np.broadcast_to(np.asarray(masses, dtype=float), n.shape)
    out = np.empty(n.shape + (kmax + 1,))
    out[..., 0] = 1.0
    if kmax >= 1:
        out[..., 1] = n - mu
    for k in range(1, kmax):
        out[..., k + 1] = (n - mu - k) * out[..., k] - k * mu * out[..., k - 1]
    return out


def _single_integral(kernel: SymKernel, table: np.ndarray) -> np.ndarray:
    """Evaluate ``I_p(f)`` on a batch given its Charlier table ``(B, m, kmax+1)``."""
    p = kernel.order
    ix = kernel.index
    w = ix.multiplicity * kernel.values
    keep = np.nonzero(w)[0]
    B = table.shape[0]
    if keep.size == 0:
        return np.zeros(B)
    # each multiset as p (cell, occupation) factors; repeated cells count once
    cells = ix.array[keep]
    occ = ix.occupation[keep][np.arange(keep.size)[:, None], cells]
    first = np.ones_like(cells, dtype=bool)
    first[:, 1:] = cells[:, 1:] != cells[:, :-1]
    occ = np.where(first, occ, 0)
    w = w[keep]
    out = np.empty(B)
    step = max(1, _CHUNK_ELEMS // max(1, keep.size * p))
    for s in range(0, B, step):
        t = table[s : s + step]
        fac = t[:, cells, occ]  # (b, K, p)
        out[s : s + step] = np.prod(fac, axis=2) @ w
    return out


class ChaosFunctional:
    """``constant + sum_p I_p(kernels[p])`` on a fixed space.

    Instances are immutable and callable: ``F(counts)`` evaluates on a single
    count vector (returning a float) or on a ``(B, n_cells)`` batch.
    """

    def __init__(self, space: DiscreteSpace, constant: float = 0.0, kernels=None):
        self.space = space
        self.constant = float(constant)
        ks = {}
        for p, k in dict(kernels or {}).items():
            p = int(p)
            if not isinstance(k, SymKernel):
                raise TypeError("kernels must be SymKernel instances")
            if p < 1 or k.order != p:
                raise ChaosError(f"kernel stored under order {p} has order {k.order}")
            if k.n_cells != space.n_cells:
                raise ChaosError("kernel and space have different cell counts")
            ks[p] = k
        self.kernels = dict(sorted(ks.items()))

    @classmethod
    def integral(cls, kernel: SymKernel, space: DiscreteSpace) -> "ChaosFunctional":
        """The single multiple integral ``I_q(kernel)``."""
        if kernel.order == 0:
            return cls(space, float(kernel.values[0]))
        return cls(space, 0.0, {kernel.order: kernel})

    @classmethod
    def from_json(cls, doc, space: DiscreteSpace) -> "ChaosFunctional":
        """Load ``{"constant": c, "kernels": {"1": {...}, "2": {...}}}``."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        if not isinstance(doc, dict):
            raise ChaosError("functional JSON must be an object")
        kernels = {}
        for key, kdoc in (doc.get("kernels") or {}).items():
            k = SymKernel.from_json(kdoc, space.n_cells)
            if k.order != int(key):
                raise ChaosError(f"kernel under key {key!r} has order {k.order}")
            kernels[int(key)] = k
        return cls(space, float(doc.get("constant", 0.0)), kernels)

    def to_json(self) -> dict:
        return {
            "constant": self.constant,
            "kernels": {str(p): k.to_json() for p, k in self.kernels.items()},
        }

    # -- structure ----------------------------------------------------------

    @property
    def orders(self) -> list[int]:
        return list(self.kernels)

    @property
    def max_order(self) -> int:
        return max(self.kernels, default=0)

    def kernel(self, p: int) -> SymKernel:
        if p == 0:
            return SymKernel.scalar(self.constant, self.space.n_cells)
        if p in self.kernels:
            return self.kernels[p]
        return SymKernel(p, self.space.n_cells)

    def project(self, p: int) -> "ChaosFunctional":
        if p == 0:
            return ChaosFunctional(self.space, self.constant)
        return ChaosFunctional(self.space, 0.0, {p: self.kernel(p)})

    def mean(self) -> float:
        return self.constant

    def variance(self) -> float:
        """``sum_p p! ||f_p||^2`` (isometry)."""
        mu = self.space.masses
        return sum(math.factorial(p) * inner(k, k, mu) for p, k in self.kernels.items())

    def map_orders(self, fn) -> "ChaosFunctional":
        """Scale the order-``p`` kernel by ``fn(p)``; the constant by ``fn(0)``."""
        return ChaosFunctional(
            self.space,
            self.constant * fn(0),
            {p: k * fn(p) for p, k in self.kernels.items()},
        )

    def _compatible(self, other: "ChaosFunctional"):
        if not isinstance(other, ChaosFunctional):
            raise TypeError("expected a ChaosFunctional")
        if other.space != self.space:
            raise ChaosError("functionals live on different spaces")

    def __add__(self, other):
        if np.isscalar(other):
            return ChaosFunctional(self.space, self.constant + float(other), self.kernels)
        self._compatible(other)
        ks = dict(self.kernels)
        for p, k in other.kernels.items():
            ks[p] = ks[p] + k if p in ks else k
        return ChaosFunctional(self.space, self.constant + other.constant, ks)

    __radd__ = __add__

    def __mul__(self, a):
        if not np.isscalar(a):
            return NotImplemented
        return self.map_orders(lambda p: float(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, ChaosFunctional) else -float(other))

    def __repr__(self):
        return f"ChaosFunctional(constant={self.constant}, orders={self.orders}, n_cells={self.space.n_cells})"

    # -- evaluation ---------------------------------------------------------

    def __call__(self, counts):
        return self.evaluate(counts)

    def evaluate(self, config):
        """Pathwise value on a configuration or a ``(B, n_cells)`` batch."""
        c = as_counts(config)
        single = c.ndim == 1
        c = np.atleast_2d(c)
        if c.shape[-1] != self.space.n_cells:
            raise ChaosError(
                f"configuration has {c.shape[-1]} cells, functional lives on {self.space.n_cells}"
            )
        out = np.full(c.shape[0], self.constant)
        if self.kernels:
            table = charlier_table(c, self.space.masses, self.max_order)
            for k in self.kernels.values():
                out += _single_integral(k, table)
        return float(out[0]) if single else out

    def evaluate_pointwise(self, config, max_points: int = MAX_POINTS) -> float:
        """Literal factorial-measure evaluation over distinct point tuples.

        Cost grows like ``n_points**order``; configurations with more than
        ``max_points`` points raise :class:`TruncationError`.
        """
        c = np.asarray(as_counts(config), dtype=np.int64).reshape(-1)
        if c.size != self.space.n_cells:
            raise ChaosError("configuration and functional live on different spaces")
        if c.sum() > max_points:
            raise TruncationError(
                f"{int(c.sum())} points exceeds the enumeration cap of {max_points}"
            )
        total = self.constant
        for k in self.kernels.values():
            total += integral_pointwise(k.dense(), c, self.space.masses)
        return float(total)


def integral_pointwise(tensor, counts, masses) -> float:
    """``I_p`` of a dense (possibly non-symmetric) tensor at one configuration.

    ``sum_{J subset [p]} (-1)^{p-|J|} sum over ordered distinct point tuples
    indexed by J of the tensor integrated against mu in the other slots``.
    Points sharing a cell are distinct copies.
    """
    t = np.asarray(tensor, dtype=float)
    p = t.ndim
    mu = np.asarray(masses, dtype=float)
    points = [c for c, k in enumerate(np.asarray(counts)) for _ in range(int(k))]
    total = 0.0
    for j in range(p + 1):
        for J in itertools.combinations(range(p), j):
            rest = [a for a in range(p) if a not in J]
            g = np.moveaxis(t, list(J) + rest, list(range(p)))
            for _ in rest:
                g = g @ mu
            acc = 0.0
            for tup in itertools.permutations(range(len(points)), j):
                acc += g[tuple(points[i] for i in tup)]
            total += (-1) ** (p - j) * acc
    return float(total)


# -- Monte-Carlo estimates ----------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def __iter__(self):
        return iter((self.value, self.se))

    def within(self, reference: float, k: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.value - reference) <= k * self.se + atol


def mean_se(x: np.ndarray) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return Estimate(float(x.mean()), se)


def estimate_moments(F, orders=(1, 2, 3, 4), n: int = 10_000, seed: int = 0, *, space=None, blocks=None, threads=1):
    """Monte-Carlo raw moments ``E[F^k]`` with standard errors.

    Returns ``{k: Estimate}``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    space = space or F.space
    orders = tuple(int(k) for k in orders)
    vals = np.concatenate(map_blocks(space, n, seed, F, blocks=blocks, threads=threads))
    return {k: mean_se(vals**k) for k in orders}


def extract_kernel(F, p: int, n: int, seed: int, *, space=None, blocks=None, threads=1):
    """Estimate the order-``p`` chaos kernel as ``E[D^(p) F] / p!``.

    Returns ``(kernel, se)`` with ``se`` aligned to ``kernel.values``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    space = space or F.space
    parts = map_blocks(
        space, n, seed, lambda c: iterated_differences(F, c, p), blocks=blocks, threads=threads
    )
    d = np.concatenate(parts, axis=0) / math.factorial(p)
    mean = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / math.sqrt(d.shape[0]) if d.shape[0] > 1 else np.full_like(mean, np.inf)
    return SymKernel(p, space.n_cells, mean), se


@dataclass(frozen=True)
class TopKernelCheck:
    exact: SymKernel
    predicted: SymKernel
    max_abs_diff: float

    def __iter__(self):
        return iter((self.exact, self.predicted, self.max_abs_diff))


def product_top_kernel_check(f: SymKernel, g: SymKernel, space: DiscreteSpace, max_cells: int = 6) -> TopKernelCheck:
    """Exact order ``p+q`` kernel of ``I_p(f) I_q(g)`` against ``f (x)~ g``."""
    from . import oracle

    if space.n_cells > max_cells or f.order + g.order > 4:
        raise ChaosError("instance too large for exact top-kernel extraction")
    if f.order < 1 or g.order < 1:
        raise KernelError("both kernels need order >= 1")
    F = ChaosFunctional.integral(f, space)
    G = ChaosFunctional.integral(g, space)
    prod = oracle.to_polynomial(F) * oracle.to_polynomial(G)
    exact = oracle.exact_kernel(prod, f.order + g.order, space)
    pred = sym_tensor_product(f, g)
    return TopKernelCheck(exact, pred, float(np.max(np.abs(exact.values - pred.values))))


def multiset_count(n_cells: int, order: int) -> int:
    return len(multiset_index(n_cells, order))
