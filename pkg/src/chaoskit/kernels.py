"""Symmetric kernels on a finite space, stored by canonical multi-index.

A symmetric function of ``q`` cell indices is determined by its values on
sorted index tuples (multisets).  :class:`SymKernel` keeps exactly those
values; the multinomial count of each multiset is carried along so that
``L^2(mu^q)`` norms and inner products are exact finite sums.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import lru_cache

import numpy as np


class KernelError(ValueError):
    pass


class MultisetIndex:
    """Enumeration of the size-``order`` multisets of ``range(n_cells)``."""

    def __init__(self, n_cells: int, order: int):
        self.n_cells = n_cells
        self.order = order
        tuples = list(itertools.combinations_with_replacement(range(n_cells), order))
        self.tuples = tuples
        self.position = {t: i for i, t in enumerate(tuples)}
        occ = np.zeros((len(tuples), n_cells), dtype=np.int64)
        for i, t in enumerate(tuples):
            for c in t:
                occ[i, c] += 1
        # occupation numbers alpha_c of each multiset
        self.occupation = occ
        fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
        self.multiplicity = math.factorial(order) / np.prod(fact[occ], axis=1)
        self.array = np.array(tuples, dtype=np.int64).reshape(len(tuples), order)

    def __len__(self):
        return len(self.tuples)

    def index(self, idx) -> int:
        key = tuple(sorted(int(i) for i in idx))
        if len(key) != self.order:
            raise KernelError(f"index {idx!r} has length {len(key)}, expected {self.order}")
        if key and (key[0] < 0 or key[-1] >= self.n_cells):
            raise KernelError(f"index {idx!r} out of range for {self.n_cells} cells")
        return self.position[key]

    def weights(self, masses: np.ndarray) -> np.ndarray:
        """``multiplicity * prod_c mass_c**alpha_c`` for each multiset."""
        return self.multiplicity * np.prod(np.asarray(masses, float) ** self.occupation, axis=1)


@lru_cache(maxsize=None)
def multiset_index(n_cells: int, order: int) -> MultisetIndex:
    return MultisetIndex(n_cells, order)


class SymKernel:
    """Symmetric order-``q`` kernel on ``n_cells`` cells.

    Parameters
    ----------
    order : int
        Number of arguments; order 0 is a scalar.
    n_cells : int
        Number of cells of the underlying space.
    values : array_like, optional
        Values on canonical multisets, in ``combinations_with_replacement``
        order.  Defaults to zeros.
    """

    __slots__ = ("order", "n_cells", "values", "_index")

    def __init__(self, order: int, n_cells: int, values=None):
        if order < 0:
            raise KernelError("order must be >= 0")
        self.order = int(order)
        self.n_cells = int(n_cells)
        self._index = multiset_index(self.n_cells, self.order)
        if values is None:
            vals = np.zeros(len(self._index))
        else:
            vals = np.array(values, dtype=float).reshape(-1)
            if vals.size != len(self._index):
                raise KernelError(
                    f"expected {len(self._index)} canonical values, got {vals.size}"
                )
        vals.setflags(write=False)
        self.values = vals

    # -- construction -------------------------------------------------------

    @classmethod
    def scalar(cls, value: float, n_cells: int) -> "SymKernel":
        return cls(0, n_cells, [value])

    @classmethod
    def from_entries(cls, order: int, n_cells: int, entries) -> "SymKernel":
        """Kernel whose value on the orbit of each ``idx`` is ``val``.

        ``entries`` is an iterable of ``(idx, val)``; later entries overwrite
        earlier ones on the same orbit.  No averaging takes place, see
        :func:`symmetrize` for that.
        """
        ix = multiset_index(n_cells, order)
        vals = np.zeros(len(ix))
        for idx, val in entries:
            vals[ix.index(idx)] = val
        return cls(order, n_cells, vals)

    @classmethod
    def from_function(cls, order: int, n_cells: int, fn) -> "SymKernel":
        ix = multiset_index(n_cells, order)
        return cls(order, n_cells, [fn(*t) for t in ix.tuples])

    @classmethod
    def from_dense(cls, tensor, check: bool = True) -> "SymKernel":
        """Read a symmetric dense tensor; raises if it is not symmetric."""
        t = np.asarray(tensor, dtype=float)
        order, n = t.ndim, (t.shape[0] if t.ndim else 1)
        if order == 0:
            return cls(0, n, [float(t)])
        ix = multiset_index(n, order)
        vals = t[tuple(ix.array.T)]
        out = cls(order, n, vals)
        if check and not np.allclose(out.dense(), t, rtol=1e-12, atol=1e-14):
            raise KernelError("tensor is not symmetric; use symmetrize()")
        return out

    @classmethod
    def from_json(cls, doc, n_cells: int) -> "SymKernel":
        """Load ``{"order": q, "entries": [{"idx": [...], "val": x}]}``.

        The entries define a raw (not necessarily symmetric) tensor that is
        symmetrized on load.  With ``"canonical": true`` each entry instead
        sets the value on the whole orbit of its index, which is the form
        :meth:`to_json` writes.
        """
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            order = int(doc["order"])
            entries = doc.get("entries", [])
        except (KeyError, TypeError, AttributeError) as exc:
            raise KernelError(f"malformed kernel JSON: {exc}") from None
        if order == 0:
            val = sum(float(e["val"]) for e in entries) if entries else float(doc.get("value", 0.0))
            return cls.scalar(val, n_cells)
        if doc.get("canonical", False):
            try:
                return cls.from_entries(order, n_cells, [(tuple(int(i) for i in e["idx"]), float(e["val"])) for e in entries])
            except (KeyError, ValueError, IndexError) as exc:
                raise KernelError(f"malformed canonical entry: {exc}") from None
        raw = np.zeros((n_cells,) * order)
        for e in entries:
            idx = tuple(int(i) for i in e["idx"])
            if len(idx) != order:
                raise KernelError(f"entry index {idx} does not have length {order}")
            raw[idx] = float(e["val"])
        return symmetrize(raw)

    def to_json(self) -> dict:
        entries = [
            {"idx": list(t), "val": float(v)}
            for t, v in zip(self._index.tuples, self.values)
            if v != 0.0
        ]
        return {"order": self.order, "canonical": True, "entries": entries}

    # -- access -------------------------------------------------------------

    @property
    def index(self) -> MultisetIndex:
        return self._index

    def __getitem__(self, idx):
        if self.order == 0 and idx in ((), None):
            return float(self.values[0])
        if isinstance(idx, (int, np.integer)):
            idx = (idx,)
        return float(self.values[self._index.index(idx)])

    def with_entry(self, idx, val) -> "SymKernel":
        vals = self.values.copy()
        vals[self._index.index(idx)] = val
        return SymKernel(self.order, self.n_cells, vals)

    def dense(self) -> np.ndarray:
        """Full ``n_cells**order`` tensor."""
        if self.order == 0:
            return np.array(self.values[0])
        out = np.empty((self.n_cells,) * self.order)
        for t, v in zip(self._index.tuples, self.values):
            for p in set(itertools.permutations(t)):
                out[p] = v
        return out

    def section(self, cell: int) -> "SymKernel":
        """``f(cell, .)`` as an order ``q-1`` kernel."""
        if self.order == 0:
            raise KernelError("cannot take a section of a scalar")
        sub = multiset_index(self.n_cells, self.order - 1)
        vals = [self[(cell, *t)] for t in sub.tuples]
        return SymKernel(self.order - 1, self.n_cells, vals)

    # -- algebra ------------------------------------------------------------

    def _same_shape(self, other: "SymKernel"):
        if not isinstance(other, SymKernel):
            raise TypeError("expected a SymKernel")
        if other.n_cells != self.n_cells:
            raise KernelError("kernels live on spaces with different cell counts")
        if other.order != self.order:
            raise KernelError(f"order mismatch: {self.order} vs {other.order}")

    def __add__(self, other):
        self._same_shape(other)
        return SymKernel(self.order, self.n_cells, self.values + other.values)

    def __sub__(self, other):
        self._same_shape(other)
        return SymKernel(self.order, self.n_cells, self.values - other.values)

    def __mul__(self, a):
        if not np.isscalar(a):
            return NotImplemented
        return SymKernel(self.order, self.n_cells, self.values * float(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    def __neg__(self):
        return self * -1.0

    def __eq__(self, other):
        if not isinstance(other, SymKernel):
            return NotImplemented
        return (
            self.order == other.order
            and self.n_cells == other.n_cells
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SymKernel(order={self.order}, n_cells={self.n_cells}, nnz={np.count_nonzero(self.values)})"


def symmetrize(tensor) -> SymKernel:
    """Canonical symmetrization: average over all argument permutations."""
    t = np.asarray(tensor, dtype=float)
    q = t.ndim
    if q == 0:
        raise KernelError("symmetrize needs a tensor of order >= 1")
    if len(set(t.shape)) != 1:
        raise KernelError("all tensor axes must have the same length")
    acc = np.zeros_like(t)
    for perm in itertools.permutations(range(q)):
        acc += np.transpose(t, perm)
    acc /= math.factorial(q)
    return SymKernel.from_dense(acc, check=False)


def tensor_product(f: SymKernel, g: SymKernel) -> np.ndarray:
    """Dense ``f (x) g``, of order ``p + q`` and in general not symmetric."""
    if f.n_cells != g.n_cells:
        raise KernelError("kernels live on spaces with different cell counts")
    return np.multiply.outer(f.dense(), g.dense())


def sym_tensor_product(f: SymKernel, g: SymKernel) -> SymKernel:
    """Symmetrized tensor product, computed directly on canonical storage."""
    if f.n_cells != g.n_cells:
        raise KernelError("kernels live on spaces with different cell counts")
    p, q, n = f.order, g.order, f.n_cells
    if p == 0 or q == 0:
        scalar, other = (f, g) if p == 0 else (g, f)
        return other * scalar.values[0]
    ix = multiset_index(n, p + q)
    vals = np.empty(len(ix))
    for k, t in enumerate(ix.tuples):
        # average over the C(p+q, p) ways to split the multiset
        acc = 0.0
        for pos in itertools.combinations(range(p + q), p):
            rest = [t[i] for i in range(p + q) if i not in pos]
            acc += f[tuple(t[i] for i in pos)] * g[tuple(rest)]
        vals[k] = acc / math.comb(p + q, p)
    return SymKernel(p + q, n, vals)


def inner(f: SymKernel, g: SymKernel, masses) -> float:
    """``<f, g>`` in ``L^2(mu^q)``: sum over all q-tuples of ``f g prod mu``."""
    f._same_shape(g)
    if f.order == 0:
        return float(f.values[0] * g.values[0])
    w = f.index.weights(masses)
    return float(np.sum(w * f.values * g.values))


def norm(f: SymKernel, masses) -> float:
    return math.sqrt(max(inner(f, f, masses), 0.0))


def dense_inner(a, b, masses) -> float:
    """Weighted inner product of two dense tensors of equal order."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise KernelError("tensor shapes differ")
    prod = a * b
    mu = np.asarray(masses, dtype=float)
    for _ in range(a.ndim):
        prod = prod @ mu
    return float(prod)


def dense_norm(a, masses) -> float:
    return math.sqrt(max(dense_inner(a, a, masses), 0.0))


def random_kernel(order: int, n_cells: int, rng: np.random.Generator, scale: float = 1.0) -> SymKernel:
    """Kernel with i.i.d. normal canonical values; handy for tests and scenarios."""
    ix = multiset_index(n_cells, order)
    return SymKernel(order, n_cells, scale * rng.standard_normal(len(ix)))
