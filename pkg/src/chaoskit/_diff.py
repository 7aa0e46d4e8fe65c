"""Iterated add-one differences of black-box functionals on count vectors."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .kernels import multiset_index


@lru_cache(maxsize=None)
def shift_plan(n_cells: int, order: int):
    """Shifts and signed weights for all order-``order`` iterated differences.

    Returns ``(shifts, coef)`` where ``shifts`` is a ``(S, n_cells)`` array of
    all multisets of size ``<= order`` (as occupation vectors) and ``coef``
    is ``(K, S)`` with ``D^(alpha) F = sum_s coef[alpha, s] F(N + shifts[s])``.
    """
    target = multiset_index(n_cells, order)
    shifts = []
    pos = {}
    for k in range(order + 1):
        for occ in multiset_index(n_cells, k).occupation:
            pos[tuple(occ)] = len(shifts)
            shifts.append(occ)
    shifts = np.array(shifts, dtype=np.int64).reshape(len(shifts), n_cells)
    coef = np.zeros((len(target), len(shifts)))
    for a, alpha in enumerate(target.occupation):
        # sub-multisets beta of alpha, weight (-1)^{|alpha|-|beta|} prod C(alpha_c, beta_c)
        ranges = [range(int(x) + 1) for x in alpha]
        for beta in _product(ranges):
            w = (-1) ** (order - sum(beta))
            for ac, bc in zip(alpha, beta):
                w *= math.comb(int(ac), bc)
            coef[a, pos[tuple(beta)]] += w
    coef.setflags(write=False)
    shifts.setflags(write=False)
    return shifts, coef


def _product(ranges):
    if not ranges:
        yield ()
        return
    head, *tail = ranges
    for h in head:
        for t in _product(tail):
            yield (h, *t)


def iterated_differences(F, counts: np.ndarray, order: int) -> np.ndarray:
    """``D^(order)`` of ``F`` at every canonical multiset, for each row of ``counts``.

    Returns an array of shape ``(B, K)`` with ``K`` the number of multisets.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    shifts, coef = shift_plan(counts.shape[1], order)
    vals = np.empty((counts.shape[0], shifts.shape[0]))
    for s, sh in enumerate(shifts):
        vals[:, s] = F(counts + sh)
    return vals @ coef.T


def iterated_differences_upto(F, counts: np.ndarray, orders) -> dict[int, np.ndarray]:
    """:func:`iterated_differences` for several orders from one set of evaluations.

    The shift list of a lower order is a prefix of the shift list of a
    higher one, so ``F`` is evaluated only at the shifts of the top order.
    """
    orders = sorted(set(int(p) for p in orders))
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    m = counts.shape[1]
    top_shifts, _ = shift_plan(m, orders[-1])
    vals = np.empty((counts.shape[0], top_shifts.shape[0]))
    for s, sh in enumerate(top_shifts):
        vals[:, s] = F(counts + sh)
    out = {}
    for p in orders:
        shifts, coef = shift_plan(m, p)
        out[p] = vals[:, : shifts.shape[0]] @ coef.T
    return out
