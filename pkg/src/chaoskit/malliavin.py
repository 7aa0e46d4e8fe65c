"""Pathwise Malliavin operators on the Poisson space.

Functionals are any callables mapping a ``(B, n_cells)`` count batch to ``B``
values (a :class:`~chaoskit.chaos.ChaosFunctional` is one).  Integrals
against ``eta(dz)`` are sums over points; all points of a cell give the same
remove-one cost, so ``int g(z) eta(dz) = sum_c N_c g(c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaos import ChaosError, ChaosFunctional
from .space import DiscreteSpace, PointConfig, as_counts, map_blocks


def _batch(config):
    c = np.asarray(as_counts(config), dtype=np.int64)
    return np.atleast_2d(c), c.ndim == 1


def _out(x, single):
    return float(x[0]) if single else x


def _vals(F, counts):
    return np.asarray(F(counts), dtype=float).reshape(counts.shape[0])


def product(F, G):
    """Pathwise product functional ``F * G``."""
    return lambda c: _vals(F, np.atleast_2d(c)) * _vals(G, np.atleast_2d(c))


def compose(psi, F):
    """Pathwise ``psi(F)``."""
    return lambda c: psi(_vals(F, np.atleast_2d(c)))


# -- difference operators ----------------------------------------------------


def add_one_cost(F, config, cell: int):
    """``D+_z F = F(chi + delta_z) - F(chi)``."""
    c, single = _batch(config)
    up = c.copy()
    up[:, cell] += 1
    return _out(_vals(F, up) - _vals(F, c), single)


def remove_one_cost(F, config, cell: int):
    """``D-_z F = F(chi) - F(chi - delta_z)`` on the support, 0 elsewhere."""
    c, single = _batch(config)
    occupied = c[:, cell] > 0
    out = np.zeros(c.shape[0])
    if occupied.any():
        base = c[occupied]
        down = base.copy()
        down[:, cell] -= 1
        out[occupied] = _vals(F, base) - _vals(F, down)
    return _out(out, single)


def iterated(F, config, cells):
    """``D^(n)_{z1..zn} F``, defined by ``D+_{z1}(D^(n-1)_{z2..zn} F)``."""
    cells = list(cells)
    if not cells:
        c, single = _batch(config)
        return _out(_vals(F, c), single)
    head, rest = cells[0], cells[1:]
    inner_fn = lambda x: np.atleast_1d(iterated(F, x, rest))
    return add_one_cost(inner_fn, config, head)


def plus_all(F, counts, base=None) -> np.ndarray:
    """``D+_z F`` for every cell; shape ``(B, n_cells)``."""
    counts = np.atleast_2d(counts)
    f0 = _vals(F, counts) if base is None else base
    out = np.empty(counts.shape, dtype=float)
    for z in range(counts.shape[1]):
        up = counts.copy()
        up[:, z] += 1
        out[:, z] = _vals(F, up) - f0
    return out


def minus_all(F, counts, base=None) -> np.ndarray:
    """``D-_z F`` for every cell (0 where the cell is empty)."""
    counts = np.atleast_2d(counts)
    f0 = _vals(F, counts) if base is None else base
    out = np.zeros(counts.shape, dtype=float)
    for z in range(counts.shape[1]):
        occ = counts[:, z] > 0
        if occ.any():
            down = counts[occ].copy()
            down[:, z] -= 1
            out[occ, z] = f0[occ] - _vals(F, down)
    return out


@dataclass(frozen=True)
class OperatorTrace:
    """Per-cell add-one and remove-one costs of ``F`` at one configuration."""

    d_plus: np.ndarray
    d_minus: np.ndarray
    value: float
    generator: float


def trace(F, config, space: DiscreteSpace) -> OperatorTrace:
    c, _ = _batch(config)
    f0 = _vals(F, c)
    dp, dm = plus_all(F, c, f0)[0], minus_all(F, c, f0)[0]
    lf = float(dp @ space.masses - dm @ c[0])
    return OperatorTrace(dp, dm, float(f0[0]), lf)


# -- Gamma_0, L, L^{-1}, delta -------------------------------------------------


def gamma0(F, G, config, space: DiscreteSpace):
    """``1/2 [sum_z D+F D+G mu(z) + sum_{z in chi} D-F D-G]``."""
    c, single = _batch(config)
    dpf, dmf = plus_all(F, c), minus_all(F, c)
    if G is F:
        dpg, dmg = dpf, dmf
    else:
        dpg, dmg = plus_all(G, c), minus_all(G, c)
    val = 0.5 * ((dpf * dpg) @ space.masses + np.sum(c * dmf * dmg, axis=1))
    return _out(val, single)


def apply_L(F, config, space: DiscreteSpace):
    """Ornstein-Uhlenbeck generator ``sum_z D+F mu(z) - sum_{z in chi} D-F``."""
    c, single = _batch(config)
    f0 = _vals(F, c)
    val = plus_all(F, c, f0) @ space.masses - np.sum(c * minus_all(F, c, f0), axis=1)
    return _out(val, single)


def apply_Linv(F: ChaosFunctional) -> ChaosFunctional:
    """Pseudo-inverse of ``L``: the order-``p`` kernel is scaled by ``-1/p``."""
    if F.constant != 0.0:
        raise ChaosError("L^{-1} needs a centered functional (nonzero constant term)")
    return ChaosFunctional(F.space, 0.0, {p: k * (-1.0 / p) for p, k in F.kernels.items()})


def apply_L_chaos(F: ChaosFunctional) -> ChaosFunctional:
    """``L`` on the chaos expansion: order ``p`` is scaled by ``-p``."""
    return F.map_orders(lambda p: -float(p))


def carre_du_champ(F, G, config, space: DiscreteSpace):
    """``Gamma(F, G) = 1/2 (L(FG) - F LG - G LF)`` with ``L`` applied pathwise."""
    c, single = _batch(config)
    f, g = _vals(F, c), _vals(G, c)
    val = 0.5 * (
        apply_L(product(F, G), c, space) - f * apply_L(G, c, space) - g * apply_L(F, c, space)
    )
    return _out(np.atleast_1d(val), single)


def skorohod(u, config, space: DiscreteSpace):
    """Pathwise Skorohod integral ``sum_{z in chi} u(chi - delta_z, z) - sum_z u(chi, z) mu(z)``.

    ``u(counts)`` returns the ``(B, n_cells)`` array of ``u(chi, z)``.
    """
    c, single = _batch(config)
    m = c.shape[1]
    here = np.asarray(u(c), dtype=float).reshape(c.shape)
    val = -(here @ space.masses)
    for z in range(m):
        occ = c[:, z] > 0
        if occ.any():
            down = c[occ].copy()
            down[:, z] -= 1
            val[occ] += c[occ, z] * np.asarray(u(down), dtype=float).reshape(down.shape)[:, z]
    return _out(val, single)


@dataclass(frozen=True)
class CdcResult:
    max_abs: float
    max_rel: float


def cdcform_check(F, G, n: int, seed: int, space: DiscreteSpace | None = None, **mc) -> CdcResult:
    """Largest pathwise gap between ``Gamma(F, G)`` and ``Gamma_0(F, G)`` over ``n`` draws."""
    space = space or F.space

    def block(c):
        a = np.atleast_1d(carre_du_champ(F, G, c, space))
        b = np.atleast_1d(gamma0(F, G, c, space))
        scale = np.maximum.reduce([np.ones_like(a), np.abs(a), np.abs(b)])
        return np.abs(a - b), np.abs(a - b) / scale

    parts = map_blocks(space, n, seed, block, **mc)
    return CdcResult(
        max(float(p[0].max(initial=0.0)) for p in parts),
        max(float(p[1].max(initial=0.0)) for p in parts),
    )


# -- pathwise identity residuals --------------------------------------------------


def _rel(lhs, rhs, *terms):
    scale = np.maximum(1.0, np.max(np.abs(np.stack([lhs, rhs, *terms])), axis=0))
    return np.abs(lhs - rhs) / scale


def identity_residuals(F, G, counts) -> dict[str, np.ndarray]:
    """Relative residuals of the add-one/remove-one algebraic identities.

    Checks, at every row of ``counts`` and every cell, the power rules for
    ``F^2`` and ``F^3`` under ``D+`` and ``D-`` and the product rules for
    ``F G``.  Each entry has shape ``(B, n_cells)``.
    """
    counts = np.atleast_2d(counts)
    f, g = _vals(F, counts), _vals(G, counts)
    F2 = compose(np.square, F)
    F3 = compose(lambda x: x**3, F)
    FG = product(F, G)
    dpf, dpg = plus_all(F, counts, f), plus_all(G, counts, g)
    dmf, dmg = minus_all(F, counts, f), minus_all(G, counts, g)
    fb, gb = f[:, None], g[:, None]
    dp2, dp3 = plus_all(F2, counts), plus_all(F3, counts)
    dm2, dm3 = minus_all(F2, counts), minus_all(F3, counts)
    dpfg, dmfg = plus_all(FG, counts), minus_all(FG, counts)
    t = {}
    t["dp2"] = _rel(dp2, dpf**2 + 2 * fb * dpf, dpf**2, 2 * fb * dpf)
    t["dp3"] = _rel(dp3, dpf**3 + 3 * fb**2 * dpf + 3 * fb * dpf**2, dpf**3, 3 * fb**2 * dpf, 3 * fb * dpf**2)
    t["dm2"] = _rel(dm2, -(dmf**2) + 2 * fb * dmf, dmf**2, 2 * fb * dmf)
    t["dm3"] = _rel(dm3, dmf**3 + 3 * fb**2 * dmf - 3 * fb * dmf**2, dmf**3, 3 * fb**2 * dmf, 3 * fb * dmf**2)
    t["mix+"] = _rel(dpfg, gb * dpf + fb * dpg + dpf * dpg, gb * dpf, fb * dpg, dpf * dpg)
    t["mix-"] = _rel(dmfg, gb * dmf + fb * dmg - dmf * dmg, gb * dmf, fb * dmg, dmf * dmg)
    return t


def taylor_remainder_excess(psi, dpsi, psi2_lip: float, F, counts) -> np.ndarray:
    """``|D+ psi(F) - psi'(F) D+F| - (lip/2) (D+F)^2``; nonpositive when the bound holds."""
    counts = np.atleast_2d(counts)
    f = _vals(F, counts)
    dpf = plus_all(F, counts, f)
    dpsi_f = plus_all(compose(psi, F), counts)
    return np.abs(dpsi_f - dpsi(f)[:, None] * dpf) - 0.5 * psi2_lip * dpf**2


def mecke_transfer_terms(F, G, counts, space: DiscreteSpace):
    """Integrands of ``E[sum_z (D+F)^2 |D+G| mu]`` and ``E[sum_{z in eta} (D-F)^2 |D-G|]``."""
    counts = np.atleast_2d(counts)
    plus = (plus_all(F, counts) ** 2 * np.abs(plus_all(G, counts))) @ space.masses
    minus = np.sum(counts * minus_all(F, counts) ** 2 * np.abs(minus_all(G, counts)), axis=1)
    return plus, minus


def generator_residual(F: ChaosFunctional, counts) -> np.ndarray:
    """Relative gap between pathwise ``L F`` and the chaos-side ``-sum p I_p(f_p)``."""
    counts = np.atleast_2d(counts)
    lf = apply_L(F, counts, F.space)
    ref = apply_L_chaos(F)(counts)
    scale = np.maximum.reduce([np.ones_like(lf), np.abs(lf), np.abs(ref), np.abs(F(counts))])
    return np.abs(lf - ref) / scale


def duality_terms(G, u, counts, space: DiscreteSpace):
    """Integrands of ``E[G delta(u)]`` and ``E[sum_z D+_z G u(z) mu(z)]``."""
    counts = np.atleast_2d(counts)
    g = _vals(G, counts)
    lhs = g * skorohod(u, counts, space)
    here = np.asarray(u(counts), dtype=float).reshape(counts.shape)
    rhs = (plus_all(G, counts, g) * here) @ space.masses
    return lhs, rhs
