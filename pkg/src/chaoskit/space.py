"""Finite atomized measure spaces, Poisson sampling and point configurations.

Everything in the package runs on a :class:`DiscreteSpace`: a finite list of
cells with nonnegative masses.  A realization of the Poisson random measure
is a :class:`PointConfig`, i.e. a vector of per-cell point counts.  Batches
of realizations are plain integer arrays of shape ``(n, n_cells)``; all
functionals in the package accept either form.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_BLOCK = 8192


class SpaceError(ValueError):
    """Invalid space description or misuse of a point configuration."""


@dataclass(frozen=True)
class DiscreteSpace:
    """Finite measure space with one atom per cell."""

    masses: np.ndarray
    cells: tuple = field(default=())

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).reshape(-1)
        if m.size < 1:
            raise SpaceError("a space needs at least one cell")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise SpaceError("cell masses must be finite and nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        cells = tuple(self.cells) if self.cells else tuple(range(m.size))
        if len(cells) != m.size:
            raise SpaceError("cells and masses differ in length")
        object.__setattr__(self, "cells", cells)

    @property
    def n_cells(self) -> int:
        return self.masses.size

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def __eq__(self, other):
        if not isinstance(other, DiscreteSpace):
            return NotImplemented
        return self.cells == other.cells and np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash((self.cells, self.masses.tobytes()))

    @classmethod
    def from_json(cls, doc) -> "DiscreteSpace":
        """Build a space from ``{"masses": [...]}`` (a dict or a JSON string)."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        if not isinstance(doc, dict) or "masses" not in doc:
            raise SpaceError('space JSON must be an object with a "masses" list')
        return cls(np.asarray(doc["masses"], dtype=float))

    def to_json(self) -> dict:
        return {"masses": self.masses.tolist()}


@dataclass(frozen=True)
class PointConfig:
    """Per-cell point counts of one realization."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64).reshape(-1)
        if np.any(c < 0):
            raise SpaceError("point counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __eq__(self, other):
        if not isinstance(other, PointConfig):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(self.counts.tobytes())

    def __len__(self):
        return self.counts.size

    @property
    def n_points(self) -> int:
        return int(self.counts.sum())

    def compensated(self, space: DiscreteSpace) -> np.ndarray:
        """Per-cell value of the compensated measure, ``counts - masses``."""
        _check_len(self, space)
        return self.counts - space.masses


def _check_len(config: PointConfig, space: DiscreteSpace):
    if len(config) != space.n_cells:
        raise SpaceError(
            f"configuration has {len(config)} cells, space has {space.n_cells}"
        )


def as_counts(x) -> np.ndarray:
    """Return the count array behind a PointConfig, array or sequence."""
    if isinstance(x, PointConfig):
        return x.counts
    return np.asarray(x)


def add_point(config: PointConfig, cell: int) -> PointConfig:
    c = config.counts.copy()
    c[cell] += 1
    return PointConfig(c)


def remove_point(config: PointConfig, cell: int) -> PointConfig:
    if config.counts[cell] < 1:
        raise SpaceError(f"cannot remove a point from empty cell {cell}")
    c = config.counts.copy()
    c[cell] -= 1
    return PointConfig(c)


# -- random number streams ----------------------------------------------------


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``.

    Streams are derived with :class:`numpy.random.SeedSequence` and drive a
    Philox counter-based bit generator, so block ``r`` of a run depends only
    on ``(seed, r)`` and never on scheduling.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


def sample_poisson(space: DiscreteSpace, seed: int) -> PointConfig:
    """One realization: independent Poisson(mass) counts per cell."""
    rng = rng_for(seed)
    return PointConfig(rng.poisson(space.masses))


def block_sizes(n: int, blocks: int | None = None) -> list[int]:
    """Split ``n`` draws into deterministic blocks."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if blocks is None:
        blocks = max(1, math.ceil(n / DEFAULT_BLOCK))
    blocks = max(1, min(int(blocks), max(n, 1)))
    base, extra = divmod(n, blocks)
    return [base + (1 if i < extra else 0) for i in range(blocks)]


def map_blocks(
    space: DiscreteSpace,
    n: int,
    seed: int,
    fn: Callable[[np.ndarray], object],
    *,
    blocks: int | None = None,
    threads: int = 1,
    stream: int = 0,
) -> list:
    """Sample ``n`` configurations block by block and apply ``fn`` to each block.

    Returns the list of per-block results in block order.  The result is the
    same for every ``threads`` value.
    """
    sizes = block_sizes(n, blocks)

    def work(i):
        counts = rng_for(seed, stream, i).poisson(space.masses, size=(sizes[i], space.n_cells))
        return fn(counts)

    if threads <= 1 or len(sizes) == 1:
        return [work(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(len(sizes))))


def sample_counts(space: DiscreteSpace, n: int, seed: int, *, blocks=None, threads=1, stream=0) -> np.ndarray:
    """``(n, n_cells)`` array of independent realizations."""
    parts = map_blocks(space, n, seed, lambda c: c, blocks=blocks, threads=threads, stream=stream)
    if not parts:
        return np.zeros((0, space.n_cells), dtype=np.int64)
    return np.concatenate(parts, axis=0)


# -- Mecke formula ----------------------------------------------------------


@dataclass(frozen=True)
class MeckeResult:
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.se_lhs, self.se_rhs))

    @property
    def z_score(self) -> float:
        se = self.se_lhs + self.se_rhs
        diff = abs(self.lhs - self.rhs)
        if se == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / se


def mecke_terms(space: DiscreteSpace, h, counts: np.ndarray):
    """Per-realization integrands of both sides of the Mecke identity.

    ``h(counts, cell)`` takes a ``(B, n_cells)`` batch and a cell index and
    returns ``B`` values.  Returns ``(lhs, rhs)`` arrays with
    ``lhs = sum_z h(counts + e_z, z) mass_z`` and
    ``rhs = sum_z counts_z h(counts, z)``.
    """
    counts = np.atleast_2d(counts)
    lhs = np.zeros(counts.shape[0])
    rhs = np.zeros(counts.shape[0])
    eye = np.eye(space.n_cells, dtype=counts.dtype)
    for z in range(space.n_cells):
        mz = space.masses[z]
        if mz > 0:
            lhs += mz * np.asarray(h(counts + eye[z], z), dtype=float)
        occupied = counts[:, z] > 0
        if occupied.any():
            vals = np.zeros(counts.shape[0])
            vals[occupied] = np.asarray(h(counts[occupied], z), dtype=float)
            rhs += counts[:, z] * vals
    return lhs, rhs


def mecke_check(space: DiscreteSpace, h, n: int, seed: int, *, blocks=None, threads=1) -> MeckeResult:
    """Monte-Carlo estimates of both sides of the Mecke identity."""
    if n < 2:
        raise ValueError("need at least two replicates")
    parts = map_blocks(space, n, seed, lambda c: mecke_terms(space, h, c), blocks=blocks, threads=threads)
    lhs = np.concatenate([p[0] for p in parts])
    rhs = np.concatenate([p[1] for p in parts])
    return MeckeResult(
        float(lhs.mean()),
        float(rhs.mean()),
        float(lhs.std(ddof=1) / math.sqrt(n)),
        float(rhs.std(ddof=1) / math.sqrt(n)),
    )


def cell_indicator(space: DiscreteSpace, cells: Sequence[int]) -> np.ndarray:
    """0/1 vector of a union of cells."""
    v = np.zeros(space.n_cells)
    v[list(cells)] = 1.0
    return v
