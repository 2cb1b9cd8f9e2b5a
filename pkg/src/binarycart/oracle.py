"""Exact population functionals over binary features.

Everything is computed by enumerating the *core* coordinates (the relevant
set plus the correlated block). Any other coordinate is independent of the
core and of the target, so conditioning on it only rescales probabilities
and splitting on it never changes a conditional mean; those coordinates are
handled analytically.

Cells of zero probability have no conditional mean. Scalar results report
that as ``None``; vectorized predictions use NaN.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .data import FeatureDistribution, NoiseModel, OracleCapError, SparseTarget
from .rng import SeedSpec, as_seed

CORE_CAP = 22
ENUMERATION_CAP = 25
TIE_RTOL = 1e-12


class ZeroMassError(ValueError):
    """A functional that needs conditioning was asked about a null cell."""


@dataclass(frozen=True)
class Cell:
    """Axis-aligned cell: the set of x with x_j = b for each (j, b) constraint."""

    d: int
    constraints: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        items = tuple(sorted((int(j), int(b)) for j, b in self.constraints))
        coords = [j for j, _ in items]
        if len(set(coords)) != len(coords):
            raise ValueError(f"conflicting constraints {items}")
        for j, b in items:
            if not 0 <= j < self.d or b not in (0, 1):
                raise ValueError(f"bad constraint ({j}, {b}) for d={self.d}")
        object.__setattr__(self, "constraints", items)

    @classmethod
    def root(cls, d: int) -> "Cell":
        return cls(d, ())

    @classmethod
    def from_mapping(cls, d: int, mapping: Mapping[int, int]) -> "Cell":
        return cls(d, tuple(mapping.items()))

    @property
    def fixed(self) -> frozenset[int]:
        return frozenset(j for j, _ in self.constraints)

    def as_dict(self) -> dict[int, int]:
        return dict(self.constraints)

    def child(self, coord: int, bit: int) -> "Cell":
        if coord in self.fixed:
            raise ValueError(f"coordinate {coord} already fixed in {self}")
        return Cell(self.d, self.constraints + ((coord, bit),))

    def contains(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(bits)
        mask = np.ones(bits.shape[0], dtype=bool)
        for j, b in self.constraints:
            mask &= bits[:, j] == b
        return mask

    def is_subset_of(self, other: "Cell") -> bool:
        return set(other.constraints) <= set(self.constraints)

    def disjoint_from(self, other: "Cell") -> bool:
        mine = self.as_dict()
        return any(mine.get(j, b) != b for j, b in other.constraints)


def _covers_exactly(groups: list[dict[int, int]]) -> bool:
    """True iff the constraint sets tile the whole cube exactly once."""
    if not groups:
        return False
    if any(not g for g in groups):
        return len(groups) == 1
    coord = next(iter(groups[0]))
    halves: tuple[list, list] = ([], [])
    for g in groups:
        rest = {j: b for j, b in g.items() if j != coord}
        b = g.get(coord)
        if b is None:
            halves[0].append(rest)
            halves[1].append(rest)
        else:
            halves[b].append(rest)
    return _covers_exactly(halves[0]) and _covers_exactly(halves[1])


@dataclass(frozen=True)
class Partition:
    """Finite family of disjoint cells whose union is the whole cube."""

    d: int
    cells: tuple[Cell, ...]

    def __post_init__(self):
        cells = tuple(self.cells)
        if any(c.d != self.d for c in cells):
            raise ValueError("cells of mixed dimension")
        if not _covers_exactly([c.as_dict() for c in cells]):
            raise ValueError("cells do not form a partition of the cube")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def trivial(cls, d: int) -> "Partition":
        return cls(d, (Cell.root(d),))

    @classmethod
    def from_splits(cls, d: int, coords: Sequence[int]) -> "Partition":
        """All 2^|coords| cells fixing every coordinate in ``coords``."""
        coords = list(coords)
        cells = tuple(
            Cell(d, tuple(zip(coords, bits)))
            for bits in itertools.product((0, 1), repeat=len(coords))
        )
        return cls(d, cells)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.cells)

    def locate(self, bits: np.ndarray) -> np.ndarray:
        """Index of the cell holding each row of ``bits``."""
        bits = np.atleast_2d(bits)
        out = np.full(bits.shape[0], -1, dtype=np.int64)
        for k, cell in enumerate(self.cells):
            out[cell.contains(bits)] = k
        return out

    def refines(self, other: "Partition") -> bool:
        return all(any(c.is_subset_of(a) for a in other.cells) for c in self.cells)

    def split(self, cell: Cell, coord: int) -> "Partition":
        """Replace ``cell`` by its two halves along ``coord``."""
        if cell not in self.cells:
            raise ValueError("cell is not part of this partition")
        rest = tuple(c for c in self.cells if c != cell)
        return Partition(self.d, rest + (cell.child(coord, 0), cell.child(coord, 1)))


class CellMoments(NamedTuple):
    prob: float
    mean: float | None
    mean_sq: float | None


@dataclass(frozen=True, eq=False)
class PopulationProblem:
    """Feature law plus target; noise is carried along but never integrated."""

    dist: FeatureDistribution
    target: SparseTarget
    noise: NoiseModel = NoiseModel()

    def __post_init__(self):
        if self.dist.d != self.target.d:
            raise ValueError(f"distribution has d={self.dist.d} but target has d={self.target.d}")
        if len(self.core) > CORE_CAP:
            raise OracleCapError(f"|relevant ∪ block| = {len(self.core)} exceeds {CORE_CAP}")

    @property
    def d(self) -> int:
        return self.dist.d

    @cached_property
    def core(self) -> tuple[int, ...]:
        """Block coordinates first, then relevant coordinates outside the block."""
        block = self.dist.block
        return block + tuple(c for c in self.target.relevant if c not in block)

    @cached_property
    def core_position(self) -> dict[int, int]:
        return {c: k for k, c in enumerate(self.core)}

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        block = self.dist.block
        w = self.dist.table.copy() if block else np.ones(1)
        for c in self.core[len(block):]:
            p = self.dist.p[c]
            w = np.concatenate([w * (1.0 - p), w * p])
        codes = np.arange(w.size, dtype=np.int64)
        ridx = np.zeros(w.size, dtype=np.int64)
        for k, c in enumerate(self.target.relevant):
            ridx |= ((codes >> self.core_position[c]) & 1) << k
        m = self.target.table[ridx]
        for a in (codes, w, m):
            a.flags.writeable = False
        return codes, w, m

    @cached_property
    def second_moment(self) -> float:
        _, w, m = self._table
        return float(np.dot(w, m * m))

    @property
    def tolerance(self) -> float:
        """Absolute slack used when comparing functional values."""
        return TIE_RTOL * max(self.second_moment, 1e-300)

    def off_core(self) -> list[int]:
        core = set(self.core)
        return [j for j in range(self.d) if j not in core]

    def _check_cap(self, coords: Iterable[int]) -> None:
        extra = set(coords) | set(self.core)
        if len(extra) > ENUMERATION_CAP:
            raise OracleCapError(f"{len(extra)} constrained coordinates exceed the cap of {ENUMERATION_CAP}")

    def _core_key(self, coords: Iterable[int]) -> np.ndarray:
        codes = self._table[0]
        key = np.zeros(codes.size, dtype=np.int64)
        k = 0
        for c in coords:
            pos = self.core_position.get(c)
            if pos is not None:
                key |= ((codes >> pos) & 1) << k
                k += 1
        return key

    def _cell_mask(self, cell: Cell) -> tuple[np.ndarray, float]:
        """Mask over core codes consistent with ``cell`` and the off-core factor."""
        self._check_cap(cell.fixed)
        codes = self._table[0]
        mask = np.ones(codes.size, dtype=bool)
        factor = 1.0
        for j, b in cell.constraints:
            pos = self.core_position.get(j)
            if pos is None:
                p = self.dist.p[j]
                factor *= p if b else 1.0 - p
            else:
                mask &= ((codes >> pos) & 1) == b
        return mask, factor


def _as_problem(problem) -> PopulationProblem:
    if not isinstance(problem, PopulationProblem):
        raise TypeError("expected a PopulationProblem")
    return problem


def cond_moments(problem: PopulationProblem, cell: Cell) -> CellMoments:
    """P(A), E[m | A] and E[m^2 | A]; the conditional moments are None when P(A) = 0."""
    _, w, m = problem._table
    mask, factor = problem._cell_mask(cell)
    wc = w[mask]
    mass = float(wc.sum())
    if mass <= 0.0:
        return CellMoments(0.0, None, None)
    mc = m[mask]
    return CellMoments(mass * factor, float(np.dot(wc, mc)) / mass, float(np.dot(wc, mc * mc)) / mass)


def _grouped_square_mass(w: np.ndarray, wm: np.ndarray, key: np.ndarray) -> float:
    size = int(key.max()) + 1 if key.size else 1
    ws = np.bincount(key, weights=w, minlength=size)
    ms = np.bincount(key, weights=wm, minlength=size)
    pos = ws > 0
    return float(np.sum(ms[pos] ** 2 / ws[pos]))


def vbar(problem: PopulationProblem, coords: Iterable[int]) -> float:
    """Population explained second moment of the split set ``coords``."""
    _, w, m = problem._table
    return _grouped_square_mass(w, w * m, problem._core_key(coords))


def lbar(problem: PopulationProblem, coords: Iterable[int]) -> float:
    """Population impurity E[m^2] - vbar of the split set."""
    return problem.second_moment - vbar(problem, coords)


def vbar_leaf(problem: PopulationProblem, cell: Cell, coords: Iterable[int] = ()) -> float:
    """E[ E[m | cell split by coords]^2 | cell ]; raises on a null cell."""
    _, w, m = problem._table
    mask, _ = problem._cell_mask(cell)
    wc = w[mask]
    mass = float(wc.sum())
    if mass <= 0.0:
        raise ZeroMassError(f"cell {cell.constraints} has probability zero")
    key = problem._core_key(coords)[mask]
    return _grouped_square_mass(wc, wc * m[mask], key) / mass


def lbar_leaf(problem: PopulationProblem, cell: Cell, coords: Iterable[int] = ()) -> float:
    """Leaf impurity of ``cell`` after splitting it on ``coords``."""
    mom = cond_moments(problem, cell)
    if mom.mean is None:
        raise ZeroMassError(f"cell {cell.constraints} has probability zero")
    return mom.mean_sq - vbar_leaf(problem, cell, coords)


def lbar_partition(problem: PopulationProblem, partition: Partition) -> float:
    total = 0.0
    for cell in partition:
        mom = cond_moments(problem, cell)
        if mom.mean is not None:
            total += mom.prob * (mom.mean_sq - mom.mean ** 2)
    return total


def vbar_partition(problem: PopulationProblem, partition: Partition) -> float:
    """E[ E[m | P(x)]^2 ]."""
    total = 0.0
    for cell in partition:
        mom = cond_moments(problem, cell)
        if mom.mean is not None:
            total += mom.prob * mom.mean ** 2
    return total


def _choose(values: dict[int, float], tol: float, rng: np.random.Generator) -> int:
    best = max(values.values())
    ties = [i for i, v in values.items() if v >= best - tol]
    return ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]


def iter_population_level_splits(problem: PopulationProblem,
                                 tie_seed: SeedSpec | int | None = None) -> Iterator[int]:
    """Yield the greedy population split order one level at a time.

    An independent coordinate outside the core adds nothing to any split
    set, so all of them share the value of the current set; ties, within
    the relative tolerance, are broken uniformly at random.
    """
    rng = as_seed(tie_seed).generator("population-level-split")
    core = set(problem.core)
    spare = problem.off_core()
    chosen: list[int] = []
    cache: dict[frozenset, float] = {}
    tol = problem.tolerance

    def value(coords):
        key = frozenset(coords) & core
        if key not in cache:
            cache[key] = vbar(problem, key)
        return cache[key]

    while len(chosen) < problem.d:
        base = value(chosen)
        values = {i: value(chosen + [i]) for i in problem.core if i not in chosen}
        best = max(list(values.values()) + ([base] if spare else []))
        ties = sorted(i for i, v in values.items() if v >= best - tol)
        n_spare = len(spare) if spare and base >= best - tol else 0
        k = int(rng.integers(len(ties) + n_spare)) if len(ties) + n_spare > 1 else 0
        pick = ties[k] if k < len(ties) else spare.pop(k - len(ties))
        chosen.append(pick)
        yield pick


@dataclass(frozen=True, eq=False)
class LevelSplitResult:
    problem: PopulationProblem
    splits: tuple[int, ...]

    @cached_property
    def partition(self) -> Partition:
        return Partition.from_splits(self.problem.d, self.splits)

    def predict(self, bits: np.ndarray) -> np.ndarray:
        """E[m | x_S] for each row; NaN where x_S has probability zero."""
        bits = np.atleast_2d(bits)
        pb = self.problem
        _, w, m = pb._table
        coords = [c for c in self.splits if c in pb.core_position]
        key = pb._core_key(coords)
        size = 1 << len(coords)
        ws = np.bincount(key, weights=w, minlength=size)
        ms = np.bincount(key, weights=w * m, minlength=size)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(ws > 0, ms / np.where(ws > 0, ws, 1.0), np.nan)
        qkey = np.zeros(bits.shape[0], dtype=np.int64)
        for k, c in enumerate(coords):
            qkey |= bits[:, c].astype(np.int64) << k
        return means[qkey]


def population_level_split(problem: PopulationProblem, log_t: int,
                           tie_seed: SeedSpec | int | None = None) -> LevelSplitResult:
    """Greedy population split set of size ``log_t`` and its estimator."""
    if not 0 <= log_t <= problem.d:
        raise ValueError(f"log_t={log_t} outside [0, d={problem.d}]")
    it = iter_population_level_splits(problem, tie_seed)
    return LevelSplitResult(problem, tuple(itertools.islice(it, log_t)))


@dataclass(frozen=True, eq=False)
class CellwiseResult:
    problem: PopulationProblem
    partition: Partition
    leaf_values: tuple[float, ...]

    def predict(self, bits: np.ndarray) -> np.ndarray:
        idx = self.partition.locate(bits)
        return np.asarray(self.leaf_values)[idx]


def population_breiman(problem: PopulationProblem, t: int,
                       tie_seed: SeedSpec | int | None = None) -> CellwiseResult:
    """Breadth-first cell-wise greedy splitting until the partition has ``t`` cells."""
    if t < 1:
        raise ValueError("leaf budget must be at least 1")
    rng = as_seed(tie_seed).generator("population-breiman")
    tol = problem.tolerance
    queue: list[Cell] = [Cell.root(problem.d)]
    final: list[Cell] = []
    n_leaves = 1
    while n_leaves < t and queue:
        following: list[Cell] = []
        for k, cell in enumerate(queue):
            if n_leaves >= t:
                following.extend(queue[k:])
                break
            free = [i for i in range(problem.d) if i not in cell.fixed]
            if not free:
                final.append(cell)
                continue
            if cond_moments(problem, cell).mean is None:
                values = {i: 0.0 for i in free}
            else:
                base = vbar_leaf(problem, cell)
                values = {i: (vbar_leaf(problem, cell, [i]) if i in problem.core_position else base)
                          for i in free}
            i = _choose(values, tol, rng)
            following += [cell.child(i, 0), cell.child(i, 1)]
            n_leaves += 1
        queue = following
    cells = tuple(final + queue)
    values = []
    for cell in cells:
        mean = cond_moments(problem, cell).mean
        values.append(math.nan if mean is None else mean)
    return CellwiseResult(problem, Partition(problem.d, cells), tuple(values))


def relevant_set(problem: PopulationProblem, coords: Iterable[int], eta: float = 0.0) -> tuple[int, ...]:
    """Coordinates whose population gain on top of ``coords`` exceeds ``eta``."""
    coords = list(coords)
    base = vbar(problem, coords)
    out = [i for i in problem.core
           if i not in coords and vbar(problem, coords + [i]) - base > eta + problem.tolerance]
    return tuple(sorted(out))


def leaf_relevant_set(problem: PopulationProblem, cell: Cell, eta: float = 0.0) -> tuple[int, ...]:
    """Coordinates whose gain inside ``cell`` exceeds ``eta``; raises on a null cell."""
    base = vbar_leaf(problem, cell)
    out = [i for i in problem.core
           if i not in cell.fixed and vbar_leaf(problem, cell, [i]) - base > eta + problem.tolerance]
    return tuple(sorted(out))


def _family(problem: PopulationProblem) -> list[int]:
    """Core coordinates plus one representative of the independent irrelevant ones."""
    fam = sorted(problem.core)
    rest = problem.off_core()
    return fam + rest[:1]


def _subsets(items: Sequence[int], max_size: int) -> Iterator[tuple[int, ...]]:
    for k in range(min(max_size, len(items)) + 1):
        yield from itertools.combinations(items, k)


def submodularity_constant(problem: PopulationProblem, scope: int | None = None) -> float:
    """Smallest C >= 1 with gain(i | T) <= C gain(i | S) over the searched S ⊆ T.

    Returns ``math.inf`` when some gain appears on top of T but not on top of S.
    """
    fam = _family(problem)
    if scope is None:
        scope = min(len(fam), 2 * problem.target.r)
    tol = problem.tolerance
    cache: dict[frozenset, float] = {}

    def value(s):
        key = frozenset(s)
        if key not in cache:
            cache[key] = vbar(problem, key)
        return cache[key]

    worst = 1.0
    for big in _subsets(fam, scope):
        for small in _subsets(big, len(big)):
            for i in fam:
                if i in big:
                    continue
                num = value(big + (i,)) - value(big)
                if num <= tol:
                    continue
                den = value(small + (i,)) - value(small)
                if den <= tol:
                    return math.inf
                worst = max(worst, num / den)
    return worst


def _cells_over(coords: Sequence[int], d: int) -> Iterator[Cell]:
    for assign in itertools.product((None, 0, 1), repeat=len(coords)):
        yield Cell(d, tuple((c, b) for c, b in zip(coords, assign) if b is not None))


def diminishing_returns_constant(problem: PopulationProblem, scope: int | None = None) -> float:
    """Cell-wise analogue of :func:`submodularity_constant`.

    Searches cells A' ⊆ A over the core family, split sets T (|T| <= scope)
    and coordinates i, comparing the gain of i inside A' after T with its
    gain inside A. Null cells are skipped.
    """
    fam = _family(problem)
    if scope is None:
        scope = min(len(fam), 2 * problem.target.r)
    tol = problem.tolerance
    cells = [c for c in _cells_over(fam, problem.d) if cond_moments(problem, c).mean is not None]
    cache: dict[tuple, float] = {}

    def value(cell, s):
        key = (cell.constraints, frozenset(s))
        if key not in cache:
            cache[key] = vbar_leaf(problem, cell, key[1])
        return cache[key]

    worst = 1.0
    for outer in cells:
        for inner in cells:
            if not inner.is_subset_of(outer):
                continue
            free = [c for c in fam if c not in inner.fixed]
            for big in _subsets(free, scope):
                for i in free:
                    if i in big:
                        continue
                    num = value(inner, big + (i,)) - value(inner, big)
                    if num <= tol:
                        continue
                    den = value(outer, (i,)) - value(outer, ())
                    if den <= tol:
                        return math.inf
                    worst = max(worst, num / den)
    return worst


def strong_sparsity_margin(problem: PopulationProblem, variant: str = "split") -> float:
    """Largest beta with gain(i | T) >= gain(j | T) + beta for relevant i, irrelevant j.

    ``variant="split"`` compares split-set gains; ``"partition"`` compares
    gains inside every non-null cell over the core family, for relevant
    coordinates not yet fixed in the cell. Returns ``math.inf`` if there is
    no relevant coordinate to compare.
    """
    if variant not in ("split", "partition"):
        raise ValueError(f"unknown variant {variant!r}")
    fam = _family(problem)
    relevant = list(problem.target.relevant)
    irrelevant = [c for c in fam if c not in relevant]
    beta = math.inf
    if variant == "split":
        cache: dict[frozenset, float] = {}

        def gain(s, i):
            for key in (frozenset(s), frozenset(s) | {i}):
                if key not in cache:
                    cache[key] = vbar(problem, key)
            return cache[frozenset(s) | {i}] - cache[frozenset(s)]

        for i in relevant:
            for s in _subsets([c for c in fam if c != i], len(fam)):
                other = max((gain(s, j) for j in irrelevant), default=0.0)
                beta = min(beta, gain(s, i) - other)
        return beta
    for cell in _cells_over(fam, problem.d):
        if cond_moments(problem, cell).mean is None:
            continue
        free = [c for c in fam if c not in cell.fixed]
        for i in relevant:
            if i in cell.fixed:
                continue
            for s in _subsets([c for c in free if c != i], len(free)):
                base = vbar_leaf(problem, cell, s)
                gi = vbar_leaf(problem, cell, s + (i,)) - base
                other = max((vbar_leaf(problem, cell, s + (j,)) - base
                             for j in irrelevant if j in free and j not in s), default=0.0)
                beta = min(beta, gi - other)
    return beta


def density_lower_bound(problem: PopulationProblem, q: int) -> float:
    """2^q times the smallest probability of any pattern on any q coordinates."""
    d = problem.d
    if not 0 <= q <= d:
        raise ValueError(f"q={q} outside [0, d={d}]")
    core = list(problem.core)
    outside = sorted(min(problem.dist.p[j], 1.0 - problem.dist.p[j]) for j in problem.off_core())
    _, w, _ = problem._table
    best = math.inf
    for k in range(0, min(q, len(core)) + 1):
        if q - k > len(outside):
            continue
        tail = float(np.prod(outside[: q - k])) if q > k else 1.0
        for sub in itertools.combinations(core, k):
            key = problem._core_key(sub)
            masses = np.bincount(key, weights=w, minlength=1 << k)
            best = min(best, float(masses.min()) * tail)
    return (2.0 ** q) * best


def value_diameter(problem: PopulationProblem, cell: Cell) -> float:
    """max (m(x) - m(y))^2 over positive-probability points of ``cell``; 0 if null."""
    _, w, m = problem._table
    mask, factor = problem._cell_mask(cell)
    live = mask & (w > 0)
    if factor <= 0 or not live.any():
        return 0.0
    vals = m[live]
    return float((vals.max() - vals.min()) ** 2)


def partition_value_diameter(problem: PopulationProblem, partition: Partition) -> float:
    return max(cond_moments(problem, c).prob * value_diameter(problem, c) for c in partition)


def weighted_value_diameter(problem: PopulationProblem, partition: Partition) -> float:
    """E_x[ diameter of the cell containing x ]."""
    return sum(cond_moments(problem, c).prob * value_diameter(problem, c) for c in partition)


def estimator_population_mse(problem: PopulationProblem, partition: Partition,
                             leaf_values: Sequence[float]) -> float:
    """E[(m(x) - v_{P(x)})^2] for a piecewise-constant estimator."""
    if len(leaf_values) != len(partition):
        raise ValueError("one leaf value per cell is required")
    total = 0.0
    for cell, v in zip(partition, leaf_values):
        mom = cond_moments(problem, cell)
        if mom.mean is None:
            continue
        if not math.isfinite(v):
            raise ValueError("a positive-mass cell has no leaf value")
        total += mom.prob * ((mom.mean_sq - mom.mean ** 2) + (mom.mean - v) ** 2)
    return total


def enumerate_points(problem: PopulationProblem, coords: Iterable[int] = ()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All patterns over ``coords`` ∪ core with their probabilities and m values.

    Coordinates outside that set are left at 0 in the returned bit matrix.
    """
    extra = [c for c in sorted(set(coords)) if c not in problem.core_position]
    problem._check_cap(extra)
    codes, w, m = problem._table
    base = np.zeros((codes.size, problem.d), dtype=np.uint8)
    for c, pos in problem.core_position.items():
        base[:, c] = (codes >> pos) & 1
    bits, probs, vals = base, w.copy(), m.copy()
    for c in extra:
        p = problem.dist.p[c]
        one = bits.copy()
        one[:, c] = 1
        bits = np.concatenate([bits, one])
        probs = np.concatenate([probs * (1.0 - p), probs * p])
        vals = np.concatenate([vals, vals])
    return bits, probs, vals


def diagnostics_report(problem: PopulationProblem, scope: int | None = None,
                       q: int | None = None) -> dict:
    """Assumption diagnostics with 1-based coordinates."""
    warnings = []
    q = problem.target.r if q is None else q
    report = {
        "C_submodular": submodularity_constant(problem, scope),
        "C_diminishing": diminishing_returns_constant(problem, scope),
        "beta_split": strong_sparsity_margin(problem, "split"),
        "beta_partition": strong_sparsity_margin(problem, "partition"),
        "zeta": density_lower_bound(problem, q),
        "relevant_set": [c + 1 for c in relevant_set(problem, [])],
    }
    if math.isinf(report["C_submodular"]):
        warnings.append("submodularity fails: some gain appears only after other splits")
    if report["beta_split"] <= 0:
        warnings.append("strong sparsity fails for split sets")
    if report["beta_partition"] <= 0:
        warnings.append("strong sparsity fails for partitions")
    if report["zeta"] <= 0:
        warnings.append(f"some pattern on {q} coordinates has probability zero")
    report["warnings"] = warnings
    return report
