"""Greedy regression trees on binary features.

Two split rules are provided. ``level`` picks one coordinate per depth for
the whole tree; ``breiman`` picks a coordinate per cell, breadth first.
Either can be honest: the structure half of the data chooses the splits and
the other half gates splits and supplies leaf values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .data import Dataset, pack_bits, split_honest_halves
from .oracle import Cell, Partition
from .rng import SeedSpec, as_seed

LEVEL = "level"
BREIMAN = "breiman"
FULLY_GROWN_MIN = 4


@dataclass(frozen=True)
class BuildConfig:
    """How to grow one tree.

    ``budget`` is the number of levels for ``level`` trees and the number of
    leaves for ``breiman`` trees. ``None`` grows the tree fully: a cell is
    split only while it holds at least four gating points.
    """

    variant: str = LEVEL
    budget: int | None = None
    honest: bool = False
    seed: SeedSpec = field(default_factory=SeedSpec)
    tie_rtol: float = 1e-12

    def __post_init__(self):
        if self.variant not in (LEVEL, BREIMAN):
            raise ValueError(f"unknown tree variant {self.variant!r}")
        if self.budget is not None:
            if int(self.budget) != self.budget:
                raise ValueError("budget must be an integer")
            minimum = 0 if self.variant == LEVEL else 1
            if self.budget < minimum:
                raise ValueError(f"budget {self.budget} below {minimum}")
        object.__setattr__(self, "seed", as_seed(self.seed))

    @property
    def fully_grown(self) -> bool:
        return self.budget is None


class Leaf(NamedTuple):
    value: float
    n_estimation: int
    n_gating: int


class Internal(NamedTuple):
    coord: int
    child0: int
    child1: int


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree; node 0 is the root and ``coord < 0`` marks a leaf."""

    variant: str
    honest: bool
    d: int
    coord: np.ndarray
    child0: np.ndarray
    child1: np.ndarray
    value: np.ndarray
    n_estimation: np.ndarray
    n_gating: np.ndarray
    split_order: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("coord", "child0", "child1", "n_estimation", "n_gating"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64))
        object.__setattr__(self, "value", _frozen(self.value, np.float64))
        object.__setattr__(self, "split_order", tuple(int(c) for c in self.split_order))

    @property
    def n_nodes(self) -> int:
        return int(self.coord.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.coord < 0))

    def node(self, k: int) -> Leaf | Internal:
        if self.coord[k] < 0:
            return Leaf(float(self.value[k]), int(self.n_estimation[k]), int(self.n_gating[k]))
        return Internal(int(self.coord[k]), int(self.child0[k]), int(self.child1[k]))

    def preorder(self) -> Iterator[tuple[int, tuple[tuple[int, int], ...]]]:
        """Yield (node index, path constraints) in preorder."""
        stack = [(0, ())]
        while stack:
            k, path = stack.pop()
            yield k, path
            c = int(self.coord[k])
            if c >= 0:
                stack.append((int(self.child1[k]), path + ((c, 1),)))
                stack.append((int(self.child0[k]), path + ((c, 0),)))

    def leaves(self) -> list[tuple[Cell, Leaf]]:
        return [(Cell(self.d, path), self.node(k)) for k, path in self.preorder() if self.coord[k] < 0]

    def partition(self) -> Partition:
        return Partition(self.d, tuple(cell for cell, _ in self.leaves()))

    def leaf_values(self) -> list[float]:
        return [leaf.value for _, leaf in self.leaves()]

    def predict(self, x) -> np.ndarray | float:
        """Predict for a Dataset, a bit vector, or an (n, d) bit matrix."""
        words, single = _query_words(x, self.d)
        out = _kernels.predict_kernel(self.coord, self.child0, self.child1, self.value, words)
        return float(out[0]) if single else out

    def structure(self) -> tuple[int, ...]:
        """Preorder split coordinates (-1 for a leaf): the shape without leaf statistics."""
        return tuple(int(self.coord[k]) for k, _ in self.preorder())

    def to_dict(self) -> dict:
        nodes = []
        for k, _ in self.preorder():
            if self.coord[k] < 0:
                nodes.append({"leaf": True, "value": float(self.value[k]),
                              "n_estimation": int(self.n_estimation[k]),
                              "n_gating": int(self.n_gating[k])})
            else:
                nodes.append({"leaf": False, "coord": int(self.coord[k]) + 1})
        return {"variant": self.variant, "honest": self.honest, "d": self.d,
                "split_order": [c + 1 for c in self.split_order], "nodes": nodes}

    def to_json(self) -> str:
        # repr of a float round-trips exactly; json uses it for finite values
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "Tree":
        nodes = obj["nodes"]
        coord, child0, child1, value, n_est, n_gate = [], [], [], [], [], []
        pos = 0

        def build() -> int:
            nonlocal pos
            spec = nodes[pos]
            pos += 1
            k = len(coord)
            coord.append(-1)
            child0.append(-1)
            child1.append(-1)
            value.append(math.nan)
            n_est.append(0)
            n_gate.append(0)
            if spec["leaf"]:
                value[k] = float(spec["value"])
                n_est[k] = int(spec["n_estimation"])
                n_gate[k] = int(spec["n_gating"])
            else:
                coord[k] = int(spec["coord"]) - 1
                child0[k] = build()
                child1[k] = build()
            return k

        build()
        if pos != len(nodes):
            raise ValueError("trailing nodes in tree description")
        return cls(obj["variant"], bool(obj["honest"]), int(obj["d"]), np.array(coord),
                   np.array(child0), np.array(child1), np.array(value), np.array(n_est),
                   np.array(n_gate), tuple(c - 1 for c in obj.get("split_order", [])))

    @classmethod
    def from_json(cls, text: str) -> "Tree":
        return cls.from_dict(json.loads(text))

    def same_as(self, other: "Tree") -> bool:
        """Exact equality of structure, counts and leaf values."""
        return self.to_dict() == other.to_dict()


def _query_words(x, d: int) -> tuple[np.ndarray, bool]:
    if isinstance(x, Dataset):
        if x.d != d:
            raise ValueError(f"query has d={x.d}, tree has d={d}")
        return x.words, False
    bits = np.asarray(x, dtype=np.uint8)
    single = bits.ndim == 1
    bits = np.atleast_2d(bits)
    if bits.shape[1] != d:
        raise ValueError(f"query has {bits.shape[1]} coordinates, tree has d={d}")
    return pack_bits(bits), single


def _halves(data: Dataset, config: BuildConfig) -> tuple[Dataset, Dataset]:
    if config.honest:
        if data.n < 2:
            raise ValueError("an honest tree needs at least two samples")
        return split_honest_halves(data, config.seed.derive("honest"))
    if data.n < 1:
        raise ValueError("a tree needs at least one sample")
    return data, data


def build_level_split(data: Dataset, config: BuildConfig = BuildConfig()) -> Tree:
    """Grow a level-split tree; ``config.budget`` is the number of levels."""
    if config.variant != LEVEL:
        config = replace(config, variant=LEVEL)
    if config.budget is not None and config.budget > data.d:
        raise ValueError(f"{config.budget} levels requested but d={data.d}")
    structure, gating = _halves(data, config)
    levels = data.d if config.fully_grown else int(config.budget)
    min_split = FULLY_GROWN_MIN if config.fully_grown else 2
    coord, c0, c1, value, count, order = _kernels.level_split_kernel(
        structure.words, structure.y, gating.words, gating.y, data.d, levels, min_split,
        config.seed.word("ties"), config.tie_rtol)
    return Tree(LEVEL, config.honest, data.d, coord, c0, c1, value, count, count, tuple(order))


def build_breiman(data: Dataset, config: BuildConfig = BuildConfig(variant=BREIMAN)) -> Tree:
    """Grow a cell-wise greedy tree; ``config.budget`` is the number of leaves."""
    if config.variant != BREIMAN:
        config = replace(config, variant=BREIMAN)
    structure, gating = _halves(data, config)
    leaves = np.iinfo(np.int64).max if config.fully_grown else int(config.budget)
    min_split = FULLY_GROWN_MIN if config.fully_grown else 2
    coord, c0, c1, value, count = _kernels.breiman_kernel(
        structure.words, structure.y, gating.words, gating.y, data.d, leaves, min_split,
        config.seed.word("ties"), config.tie_rtol)
    return Tree(BREIMAN, config.honest, data.d, coord, c0, c1, value, count, count)


def build_tree(data: Dataset, config: BuildConfig) -> Tree:
    if config.variant == LEVEL:
        return build_level_split(data, config)
    return build_breiman(data, config)


def tree_partition(tree: Tree) -> Partition:
    return tree.partition()


# Empirical criteria. Group sums accumulate in sample order and the final
# average uses an exactly rounded sum, so the results do not depend on how
# the groups happen to be enumerated.


def _group_ids(bits: np.ndarray, coords: Sequence[int]) -> np.ndarray:
    if len(coords) == 0:
        return np.zeros(bits.shape[0], dtype=np.int64)
    cols = bits[:, list(coords)]
    if len(coords) <= 62:
        key = np.zeros(bits.shape[0], dtype=np.int64)
        for k in range(len(coords)):
            key |= cols[:, k].astype(np.int64) << k
        _, inv = np.unique(key, return_inverse=True)
    else:
        _, inv = np.unique(cols, axis=0, return_inverse=True)
    return inv.ravel()


def empirical_means(coords: Sequence[int], data: Dataset) -> np.ndarray:
    """m_n(x_j; S) for every sample: the mean label of samples sharing x_S."""
    inv = _group_ids(data.bits, coords)
    sums = np.bincount(inv, weights=data.y)
    counts = np.bincount(inv)
    return (sums / counts)[inv]


def empirical_v(coords: Sequence[int], data: Dataset) -> float:
    """Explained second moment of the split set on the sample."""
    if data.n == 0:
        raise ValueError("empty dataset")
    means = empirical_means(coords, data)
    return math.fsum(means * means) / data.n


def empirical_l(coords: Sequence[int], data: Dataset) -> float:
    """Training impurity of the split set: mean squared residual."""
    if data.n == 0:
        raise ValueError("empty dataset")
    resid = data.y - empirical_means(coords, data)
    return math.fsum(resid * resid) / data.n


def empirical_v_leaf(cell: Cell, coord: int | None, data: Dataset) -> float:
    """Cell-wise explained second moment of splitting ``cell`` on ``coord``.

    ``coord=None`` gives the unsplit value, the squared cell mean.
    """
    mask = cell.contains(data.bits)
    n_cell = int(mask.sum())
    if n_cell == 0:
        raise ValueError("no samples in the cell")
    y = data.y[mask]
    side = np.zeros(n_cell, dtype=np.int64) if coord is None else data.bits[mask, coord].astype(np.int64)
    sums = np.bincount(side, weights=y, minlength=2)
    counts = np.bincount(side, minlength=2)
    total = 0.0
    for z in (0, 1):
        if counts[z]:
            g = sums[z] / counts[z]
            total += (counts[z] / n_cell) * (g * g)
    return total


def estimate_with_splits(x: Sequence[int], coords: Sequence[int], data: Dataset) -> float:
    """Mean label of the samples agreeing with x on the longest feasible prefix-filter of S.

    Coordinates are applied in order; one that would leave no sample is skipped.
    """
    bits = data.bits
    x = np.asarray(x, dtype=np.uint8)
    keep = np.ones(data.n, dtype=bool)
    if not keep.any():
        raise ValueError("empty dataset")
    for c in coords:
        narrower = keep & (bits[:, c] == x[c])
        if narrower.any():
            keep = narrower
    # sequential sum in sample order, as the tree kernels accumulate leaf values
    y = data.y[keep]
    return float(np.cumsum(y)[-1] / y.size)
