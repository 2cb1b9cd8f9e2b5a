"""Binary feature distributions, sparse targets, noise and datasets.

Coordinates are 0-based in the Python API. Files written for humans (CSV
headers, JSON configs) use 1-based coordinates.

Tables indexed by a tuple of coordinates use little-endian order: the first
coordinate of the tuple is bit 0 of the index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .rng import SeedSpec, as_seed

MAX_BLOCK = 20
MAX_RELEVANT = 20


class OracleCapError(ValueError):
    """An exact enumeration would exceed its size cap."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def n_words(d: int) -> int:
    return max(1, (d + 63) // 64)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack an ``(n, d)`` 0/1 matrix into ``(n, ceil(d/64))`` uint64 words.

    Coordinate ``j`` lives in word ``j // 64`` at bit position ``j % 64``.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim == 1:
        bits = bits[None, :]
    n, d = bits.shape
    w = n_words(d)
    padded = np.zeros((n, w * 64), dtype=np.uint8)
    padded[:, :d] = bits
    packed = np.packbits(padded.reshape(n, w, 64), axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(n, w).astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`."""
    words = np.ascontiguousarray(np.asarray(words, dtype="<u8"))
    n = words.shape[0]
    as_bytes = words.view(np.uint8).reshape(n, 8 * words.shape[1])
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :d]


def table_index(bits: np.ndarray, coords: Sequence[int]) -> np.ndarray:
    """Little-endian index of ``bits[:, coords]`` for every row."""
    bits = np.atleast_2d(bits)
    idx = np.zeros(bits.shape[0], dtype=np.int64)
    for k, c in enumerate(coords):
        idx |= bits[:, c].astype(np.int64) << k
    return idx


def _check_coords(coords: Iterable[int], d: int, what: str) -> tuple[int, ...]:
    out = tuple(int(c) for c in coords)
    if len(set(out)) != len(out):
        raise ValueError(f"{what} has repeated coordinates: {out}")
    for c in out:
        if not 0 <= c < d:
            raise ValueError(f"{what} coordinate {c} outside [0, {d})")
    return out


@dataclass(frozen=True, eq=False)
class FeatureDistribution:
    """Product-Bernoulli features, optionally with one correlated block.

    ``p[j]`` is P(x_j = 1) for coordinates outside the block. Inside the
    block the joint law is ``table`` (length ``2**len(block)``), and the
    entries of ``p`` at block coordinates are ignored.
    """

    p: np.ndarray
    block: tuple[int, ...] = ()
    table: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).ravel()
        if p.size == 0:
            raise ValueError("distribution needs d >= 1")
        block = _check_coords(self.block, p.size, "block")
        if len(block) > MAX_BLOCK:
            raise OracleCapError(f"correlated block has {len(block)} > {MAX_BLOCK} coordinates")
        outside = np.ones(p.size, dtype=bool)
        outside[list(block)] = False
        if np.any(~((p[outside] > 0) & (p[outside] < 1))):
            raise ValueError("Bernoulli parameters must lie in (0, 1)")
        table = None
        if block:
            if self.table is None:
                raise ValueError("a correlated block needs a joint table")
            table = np.asarray(self.table, dtype=np.float64).ravel()
            if table.size != 1 << len(block):
                raise ValueError(f"joint table needs {1 << len(block)} entries, got {table.size}")
            if np.any(table < 0) or np.any(table > 1) or not math.isclose(table.sum(), 1.0, abs_tol=1e-12):
                raise ValueError("joint table must be a probability vector")
            table = _frozen(table)
        elif self.table is not None:
            raise ValueError("joint table given without a block")
        object.__setattr__(self, "p", _frozen(p))
        object.__setattr__(self, "block", block)
        object.__setattr__(self, "table", table)

    @classmethod
    def product(cls, p: float | Sequence[float], d: int | None = None) -> "FeatureDistribution":
        if np.ndim(p) == 0:
            if d is None:
                raise ValueError("scalar p needs d")
            p = np.full(d, float(p))
        return cls(np.asarray(p, dtype=np.float64))

    @classmethod
    def uniform(cls, d: int) -> "FeatureDistribution":
        return cls.product(0.5, d)

    @classmethod
    def block_correlated(cls, d: int, block: Sequence[int], table: Sequence[float],
                         p: float | Sequence[float] = 0.5) -> "FeatureDistribution":
        p = np.full(d, float(p)) if np.ndim(p) == 0 else np.asarray(p, dtype=np.float64)
        p = p.copy()
        p[list(block)] = 0.5
        return cls(p, tuple(block), np.asarray(table, dtype=np.float64))

    @property
    def d(self) -> int:
        return int(self.p.size)

    @property
    def kind(self) -> str:
        return "block" if self.block else "product"

    def is_independent(self, coord: int) -> bool:
        return coord not in self.block

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw an ``(n, d)`` uint8 matrix of features."""
        bits = (rng.random((n, self.d)) < self.p).astype(np.uint8)
        if self.block:
            codes = rng.choice(self.table.size, size=n, p=self.table)
            for k, c in enumerate(self.block):
                bits[:, c] = (codes >> k) & 1
        return bits

    def marginal_probability(self, coords: Sequence[int], values: Sequence[int]) -> float:
        """P(x_coords = values), exact."""
        coords = _check_coords(coords, self.d, "coords")
        if len(values) != len(coords):
            raise ValueError("coords and values differ in length")
        prob = 1.0
        in_block = {}
        for c, v in zip(coords, values):
            if v not in (0, 1):
                raise ValueError("values must be bits")
            if c in self.block:
                in_block[self.block.index(c)] = int(v)
            else:
                prob *= self.p[c] if v else 1.0 - self.p[c]
        if in_block:
            codes = np.arange(self.table.size)
            keep = np.ones(self.table.size, dtype=bool)
            for k, v in in_block.items():
                keep &= ((codes >> k) & 1) == v
            prob *= float(self.table[keep].sum())
        return float(prob)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "p": [float(v) for v in self.p]}
        if self.block:
            out["block"] = [c + 1 for c in self.block]
            out["table"] = [float(v) for v in self.table]
        return out


@dataclass(frozen=True, eq=False)
class SparseTarget:
    """m(x) = table[index of x at ``relevant``], values in [-1/2, 1/2]."""

    d: int
    relevant: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        relevant = _check_coords(self.relevant, self.d, "relevant set")
        if len(relevant) > MAX_RELEVANT:
            raise OracleCapError(f"{len(relevant)} relevant coordinates exceed the cap of {MAX_RELEVANT}")
        table = np.asarray(self.table, dtype=np.float64).ravel()
        if table.size != 1 << len(relevant):
            raise ValueError(f"target table needs {1 << len(relevant)} entries, got {table.size}")
        if np.any(np.abs(table) > 0.5 + 1e-15) or not np.all(np.isfinite(table)):
            raise ValueError("target values must lie in [-1/2, 1/2]")
        object.__setattr__(self, "relevant", relevant)
        object.__setattr__(self, "table", _frozen(table))

    @classmethod
    def from_function(cls, d: int, relevant: Sequence[int],
                      fn: Callable[..., float]) -> "SparseTarget":
        """Tabulate ``fn(b_1, ..., b_r)`` over the bits of ``relevant``."""
        r = len(relevant)
        table = [fn(*[(code >> k) & 1 for k in range(r)]) for code in range(1 << r)]
        return cls(d, tuple(relevant), np.array(table, dtype=np.float64))

    @classmethod
    def constant(cls, d: int, value: float = 0.0) -> "SparseTarget":
        return cls(d, (), np.array([value]))

    @property
    def r(self) -> int:
        return len(self.relevant)

    def __call__(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits)
        single = bits.ndim == 1
        out = self.table[table_index(np.atleast_2d(bits), self.relevant)]
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {"relevant": [c + 1 for c in self.relevant], "table": [float(v) for v in self.table]}


def eval_target(target: SparseTarget, x: Sequence[int]) -> float:
    return float(target(np.asarray(x, dtype=np.uint8)))


@dataclass(frozen=True)
class NoiseModel:
    """Additive, bounded, mean-zero noise."""

    kind: str = "none"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "rademacher"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "none":
            object.__setattr__(self, "epsilon", 0.0)
        elif not 0 <= self.epsilon <= 0.5:
            raise ValueError("noise magnitude must lie in [0, 1/2]")

    @property
    def variance(self) -> float:
        if self.kind == "uniform":
            return self.epsilon ** 2 / 3.0
        return self.epsilon ** 2

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-self.epsilon, self.epsilon, size=n)
        if self.kind == "rademacher":
            return self.epsilon * (2.0 * rng.integers(0, 2, size=n) - 1.0)
        return np.zeros(n)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epsilon": self.epsilon}


@dataclass(frozen=True, eq=False)
class Dataset:
    """n labelled samples with bit-packed features."""

    d: int
    words: np.ndarray
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if words.ndim != 2 or words.shape[1] != n_words(self.d):
            raise ValueError("feature words have the wrong shape")
        if words.shape[0] != y.size:
            raise ValueError("features and labels differ in length")
        if self.d % 64 and words.size:
            spill = words[:, -1] >> np.uint64(self.d % 64)
            if np.any(spill):
                raise ValueError("bits set beyond coordinate d")
        object.__setattr__(self, "words", _frozen(words))
        object.__setattr__(self, "y", _frozen(y))

    @classmethod
    def from_bits(cls, bits: np.ndarray, y: Sequence[float]) -> "Dataset":
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        if np.any(bits > 1):
            raise ValueError("features must be 0/1")
        return cls(bits.shape[1], pack_bits(bits), np.asarray(y, dtype=np.float64))

    @property
    def n(self) -> int:
        return int(self.y.size)

    @cached_property
    def bits(self) -> np.ndarray:
        return _frozen(unpack_bits(self.words, self.d))

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.d, self.words[idx], self.y[idx])

    def __len__(self) -> int:
        return self.n


def sample_dataset(dist: FeatureDistribution, target: SparseTarget, noise: NoiseModel,
                   n: int, seed: SeedSpec | int | None = None) -> Dataset:
    """Draw n i.i.d. samples ``y = m(x) + noise``."""
    if dist.d != target.d:
        raise ValueError(f"distribution has d={dist.d} but target has d={target.d}")
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = as_seed(seed).generator("dataset")
    bits = dist.sample(n, rng)
    y = target(bits) + noise.sample(n, rng)
    return Dataset(dist.d, pack_bits(bits), y)


def split_honest_halves(data: Dataset, seed: SeedSpec | int | None = None) -> tuple[Dataset, Dataset]:
    """Uniformly random split into a structure half of size ceil(n/2) and the rest."""
    perm = as_seed(seed).generator("honest-split").permutation(data.n)
    k = (data.n + 1) // 2
    return data.subset(perm[:k]), data.subset(perm[k:])


def write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(data.d)] + ["y"])
        for row, yv in zip(data.bits, data.y):
            w.writerow([int(b) for b in row] + [repr(float(yv))])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    if header != [f"x_{j + 1}" for j in range(d)] + ["y"]:
        raise ValueError(f"unexpected dataset header in {path}")
    bits = np.array([[int(v) for v in r[:d]] for r in body], dtype=np.uint8).reshape(len(body), d)
    y = np.array([float(r[d]) for r in body])
    return Dataset.from_bits(bits, y)
