"""Subsampled honest forests with infinitesimal-jackknife intervals."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from statistics import NormalDist

import numpy as np

from . import _kernels
from .data import Dataset, FeatureDistribution, NoiseModel, SparseTarget, sample_dataset
from .oracle import PopulationProblem, enumerate_points, weighted_value_diameter
from .rng import SeedSpec, as_seed
from .trees import BuildConfig, Tree, _query_words, build_tree


@dataclass(frozen=True)
class ForestConfig:
    """``n_trees`` subsamples of size ``s``.

    Each subsample is fitted ``splits_per_subsample`` times with independent
    internal randomness (honest split, tie-breaking) and contributes the
    average of those fits as its tree prediction.
    """

    s: int
    n_trees: int
    tree_config: BuildConfig = field(default_factory=lambda: BuildConfig(honest=True))
    seed: SeedSpec = field(default_factory=SeedSpec)
    splits_per_subsample: int = 1

    def __post_init__(self):
        if self.s < 2 or self.n_trees < 1:
            raise ValueError("need s >= 2 and at least one tree")
        if self.splits_per_subsample < 1:
            raise ValueError("splits_per_subsample must be at least 1")
        object.__setattr__(self, "seed", as_seed(self.seed))

    def to_dict(self) -> dict:
        tc = self.tree_config
        return {"s": self.s, "n_trees": self.n_trees, "seed": self.seed.master_seed,
                "splits_per_subsample": self.splits_per_subsample,
                "tree": {"variant": tc.variant, "budget": tc.budget, "honest": tc.honest,
                         "seed": tc.seed.master_seed, "tie_rtol": tc.tie_rtol}}

    @classmethod
    def from_dict(cls, obj: dict) -> "ForestConfig":
        t = obj["tree"]
        tc = BuildConfig(t["variant"], t["budget"], t["honest"], SeedSpec(t["seed"]), t["tie_rtol"])
        return cls(obj["s"], obj["n_trees"], tc, SeedSpec(obj["seed"]), obj.get("splits_per_subsample", 1))


@dataclass(frozen=True, eq=False)
class Forest:
    """Fitted trees plus the subsample behind each group of them.

    ``trees[b * k + j]`` is fit ``j`` of subsample ``b``, with
    ``k = config.splits_per_subsample``; row ``b`` of ``subsamples`` lists
    indices into the training data.
    """

    trees: tuple[Tree, ...]
    subsamples: np.ndarray
    n: int
    config: ForestConfig

    @property
    def d(self) -> int:
        return self.trees[0].d

    @property
    def n_trees(self) -> int:
        return int(self.subsamples.shape[0])

    @cached_property
    def ledger(self) -> np.ndarray:
        """(n_trees, n) 0/1 matrix: did subsample b contain sample i."""
        led = np.zeros((self.n_trees, self.n), dtype=np.uint8)
        np.put_along_axis(led, self.subsamples, 1, axis=1)
        return led

    @cached_property
    def _flat(self):
        sizes = np.array([t.n_nodes for t in self.trees])
        roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        coord = np.concatenate([t.coord for t in self.trees])
        shift = np.repeat(roots, sizes)
        c0 = np.concatenate([t.child0 for t in self.trees])
        c1 = np.concatenate([t.child1 for t in self.trees])
        c0 = np.where(c0 >= 0, c0 + shift, -1)
        c1 = np.where(c1 >= 0, c1 + shift, -1)
        value = np.concatenate([t.value for t in self.trees])
        return coord, c0, c1, value, roots

    def tree_predictions(self, x) -> np.ndarray:
        """Per-subsample predictions, shape (n_trees, n_queries)."""
        words, _ = _query_words(x, self.d)
        raw = _kernels.forest_predict_kernel(*self._flat, words)
        k = self.config.splits_per_subsample
        if k == 1:
            return raw
        return raw.reshape(self.n_trees, k, -1).mean(axis=1)


def _fit_one(data: Dataset, config: ForestConfig, b: int) -> tuple[list[Tree], np.ndarray]:
    rng = config.seed.generator("subsample", b)
    idx = rng.choice(data.n, size=config.s, replace=False)
    sub = data.subset(idx)
    k = config.splits_per_subsample
    trees = [build_tree(sub, replace(config.tree_config, seed=config.seed.derive("tree", b * k + j)))
             for j in range(k)]
    return trees, idx


def fit_forest(data: Dataset, config: ForestConfig, threads: int = 1) -> Forest:
    """Fit ``n_trees`` trees, each on a size-s subsample drawn without replacement."""
    if config.s > data.n:
        raise ValueError(f"subsample size {config.s} exceeds n={data.n}")
    if threads <= 1:
        results = [_fit_one(data, config, b) for b in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _fit_one(data, config, b), range(config.n_trees)))
    trees = tuple(t for group, _ in results for t in group)
    subsamples = np.stack([idx for _, idx in results]).astype(np.int64)
    return Forest(trees, subsamples, data.n, config)


def predict_forest(forest: Forest, x) -> np.ndarray | float:
    _, single = _query_words(x, forest.d)
    out = forest.tree_predictions(x).mean(axis=0)
    return float(out[0]) if single else out


def ij_variance(forest: Forest, x, corrected: bool = True) -> np.ndarray | float:
    """Infinitesimal-jackknife variance, sum over samples of Cov_b(N_bi, T_b(x))^2.

    With a finite number of trees each covariance carries Monte Carlo noise,
    whose squares add up to roughly s (1 - s/n) Var_b(T_b) / B. ``corrected``
    subtracts that term and clips the result at zero.
    """
    _, single = _query_words(x, forest.d)
    preds = forest.tree_predictions(x)
    n_trees, s = forest.subsamples.shape
    flat = forest.subsamples.ravel()
    uses = np.bincount(flat, minlength=forest.n) / n_trees
    out = np.empty(preds.shape[1])
    for q in range(preds.shape[1]):
        # covariances are shift invariant; shifting by one tree's prediction
        # keeps identical trees at exactly zero
        tq = preds[:, q] - preds[0, q]
        cross = np.bincount(flat, weights=np.repeat(tq, s), minlength=forest.n) / n_trees
        cov = cross - uses * tq.mean()
        out[q] = float(np.dot(cov, cov))
        if corrected:
            out[q] = max(0.0, out[q] - s * (1 - s / forest.n) * float(tq.var()) / n_trees)
    return float(out[0]) if single else out


def confidence_interval(forest: Forest, x, level: float = 0.95, corrected: bool = True):
    """Normal interval pred ± z sqrt(ij_variance); returns (lo, hi, pred, var)."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    pred = np.atleast_1d(predict_forest(forest, x))
    var = np.atleast_1d(ij_variance(forest, x, corrected))
    half = z * np.sqrt(var)
    return pred - half, pred + half, pred, var


def forest_population_mse(problem: PopulationProblem, forest: Forest) -> float:
    """E[(m(x) - forest(x))^2], exact, by enumerating every coordinate the forest splits on."""
    used = set()
    for t in forest.trees:
        used.update(int(c) for c in t.coord[t.coord >= 0])
    bits, probs, values = enumerate_points(problem, used)
    pred = predict_forest(forest, bits)
    return float(np.dot(probs, (values - pred) ** 2))


def expected_partition_diameter(dist: FeatureDistribution, target: SparseTarget, noise: NoiseModel,
                                s: int, reps: int, tree_config: BuildConfig,
                                seed: SeedSpec | int | None = None) -> tuple[float, float]:
    """Monte Carlo mean and standard error of E_x[diameter of the leaf holding x]."""
    seed = as_seed(seed)
    problem = PopulationProblem(dist, target, noise)
    draws = np.empty(reps)
    for k in range(reps):
        data = sample_dataset(dist, target, noise, s, seed.derive("diameter-data", k))
        tree = build_tree(data, replace(tree_config, seed=seed.derive("diameter-tree", k)))
        draws[k] = weighted_value_diameter(problem, tree.partition())
    stderr = float(draws.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return float(draws.mean()), stderr


def save_forest(forest: Forest, directory) -> None:
    path = Path(directory)
    (path / "trees").mkdir(parents=True, exist_ok=True)
    manifest = {"n": forest.n, "d": forest.d, "n_fits": len(forest.trees),
                "config": forest.config.to_dict(),
                "subsamples": forest.subsamples.tolist()}
    (path / "manifest.json").write_text(json.dumps(manifest))
    for b, tree in enumerate(forest.trees):
        (path / "trees" / f"tree_{b:06d}.json").write_text(tree.to_json())
    with open(path / "ledger.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(forest.ledger.tolist())


def load_forest(directory) -> Forest:
    path = Path(directory)
    manifest = json.loads((path / "manifest.json").read_text())
    trees = tuple(Tree.from_json((path / "trees" / f"tree_{b:06d}.json").read_text())
                  for b in range(manifest["n_fits"]))
    subsamples = np.array(manifest["subsamples"], dtype=np.int64)
    forest = Forest(trees, subsamples, manifest["n"], ForestConfig.from_dict(manifest["config"]))
    with open(path / "ledger.csv", newline="") as fh:
        stored = np.array([[int(v) for v in row] for row in csv.reader(fh)], dtype=np.uint8)
    if not np.array_equal(stored, forest.ledger):
        raise ValueError(f"ledger in {path} disagrees with the stored subsamples")
    return forest
