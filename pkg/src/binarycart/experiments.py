"""Config-driven experiments: MSE rates, interval coverage, xor first hits,
assumption diagnostics and tables of population functionals.

Each run produces a list of CSV rows and a JSON summary computed only from
those rows, so the summary can always be rebuilt from ``rows.csv``.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from .data import FeatureDistribution, NoiseModel, SparseTarget, sample_dataset
from .forest import ForestConfig, confidence_interval, fit_forest, forest_population_mse
from .oracle import (
    OracleCapError,
    PopulationProblem,
    diagnostics_report,
    estimator_population_mse,
    iter_population_level_splits,
    lbar,
    vbar,
)
from .rng import SeedSpec
from .trees import BREIMAN, LEVEL, BuildConfig, build_tree

log = logging.getLogger(__name__)

KINDS = ("rate", "coverage", "xor", "diagnose", "oracle-table")

HEADERS = {
    "rate": ["n", "replicate", "mse"],
    "coverage": ["replicate", "x_id", "pred", "ij_var", "lo", "hi", "covered"],
    "xor": ["d", "replicate", "first_hit_level"],
    "diagnose": ["C_submodular", "C_diminishing", "beta_split", "beta_partition", "zeta", "relevant_set"],
    "oracle-table": ["S", "vbar", "lbar"],
}

_ALLOWED = {
    "rate": {"experiment", "seed", "problem", "algorithm", "honest", "budget", "n_grid",
             "replicates", "forest"},
    "coverage": {"experiment", "seed", "problem", "algorithm", "n", "s_rule", "trees",
                 "splits_per_subsample", "level", "queries", "n_queries", "replicates"},
    "xor": {"experiment", "seed", "d_grid", "replicates", "mode", "n"},
    "diagnose": {"experiment", "seed", "problem", "scope", "q"},
    "oracle-table": {"experiment", "seed", "problem", "max_size", "coords"},
}


class ConfigError(ValueError):
    """The experiment configuration is malformed or violates a side condition."""


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing key {key!r}")
    return obj[key]


def _check_keys(obj: Any, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return obj


def _int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}")
    return value


def _coords(values, d: int, where: str) -> list[int]:
    if not isinstance(values, list):
        raise ConfigError(f"{where}: expected a list of 1-based coordinates")
    out = []
    for v in values:
        v = _int(v, where)
        if not 1 <= v <= d:
            raise ConfigError(f"{where}: coordinate {v} outside 1..{d}")
        out.append(v - 1)
    return out


def parse_problem(obj: Any) -> PopulationProblem:
    """Build a problem from its JSON description (1-based coordinates)."""
    _check_keys(obj, {"d", "distribution", "target", "noise"}, "problem")
    d = _int(_require(obj, "d", "problem"), "problem.d", 1)
    dist_obj = _check_keys(_require(obj, "distribution", "problem"),
                           {"kind", "p", "block", "table"}, "problem.distribution")
    tgt_obj = _check_keys(_require(obj, "target", "problem"), {"relevant", "table"}, "problem.target")
    noise_obj = _check_keys(obj.get("noise", {"kind": "none"}), {"kind", "epsilon"}, "problem.noise")
    try:
        kind = dist_obj.get("kind", "product")
        p = dist_obj.get("p", 0.5)
        if kind == "product":
            if "block" in dist_obj or "table" in dist_obj:
                raise ConfigError("problem.distribution: a product law takes no block")
            dist = FeatureDistribution.product(p, d)
        elif kind == "block":
            block = _coords(_require(dist_obj, "block", "problem.distribution"), d, "problem.distribution.block")
            dist = FeatureDistribution.block_correlated(d, block, _require(dist_obj, "table", "problem.distribution"), p)
        else:
            raise ConfigError(f"problem.distribution: unknown kind {kind!r}")
        relevant = _coords(_require(tgt_obj, "relevant", "problem.target"), d, "problem.target.relevant")
        target = SparseTarget(d, tuple(relevant), np.asarray(_require(tgt_obj, "table", "problem.target"), dtype=float))
        noise = NoiseModel(noise_obj.get("kind", "none"), float(noise_obj.get("epsilon", 0.0)))
        return PopulationProblem(dist, target, noise)
    except (ConfigError, OracleCapError):
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from exc


def parse_s_rule(rule: Any, n: int) -> int:
    """``fixed:k`` or ``pow:a`` (s = ceil(n^a), a < 1/2); rejects s > sqrt(n)."""
    if not isinstance(rule, str) or ":" not in rule:
        raise ConfigError(f"s_rule must look like 'fixed:64' or 'pow:0.4', got {rule!r}")
    tag, arg = rule.split(":", 1)
    try:
        if tag == "fixed":
            s = int(arg)
        elif tag == "pow":
            a = float(arg)
            if not 0 < a < 0.5:
                raise ConfigError("s_rule pow:a needs 0 < a < 1/2")
            s = int(math.ceil(n ** a))
        else:
            raise ConfigError(f"unknown s_rule {tag!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad s_rule {rule!r}") from exc
    if s < 2 or s > n:
        raise ConfigError(f"subsample size {s} must lie in [2, n={n}]")
    if s * s > n:
        raise ConfigError(f"subsample size {s} exceeds sqrt(n) for n={n}; "
                          "asymptotic normality needs s = o(sqrt(n))")
    if s * s == n:
        log.warning("subsample size %d equals sqrt(n) for n=%d: at the edge of s = o(sqrt(n))", s, n)
    return s


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    raw: dict
    seed: int

    @classmethod
    def from_dict(cls, obj: Any, kind: str | None = None, seed: int | None = None) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        declared = obj.get("experiment", kind)
        if kind is not None and declared != kind:
            raise ConfigError(f"config is for {declared!r}, not {kind!r}")
        if declared not in KINDS:
            raise ConfigError(f"unknown experiment {declared!r}")
        _check_keys(obj, _ALLOWED[declared], "config")
        base_seed = obj.get("seed", 0) if seed is None else seed
        _int(base_seed, "seed", 0)
        cfg = cls(declared, dict(obj), base_seed)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        # parse everything once so errors surface before any work starts
        runner = _RUNNERS[self.kind]
        runner(self, threads=1, dry=True)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "inf" if v == math.inf else repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)


def _json_value(v):
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return None
        return v
    return v


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _ols(xs: np.ndarray, ys: np.ndarray) -> tuple[float | None, float | None]:
    if xs.size < 2 or not np.all(np.isfinite(ys)):
        return None, None
    fit = stats.linregress(xs, ys)
    return float(fit.slope), float(fit.stderr) if xs.size > 2 else None


# --- rate -----------------------------------------------------------------

def _rate_plan(cfg: ExperimentConfig):
    raw = cfg.raw
    problem = parse_problem(_require(raw, "problem", "config"))
    algorithm = raw.get("algorithm", LEVEL)
    if algorithm not in (LEVEL, BREIMAN, "forest"):
        raise ConfigError(f"algorithm must be 'level', 'breiman' or 'forest', got {algorithm!r}")
    honest = raw.get("honest", algorithm == "forest")
    if not isinstance(honest, bool):
        raise ConfigError("honest must be true or false")
    budget = raw.get("budget", "full")
    budget = None if budget == "full" else _int(budget, "budget", 0)
    n_grid = _require(raw, "n_grid", "config")
    if not isinstance(n_grid, list) or not n_grid:
        raise ConfigError("n_grid must be a non-empty list")
    n_grid = [_int(n, "n_grid", 2 if honest else 1) for n in n_grid]
    reps = _int(_require(raw, "replicates", "config"), "replicates", 1)
    forest = None
    if algorithm == "forest":
        fobj = _check_keys(_require(raw, "forest", "config"),
                           {"variant", "s_rule", "trees", "trees_per_n", "splits_per_subsample"}, "forest")
        variant = fobj.get("variant", LEVEL)
        if variant not in (LEVEL, BREIMAN):
            raise ConfigError(f"forest.variant must be 'level' or 'breiman', got {variant!r}")
        if ("trees" in fobj) == ("trees_per_n" in fobj):
            raise ConfigError("forest needs exactly one of 'trees' and 'trees_per_n'")
        sizes = {n: parse_s_rule(_require(fobj, "s_rule", "forest"), n) for n in n_grid}
        trees = {}
        for n in n_grid:
            trees[n] = (_int(fobj["trees"], "forest.trees", 1) if "trees" in fobj
                        else max(1, int(round(float(fobj["trees_per_n"]) * n))))
        k = _int(fobj.get("splits_per_subsample", 1), "forest.splits_per_subsample", 1)
        forest = (variant, sizes, trees, k)
    elif "forest" in raw:
        raise ConfigError("'forest' settings given but algorithm is not 'forest'")
    else:
        try:
            BuildConfig(algorithm, budget, honest)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if algorithm == LEVEL and budget is not None and budget > problem.d:
            raise ConfigError(f"{budget} levels requested but d={problem.d}")
    return problem, algorithm, honest, budget, n_grid, reps, forest


def run_rate(cfg: ExperimentConfig, threads: int = 1, dry: bool = False):
    problem, algorithm, honest, budget, n_grid, reps, forest = _rate_plan(cfg)
    if dry:
        return None
    root = SeedSpec(cfg.seed)
    jobs = [(n, r) for n in n_grid for r in range(reps)]

    def one(job):
        n, r = job
        seed = root.derive(f"rate-n{n}", r)
        data = sample_dataset(problem.dist, problem.target, problem.noise, n, seed.derive("data"))
        if forest is None:
            tree = build_tree(data, BuildConfig(algorithm, budget, honest, seed.derive("tree")))
            mse = estimator_population_mse(problem, tree.partition(), tree.leaf_values())
        else:
            variant, sizes, trees, k = forest
            fcfg = ForestConfig(sizes[n], trees[n], BuildConfig(variant, budget, True),
                                seed.derive("forest"), k)
            mse = forest_population_mse(problem, fit_forest(data, fcfg))
        return [n, r, float(mse)]

    rows = _map(one, jobs, threads)
    return rows, summarize_rate(rows)


def summarize_rate(rows: list) -> dict:
    by_n: dict[int, list[float]] = {}
    for n, _, mse in rows:
        by_n.setdefault(int(n), []).append(float(mse))
    ns = sorted(by_n)
    means = [math.fsum(by_n[n]) / len(by_n[n]) for n in ns]
    x = np.log2(np.array(ns, dtype=float))
    with np.errstate(divide="ignore"):
        y = np.log2(np.array(means))
        ylog = np.array([math.fsum(np.log2(by_n[n])) / len(by_n[n]) for n in ns])
    slope, se = _ols(x, y)
    slope_log, se_log = _ols(x, ylog)
    return {"n": ns, "mean_mse": means, "replicates": [len(by_n[n]) for n in ns],
            "slope": slope, "slope_se": se, "slope_mean_log": slope_log, "slope_mean_log_se": se_log}


# --- coverage ---------------------------------------------------------------

def _coverage_plan(cfg: ExperimentConfig):
    raw = cfg.raw
    problem = parse_problem(_require(raw, "problem", "config"))
    if problem.noise.variance <= 0:
        raise ConfigError("coverage needs noise with positive variance")
    algorithm = raw.get("algorithm", LEVEL)
    if algorithm not in (LEVEL, BREIMAN):
        raise ConfigError(f"algorithm must be 'level' or 'breiman', got {algorithm!r}")
    n = _int(_require(raw, "n", "config"), "n", 4)
    s = parse_s_rule(_require(raw, "s_rule", "config"), n)
    trees = _int(_require(raw, "trees", "config"), "trees", 2)
    k = _int(raw.get("splits_per_subsample", 1), "splits_per_subsample", 1)
    level = raw.get("level", 0.95)
    if not isinstance(level, (int, float)) or not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    reps = _int(_require(raw, "replicates", "config"), "replicates", 1)
    if "queries" in raw and "n_queries" in raw:
        raise ConfigError("give either 'queries' or 'n_queries', not both")
    if "queries" in raw:
        q = raw["queries"]
        if not isinstance(q, list) or not q or any(not isinstance(r, list) or len(r) != problem.d for r in q):
            raise ConfigError(f"queries must be a list of 0/1 vectors of length {problem.d}")
        queries = np.array(q)
        if not np.isin(queries, (0, 1)).all():
            raise ConfigError("queries must be 0/1 vectors")
        queries = queries.astype(np.uint8)
    else:
        nq = _int(raw.get("n_queries", 5), "n_queries", 1)
        queries = problem.dist.sample(nq, SeedSpec(cfg.seed).generator("queries"))
    return problem, algorithm, n, s, trees, k, float(level), reps, queries


def run_coverage(cfg: ExperimentConfig, threads: int = 1, dry: bool = False):
    problem, algorithm, n, s, trees, k, level, reps, queries = _coverage_plan(cfg)
    if dry:
        return None
    root = SeedSpec(cfg.seed)
    truth = problem.target(queries)

    def one(r):
        seed = root.derive("coverage", r)
        data = sample_dataset(problem.dist, problem.target, problem.noise, n, seed.derive("data"))
        fcfg = ForestConfig(s, trees, BuildConfig(algorithm, None, True), seed.derive("forest"), k)
        lo, hi, pred, var = confidence_interval(fit_forest(data, fcfg), queries, level)
        return [[r, q, float(pred[q]), float(var[q]), float(lo[q]), float(hi[q]),
                 int(lo[q] <= truth[q] <= hi[q])] for q in range(len(queries))]

    rows = [row for block in _map(one, range(reps), threads) for row in block]
    summary = summarize_coverage(rows, truth)
    summary.update({"n": n, "s": s, "trees": trees, "splits_per_subsample": k, "level": level,
                    "queries": queries.tolist(), "truth": [float(t) for t in truth]})
    return rows, summary


def summarize_coverage(rows: list, truth: Sequence[float]) -> dict:
    covered = [int(r[6]) for r in rows]
    z = [(float(r[2]) - truth[int(r[1])]) / math.sqrt(float(r[3])) for r in rows if float(r[3]) > 0]
    flagged = sum(1 for r in rows if float(r[3]) <= 0)
    z = np.array(z)
    moments = None
    if z.size > 3:
        moments = {"mean": float(z.mean()), "variance": float(z.var()),
                   "skewness": float(stats.skew(z)), "excess_kurtosis": float(stats.kurtosis(z))}
    per_query = {}
    for r in rows:
        per_query.setdefault(int(r[1]), []).append(int(r[6]))
    return {"coverage": math.fsum(covered) / len(covered), "rows": len(rows),
            "zero_variance_rows": flagged, "standardized_residuals": moments,
            "coverage_by_query": [math.fsum(v) / len(v) for _, v in sorted(per_query.items())]}


# --- xor ----------------------------------------------------------------------

def xor_problem(d: int) -> PopulationProblem:
    """m = (x_1 xor x_2)/2 - 1/4 with uniform features."""
    target = SparseTarget.from_function(d, (0, 1), lambda a, b: (a ^ b) / 2 - 0.25)
    return PopulationProblem(FeatureDistribution.uniform(d), target)


def xor_miss_probability(d: int, levels: int | None = None) -> float:
    """Exact P(no relevant coordinate among the first ``levels`` greedy picks)."""
    levels = math.isqrt(d) if levels is None else levels
    return math.prod(1 - 2 / (d - k) for k in range(levels))


def _xor_plan(cfg: ExperimentConfig):
    raw = cfg.raw
    grid = _require(raw, "d_grid", "config")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("d_grid must be a non-empty list")
    grid = [_int(d, "d_grid", 3) for d in grid]
    reps = _int(_require(raw, "replicates", "config"), "replicates", 1)
    mode = raw.get("mode", "population")
    if mode not in ("population", "empirical"):
        raise ConfigError("mode must be 'population' or 'empirical'")
    n = _int(raw.get("n", 0), "n", 0)
    if mode == "empirical" and n < 1:
        raise ConfigError("empirical mode needs n >= 1")
    if mode == "population" and "n" in raw:
        raise ConfigError("n only applies to empirical mode")
    return grid, reps, mode, n


def run_xor(cfg: ExperimentConfig, threads: int = 1, dry: bool = False):
    grid, reps, mode, n = _xor_plan(cfg)
    if dry:
        return None
    root = SeedSpec(cfg.seed)

    def one(job):
        d, r = job
        problem = xor_problem(d)
        seed = root.derive(f"xor-d{d}", r)
        if mode == "population":
            for level, coord in enumerate(iter_population_level_splits(problem, seed), start=1):
                if coord in (0, 1):
                    return [d, r, level]
            return [d, r, 0]
        data = sample_dataset(problem.dist, problem.target, NoiseModel(), n, seed.derive("data"))
        tree = build_tree(data, BuildConfig(LEVEL, d, False, seed.derive("tree")))
        hits = [k + 1 for k, c in enumerate(tree.split_order) if c in (0, 1)]
        return [d, r, hits[0] if hits else 0]

    rows = _map(one, [(d, r) for d in grid for r in range(reps)], threads)
    return rows, summarize_xor(rows)


def summarize_xor(rows: list) -> dict:
    by_d: dict[int, list[int]] = {}
    for d, _, level in rows:
        by_d.setdefault(int(d), []).append(int(level))
    out = []
    for d in sorted(by_d):
        k = math.isqrt(d)
        levels = by_d[d]
        miss = sum(1 for lv in levels if lv == 0 or lv > k) / len(levels)
        exact = xor_miss_probability(d, k)
        out.append({"d": d, "levels": k, "replicates": len(levels), "empirical_miss": miss,
                    "exact_miss": exact, "abs_error": abs(miss - exact),
                    "lower_bound": 1 - 4 / math.sqrt(d)})
    return {"by_d": out}


# --- diagnose / oracle table ---------------------------------------------------

def _diagnose_plan(cfg: ExperimentConfig):
    raw = cfg.raw
    problem = parse_problem(_require(raw, "problem", "config"))
    scope = raw.get("scope")
    if scope is not None:
        scope = _int(scope, "scope", 0)
        if scope > 2 * max(problem.target.r, 1):
            raise ConfigError(f"scope {scope} exceeds twice the sparsity")
    q = _int(raw.get("q", problem.target.r), "q", 0)
    if q > problem.d:
        raise ConfigError(f"q={q} exceeds d={problem.d}")
    return problem, scope, q


def run_diagnose(cfg: ExperimentConfig, threads: int = 1, dry: bool = False):
    problem, scope, q = _diagnose_plan(cfg)
    if dry:
        return None
    report = diagnostics_report(problem, scope, q)
    rows = [[report[h] for h in HEADERS["diagnose"]]]
    return rows, report


def _oracle_plan(cfg: ExperimentConfig):
    raw = cfg.raw
    problem = parse_problem(_require(raw, "problem", "config"))
    max_size = _int(raw.get("max_size", 2), "max_size", 0)
    if max_size > 4:
        raise ConfigError("max_size is capped at 4")
    coords = _coords(raw["coords"], problem.d, "coords") if "coords" in raw else list(range(problem.d))
    return problem, max_size, coords


def run_oracle_table(cfg: ExperimentConfig, threads: int = 1, dry: bool = False):
    problem, max_size, coords = _oracle_plan(cfg)
    if dry:
        return None
    rows = []
    for k in range(max_size + 1):
        for sub in itertools.combinations(coords, k):
            rows.append([[c + 1 for c in sub], vbar(problem, sub), lbar(problem, sub)])
    return rows, {"rows": len(rows), "second_moment": problem.second_moment}


_RUNNERS = {"rate": run_rate, "coverage": run_coverage, "xor": run_xor,
            "diagnose": run_diagnose, "oracle-table": run_oracle_table}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[list, dict]:
    return _RUNNERS[cfg.kind](cfg, threads=threads)


def write_outputs(kind: str, rows: list, summary: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rows.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS[kind])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    (out / "summary.json").write_text(json.dumps(_json_value(summary), indent=2, allow_nan=False) + "\n")


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
