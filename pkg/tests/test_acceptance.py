"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (see the ``criterion`` fixture) before
asserting, so the terminal summary lists every criterion even when some fail.
Run with ``pytest tests/test_acceptance.py -v``; add ``-s`` to see the lines live.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

import bruteforce as bf
from binarycart import (
    Cell,
    Dataset,
    FeatureDistribution,
    Partition,
    PopulationProblem,
    SparseTarget,
    cond_moments,
    diagnostics_report,
    empirical_v,
    empirical_v_leaf,
    lbar,
    lbar_leaf,
    lbar_partition,
    partition_value_diameter,
    population_breiman,
    population_level_split,
    sample_dataset,
    value_diameter,
    vbar,
    vbar_leaf,
)
from binarycart.cli import main
from binarycart.experiments import ExperimentConfig, run_experiment, xor_miss_probability, xor_problem
from binarycart.oracle import enumerate_points, vbar_partition
from conftest import random_problem

SEED = 0


def random_partition(rng, d, splits):
    part = Partition.trivial(d)
    for _ in range(splits):
        cell = list(part)[int(rng.integers(len(part)))]
        free = [c for c in range(d) if c not in cell.fixed]
        if free:
            part = part.split(cell, int(rng.choice(free)))
    return part


def run(cfg, threads=1):
    t0 = time.perf_counter()
    rows, summary = run_experiment(ExperimentConfig.from_dict(cfg), threads=threads)
    return rows, summary, time.perf_counter() - t0


def one_sparse_problem(d, epsilon):
    return {"d": d, "distribution": {"kind": "product", "p": 0.5},
            "target": {"relevant": [1], "table": [-0.5, 0.5]},
            "noise": {"kind": "uniform", "epsilon": epsilon}}


def test_oracle_matches_bruteforce(criterion):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for k in range(50):
        d = int(rng.integers(4, 11))
        pb = random_problem(rng, d, int(rng.integers(0, 4)), correlated=k % 2 == 1, zero_mass=k % 4 == 3)
        law = bf.point_law(pb.dist, pb.target)
        for size in range(5):
            for s in itertools.combinations(range(d), size):
                worst = max(worst, abs(vbar(pb, s) - bf.vbar(law, s)))
                checked += 1
        for _ in range(20):
            part = random_partition(rng, d, int(rng.integers(0, 8)))
            cells = [c.constraints for c in part]
            worst = max(worst, abs(lbar_partition(pb, part) - bf.partition_lbar(law, cells)))
            brute_max = max(bf.cond_mean(law, c)[0] * bf.diameter(law, c) for c in cells)
            worst = max(worst, abs(partition_value_diameter(pb, part) - brute_max))
            for cell in part:
                worst = max(worst, abs(value_diameter(pb, cell) - bf.diameter(law, cell.constraints)))
                if bf.cond_mean(law, cell.constraints)[1] is None:
                    continue
                free = [c for c in range(d) if c not in cell.fixed]
                coords = [int(c) for c in rng.choice(free, min(len(free), int(rng.integers(0, 3))), replace=False)]
                got = vbar_leaf(pb, cell, coords)
                worst = max(worst, abs(got - bf.vbar_leaf(law, cell.constraints, coords)))
                checked += 3
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 30
    criterion(1, "oracle equals full enumeration", ok,
              f"{checked} values, max error {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_population_algorithms_recover_sparse_targets(criterion):
    rng = np.random.default_rng(SEED)
    d = 12
    t0 = time.perf_counter()
    failures, worst = 0, 0.0
    points = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.uint8)
    for k in range(100):
        r = 1 + k % 3
        pb = random_problem(rng, d, r)
        truth = pb.target(points)
        level = population_level_split(pb, r, tie_seed=k).predict(points)
        cellwise = population_breiman(pb, 2 ** r, tie_seed=k).predict(points)
        err = max(np.max(np.abs(level - truth)), np.max(np.abs(cellwise - truth)))
        worst = max(worst, float(err))
        failures += bool(err > 1e-12)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 60
    criterion(2, "population level split and cell-wise greedy recover m", ok,
              f"{failures}/100 failures, max error {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_empirical_criteria_are_exact(criterion):
    rng = np.random.default_rng(SEED)
    mismatches, checked = 0, 0
    for _ in range(20):
        n = int(rng.integers(1, 65))
        data = Dataset.from_bits(rng.integers(0, 2, (n, 4)), rng.uniform(-1, 1, n))
        bits, y = data.bits.tolist(), data.y.tolist()
        for size in range(5):
            for s in itertools.combinations(range(4), size):
                mismatches += empirical_v(s, data) != bf.empirical_v_loop(bits, y, s)
                checked += 1
        for pattern in itertools.product((None, 0, 1), repeat=4):
            cons = tuple((j, b) for j, b in enumerate(pattern) if b is not None)
            if not any(all(row[j] == b for j, b in cons) for row in bits):
                continue
            for i in [c for c in range(4) if pattern[c] is None]:
                got = empirical_v_leaf(Cell(4, cons), i, data)
                mismatches += got != bf.empirical_v_leaf_loop(bits, y, cons, i)
                checked += 1
    ok = mismatches == 0
    criterion(3, "empirical criteria equal per-definition loops", ok, f"{mismatches}/{checked} mismatches")
    assert ok


def test_partition_decompositions(criterion):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for k in range(100):
        d = int(rng.integers(3, 11))
        pb = random_problem(rng, d, int(rng.integers(0, 4)), correlated=k % 2 == 1, zero_mass=k % 4 == 3)
        part = random_partition(rng, d, int(rng.integers(0, 10)))
        live = [(c, cond_moments(pb, c)) for c in part]
        live = [(c, m) for c, m in live if m.mean is not None]
        v_sum = math.fsum(m.prob * vbar_leaf(pb, c) for c, m in live)
        l_sum = math.fsum(m.prob * lbar_leaf(pb, c) for c, m in live)
        worst = max(worst,
                    abs(vbar_partition(pb, part) - v_sum),
                    abs(lbar_partition(pb, part) - l_sum),
                    abs(vbar_partition(pb, part) + lbar_partition(pb, part) - pb.second_moment))
        # a split changes the partition value by the cell's weighted leaf gain
        cell, mom = live[int(rng.integers(len(live)))]
        free = [c for c in range(d) if c not in cell.fixed]
        if free:
            i = int(rng.choice(free))
            gain = vbar_partition(pb, part.split(cell, i)) - vbar_partition(pb, part)
            worst = max(worst, abs(gain - mom.prob * (vbar_leaf(pb, cell, [i]) - vbar_leaf(pb, cell))))
    ok = worst <= 1e-10
    criterion(4, "partition decomposition identities", ok, f"max error {worst:.1e}")
    assert ok


def test_empirical_value_concentrates(criterion):
    d, q, t, n, trials = 8, 3, 3, 10_000, 200
    bound = 10 * math.sqrt(2 ** q * (q * math.log(d * q) + t) / n)
    rng = np.random.default_rng(SEED)
    subsets = [s for k in range(q + 1) for s in itertools.combinations(range(d), k)]
    t0 = time.perf_counter()
    violations, worst = 0, 0.0
    for trial in range(trials):
        pb = random_problem(rng, d, 2)
        pb = PopulationProblem(FeatureDistribution.uniform(d), pb.target, pb.noise)
        data = sample_dataset(pb.dist, pb.target, pb.noise, n, seed=trial)
        dev = max(abs(empirical_v(s, data) - vbar(pb, s)) for s in subsets)
        worst = max(worst, dev)
        violations += dev > bound
    elapsed = time.perf_counter() - t0
    ok = violations <= 0.05 * trials and elapsed < 120
    criterion(5, "empirical value within the plug-in deviation bound", ok,
              f"bound {bound:.3f}, {violations}/{trials} violations, largest deviation {worst:.4f}, {elapsed:.0f}s")
    assert ok


def test_strong_sparsity_rate(criterion):
    base = {"experiment": "rate", "seed": SEED, "problem": one_sparse_problem(50, 0.25),
            "n_grid": [2 ** k for k in range(10, 17)], "replicates": 20}
    _, level, t_level = run({**base, "algorithm": "level", "budget": 1})
    _, cellwise, t_cell = run({**base, "algorithm": "breiman", "budget": 2})
    ok = all(-1.25 <= s["slope"] <= -0.75 for s in (level, cellwise)) and max(t_level, t_cell) < 300
    criterion(6, "strong-sparsity rate slope in [-1.25, -0.75]", ok,
              f"level {level['slope']:.3f} ({t_level:.0f}s), cell-wise {cellwise['slope']:.3f} ({t_cell:.0f}s)")
    assert ok


def test_weak_relevance_rate(criterion):
    # two relevant coordinates whose marginal gains sit below the selection
    # noise floor across the grid, with a finite submodularity constant
    a = 0.035
    b = 1.8 * a
    table = [a * (c & 1) + a * (c >> 1) - b * (c & 1) * (c >> 1) for c in range(4)]
    mean = sum(table) / 4
    problem = {"d": 50, "distribution": {"kind": "product", "p": 0.5},
               "target": {"relevant": [1, 2], "table": [v - mean for v in table]},
               "noise": {"kind": "uniform", "epsilon": 0.5}}
    _, summary, elapsed = run({"experiment": "rate", "seed": SEED, "problem": problem, "algorithm": "level",
                               "budget": 2, "n_grid": [2 ** k for k in range(10, 17)], "replicates": 20})
    ok = -0.75 <= summary["slope"] <= -0.3 and elapsed < 300
    criterion(7, "weak-relevance rate slope in [-0.75, -0.3]", ok,
              f"slope {summary['slope']:.3f} +- {summary['slope_se']:.3f}, {elapsed:.0f}s")
    assert ok


def test_honest_forest_consistency(criterion):
    cfg = {"experiment": "rate", "seed": SEED, "problem": one_sparse_problem(10, 0.5), "algorithm": "forest",
           "forest": {"variant": "level", "s_rule": "fixed:64", "trees_per_n": 0.25},
           "n_grid": [2 ** k for k in range(12, 16)], "replicates": 10}
    _, summary, elapsed = run(cfg, threads=8)
    mse = summary["mean_mse"]
    ratios = [mse[k] / mse[k + 1] for k in range(len(mse) - 1)]
    per_doubling = (mse[0] / mse[-1]) ** (1 / len(ratios))
    ok = per_doubling >= 1.6 and elapsed < 600
    criterion(8, "honest forest MSE drops by >= 1.6 per doubling of n", ok,
              f"average factor {per_doubling:.2f}, steps {', '.join(f'{r:.2f}' for r in ratios)}, {elapsed:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def coverage_run():
    cfg = {"experiment": "coverage", "seed": SEED, "problem": one_sparse_problem(10, 0.5), "algorithm": "level",
           "n": 4096, "s_rule": "fixed:64", "trees": 2000, "splits_per_subsample": 4, "level": 0.95,
           "n_queries": 5, "replicates": 200}
    return run(cfg, threads=8)


def test_confidence_interval_coverage(criterion, coverage_run):
    rows, summary, elapsed = coverage_run
    z = summary["standardized_residuals"]
    ok = (0.85 <= summary["coverage"] <= 0.99 and abs(z["skewness"]) < 0.5
          and abs(z["excess_kurtosis"]) < 1 and elapsed < 1200)
    criterion(9, "95% interval coverage and residual shape", ok,
              f"coverage {summary['coverage']:.3f}, skewness {z['skewness']:.3f}, "
              f"excess kurtosis {z['excess_kurtosis']:.3f}, {elapsed:.0f}s")
    assert ok


def test_jackknife_tracks_sampling_variance(coverage_run):
    rows, summary, _ = coverage_run
    preds = np.array([r[2] for r in rows]).reshape(-1, 5)
    ij = np.array([r[3] for r in rows]).reshape(-1, 5)
    ratio = ij.mean(axis=0) / preds.var(axis=0, ddof=1)
    assert np.all((ratio > 1 / 3) & (ratio < 3)), ratio


def test_xor_needs_deep_trees(criterion):
    grid = [16, 64, 256]
    _, summary, elapsed = run({"experiment": "xor", "seed": SEED, "d_grid": grid, "replicates": 10_000})
    by_d = summary["by_d"]
    close = all(e["abs_error"] <= 0.02 for e in by_d)
    exact = [xor_miss_probability(d) for d in grid]
    rising = all(u["empirical_miss"] <= v["empirical_miss"] for u, v in zip(by_d, by_d[1:]))
    above = all(e["empirical_miss"] >= e["lower_bound"] for e in by_d if e["d"] >= 64)
    ok = close and rising and above and elapsed < 180
    criterion(10, "xor miss probability matches the exact product", ok,
              ", ".join(f"d={e['d']}: {e['empirical_miss']:.4f} vs {x:.4f}" for e, x in zip(by_d, exact))
              + f", {elapsed:.0f}s")
    assert ok


def test_diagnostics(criterion):
    a = 0.4
    table = [a * (c & 1) + a * (c >> 1) - a * (c & 1) * (c >> 1) for c in range(4)]
    mean = sum(table) / 4
    inter = PopulationProblem(FeatureDistribution.uniform(6),
                              SparseTarget(6, (0, 1), np.array(table) - mean))
    canon = PopulationProblem(FeatureDistribution.uniform(6), SparseTarget(6, (0,), np.array([-0.5, 0.5])))
    r_inter = diagnostics_report(inter)
    r_xor = diagnostics_report(xor_problem(6))
    r_canon = diagnostics_report(canon)
    ok = (math.isclose(r_inter["C_submodular"], 2.0, rel_tol=1e-9)
          and math.isinf(r_xor["C_submodular"]) and r_xor["beta_split"] <= 0 and r_xor["warnings"]
          and math.isclose(r_canon["beta_split"], 0.25) and math.isclose(r_canon["zeta"], 1.0))
    criterion(11, "diagnostic searchers", bool(ok),
              f"interaction C={r_inter['C_submodular']:.6f}, xor C={r_xor['C_submodular']}, "
              f"xor beta={r_xor['beta_split']:.3g}, canonical beta={r_canon['beta_split']}, zeta={r_canon['zeta']}")
    assert ok


SMALL = one_sparse_problem(8, 0.25)
DETERMINISM = {
    "rate": {"problem": SMALL, "algorithm": "breiman", "budget": 3, "honest": True,
             "n_grid": [64, 128], "replicates": 4},
    "rate-forest": {"problem": SMALL, "algorithm": "forest", "n_grid": [128, 256], "replicates": 3,
                    "forest": {"variant": "breiman", "s_rule": "pow:0.45", "trees": 20,
                               "splits_per_subsample": 2}},
    "coverage": {"problem": SMALL, "n": 400, "s_rule": "fixed:16", "trees": 40, "replicates": 6, "n_queries": 3},
    "xor": {"d_grid": [9, 25], "replicates": 30},
    "xor-empirical": {"d_grid": [9], "replicates": 6, "mode": "empirical", "n": 256},
    "diagnose": {"problem": SMALL},
    "oracle-table": {"problem": SMALL, "max_size": 2},
}


def test_rows_identical_across_thread_counts(criterion, tmp_path):
    differing = []
    for name, body in DETERMINISM.items():
        kind = name.split("-")[0] if name != "oracle-table" else name
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps({"experiment": kind, "seed": SEED, **body}))
        outputs = []
        for threads in (1, 4, 8):
            out = tmp_path / f"{name}-{threads}"
            assert main([kind, "--config", str(path), "--out", str(out), "--threads", str(threads)]) == 0
            outputs.append((out / "rows.csv").read_bytes())
        if len(set(outputs)) != 1:
            differing.append(name)
    ok = not differing
    criterion(12, "rows.csv byte-identical for 1, 4 and 8 threads", ok,
              f"{len(DETERMINISM)} configurations" + (f", differing: {differing}" if differing else ""))
    assert ok
