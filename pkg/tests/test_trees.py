import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bruteforce as bf
from binarycart import (
    BuildConfig,
    Cell,
    Dataset,
    FeatureDistribution,
    NoiseModel,
    SparseTarget,
    Tree,
    build_breiman,
    build_level_split,
    build_tree,
    empirical_l,
    empirical_v,
    empirical_v_leaf,
    estimate_with_splits,
    estimator_population_mse,
    sample_dataset,
    split_honest_halves,
    tree_partition,
)
from binarycart.experiments import xor_problem
from binarycart.trees import BREIMAN, LEVEL

XOR_DATA = Dataset.from_bits([[0, 0], [0, 1], [1, 0], [1, 1]], [0.0, 1.0, 1.0, 0.0])


def one_sparse_data(n, d=10, noise=NoiseModel("uniform", 0.5), seed=0):
    target = SparseTarget(d, (0,), np.array([-0.5, 0.5]))
    return sample_dataset(FeatureDistribution.uniform(d), target, noise, n, seed)


def random_data(rng, n, d):
    return Dataset.from_bits(rng.integers(0, 2, (n, d)), rng.uniform(-1, 1, n))


# empirical criteria


def test_empirical_v_hand_example():
    assert empirical_v([], XOR_DATA) == 0.25
    assert empirical_v([0], XOR_DATA) == 0.25
    assert empirical_v([0, 1], XOR_DATA) == 0.5
    assert empirical_l([0, 1], XOR_DATA) == 0.0
    assert empirical_v_leaf(Cell.root(2), 1, XOR_DATA) == 0.25
    assert empirical_v_leaf(Cell.from_mapping(2, {0: 0}), 1, XOR_DATA) == 0.5
    with pytest.raises(ValueError):
        empirical_v([], Dataset.from_bits(np.zeros((0, 2)), []))


def test_empirical_criteria_match_definition(rng):
    for _ in range(5):
        data = random_data(rng, int(rng.integers(1, 40)), 4)
        bits, y = data.bits.tolist(), data.y.tolist()
        for k in range(5):
            for s in itertools.combinations(range(4), k):
                assert empirical_v(s, data) == bf.empirical_v_loop(bits, y, s)
        for j in range(4):
            for coord in (None, 0, 1, 2, 3):
                cons = ((j, 1),)
                if coord == j or not any(b[j] == 1 for b in bits):
                    continue
                got = empirical_v_leaf(Cell(4, cons), coord, data)
                assert got == bf.empirical_v_leaf_loop(bits, y, cons, coord)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_empirical_v_monotone_and_jensen(seed):
    rng = np.random.default_rng(seed)
    data = random_data(rng, int(rng.integers(2, 50)), 5)
    s = list(rng.permutation(5)[: rng.integers(0, 5)])
    free = [c for c in range(5) if c not in s]
    for i in free:
        assert empirical_v(s, data) <= empirical_v(s + [i], data) + 1e-12
    total = float(np.mean(data.y ** 2))
    assert empirical_l(s, data) == pytest.approx(total - empirical_v(s, data), abs=1e-12)
    g = float(np.mean(data.y))
    for i in range(5):
        assert empirical_v_leaf(Cell.root(5), i, data) >= g * g - 1e-12


def test_estimate_with_splits_skips_empty_filters():
    bits = [[0, 0], [0, 1], [0, 1]]
    data = Dataset.from_bits(bits, [1.0, 2.0, 4.0])
    assert estimate_with_splits([1, 1], [0, 1], data) == 3.0
    assert estimate_with_splits([0, 0], [], data) == pytest.approx(7 / 3)
    assert estimate_with_splits([0, 0], [0, 1], data) == 1.0


# level split trees


def test_level_split_finds_relevant_coordinate_noiselessly():
    data = one_sparse_data(64, noise=NoiseModel())
    tree = build_level_split(data, BuildConfig(LEVEL, 1, False, 0))
    assert tree.split_order == (0,)
    assert sorted(tree.leaf_values()) == [-0.5, 0.5]


def test_identical_rows_give_single_leaf():
    data = Dataset.from_bits([[1, 0, 1], [1, 0, 1]], [0.2, 0.4])
    for variant in (LEVEL, BREIMAN):
        for budget in (None, 2):
            tree = build_tree(data, BuildConfig(variant, budget, False, 0))
            assert tree.n_leaves == 1
            assert tree.predict([0, 0, 0]) == pytest.approx(0.3)


def test_level_split_matches_estimate_with_splits(rng):
    data = one_sparse_data(300, d=8, seed=3)
    tree = build_level_split(data, BuildConfig(LEVEL, 4, False, 1))
    queries = rng.integers(0, 2, (1000, 8)).astype(np.uint8)
    preds = tree.predict(queries)
    for x, p in zip(queries, preds):
        assert p == estimate_with_splits(x, tree.split_order, data)


def test_prediction_ignores_unsplit_coordinates(rng):
    data = one_sparse_data(200, d=8, seed=4)
    tree = build_level_split(data, BuildConfig(LEVEL, 2, False, 0))
    x = rng.integers(0, 2, (50, 8)).astype(np.uint8)
    flipped = x.copy()
    free = [c for c in range(8) if c not in tree.split_order]
    flipped[:, free] ^= 1
    assert np.array_equal(tree.predict(x), tree.predict(flipped))


def test_level_split_argmax_is_greedy():
    data = one_sparse_data(400, d=6, seed=5)
    tree = build_level_split(data, BuildConfig(LEVEL, 3, False, 0))
    chosen = []
    for c in tree.split_order:
        values = {i: empirical_v(chosen + [i], data) for i in range(6) if i not in chosen}
        assert values[c] == max(values.values())
        chosen.append(c)


def test_strong_sparsity_selection_frequency():
    hits = sum(build_level_split(one_sparse_data(2**12, d=50, noise=NoiseModel("uniform", 0.25), seed=s),
                                 BuildConfig(LEVEL, 1, False, s)).split_order[0] == 0 for s in range(100))
    assert hits >= 99


def test_budget_beyond_d_rejected():
    with pytest.raises(ValueError):
        build_level_split(XOR_DATA, BuildConfig(LEVEL, 3))
    with pytest.raises(ValueError):
        BuildConfig(BREIMAN, 0)
    with pytest.raises(ValueError):
        BuildConfig("random")


# honesty and gating


@pytest.mark.parametrize("variant", [LEVEL, BREIMAN])
def test_honest_structure_ignores_estimation_labels(variant):
    data = one_sparse_data(256, d=8, seed=6)
    cfg = BuildConfig(variant, None, True, 11)
    base = build_tree(data, cfg)
    structure, estimation = split_honest_halves(data, cfg.seed.derive("honest"))
    rng = np.random.default_rng(0)
    # rebuild the same sample with shuffled estimation-half labels
    est_positions = np.flatnonzero(np.isin(data.y, estimation.y))
    for _ in range(20):
        y = data.y.copy()
        y[est_positions] = rng.permutation(y[est_positions])
        other = build_tree(Dataset(data.d, data.words, y), cfg)
        assert other.structure() == base.structure()
    assert structure.n == 128


@pytest.mark.parametrize("variant", [LEVEL, BREIMAN])
def test_gating_invariant(variant, rng):
    for seed in range(10):
        data = random_data(rng, int(rng.integers(2, 60)), 6)
        for budget in (None, 3):
            tree = build_tree(data, BuildConfig(variant, budget, True, seed))
            n_est = data.n - (data.n + 1) // 2
            leaves = tree.leaves()
            assert sum(leaf.n_estimation for _, leaf in leaves) == n_est
            if n_est:
                assert all(leaf.n_estimation >= 1 for _, leaf in leaves)
            for k, path in tree.preorder():
                assert len({c for c, _ in path}) == len(path)


def test_fully_grown_leaves_are_small():
    data = one_sparse_data(2000, d=12, seed=7)
    for variant in (LEVEL, BREIMAN):
        tree = build_tree(data, BuildConfig(variant, None, True, 0))
        sizes = [leaf.n_gating for _, leaf in tree.leaves()]
        assert max(sizes) <= 3 or variant == LEVEL
        assert np.mean(sizes) <= 4


def test_fully_grown_level_split_stops_when_no_cell_can_split():
    data = one_sparse_data(2000, d=12, seed=8)
    tree = build_tree(data, BuildConfig(LEVEL, None, False, 0))
    for cell, leaf in tree.leaves():
        if leaf.n_gating >= 4:
            mask = cell.contains(data.bits)
            rows = data.bits[mask]
            assert len(tree.split_order) == 12 or (rows == rows[0]).all()


# Breiman trees


def test_breiman_budget_counts_leaves():
    data = one_sparse_data(500, d=6, seed=9)
    for t in (1, 2, 5, 8):
        assert build_breiman(data, BuildConfig(BREIMAN, t, False, 0)).n_leaves == t
    single = build_breiman(data, BuildConfig(BREIMAN, 1, False, 0))
    assert single.predict(np.zeros(6, dtype=np.uint8)) == pytest.approx(float(data.y.mean()))


def test_breiman_recovers_xor_after_a_relevant_root_split():
    # every population root gain is zero, so sampling noise picks the root;
    # when it lands on a relevant coordinate both children find the other one
    pb = xor_problem(4)
    relevant_roots = 0
    for seed in range(12):
        data = sample_dataset(pb.dist, pb.target, NoiseModel(), 2**14, seed=seed)
        tree = build_breiman(data, BuildConfig(BREIMAN, 4, False, seed))
        if tree.coord[0] not in (0, 1):
            continue
        relevant_roots += 1
        assert estimator_population_mse(pb, tree_partition(tree), tree.leaf_values()) < 1e-3
    assert relevant_roots >= 2


def test_breiman_argmax_matches_leaf_criterion():
    data = one_sparse_data(300, d=5, seed=10)
    tree = build_breiman(data, BuildConfig(BREIMAN, 4, False, 0))
    for k, path in tree.preorder():
        c = int(tree.coord[k])
        if c < 0:
            continue
        cell = Cell(5, path)
        vals = {i: empirical_v_leaf(cell, i, data) for i in range(5) if i not in cell.fixed}
        assert vals[c] == pytest.approx(max(vals.values()), rel=1e-12)


def test_partition_of_complete_tree():
    data = one_sparse_data(400, d=6, seed=11)
    tree = build_level_split(data, BuildConfig(LEVEL, 2, False, 0))
    part = tree_partition(tree)
    assert len(part) == 4
    assert all(len(c.fixed) == 2 for c in part)


# serialization and determinism


@pytest.mark.parametrize("variant", [LEVEL, BREIMAN])
def test_json_roundtrip_is_exact(variant):
    data = one_sparse_data(300, d=7, seed=12)
    tree = build_tree(data, BuildConfig(variant, None, True, 3))
    back = Tree.from_json(tree.to_json())
    assert back.same_as(tree)
    q = np.random.default_rng(0).integers(0, 2, (100, 7)).astype(np.uint8)
    assert np.array_equal(back.predict(q), tree.predict(q))
    assert tree.to_dict()["nodes"][0].get("coord", 0) >= 1 or tree.n_leaves == 1


def test_same_seed_same_tree():
    data = one_sparse_data(500, d=9, seed=13)
    for variant in (LEVEL, BREIMAN):
        a = build_tree(data, BuildConfig(variant, None, True, 5))
        b = build_tree(data, BuildConfig(variant, None, True, 5))
        assert a.same_as(b)


def test_tie_breaking_uses_the_seed():
    pb = xor_problem(12)
    data = Dataset.from_bits(np.array(list(itertools.product((0, 1), repeat=12)), dtype=np.uint8),
                             pb.target(np.array(list(itertools.product((0, 1), repeat=12)), dtype=np.uint8)))
    firsts = {build_level_split(data, BuildConfig(LEVEL, 1, False, s)).split_order[0] for s in range(60)}
    assert len(firsts) > 5
