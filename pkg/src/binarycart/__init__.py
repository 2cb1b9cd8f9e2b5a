"""Greedy regression trees and honest forests for sparse targets on binary features."""

from .data import (
    Dataset,
    FeatureDistribution,
    NoiseModel,
    SparseTarget,
    eval_target,
    pack_bits,
    read_dataset_csv,
    sample_dataset,
    split_honest_halves,
    unpack_bits,
    write_dataset_csv,
)
from .forest import (
    Forest,
    ForestConfig,
    confidence_interval,
    expected_partition_diameter,
    fit_forest,
    forest_population_mse,
    ij_variance,
    load_forest,
    predict_forest,
    save_forest,
)
from .oracle import (
    Cell,
    OracleCapError,
    Partition,
    PopulationProblem,
    ZeroMassError,
    cond_moments,
    density_lower_bound,
    diagnostics_report,
    diminishing_returns_constant,
    estimator_population_mse,
    lbar,
    lbar_leaf,
    lbar_partition,
    leaf_relevant_set,
    partition_value_diameter,
    population_breiman,
    population_level_split,
    relevant_set,
    strong_sparsity_margin,
    submodularity_constant,
    value_diameter,
    vbar,
    vbar_leaf,
)
from .rng import SeedSpec
from .trees import (
    BuildConfig,
    Tree,
    build_breiman,
    build_level_split,
    build_tree,
    empirical_l,
    empirical_v,
    empirical_v_leaf,
    estimate_with_splits,
    tree_partition,
)

__version__ = "0.1.0"
