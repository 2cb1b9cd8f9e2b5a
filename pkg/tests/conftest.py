import numpy as np
import pytest

from binarycart import FeatureDistribution, NoiseModel, PopulationProblem, SparseTarget


def random_problem(rng: np.random.Generator, d: int, r: int, correlated: bool = False,
                   zero_mass: bool = False) -> PopulationProblem:
    """Random r-sparse target over product or block-correlated features."""
    p = rng.uniform(0.15, 0.85, size=d)
    if correlated:
        size = int(rng.integers(2, min(4, d) + 1))
        block = tuple(int(c) for c in rng.choice(d, size=size, replace=False))
        table = rng.dirichlet(np.ones(1 << size))
        if zero_mass:
            table[rng.integers(table.size)] = 0.0
            table /= table.sum()
        dist = FeatureDistribution.block_correlated(d, block, table, p)
    else:
        dist = FeatureDistribution.product(p)
    relevant = tuple(int(c) for c in rng.choice(d, size=r, replace=False))
    target = SparseTarget(d, relevant, rng.uniform(-0.5, 0.5, size=1 << r))
    return PopulationProblem(dist, target, NoiseModel("uniform", 0.25))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def one_sparse():
    """m = x_1 - 1/2 on ten uniform features with uniform noise."""
    d = 10
    target = SparseTarget(d, (0,), np.array([-0.5, 0.5]))
    return PopulationProblem(FeatureDistribution.uniform(d), target, NoiseModel("uniform", 0.5))


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; returns the verdict."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
