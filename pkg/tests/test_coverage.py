import numpy as np
import pytest

from proarchiver.scheduler import (
    CoverageParams,
    InvalidParams,
    binomial_tolerance,
    coverage_probability,
    simulate_change_driven_submissions,
    simulate_coverage,
)

# 1 - 0.6**6, evaluated by hand: 0.6**6 = 0.046656
DEPLOYED_CASE = CoverageParams(100, 40, 6)
DEPLOYED_P = 0.953344


def test_analytic_examples():
    assert coverage_probability(CoverageParams(100, 100, 1)) == 1.0
    assert coverage_probability(DEPLOYED_CASE) == pytest.approx(DEPLOYED_P, abs=1e-12)
    assert coverage_probability(CoverageParams(2, 1, 2)) == 0.75


def test_analytic_matches_exhaustive_enumeration():
    # N=4, C=2, R=2: enumerate every pair of 2-subsets for link 0
    from itertools import combinations, product

    subsets = list(combinations(range(4), 2))
    hits = sum(1 for a, b in product(subsets, subsets) if 0 in a or 0 in b)
    assert coverage_probability(CoverageParams(4, 2, 2)) == pytest.approx(hits / len(subsets) ** 2)


@pytest.mark.parametrize("args", [(0, 1, 1), (10, 11, 1), (10, 5, 0), (10, -1, 2), (10.5, 2, 2)])
def test_invalid_params(args):
    with pytest.raises(InvalidParams):
        CoverageParams(*args)


def test_simulation_matches_analytic():
    sim = simulate_coverage(DEPLOYED_CASE, trials=10_000, rng_seed=1)
    assert np.all(np.abs(sim.coverage - DEPLOYED_P) <= 0.02)
    assert abs(sim.mean_submissions.mean() - 2.4) <= 0.1
    assert np.all(np.abs(sim.mean_submissions - 2.4) <= 0.1)


def test_fairness_spread():
    sim = simulate_coverage(DEPLOYED_CASE, trials=10_000, rng_seed=2)
    assert sim.spread < 0.03


def test_fixed_order_starves_the_tail():
    sim = simulate_coverage(DEPLOYED_CASE, trials=10_000, rng_seed=3, shuffled=False)
    assert np.all(sim.coverage[:40] == 1.0)
    assert np.all(sim.coverage[40:] == 0.0)


def test_trivial_case():
    sim = simulate_coverage(CoverageParams(1, 1, 1), trials=7, rng_seed=0)
    assert sim.coverage.tolist() == [1.0]


@pytest.mark.parametrize("params", [CoverageParams(10, 3, 2), CoverageParams(50, 10, 4), CoverageParams(7, 7, 1)])
def test_within_three_sigma(params):
    trials = 5_000
    sim = simulate_coverage(params, trials, rng_seed=11)
    p = coverage_probability(params)
    # mean over links averages out per-link noise; each link alone is within 4 sigma
    assert abs(sim.coverage.mean() - p) <= binomial_tolerance(p, trials) + 1e-12
    assert np.all(np.abs(sim.coverage - p) <= binomial_tolerance(p, trials, 4.5) + 1e-12)


def test_invalid_trials():
    with pytest.raises(InvalidParams):
        simulate_coverage(DEPLOYED_CASE, 0, 1)


def test_change_driven_submissions_scale_with_mutation_rate():
    per_pass = simulate_change_driven_submissions(100, 0.05, passes=200, rng_seed=5, capacity=40)
    assert abs(per_pass - 5.0) < 0.5
    assert per_pass < 40
