from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jointads.environments import equal_revenue_dist
from jointads.mechanism import Mechanism
from jointads.solver import (
    DiscreteDistribution,
    best_mechanism,
    best_mechanism_fast,
    brute_force_best,
    edge_weight,
    expected_revenue,
    grid_graph,
    path_weight,
    solve_samples,
    staircase,
    support_graph,
)

from conftest import distributions, dyadic_units, mechanisms


@given(distributions(max_atoms=6))
def test_longest_path_matches_brute_force(dist):
    mech, val = best_mechanism(dist)
    assert val == brute_force_best(dist)[1]
    assert expected_revenue(mech, dist) == val


@given(mechanisms(), distributions())
def test_decomposition_matches_direct_revenue(mech, dist):
    assert path_weight(mech, dist) == expected_revenue(mech, dist)


@given(distributions(max_atoms=8, coords=dyadic_units()))
def test_float_solver_matches_exact(dist):
    mech, val = best_mechanism(dist)
    v1 = np.array([float(v[0]) for v, _ in dist.atoms])
    v2 = np.array([float(v[1]) for v, _ in dist.atoms])
    w = np.array([float(p) for _, p in dist.atoms])
    fmech, fval = best_mechanism_fast(v1, v2, w)
    assert fval == pytest.approx(float(val), abs=1e-12)
    assert float(expected_revenue(fmech, dist)) == pytest.approx(float(val), abs=1e-12)


@given(distributions(max_atoms=6))
def test_optimum_lies_on_the_support_graph(dist):
    mech, _ = best_mechanism(dist)
    graph = support_graph(dist)
    assert set(mech.nodes) <= set(graph.nodes)
    assert set(mech.edges()) <= set(graph.edges)


def test_example_instance_optimum_frozen():
    # brute force over all 2^3 atom subsets gives 3/8
    dist = equal_revenue_dist(3, F(1, 6))
    mech, val = best_mechanism(dist)
    assert val == F(3, 8)
    assert mech.key() == "1/12,1;1/12,1/2;1/8,1/2;1/8,1/4;7/48,1/4;7/48,1/8;1,1/8"


def test_example_instance_small_delta_frozen():
    assert best_mechanism(equal_revenue_dist(3, F(1, 10 ** 4)))[1] == F(10003, 40000)
    assert best_mechanism(equal_revenue_dist(5, F(1, 10 ** 4)))[1] == F(30029, 320000)


def test_point_mass_extracts_full_surplus():
    dist = DiscreteDistribution((((F(1, 2), F(1, 2)), F(1)),))
    mech, val = best_mechanism(dist)
    assert val == 1
    assert mech.revenue((F(1, 2), F(1, 2))) == 1


def test_ties_favour_the_smaller_region():
    dist = DiscreteDistribution((((F(1, 2), F(1, 2)), F(1)),))
    assert best_mechanism(dist)[0] == Mechanism.posted_price(F(1, 2), F(1, 2))
    fast, _ = best_mechanism_fast(np.array([0.5]), np.array([0.5]))
    assert fast == Mechanism.posted_price(F(1, 2), F(1, 2))


def test_single_column_support():
    # every atom sits left of x = 1/6, as when delta is at most the grid step
    dist = equal_revenue_dist(3, F(1, 6))
    assert all(v[0] < F(1, 6) for v, _ in dist.atoms)


def test_edge_weight_of_vertical_edge():
    dist = DiscreteDistribution((((F(1, 2), F(1, 4)), F(1, 2)), ((F(1, 4), F(1, 4)), F(1, 2))))
    assert edge_weight(((F(1, 3), F(1, 2)), (F(1, 3), 0)), dist) == F(1, 3) * F(1, 2)


def test_grid_graph_counts():
    g = grid_graph([0, F(1, 2), 1], [0, F(1, 2), 1])
    assert len(g.nodes) == 9 and len(g.edges) == 12


def test_staircase_minimal_region():
    m = staircase([(F(1, 2), F(1, 2)), (F(3, 4), F(1, 4)), (F(3, 4), F(3, 4))])
    assert m.nodes == ((F(1, 2), 1), (F(1, 2), F(1, 2)), (F(3, 4), F(1, 2)), (F(3, 4), F(1, 4)), (1, F(1, 4)))
    assert staircase([]) is None


def test_parse_and_dump_roundtrip():
    text = "# comment\n1/2 0.25 1/3\n0.75, 1 2/3  # trailing\n\n"
    dist = DiscreteDistribution.parse(text)
    assert dist.atoms == (((F(1, 2), F(1, 4)), F(1, 3)), ((F(3, 4), F(1)), F(2, 3)))
    assert DiscreteDistribution.parse(dist.dump()) == dist


@pytest.mark.parametrize("text", [
    "",
    "1/2 1/2",
    "1/2 1/2 1/2",
    "1/2 1/2 1/2\n1/2 1/2 1/2",
    "3/2 1/2 1",
    "1/2 1/2 -1\n1/4 1/4 2",
    "a b c",
    "1/0 1 1",
])
def test_parse_rejects_bad_input(text):
    with pytest.raises((ValueError, ZeroDivisionError)):
        DiscreteDistribution.parse(text)


def test_brute_force_capped():
    dist = DiscreteDistribution.from_weights(((F(i, 13), F(13 - i, 13)), 1) for i in range(13))
    with pytest.raises(ValueError):
        brute_force_best(dist)


def test_empirical_distribution_merges_duplicates():
    dist = DiscreteDistribution.from_samples([(0.5, 0.5), (0.5, 0.5), (0.25, 1)])
    assert dict(dist.atoms)[(F(1, 2), F(1, 2))] == F(2, 3)


def test_solve_samples_switches_to_float_solver():
    rng = np.random.default_rng(0)
    vals = rng.random((400, 2))
    mech, val = solve_samples(vals, exact_cap=200)
    replay = mech.revenue_many(vals[:, 0], vals[:, 1]).mean()
    assert val == pytest.approx(replay, abs=1e-12)
    few = np.repeat([[0.5, 0.5], [0.25, 1.0]], [3, 1], axis=0)
    mech, val = solve_samples(few)
    assert val == float(best_mechanism(DiscreteDistribution.from_samples(few.tolist()))[1])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
def test_float_solver_beats_every_posted_price_on_samples(vals):
    arr = np.array(vals, dtype=float)
    mech, val = best_mechanism_fast(arr[:, 0], arr[:, 1])
    for p1 in np.unique(np.append(arr[:, 0], [0.0, 1.0])):
        for p2 in np.unique(np.append(arr[:, 1], [0.0, 1.0])):
            m = Mechanism.posted_price(F(float(p1)), F(float(p2)))
            assert m.revenue_many(arr[:, 0], arr[:, 1]).mean() <= val + 1e-12
