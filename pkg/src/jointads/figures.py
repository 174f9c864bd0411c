"""Polyline data for the reference drawings: each figure is a list of segments."""

from __future__ import annotations

from fractions import Fraction

from .environments import diagonal_point, equal_revenue_dist, shatter_path
from .grid import PolylineRegion, associated_augmented_mechanism, augment, augmentation_points, inner_hull, uniform_grid
from .mechanism import Mechanism, OrthogonalGraph
from .solver import best_mechanism

F = Fraction

# a staircase hugging a convex curve, with a valuation where agent 1 pays 0 and agent 2 pays 0.2
CONVEX_PATH = ((0, 1), (0, F(1, 5)), (F(3, 10), F(1, 5)), (F(3, 10), F(1, 10)),
               (F(3, 5), F(1, 10)), (F(3, 5), F(1, 20)), (1, F(1, 20)))
CONVEX_MARK = (F(1, 5), F(1, 2))

# target region approximated on the grid of step 1/2
AUGMENT_TARGET = ((F(1, 4), 1), (F(3, 8), F(1, 2)), (F(1, 2), F(1, 4)), (1, F(1, 8)))

# smooth boundary for the inner hull drawing, sampled from y = 0.15 / x clipped to the square
HULL_TARGET = tuple((F(i, 20), min(F(1), F(3, 20) / F(i, 20))) for i in range(3, 21))

SHATTER_SUBSET = (1, 3, 4, 6)


def _pts(points):
    return [(float(x), float(y)) for x, y in points]


def graph_segments(graph: OrthogonalGraph) -> list:
    return [_pts(e) for e in graph.edges]


def convex_boundary() -> list:
    mech = Mechanism.from_boundary(CONVEX_PATH)
    return [mech.polyline(), _pts([CONVEX_MARK])]


def equal_revenue_support(n: int = 3, delta=F(1, 6)) -> list:
    dist = equal_revenue_dist(n, delta)
    mech, _ = best_mechanism(dist)
    atoms = [p for p, _ in dist.atoms]
    return [_pts(atoms), mech.polyline()]


def grid_lattice(epsilon=F(1, 6)) -> list:
    return graph_segments(uniform_grid(epsilon).graph)


def augmented_grid(epsilon=F(1, 2)) -> list:
    region = PolylineRegion(AUGMENT_TARGET)
    grid = uniform_grid(epsilon)
    pts = augmentation_points(region, grid.epsilon)
    aug = augment(grid, pts)
    mech = associated_augmented_mechanism(region, epsilon)
    return graph_segments(aug.graph) + [_pts(pts), _pts(AUGMENT_TARGET), mech.polyline()]


def inner_hull_drawing(epsilon=F(1, 6)) -> list:
    region = PolylineRegion(HULL_TARGET)
    return [_pts(HULL_TARGET), inner_hull(region, epsilon).polyline()]


def shatter_drawing(epsilon=F(1, 6), subset=SHATTER_SUBSET) -> list:
    k = int(1 / F(epsilon))
    chosen = [diagonal_point(i, epsilon) for i in subset]
    others = [diagonal_point(i, epsilon) for i in range(1, k + 1) if i not in subset]
    return [shatter_path(epsilon, subset).polyline(), _pts(chosen), _pts(others)]


FIGURES = {
    "convex_boundary": convex_boundary,
    "equal_revenue_support": equal_revenue_support,
    "grid_lattice": grid_lattice,
    "augmented_grid": augmented_grid,
    "inner_hull": inner_hull_drawing,
    "shatter": shatter_drawing,
}
