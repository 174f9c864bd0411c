"""Uniform grids, data-point augmentation, and grid approximations of regions.

Tiles of the grid with step ``eps`` are indexed by their column ``i`` and
row ``j`` and cover ``i*eps < v1 <= (i+1)*eps``, ``(j-1)*eps < v2 <= j*eps``;
the south and west sides belong to the neighbouring tiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Protocol, Sequence

from .mechanism import (
    ONE,
    ZERO,
    InvariantViolation,
    Mechanism,
    OrthogonalGraph,
    Point,
    as_point,
    as_rational,
    validate_orthogonal,
)
from .solver import grid_graph, staircase


def grid_size(epsilon) -> int:
    """Return 1/eps, rejecting steps whose reciprocal is not a positive integer."""
    eps = as_rational(epsilon)
    if eps <= 0 or eps > 1:
        raise ValueError(f"grid step must lie in (0, 1], got {eps}")
    inv = 1 / eps
    if inv.denominator != 1:
        raise ValueError(f"1/eps must be an integer, got 1/{eps} = {inv}")
    return int(inv)


@dataclass(frozen=True)
class UniformGrid:
    epsilon: Fraction
    graph: OrthogonalGraph

    @property
    def size(self) -> int:
        return int(1 / self.epsilon)


def uniform_grid(epsilon) -> UniformGrid:
    k = grid_size(epsilon)
    coords = [Fraction(i, k) for i in range(k + 1)]
    return UniformGrid(Fraction(1, k), grid_graph(coords, coords))


def tile_of(point: Point, epsilon: Fraction) -> tuple[int, int]:
    """Column and row of the half-open tile containing the point."""
    v1, v2 = point
    k = int(1 / epsilon)
    if v1 <= 0 or v2 <= 0:
        raise ValueError(f"point {point} lies on the west or south side of the square, which no tile owns")
    i = math.ceil(v1 * k) - 1
    j = math.ceil(v2 * k)
    return i, j


@dataclass(frozen=True)
class AugmentedGrid:
    base: UniformGrid
    added_points: tuple[Point, ...]
    graph: OrthogonalGraph


class _GraphBuilder:
    def __init__(self, graph: OrthogonalGraph):
        self.nodes = set(graph.nodes)
        self.edges = set(graph.edges)
        self.source = graph.source
        self.sink = graph.sink

    def split_at(self, w: Point) -> None:
        """Insert ``w`` as a node, splitting the edge it lies on."""
        if w in self.nodes:
            return
        for u, z in self.edges:
            if u[0] == z[0] == w[0] and z[1] < w[1] < u[1]:
                break
            if u[1] == z[1] == w[1] and u[0] < w[0] < z[0]:
                break
        else:
            raise InvariantViolation(f"no edge passes through {w}")
        self.edges.remove((u, z))
        self.edges.add((u, w))
        self.edges.add((w, z))
        self.nodes.add(w)

    def link(self, u: Point, z: Point) -> None:
        self.edges.add((u, z))

    def build(self) -> OrthogonalGraph:
        nodes = tuple(sorted(self.nodes, key=lambda p: (-p[1], p[0])))
        edges = tuple(sorted(self.edges))
        return OrthogonalGraph(nodes, edges, self.source, self.sink)


def augment(grid: UniformGrid, points: Iterable[Sequence]) -> AugmentedGrid:
    """Splice data points into the grid, at most one per tile."""
    eps = grid.epsilon
    k = grid.size
    pts = [as_point(p) for p in points]
    if len(pts) > 2 * k:
        raise ValueError(f"at most 2/eps = {2 * k} points allowed, got {len(pts)}")
    owners: dict[tuple[int, int], Point] = {}
    for p in pts:
        if not (ZERO <= p[0] <= ONE and ZERO <= p[1] <= ONE):
            raise ValueError(f"point {p} outside the unit square")
        if p in grid.graph.nodes:
            continue
        t = tile_of(p, eps)
        if t in owners and owners[t] != p:
            raise ValueError(f"points {owners[t]} and {p} share tile {t}")
        owners[t] = p
    g = _GraphBuilder(grid.graph)
    for p in pts:
        if p in g.nodes:
            continue
        i, j = tile_of(p, eps)
        xl, xh = i * eps, (i + 1) * eps
        yl, yh = (j - 1) * eps, j * eps
        v1, v2 = p
        if v1 == xh:
            # on the tile's east side: connect to the west side
            w = (xl, v2)
            g.split_at(p)
            g.split_at(w)
            g.link(w, p)
        elif v2 == yh:
            # on the tile's north side: connect to the south side
            s = (v1, yl)
            g.split_at(p)
            g.split_at(s)
            g.link(p, s)
        else:
            top, bottom, west, east = (v1, yh), (v1, yl), (xl, v2), (xh, v2)
            for w in (top, bottom, west, east):
                g.split_at(w)
            g.nodes.add(p)
            g.link(top, p)
            g.link(p, bottom)
            g.link(west, p)
            g.link(p, east)
    graph = g.build()
    problems = validate_orthogonal(graph)
    if problems:
        raise InvariantViolation("augmented grid is not orthogonal: " + "; ".join(problems))
    return AugmentedGrid(grid, tuple(pts), graph)


# ---------------------------------------------------------------------------
# Monotone regions


class Region(Protocol):
    """A closed dominance-closed subset of the unit square."""

    def contains(self, v: Point) -> bool: ...

    def lowest_y(self, x) -> Fraction | None:
        """Smallest y with (x, y) in the region, None if the column is empty."""

    def leftmost_x(self, y) -> Fraction | None:
        """Smallest x with (x, y) in the region, None if the row is empty."""

    def lowest_y_left_of(self, x) -> Fraction | None:
        """Infimum of heights in the region over columns strictly left of x."""


class PathRegion:
    def __init__(self, mech: Mechanism):
        self.mech = mech

    def contains(self, v) -> bool:
        return self.mech.allocates(v)

    def lowest_y(self, x):
        return self.mech.price_agent2(x)

    def leftmost_x(self, y):
        return self.mech.price_agent1(y)

    def lowest_y_left_of(self, x):
        best = None
        for nx, ny in self.mech.nodes:
            if nx < x:
                best = ny
        return best


class PolylineRegion:
    """Region above a nonincreasing piecewise-linear boundary.

    ``points`` run left to right with nonincreasing heights; columns left of
    the first point are empty, columns right of the last keep its height.
    """

    def __init__(self, points: Sequence[Sequence]):
        pts = [as_point(p) for p in points]
        if not pts:
            raise ValueError("need at least one boundary point")
        for a, b in zip(pts, pts[1:]):
            if b[0] <= a[0] or b[1] > a[1]:
                raise ValueError("boundary must move right with nonincreasing height")
        self.pts = pts

    def lowest_y(self, x):
        x = as_rational(x)
        pts = self.pts
        if x < pts[0][0]:
            return None
        for a, b in zip(pts, pts[1:]):
            if a[0] <= x <= b[0]:
                return a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
        return pts[-1][1]

    def contains(self, v) -> bool:
        h = self.lowest_y(as_rational(v[0]))
        return h is not None and as_rational(v[1]) >= h

    def leftmost_x(self, y):
        y = as_rational(y)
        pts = self.pts
        if y >= pts[0][1]:
            return pts[0][0]
        for a, b in zip(pts, pts[1:]):
            if b[1] <= y <= a[1]:
                if a[1] == b[1]:
                    return a[0]
                return a[0] + (b[0] - a[0]) * (a[1] - y) / (a[1] - b[1])
        return None

    def lowest_y_left_of(self, x):
        x = as_rational(x)
        if x <= self.pts[0][0]:
            return None
        return self.lowest_y(x)  # continuous boundary: left limit equals the value


class OracleRegion:
    """Region known only through a membership predicate; boundaries by bisection."""

    def __init__(self, contains: Callable[[Point], bool], tol: float = 1e-9):
        self._contains = contains
        self.tol = tol
        self._steps = max(1, math.ceil(math.log2(1 / tol)))

    def contains(self, v) -> bool:
        return bool(self._contains(v))

    def _bisect(self, inside: Callable[[Fraction], bool]) -> Fraction | None:
        if not inside(ONE):
            return None
        if inside(ZERO):
            return ZERO
        lo, hi = ZERO, ONE  # lo outside, hi inside
        for _ in range(self._steps):
            mid = (lo + hi) / 2
            if inside(mid):
                hi = mid
            else:
                lo = mid
        # boundaries at simple rationals (grid lines, say) should come back exactly
        q = hi.limit_denominator(1000)
        return q if lo < q <= hi else hi

    def lowest_y(self, x):
        x = as_rational(x)
        return self._bisect(lambda y: self.contains((x, y)))

    def leftmost_x(self, y):
        y = as_rational(y)
        return self._bisect(lambda x: self.contains((x, y)))

    def lowest_y_left_of(self, x):
        x = as_rational(x)
        probe = x - Fraction(1, 2 ** self._steps)
        if probe < 0:
            return None
        return self.lowest_y(probe)


def as_region(target) -> Region:
    if isinstance(target, Mechanism):
        return PathRegion(target)
    if callable(target) and not hasattr(target, "lowest_y"):
        return OracleRegion(target)
    return target


# ---------------------------------------------------------------------------
# Grid approximations


def boundary_tiles(region: Region, epsilon) -> list[tuple[int, int]]:
    """Tiles that meet the region without lying inside it."""
    k = grid_size(epsilon)
    eps = Fraction(1, k)
    out = []
    for i in range(k):
        for j in range(1, k + 1):
            top_right = ((i + 1) * eps, j * eps)
            bottom_left = (i * eps, (j - 1) * eps)
            if region.contains(top_right) and not region.contains(bottom_left):
                out.append((i, j))
    return out


def augmentation_points(region: Region, epsilon) -> list[Point]:
    """One point per boundary tile, chosen by where the boundary enters and leaves."""
    k = grid_size(epsilon)
    eps = Fraction(1, k)
    pts = []
    for i, j in boundary_tiles(region, eps):
        xl, xh = i * eps, (i + 1) * eps
        yl, yh = (j - 1) * eps, j * eps
        from_north = not region.contains((xl, yh))
        to_south = region.contains((xh, yl))
        if from_north:
            u1 = region.leftmost_x(yh)
            if u1 is None or not (xl < u1 <= xh):
                raise InvariantViolation(f"north crossing of tile {(i, j)} outside its side: {u1}")
        if not to_south:
            e2 = region.lowest_y(xh)
            if e2 is None or not (yl < e2 <= yh):
                raise InvariantViolation(f"east crossing of tile {(i, j)} outside its side: {e2}")
        if from_north and not to_south:
            pts.append((u1, e2))
        elif from_north and to_south:
            pts.append((u1, yh))
        elif not from_north and not to_south:
            pts.append((xh, e2))
    return pts


def _lowest_containing_path(graph: OrthogonalGraph, region: Region) -> Mechanism:
    """Smallest-area complete path of the graph whose region contains ``region``."""
    order = graph.topological_order()
    if order is None:
        raise InvariantViolation("graph has a cycle")
    succ = graph.successors()
    top_left = region.leftmost_x(ONE)
    east_floor = region.lowest_y(ONE)
    cache_left: dict[Fraction, Fraction | None] = {}

    def floor_left(x):
        if x not in cache_left:
            cache_left[x] = region.lowest_y_left_of(x)
        return cache_left[x]

    NEG = None
    best: dict[Point, tuple[Fraction, Point | None]] = {}
    for u in reversed(order):
        cand = NEG
        if u[0] == ONE and (east_floor is None or u[1] <= east_floor):
            cand = (ZERO, None)
        for v in succ.get(u, []):
            if v not in best:
                continue
            if u[1] == v[1]:
                h = floor_left(v[0])
                if h is not None and u[1] > h:
                    continue
                gain = (v[0] - u[0]) * u[1]
            else:
                gain = ZERO
            val = best[v][0] + gain
            if cand is NEG or val > cand[0]:
                cand = (val, v)
        if cand is not NEG:
            best[u] = cand
    starts = []
    for u in order:
        if u[1] != ONE or u not in best:
            continue
        if top_left is not None and u[0] > top_left:
            continue
        starts.append((best[u][0] + u[0], u))
    if not starts:
        raise InvariantViolation("no complete path contains the target region")
    value = max(s[0] for s in starts)
    # equal areas: the later start keeps the top edge out of the region
    u = max(s[1] for s in starts if s[0] == value)
    nodes = [u]
    while best[u][1] is not None:
        u = best[u][1]
        nodes.append(u)
    return Mechanism(tuple(nodes))


def associated_augmented_mechanism(target, epsilon) -> Mechanism:
    """Grid mechanism, augmented along the target's boundary, covering the target."""
    region = as_region(target)
    grid = uniform_grid(epsilon)
    pts = augmentation_points(region, grid.epsilon)
    aug = augment(grid, pts)
    mech = _lowest_containing_path(aug.graph, region)
    if isinstance(region, PathRegion):
        for node in region.mech.nodes:
            if not mech.allocates(node):
                raise InvariantViolation(f"output misses target node {node}")
    return mech


def inner_hull(target, epsilon) -> Mechanism:
    """Path around the union of grid tiles lying entirely inside the target."""
    region = as_region(target)
    k = grid_size(epsilon)
    eps = Fraction(1, k)
    corners = []
    for i in range(k):
        x = i * eps
        for r in range(k):
            if region.contains((x, r * eps)):
                corners.append((x, r * eps))
                break
    mech = staircase(corners)
    return mech if mech is not None else Mechanism(((ONE, ONE),))


def path_edge_count_cap(epsilon, augmented: bool = False) -> int:
    k = grid_size(epsilon)
    return 4 * k + 4 if augmented else 2 * k + 2
