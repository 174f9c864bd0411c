"""Monotone allocation regions represented as staircase paths.

A mechanism for two agents sharing a non-excludable good is a closed,
dominance-closed region of the unit square.  Every such region with an
axis-parallel boundary is described by a monotone down/right path that
starts on the north side (y = 1) and ends on the east side (x = 1).  A
valuation is allocated when it dominates some node of the path, and each
agent pays its critical price: the smallest report that still wins while
the other report is held fixed.

Coordinates are exact rationals.  Floats are accepted on input and
converted exactly, so comparisons against float valuations never round.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Number = Union[int, float, Fraction, str]
Point = tuple[Fraction, Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)


class InvariantViolation(RuntimeError):
    """Raised when an internal invariant fails (a bug, not bad input)."""


def as_rational(value: Number) -> Fraction:
    """Exact conversion; strings may be decimals or ``p/q``."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def as_point(p: Sequence[Number]) -> Point:
    return (as_rational(p[0]), as_rational(p[1]))


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Valuation:
    v1: Fraction
    v2: Fraction

    def __post_init__(self):
        object.__setattr__(self, "v1", as_rational(self.v1))
        object.__setattr__(self, "v2", as_rational(self.v2))
        if not (ZERO <= self.v1 <= ONE and ZERO <= self.v2 <= ONE):
            raise ValueError(f"valuation {self.v1}, {self.v2} outside the unit square")

    def __iter__(self):
        yield self.v1
        yield self.v2


# ---------------------------------------------------------------------------
# Orthogonal graphs


@dataclass(frozen=True)
class OrthogonalGraph:
    nodes: tuple[Point, ...]
    edges: tuple[tuple[Point, Point], ...]
    source: Point
    sink: Point

    @classmethod
    def build(cls, nodes: Iterable, edges: Iterable, source=None, sink=None) -> "OrthogonalGraph":
        nodes = tuple(as_point(n) for n in nodes)
        edges = tuple((as_point(u), as_point(v)) for u, v in edges)
        if source is None:
            has_in = {v for _, v in edges}
            cands = [n for n in nodes if n not in has_in]
            source = min(cands) if cands else nodes[0]
        if sink is None:
            has_out = {u for u, _ in edges}
            cands = [n for n in nodes if n not in has_out]
            sink = max(cands) if cands else nodes[-1]
        return cls(nodes, edges, as_point(source), as_point(sink))

    def successors(self) -> dict[Point, list[Point]]:
        out: dict[Point, list[Point]] = {n: [] for n in self.nodes}
        for u, v in self.edges:
            out.setdefault(u, []).append(v)
        for lst in out.values():
            lst.sort()
        return out

    def topological_order(self) -> list[Point] | None:
        """Kahn's algorithm; ``None`` when a cycle exists."""
        indeg = {n: 0 for n in self.nodes}
        for _, v in self.edges:
            indeg[v] = indeg.get(v, 0) + 1
        succ = self.successors()
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            for v in succ.get(u, []):
                indeg[v] -= 1
                if indeg[v] == 0:
                    bisect.insort(ready, v)
        return order if len(order) == len(indeg) else None

    def complete_paths(self, start: Point | None = None, limit: int = 10**6):
        """Enumerate complete down/right paths (north side to east side)."""
        succ = self.successors()
        starts = [start] if start is not None else sorted(n for n in self.nodes if n[1] == ONE)
        found = 0
        stack = [(s, (s,)) for s in reversed(starts)]
        while stack:
            u, path = stack.pop()
            if u[0] == ONE:
                yield path
                found += 1
                if found >= limit:
                    return
            for v in reversed(succ.get(u, [])):
                stack.append((v, path + (v,)))


def _segments_conflict(e, f) -> bool:
    """True when two axis-parallel segments meet somewhere other than a shared endpoint."""
    (a, b), (c, d) = e, f
    e_vert = a[0] == b[0]
    f_vert = c[0] == d[0]
    ex0, ex1 = sorted((a[0], b[0]))
    ey0, ey1 = sorted((a[1], b[1]))
    fx0, fx1 = sorted((c[0], d[0]))
    fy0, fy1 = sorted((c[1], d[1]))
    if ex1 < fx0 or fx1 < ex0 or ey1 < fy0 or fy1 < ey0:
        return False
    if e_vert == f_vert:
        # collinear only if on the same line
        if e_vert and a[0] != c[0]:
            return False
        if not e_vert and a[1] != c[1]:
            return False
        lo = max(ey0, fy0) if e_vert else max(ex0, fx0)
        hi = min(ey1, fy1) if e_vert else min(ex1, fx1)
        if lo < hi:
            return True
        touch = (a[0], lo) if e_vert else (lo, a[1])
        return not (touch in (a, b) and touch in (c, d))
    # one vertical, one horizontal: they cross at a single point
    vx = a[0] if e_vert else c[0]
    hy = c[1] if e_vert else a[1]
    p = (vx, hy)
    return not (p in (a, b) and p in (c, d))


def validate_orthogonal(graph: OrthogonalGraph) -> list[str]:
    """Return every violated structural clause; an empty list means valid.

    Clauses: (i) distinct nodes inside the square, (ii) a unique source on
    the north side and a unique sink on the east side, (iii) edges strictly
    down or right that meet only at endpoints, (iv) every other node has
    incoming and outgoing edges.  Acyclicity is reported separately.
    """
    problems: list[str] = []
    nodes = graph.nodes
    node_set = set(nodes)
    if len(node_set) != len(nodes):
        problems.append("(i) duplicate nodes")
    for n in nodes:
        if not (ZERO <= n[0] <= ONE and ZERO <= n[1] <= ONE):
            problems.append(f"(i) node {n} outside the unit square")
    indeg = {n: 0 for n in nodes}
    outdeg = {n: 0 for n in nodes}
    for u, v in graph.edges:
        if u not in node_set or v not in node_set:
            problems.append(f"(iii) edge {u}->{v} has an endpoint that is not a node")
            continue
        outdeg[u] += 1
        indeg[v] += 1
        down = u[0] == v[0] and v[1] < u[1]
        right = u[1] == v[1] and v[0] > u[0]
        if not (down or right):
            problems.append(f"(iii) edge {u}->{v} is neither downward nor rightward")
    sources = [n for n in nodes if indeg[n] == 0]
    sinks = [n for n in nodes if outdeg[n] == 0]
    if graph.source[1] != ONE:
        problems.append(f"(ii) source {graph.source} is not on the north side")
    if graph.sink[0] != ONE:
        problems.append(f"(ii) sink {graph.sink} is not on the east side")
    if sources != [graph.source]:
        problems.append(f"(ii) nodes without incoming edges: {sources}")
    if sinks != [graph.sink]:
        problems.append(f"(ii) nodes without outgoing edges: {sinks}")
    for n in nodes:
        if n in (graph.source, graph.sink):
            continue
        if indeg[n] == 0 or outdeg[n] == 0:
            problems.append(f"(iv) node {n} lacks an incoming or outgoing edge")
    straight = [
        (u, v) for u, v in graph.edges
        if u in node_set and v in node_set and (u[0] == v[0] or u[1] == v[1]) and u != v
    ]
    # bucket by line to keep the pairwise check cheap on grids
    for i, e in enumerate(straight):
        for f in straight[i + 1:]:
            if _segments_conflict(e, f):
                problems.append(f"(iii) edges {e} and {f} intersect away from endpoints")
    if graph.topological_order() is None:
        problems.append("acyclic: graph contains a cycle")
    return problems


# ---------------------------------------------------------------------------
# Edge influence regions


@dataclass(frozen=True)
class Rectangle:
    """Axis-parallel rectangle with per-side closure flags."""

    x0: Fraction
    x1: Fraction
    y0: Fraction
    y1: Fraction
    x1_closed: bool = True
    y1_closed: bool = True

    def contains(self, x, y) -> bool:
        if x < self.x0 or y < self.y0:
            return False
        if x > self.x1 or (x == self.x1 and not self.x1_closed):
            return False
        if y > self.y1 or (y == self.y1 and not self.y1_closed):
            return False
        return True


def _edge_kind(u: Point, v: Point) -> str:
    if u[0] == v[0] and v[1] < u[1]:
        return "vertical"
    if u[1] == v[1] and v[0] > u[0]:
        return "horizontal"
    raise ValueError(f"edge {u}->{v} is neither downward nor rightward")


def influence_region(edge, closed_at_one: bool = True) -> Rectangle:
    """Valuations whose critical price is set by this edge.

    Downward edge at x from height hi to lo: [x, 1] x [lo, hi).
    Rightward edge at y from x0 to x1: [x0, x1) x [y, 1].
    With ``closed_at_one`` the open end is closed when it reaches 1.
    """
    u, v = as_point(edge[0]), as_point(edge[1])
    if _edge_kind(u, v) == "vertical":
        return Rectangle(u[0], ONE, v[1], u[1], True, closed_at_one and u[1] == ONE)
    return Rectangle(u[0], v[0], u[1], ONE, closed_at_one and v[0] == ONE, True)


def intrinsic_weight(edge) -> Fraction:
    """The price charged inside the edge's influence region."""
    u, v = as_point(edge[0]), as_point(edge[1])
    return u[0] if _edge_kind(u, v) == "vertical" else u[1]


# ---------------------------------------------------------------------------
# Mechanisms


def _check_path(nodes: Sequence[Point]) -> None:
    if not nodes:
        raise ValueError("a path needs at least one node")
    for x, y in nodes:
        if not (ZERO <= x <= ONE and ZERO <= y <= ONE):
            raise ValueError(f"node ({x}, {y}) outside the unit square")
    if nodes[0][1] != ONE:
        raise ValueError(f"path must start on the north side, got {nodes[0]}")
    if nodes[-1][0] != ONE:
        raise ValueError(f"path must end on the east side, got {nodes[-1]}")
    for u, v in zip(nodes, nodes[1:]):
        if not ((u[0] == v[0] and v[1] < u[1]) or (u[1] == v[1] and v[0] > u[0])):
            raise ValueError(f"step {u}->{v} is not a strict down or right move")


@dataclass(frozen=True, eq=False)
class Mechanism:
    """A complete staircase path and the mechanism it induces."""

    nodes: tuple[Point, ...]
    _xs: list = field(init=False, repr=False)
    _ys_rev: list = field(init=False, repr=False)
    _fx: np.ndarray = field(init=False, repr=False)
    _fy: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = tuple(as_point(n) for n in self.nodes)
        _check_path(nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_xs", [n[0] for n in nodes])
        object.__setattr__(self, "_ys_rev", [n[1] for n in reversed(nodes)])
        object.__setattr__(self, "_fx", np.array([float(n[0]) for n in nodes]))
        object.__setattr__(self, "_fy", np.array([float(n[1]) for n in nodes]))

    # construction helpers -------------------------------------------------

    @classmethod
    def from_boundary(cls, points: Iterable[Sequence[Number]]) -> "Mechanism":
        """Accept a boundary that may start on the west side or end on the south side.

        Such boundaries are completed with zero-price segments along the west
        and south sides so the stored path always runs north to east.
        """
        pts = [as_point(p) for p in points]
        if pts and pts[0][1] != ONE and pts[0][0] == ZERO:
            pts.insert(0, (ZERO, ONE))
        if pts and pts[-1][0] != ONE and pts[-1][1] == ZERO:
            pts.append((ONE, ZERO))
        out: list[Point] = []
        for p in pts:
            if not out or out[-1] != p:
                out.append(p)
        return cls(tuple(out))

    @classmethod
    def full_square(cls) -> "Mechanism":
        """Always allocate, charge nothing."""
        return cls(((ZERO, ONE), (ZERO, ZERO), (ONE, ZERO)))

    @classmethod
    def posted_price(cls, p1: Number, p2: Number) -> "Mechanism":
        """Rectangle mechanism: allocate iff v1 >= p1 and v2 >= p2."""
        p1, p2 = as_rational(p1), as_rational(p2)
        pts = [(p1, ONE), (p1, p2), (ONE, p2)]
        out: list[Point] = []
        for p in pts:
            if not out or out[-1] != p:
                out.append(p)
        return cls(tuple(out))

    # structure -------------------------------------------------------------

    def edges(self) -> list[tuple[Point, Point]]:
        return list(zip(self.nodes, self.nodes[1:]))

    def canonical(self) -> tuple[Point, ...]:
        """Node list with collinear interior nodes removed."""
        cached = self.__dict__.get("_canonical")
        if cached is not None:
            return cached
        ns = self.nodes
        if len(ns) <= 2:
            return ns
        keep = [ns[0]]
        for prev, cur, nxt in zip(ns, ns[1:], ns[2:]):
            if (prev[0] == cur[0] == nxt[0]) or (prev[1] == cur[1] == nxt[1]):
                continue
            keep.append(cur)
        keep.append(ns[-1])
        self.__dict__["_canonical"] = tuple(keep)
        return self.__dict__["_canonical"]

    def same_region(self, other: "Mechanism") -> bool:
        return self.canonical() == other.canonical()

    def key(self) -> str:
        cached = self.__dict__.get("_key")
        if cached is None:
            cached = ";".join(f"{format_rational(x)},{format_rational(y)}" for x, y in self.canonical())
            self.__dict__["_key"] = cached
        return cached

    def __eq__(self, other):
        return isinstance(other, Mechanism) and self.nodes == other.nodes

    def __hash__(self):
        return hash(self.nodes)

    def __repr__(self):
        pts = " -> ".join(f"({format_rational(x)}, {format_rational(y)})" for x, y in self.canonical())
        return f"Mechanism[{pts}]"

    # pricing -------------------------------------------------------------

    def _first_below(self, v2) -> int | None:
        """Index of the first node whose height is <= v2."""
        # heights are non-increasing along the path; search the reversed list
        k = bisect.bisect_right(self._ys_rev, v2)
        if k == 0:
            return None
        return len(self.nodes) - k

    def price_agent1(self, v2) -> Fraction | None:
        i = self._first_below(v2)
        return None if i is None else self.nodes[i][0]

    def price_agent2(self, v1) -> Fraction | None:
        j = bisect.bisect_right(self._xs, v1) - 1
        return None if j < 0 else self.nodes[j][1]

    def allocates(self, v) -> bool:
        v1, v2 = v
        p1 = self.price_agent1(v2)
        return p1 is not None and v1 >= p1

    def payments(self, v) -> tuple[Fraction, Fraction]:
        """Critical prices; zero when no winning report exists."""
        v1, v2 = v
        p1 = self.price_agent1(v2)
        p2 = self.price_agent2(v1)
        return (ZERO if p1 is None else p1, ZERO if p2 is None else p2)

    def revenue(self, v):
        if not self.allocates(v):
            return ZERO
        p1, p2 = self.payments(v)
        return p1 + p2

    # vectorised float evaluation ----------------------------------------

    def revenue_many(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        """Float revenue for arrays of valuations (same semantics as ``revenue``)."""
        v1 = np.asarray(v1, dtype=float)
        v2 = np.asarray(v2, dtype=float)
        fy_rev = self._fy[::-1]
        n = len(self._fy)
        k = np.searchsorted(fy_rev, v2, side="right")
        has1 = k > 0
        idx1 = np.clip(n - k, 0, n - 1)
        p1 = np.where(has1, self._fx[idx1], 0.0)
        j = np.searchsorted(self._fx, v1, side="right") - 1
        p2 = np.where(j >= 0, self._fy[np.clip(j, 0, n - 1)], 0.0)
        alloc = has1 & (v1 >= p1)
        return np.where(alloc, p1 + p2, 0.0)

    def revenue_float(self, v1: float, v2: float) -> float:
        fy = self._fy
        n = len(fy)
        # first index with height <= v2
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if fy[mid] <= v2:
                hi = mid
            else:
                lo = mid + 1
        if lo == n:
            return 0.0
        p1 = self._fx[lo]
        if v1 < p1:
            return 0.0
        j = int(np.searchsorted(self._fx, v1, side="right")) - 1
        return float(p1 + fy[j])

    # serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        return {"path": [[format_rational(x), format_rational(y)] for x, y in self.nodes]}

    @classmethod
    def from_dict(cls, data: dict) -> "Mechanism":
        return cls(tuple(as_point(p) for p in data["path"]))

    def polyline(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x, y in self.nodes]


def path_edge_weight_sum(mech: Mechanism, atoms) -> Fraction:
    """Sum of intrinsic weight times mass of the influence region, over path edges.

    ``atoms`` is an iterable of ``((v1, v2), probability)``.
    """
    total = ZERO
    atoms = list(atoms)
    for e in mech.edges():
        w = intrinsic_weight(e)
        if w == 0:
            continue
        rect = influence_region(e)
        mass = sum((p for (x, y), p in atoms if rect.contains(x, y)), ZERO)
        total += w * mass
    return total


def write_polylines(segments: Iterable[Iterable[tuple[float, float]]], fh) -> None:
    """Write ``x y`` pairs, one per line, with a blank line between segments."""
    first = True
    for seg in segments:
        if not first:
            fh.write("\n")
        first = False
        for x, y in seg:
            fh.write(f"{float(x):.12g} {float(y):.12g}\n")
