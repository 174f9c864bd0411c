"""Revenue-optimal mechanisms for finitely supported valuation distributions.

The optimum is a longest path through the grid spanned by the support
coordinates.  Every edge carries the revenue it collects: a downward edge
at x collects x from valuations right of it in its height band, and a
rightward edge at y collects y from valuations above it in its column
band.  Two terminal terms complete the bookkeeping for valuations lying
exactly on the top or right side of the square.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .mechanism import (
    ONE,
    ZERO,
    Mechanism,
    OrthogonalGraph,
    Point,
    as_point,
    as_rational,
    influence_region,
    intrinsic_weight,
)

BRUTE_FORCE_CAP = 12
TIE_TOL = 1e-12  # float solver: near-equal options resolve like exact ties


@dataclass(frozen=True)
class DiscreteDistribution:
    atoms: tuple[tuple[Point, Fraction], ...]

    def __post_init__(self):
        atoms = tuple((as_point(v), as_rational(p)) for v, p in self.atoms)
        if not atoms:
            raise ValueError("distribution has no atoms")
        seen = set()
        for v, p in atoms:
            if p < 0:
                raise ValueError(f"negative probability {p} at {v}")
            if not (ZERO <= v[0] <= ONE and ZERO <= v[1] <= ONE):
                raise ValueError(f"atom {v} outside the unit square")
            if v in seen:
                raise ValueError(f"duplicate atom {v}")
            seen.add(v)
        total = sum((p for _, p in atoms), ZERO)
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_samples(cls, values: Iterable[Sequence]) -> "DiscreteDistribution":
        """Empirical distribution: each observation gets mass 1/n, duplicates merged."""
        counts: dict[Point, int] = {}
        n = 0
        for v in values:
            key = as_point(v)
            counts[key] = counts.get(key, 0) + 1
            n += 1
        return cls(tuple((v, Fraction(c, n)) for v, c in sorted(counts.items())))

    @classmethod
    def from_weights(cls, pairs: Iterable) -> "DiscreteDistribution":
        """Normalise nonnegative weights and merge repeated atoms."""
        acc: dict[Point, Fraction] = {}
        for v, w in pairs:
            key = as_point(v)
            acc[key] = acc.get(key, ZERO) + as_rational(w)
        total = sum(acc.values(), ZERO)
        if total <= 0:
            raise ValueError("weights must have positive total")
        return cls(tuple((v, w / total) for v, w in sorted(acc.items())))

    @classmethod
    def parse(cls, text: str) -> "DiscreteDistribution":
        """Parse ``v1 v2 prob`` records; ``#`` starts a comment."""
        atoms = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = re.split(r"[,\s]+", line)
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'v1 v2 prob', got {line!r}")
            try:
                atoms.append(((as_rational(parts[0]), as_rational(parts[1])), as_rational(parts[2])))
            except (ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return cls(tuple(atoms))

    def dump(self) -> str:
        from .mechanism import format_rational as f

        return "".join(f"{f(v[0])} {f(v[1])} {f(p)}\n" for v, p in self.atoms)

    def coordinates(self) -> tuple[list[Fraction], list[Fraction]]:
        xs = sorted({v[0] for v, _ in self.atoms} | {ZERO, ONE})
        ys = sorted({v[1] for v, _ in self.atoms} | {ZERO, ONE})
        return xs, ys

    def __len__(self):
        return len(self.atoms)


def grid_graph(xs: Sequence, ys: Sequence) -> OrthogonalGraph:
    """Product grid with every node linked to its right and lower neighbour."""
    xs = sorted(set(as_rational(x) for x in xs))
    ys = sorted(set(as_rational(y) for y in ys))
    nodes = [(x, y) for y in reversed(ys) for x in xs]
    edges = []
    for y in ys:
        for a, b in zip(xs, xs[1:]):
            edges.append(((a, y), (b, y)))
    for x in xs:
        for lo, hi in zip(ys, ys[1:]):
            edges.append(((x, hi), (x, lo)))
    return OrthogonalGraph(tuple(nodes), tuple(edges), (xs[0], ys[-1]), (xs[-1], ys[0]))


def support_graph(dist: DiscreteDistribution) -> OrthogonalGraph:
    xs, ys = dist.coordinates()
    return grid_graph(xs, ys)


def edge_weight(edge, dist: DiscreteDistribution) -> Fraction:
    """Intrinsic weight times the probability of the edge's influence rectangle."""
    w = intrinsic_weight(edge)
    if w == 0:
        return ZERO
    rect = influence_region(edge)
    return w * sum((p for v, p in dist.atoms if rect.contains(*v)), ZERO)


def path_weight(mech: Mechanism, dist: DiscreteDistribution) -> Fraction:
    """Expected revenue computed edge by edge.

    Edge rectangles are taken half-open on every side; valuations on the
    top side pay the start node's x, and valuations on the right side pay
    the end node's y.  This equals ``expected_revenue`` for every path.
    """
    total = ZERO
    atoms = dist.atoms
    s = mech.nodes[0][0]
    t = mech.nodes[-1][1]
    for (x, y), p in atoms:
        if y == ONE and x >= s:
            total += s * p
        if x == ONE and y >= t:
            total += t * p
    for u, v in mech.edges():
        if u[0] == v[0]:
            x, lo, hi = u[0], v[1], u[1]
            if x:
                total += x * sum((p for (a, b), p in atoms if a >= x and lo <= b < hi), ZERO)
        else:
            y, x0, x1 = u[1], u[0], v[0]
            if y:
                total += y * sum((p for (a, b), p in atoms if x0 <= a < x1 and b >= y), ZERO)
    return total


def expected_revenue(mech: Mechanism, dist: DiscreteDistribution) -> Fraction:
    return sum((p * mech.revenue(v) for v, p in dist.atoms), ZERO)


# ---------------------------------------------------------------------------
# Exact longest-path solver


def _band_masses(dist: DiscreteDistribution, xs, ys):
    """row_suffix[j][i]: mass at height ys[j] with x >= xs[i];
    col_suffix[i][j]: mass at x = xs[i] with height >= ys[j]."""
    xi = {x: i for i, x in enumerate(xs)}
    yi = {y: j for j, y in enumerate(ys)}
    nx, ny = len(xs), len(ys)
    cell = [[ZERO] * ny for _ in range(nx)]
    for (a, b), p in dist.atoms:
        cell[xi[a]][yi[b]] += p
    row_suffix = [[ZERO] * (nx + 1) for _ in range(ny)]
    for j in range(ny):
        acc = ZERO
        for i in range(nx - 1, -1, -1):
            acc += cell[i][j]
            row_suffix[j][i] = acc
    col_suffix = [[ZERO] * (ny + 1) for _ in range(nx)]
    for i in range(nx):
        acc = ZERO
        for j in range(ny - 1, -1, -1):
            acc += cell[i][j]
            col_suffix[i][j] = acc
    return row_suffix, col_suffix


def best_mechanism(dist: DiscreteDistribution) -> tuple[Mechanism, Fraction]:
    """Revenue-maximising mechanism and its expected revenue, exactly.

    Ties lean towards small allocation regions: the latest start wins, and
    at each node stopping beats moving right, which beats moving down.
    """
    xs, ys = dist.coordinates()
    nx, ny = len(xs), len(ys)
    row_suffix, col_suffix = _band_masses(dist, xs, ys)
    # value[j][i]: best revenue collected from node (xs[i], ys[j]) onwards
    value = [[ZERO] * nx for _ in range(ny)]
    choice = [[""] * nx for _ in range(ny)]
    for j in range(ny):
        y = ys[j]
        for i in range(nx - 1, -1, -1):
            x = xs[i]
            opts = []
            if i == nx - 1:
                opts.append((y * col_suffix[i][j], "stop"))
            if j > 0:
                opts.append((x * row_suffix[j - 1][i] + value[j - 1][i], "down"))
            if i < nx - 1:
                opts.append((y * col_suffix[i][j] + value[j][i + 1], "right"))
            best = max(o[0] for o in opts)
            value[j][i] = best
            choice[j][i] = next(tag for tag in ("stop", "right", "down") if (best, tag) in opts)
    top = ny - 1
    starts = [xs[i] * row_suffix[top][i] + value[top][i] for i in range(nx)]
    best = max(starts)
    i = max(k for k, v in enumerate(starts) if v == best)
    j = top
    nodes = [(xs[i], ys[j])]
    while True:
        c = choice[j][i]
        if c == "stop":
            break
        if c == "down":
            j -= 1
        else:
            i += 1
        nodes.append((xs[i], ys[j]))
    mech = Mechanism(tuple(nodes))
    return mech, best


def staircase(points: Iterable[Point]) -> Mechanism | None:
    """Smallest monotone region containing the points, as a path; None if empty."""
    pts = sorted(set(points))
    frontier: list[Point] = []
    for p in pts:
        if frontier and frontier[-1][1] <= p[1]:
            continue
        frontier.append(p)
    if not frontier:
        return None
    nodes: list[Point] = [(frontier[0][0], ONE)]
    for k, (x, y) in enumerate(frontier):
        nodes.append((x, y))
        nxt = frontier[k + 1][0] if k + 1 < len(frontier) else ONE
        nodes.append((nxt, y))
    out: list[Point] = []
    for n in nodes:
        if not out or out[-1] != n:
            out.append(n)
    return Mechanism(tuple(out))


def brute_force_best(dist: DiscreteDistribution) -> tuple[Mechanism, Fraction]:
    """Enumerate the minimal region of every atom subset; exponential, test use only."""
    if len(dist.atoms) > BRUTE_FORCE_CAP:
        raise ValueError(f"brute force is capped at {BRUTE_FORCE_CAP} atoms, got {len(dist.atoms)}")
    pts = [v for v, _ in dist.atoms]
    best_mech, best_val = Mechanism.full_square(), ZERO
    for r in range(1, len(pts) + 1):
        for subset in itertools.combinations(pts, r):
            mech = staircase(subset)
            val = expected_revenue(mech, dist)
            if val > best_val:
                best_mech, best_val = mech, val
    return best_mech, best_val


# ---------------------------------------------------------------------------
# Float solver for large empirical samples


@njit(cache=True)
def _fast_dp(xi, yi, w, xs, ys):
    nx = xs.shape[0]
    ny = ys.shape[0]
    n = xi.shape[0]
    nbytes = (nx + 7) // 8
    bits = np.zeros((ny, nbytes), dtype=np.uint8)
    # points bucketed by row, so memory stays linear apart from the path bits
    order = np.argsort(yi, kind="mergesort")
    row_start = np.zeros(ny + 1, dtype=np.int64)
    for k in range(n):
        row_start[yi[k] + 1] += 1
    for j in range(ny):
        row_start[j + 1] += row_start[j]
    col_ge = np.zeros(nx)  # mass in column i with height >= current row
    for k in range(n):
        col_ge[xi[k]] += w[k]
    row_mass = np.zeros(nx)
    prev = np.zeros(nx)
    cur = np.zeros(nx)
    below_suffix = np.zeros(nx + 1)
    for j in range(ny):
        y = ys[j]
        if j > 0:
            for q in range(row_start[j - 1], row_start[j]):
                k = order[q]
                row_mass[xi[k]] += w[k]
                col_ge[xi[k]] -= w[k]
            acc = 0.0
            for i in range(nx - 1, -1, -1):
                acc += row_mass[i]
                below_suffix[i] = acc
            for q in range(row_start[j - 1], row_start[j]):
                row_mass[xi[order[q]]] = 0.0
        i = nx - 1
        stop = y * col_ge[i]
        if j > 0:
            down = xs[i] * below_suffix[i] + prev[i]
            if down > stop + TIE_TOL:
                cur[i] = down
                bits[j, i >> 3] |= np.uint8(1 << (i & 7))
            else:
                cur[i] = stop
        else:
            cur[i] = stop
        for i in range(nx - 2, -1, -1):
            right = y * col_ge[i] + cur[i + 1]
            if j > 0:
                down = xs[i] * below_suffix[i] + prev[i]
                if down > right + TIE_TOL:
                    cur[i] = down
                    bits[j, i >> 3] |= np.uint8(1 << (i & 7))
                    continue
            cur[i] = right
        for i in range(nx):
            prev[i] = cur[i]
    # source bonus on the top row
    for q in range(row_start[ny - 1], row_start[ny]):
        k = order[q]
        row_mass[xi[k]] += w[k]
    top_suffix = np.zeros(nx + 1)
    acc = 0.0
    for i in range(nx - 1, -1, -1):
        acc += row_mass[i]
        top_suffix[i] = acc
    best = -1.0
    for i in range(nx):
        best = max(best, xs[i] * top_suffix[i] + prev[i])
    start = 0
    for i in range(nx):
        if xs[i] * top_suffix[i] + prev[i] >= best - TIE_TOL:
            start = i
    return bits, start, best


def best_mechanism_fast(v1, v2, weights=None) -> tuple[Mechanism, float]:
    """Float longest-path solver over sample points; O(n^2) time, n^2/8 bytes.

    Nodes are exact rationals equal to the input floats.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape != v2.shape or v1.ndim != 1 or v1.size == 0:
        raise ValueError("need two equal-length nonempty 1-d arrays")
    w = np.ones_like(v1) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    xs = np.unique(np.concatenate([v1, [0.0, 1.0]]))
    ys = np.unique(np.concatenate([v2, [0.0, 1.0]]))
    xi = np.searchsorted(xs, v1)
    yi = np.searchsorted(ys, v2)
    bits, start, best = _fast_dp(xi, yi, w, xs, ys)
    i, j = int(start), len(ys) - 1
    nodes = [(xs[i], ys[j])]
    nx = len(xs)
    while True:
        down = (bits[j, i >> 3] >> (i & 7)) & 1
        if down:
            j -= 1
        elif i == nx - 1:
            break
        else:
            i += 1
        nodes.append((xs[i], ys[j]))
    return Mechanism(tuple((Fraction(float(a)), Fraction(float(b))) for a, b in nodes)), float(best)


def solve_samples(values: Sequence[Sequence[float]], exact_cap: int = 200):
    """Best mechanism for an empirical sample: exact when few distinct points."""
    arr = np.asarray(values, dtype=float).reshape(-1, 2)
    uniq, counts = np.unique(arr, axis=0, return_counts=True)
    if len(uniq) <= exact_cap:
        dist = DiscreteDistribution.from_weights(
            ((float(a), float(b)), int(c)) for (a, b), c in zip(uniq, counts)
        )
        mech, val = best_mechanism(dist)
        return mech, float(val)
    return best_mechanism_fast(uniq[:, 0], uniq[:, 1], counts.astype(float))
