"""Online learners that post one mechanism per round.

Every learner follows the same two-call protocol: ``propose(t)`` returns
the round-``t`` mechanism using only what has been observed so far, then
``observe(v)`` reveals the round's valuation.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from numba import njit

from .grid import associated_augmented_mechanism, grid_size
from .mechanism import ONE, ZERO, InvariantViolation, Mechanism, as_rational
from .solver import solve_samples


# ---------------------------------------------------------------------------
# Exact grid indices for floats


def _two_product(a: np.ndarray, b: float):
    """Rounded product and its exact rounding error (Dekker)."""
    split = 134217729.0
    p = a * b
    c = split * a
    ah = c - (c - a)
    al = a - ah
    c = split * b
    bh = c - (c - b)
    bl = b - bh
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def grid_index(v, k: int) -> np.ndarray:
    """floor(v * k) computed exactly for floats in [0, 1]."""
    v = np.asarray(v, dtype=float)
    p, err = _two_product(v, float(k))
    f = np.floor(p)
    f = f - ((f == p) & (err < 0))
    return np.clip(f, 0, k).astype(np.int64)


# ---------------------------------------------------------------------------
# Baselines


class FixedLearner:
    """Posts the same mechanism every round."""

    name = "fixed"

    def __init__(self, mech: Mechanism):
        self.mech = mech

    def propose(self, t: int) -> Mechanism:
        return self.mech

    def observe(self, v) -> None:
        pass


def posted_price_learner(p1, p2) -> FixedLearner:
    return FixedLearner(Mechanism.posted_price(p1, p2))


# ---------------------------------------------------------------------------
# Adaptive grid learner


def epsilon_schedule(t: int, horizon: int, constant: float = 14.0) -> Fraction:
    """Grid step for round t: constant * (log T / t)^(1/4), clamped to 1 and
    rounded down to the nearest 1/k."""
    if t < 1 or horizon < 1:
        raise ValueError("rounds and horizon are positive")
    log_t = math.log(horizon) if horizon > 1 else 0.0
    raw = constant * (log_t / t) ** 0.25
    if raw >= 1:
        return Fraction(1)
    if raw <= 0:
        raise ValueError("a horizon of 1 leaves the grid step undefined")
    k = math.ceil(1 / raw)
    # guard against the reciprocal rounding up past an exact integer
    if k > 1 and 1 / (k - 1) <= raw:
        k -= 1
    return Fraction(1, k)


class AtbmLearner:
    """Posts the grid-augmented version of the empirical revenue maximiser.

    ``refresh_growth`` controls how often the empirical optimum is recomputed:
    only once the history has grown by this factor since the last solve
    (1.0 re-solves every round).
    """

    name = "atbm"

    def __init__(
        self,
        horizon: int,
        constant: float = 14.0,
        refresh_growth: float = 2.0,
        exact_cap: int = 200,
        default: Mechanism | None = None,
    ):
        if refresh_growth < 1:
            raise ValueError("refresh_growth must be at least 1")
        self.horizon = int(horizon)
        self.constant = float(constant)
        self.refresh_growth = float(refresh_growth)
        self.exact_cap = exact_cap
        self.default = default or Mechanism.full_square()
        self._v1: list[float] = []
        self._v2: list[float] = []
        self._best: Mechanism | None = None
        self._solved_at = 0
        self._posted: dict[tuple[str, Fraction], Mechanism] = {}

    @property
    def history(self) -> list[tuple[float, float]]:
        return list(zip(self._v1, self._v2))

    def empirical_best(self) -> Mechanism:
        n = len(self._v1)
        if n == 0:
            raise InvariantViolation("no history to optimise over")
        if self._best is None or n >= self.refresh_growth * self._solved_at:
            vals = np.column_stack([self._v1, self._v2])
            self._best, _ = solve_samples(vals, self.exact_cap)
            self._solved_at = n
        return self._best

    def propose(self, t: int) -> Mechanism:
        if len(self._v1) != t - 1:
            raise InvariantViolation(f"round {t} proposed with {len(self._v1)} observations")
        if t == 1:
            return self.default
        eps = epsilon_schedule(t, self.horizon, self.constant)
        best = self.empirical_best()
        key = (best.key(), eps)
        if key not in self._posted:
            self._posted = {key: associated_augmented_mechanism(best, eps)}
        return self._posted[key]

    def observe(self, v) -> None:
        self._v1.append(float(v[0]))
        self._v2.append(float(v[1]))


# ---------------------------------------------------------------------------
# Exponential weights over grid paths
#
# Grid units: node (i, j) sits at (i/k, j/k).  A path from (0, k) to (k, 0)
# is stored as heights h[0..k-1], h[i] being the row of its rightward edge in
# column i.  Vertical edge (i, r+1)->(i, r) charges i/k to valuations with
# column >= i in row band r; horizontal edge (i, r)->(i+1, r) charges r/k
# to valuations in column band i with row >= r.


@njit(cache=True)
def _logaddexp(a, b):
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@njit(cache=True)
def _node_log_weights(lw_v, lw_h, k):
    lw = np.empty((k + 1, k + 1))
    lw[k, 0] = 0.0
    for j in range(1, k + 1):
        lw[k, j] = lw_v[k, j - 1] + lw[k, j - 1]
    for i in range(k - 1, -1, -1):
        lw[i, 0] = lw_h[i, 0] + lw[i + 1, 0]
        for j in range(1, k + 1):
            lw[i, j] = _logaddexp(lw_v[i, j - 1] + lw[i, j - 1], lw_h[i, j] + lw[i + 1, j])
    return lw


@njit(cache=True)
def _sample_heights(lw_v, lw_h, node_lw, k, uniforms):
    h = np.empty(k, dtype=np.int64)
    i, j = 0, k
    step = 0
    while i < k:
        if j == 0:
            h[i] = 0
            i += 1
            continue
        q_down = math.exp(lw_v[i, j - 1] + node_lw[i, j - 1] - node_lw[i, j])
        q_right = math.exp(lw_h[i, j] + node_lw[i + 1, j] - node_lw[i, j])
        if not (-1e-9 <= q_down <= 1 + 1e-9) or abs(q_down + q_right - 1.0) > 1e-9:
            raise ValueError("edge probabilities out of range")
        if uniforms[step] < q_down:
            j -= 1
        else:
            h[i] = j
            i += 1
        step += 1
    return h


@njit(cache=True)
def _grid_revenue(h, k, c, r):
    # first column whose lowest node is at or below row r
    first = k
    for i in range(k):
        if h[i] <= r:
            first = i
            break
    if c < first:
        return 0
    p2 = 0 if c == k else h[c]
    return first + p2


@njit(cache=True)
def _apply_observation(n_v, n_h, lw_v, lw_h, eta, k, c, r):
    # vertical edges: row band r (none when v2 = 1), columns 0..c
    if r < k:
        for i in range(1, c + 1):
            n_v[i, r] += 1
            lw_v[i, r] = eta * (i / k) * n_v[i, r]
    # horizontal edges: column band c (none when v1 = 1), rows 1..r
    if c < k:
        for row in range(1, r + 1):
            n_h[c, row] += 1
            lw_h[c, row] = eta * (row / k) * n_h[c, row]


@njit(cache=True)
def _run_batch(n_v, n_h, lw_v, lw_h, eta, k, cols, rows, uniforms):
    t_len = cols.shape[0]
    heights = np.empty((t_len, k), dtype=np.int16)
    revenue = np.empty(t_len, dtype=np.int64)
    for t in range(t_len):
        node_lw = _node_log_weights(lw_v, lw_h, k)
        h = _sample_heights(lw_v, lw_h, node_lw, k, uniforms[t])
        for i in range(k):
            heights[t, i] = h[i]
        revenue[t] = _grid_revenue(h, k, cols[t], rows[t])
        _apply_observation(n_v, n_h, lw_v, lw_h, eta, k, cols[t], rows[t])
    return heights, revenue


def heights_to_mechanism(h: Sequence[int], k: int) -> Mechanism:
    nodes = [(ZERO, ONE)]
    prev = k
    for i, hi in enumerate(h):
        hi = int(hi)
        if hi > prev or hi < 0:
            raise ValueError("heights must be nonincreasing and nonnegative")
        if hi < prev:
            nodes.append((Fraction(i, k), Fraction(hi, k)))
        nodes.append((Fraction(i + 1, k), Fraction(hi, k)))
        prev = hi
    if prev > 0:
        nodes.append((ONE, ZERO))
    return Mechanism(Mechanism(tuple(nodes)).canonical())


def mechanism_to_heights(mech: Mechanism, k: int) -> tuple[int, ...]:
    """Inverse of ``heights_to_mechanism`` for (0,1)->(1,0) grid paths."""
    if mech.nodes[0] != (ZERO, ONE) or mech.nodes[-1] != (ONE, ZERO):
        raise ValueError("path must run from (0, 1) to (1, 0)")
    out = []
    for i in range(k):
        mid = Fraction(2 * i + 1, 2 * k)
        h = mech.price_agent2(mid)
        if (h * k).denominator != 1:
            raise ValueError("path does not lie on the grid")
        out.append(int(h * k))
    return tuple(out)


def enumerate_grid_paths(k: int) -> list[tuple[int, ...]]:
    """All (0,1)->(1,0) paths of the 1/k grid, as height tuples."""
    out = []
    for combo in itertools.combinations_with_replacement(range(k, -1, -1), k):
        out.append(tuple(combo))
    return out


class PathHedge:
    """Exponential weights over grid paths, kept per edge."""

    def __init__(self, epsilon, eta: float):
        self.k = grid_size(epsilon)
        self.epsilon = Fraction(1, self.k)
        if eta <= 0:
            raise ValueError("learning rate must be positive")
        self.eta = float(eta)
        k = self.k
        self.n_v = np.zeros((k + 1, k), dtype=np.int64)
        self.n_h = np.zeros((k, k + 1), dtype=np.int64)
        self.lw_v = np.zeros((k + 1, k))
        self.lw_h = np.zeros((k, k + 1))
        self.rounds = 0

    def cell(self, v) -> tuple[int, int]:
        c = int(grid_index(np.array([float(v[0])]), self.k)[0])
        r = int(grid_index(np.array([float(v[1])]), self.k)[0])
        return c, r

    def update(self, v) -> None:
        c, r = self.cell(v)
        _apply_observation(self.n_v, self.n_h, self.lw_v, self.lw_h, self.eta, self.k, c, r)
        self.rounds += 1

    def vertical_log_weight(self, i: int, r: int) -> float:
        """Log-weight of the edge (i, r+1) -> (i, r) in grid units."""
        return float(self.lw_v[i, r])

    def horizontal_log_weight(self, i: int, r: int) -> float:
        """Log-weight of the edge (i, r) -> (i+1, r) in grid units."""
        return float(self.lw_h[i, r])

    def node_log_weights(self) -> np.ndarray:
        """Entry [i, j]: log of the summed weights of paths from node (i, j) to the sink."""
        return _node_log_weights(self.lw_v, self.lw_h, self.k)

    def node_weights(self) -> np.ndarray:
        return np.exp(self.node_log_weights())

    def down_probability(self, i: int, j: int, node_lw: np.ndarray | None = None) -> float:
        if node_lw is None:
            node_lw = self.node_log_weights()
        if i == self.k:
            return 1.0
        if j == 0:
            return 0.0
        return math.exp(self.lw_v[i, j - 1] + node_lw[i, j - 1] - node_lw[i, j])

    def path_log_weight(self, h: Sequence[int]) -> float:
        total = 0.0
        j = self.k
        for i, hi in enumerate(h):
            for r in range(hi, j):
                total += self.lw_v[i, r]
            total += self.lw_h[i, hi]
            j = hi
        for r in range(0, j):
            total += self.lw_v[self.k, r]
        return total

    def path_probability(self, h: Sequence[int]) -> float:
        """Probability that edge-by-edge sampling returns this path."""
        node_lw = self.node_log_weights()
        prob = 1.0
        i, j = 0, self.k
        for col, hi in enumerate(h):
            while j > hi:
                prob *= self.down_probability(col, j, node_lw)
                j -= 1
            prob *= 1.0 - self.down_probability(col, j, node_lw)
            i = col + 1
        return prob

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        node_lw = self.node_log_weights()
        u = rng.random(2 * self.k)
        return tuple(int(x) for x in _sample_heights(self.lw_v, self.lw_h, node_lw, self.k, u))


def path_learning_parameters(horizon: int) -> tuple[Fraction, float]:
    """Grid step 1/k with k the smallest integer such that k^3 >= T, and rate T^(-1/2)."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    k = max(1, round(horizon ** (1 / 3)))
    while k ** 3 < horizon:
        k += 1
    while k > 1 and (k - 1) ** 3 >= horizon:
        k -= 1
    return Fraction(1, k), horizon ** -0.5


class PathLearningLearner:
    """Samples a grid path from the exponential-weights law each round."""

    name = "path_learning"

    def __init__(self, horizon: int, rng: np.random.Generator, epsilon=None, eta: float | None = None):
        eps0, eta0 = path_learning_parameters(horizon)
        self.hedge = PathHedge(eps0 if epsilon is None else epsilon, eta0 if eta is None else eta)
        self.rng = rng
        self.last_heights: tuple[int, ...] | None = None

    def propose(self, t: int) -> Mechanism:
        if self.hedge.rounds != t - 1:
            raise InvariantViolation(f"round {t} proposed after {self.hedge.rounds} updates")
        self.last_heights = self.hedge.sample(self.rng)
        return heights_to_mechanism(self.last_heights, self.hedge.k)

    def observe(self, v) -> None:
        self.hedge.update(v)

    def run_batch(self, v1: np.ndarray, v2: np.ndarray):
        """Play a whole episode against known valuations in compiled code.

        Each round's path is drawn before that round's valuation is applied.
        Returns per-round heights and realised revenues.
        """
        h = self.hedge
        cols = grid_index(v1, h.k)
        rows = grid_index(v2, h.k)
        uniforms = self.rng.random((len(cols), 2 * h.k))
        heights, rev = _run_batch(h.n_v, h.n_h, h.lw_v, h.lw_h, h.eta, h.k, cols, rows, uniforms)
        h.rounds += len(cols)
        return heights, rev / h.k


def explicit_hedge(epsilon, eta: float, history) -> dict[tuple[int, ...], float]:
    """Hedge law over every grid path, weights from directly evaluated revenues."""
    k = grid_size(epsilon)
    if k > 5:
        raise ValueError("explicit enumeration is capped at 1/eps <= 5")
    paths = enumerate_grid_paths(k)
    hist = [(as_rational(float(a)), as_rational(float(b))) for a, b in history]
    logw = []
    for h in paths:
        mech = heights_to_mechanism(h, k)
        logw.append(eta * float(sum((mech.revenue(v) for v in hist), ZERO)))
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return dict(zip(paths, w.tolist()))
