"""Valuation processes: stochastic, smooth and adversarial.

Every environment draws whole episodes from a numpy ``Generator`` so that an
episode is a pure function of (spec, seed).  Environments that know their
law also report exact or closed-form expected revenues, which the harness
uses for pseudo-regret.
"""

from __future__ import annotations

import importlib
import math
import random as _random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .grid import grid_size
from .mechanism import ONE, ZERO, InvariantViolation, Mechanism, as_rational
from .solver import DiscreteDistribution, best_mechanism, staircase

Q1 = (0.5, 0.75)
Q2 = (0.75, 1.0)


# ---------------------------------------------------------------------------
# Example distributions


def equal_revenue_dist(n: int, delta) -> DiscreteDistribution:
    """Atoms (delta(1 - 2^-i), 2^-i), i = 1..n, on which every posted price earns 2^-n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    delta = as_rational(delta)
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    atoms = []
    for i in range(1, n + 1):
        y = Fraction(1, 2 ** i)
        p = Fraction(2, 2 ** n) if i == 1 else Fraction(2 ** i, 2 ** (n + 1))
        atoms.append(((delta * (1 - y), y), p))
    return DiscreteDistribution(tuple(atoms))


def snap_to_floats(dist: DiscreteDistribution) -> DiscreteDistribution:
    """Move every atom to the nearest double so float samples are exact atoms."""
    return DiscreteDistribution.from_weights(
        ((Fraction(float(v[0])), Fraction(float(v[1]))), p) for v, p in dist.atoms
    )


# ---------------------------------------------------------------------------
# Monotone CDF specs


class Cdf:
    """A continuous CDF on [0, 1] with F(0) = 0 and F(1) = 1."""

    def __init__(self, spec):
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            spec = {"power": spec}
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ValueError(f"CDF spec must be {{power: k}} or {{piecewise_linear: [[x, F], ...]}}, got {spec!r}")
        (kind, arg), = spec.items()
        self.spec = spec
        if kind == "power":
            k = float(arg)
            if k <= 0:
                raise ValueError("power must be positive")
            self.kind, self.k = "power", k
        elif kind == "piecewise_linear":
            pts = np.array(arg, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
                raise ValueError("piecewise_linear needs a list of [x, F] pairs")
            xs, fs = pts[:, 0], pts[:, 1]
            if xs[0] != 0 or xs[-1] != 1 or np.any(np.diff(xs) <= 0):
                raise ValueError("piecewise_linear x values must increase from 0 to 1")
            if fs[0] != 0 or fs[-1] != 1 or np.any(np.diff(fs) < 0):
                raise ValueError("piecewise_linear F values must be nondecreasing from 0 to 1")
            self.kind, self.xs, self.fs = "piecewise_linear", xs, fs
        else:
            raise ValueError(f"unknown CDF kind {kind!r}")

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.kind == "power":
            return x ** self.k
        return np.interp(x, self.xs, self.fs)

    def sup_density(self) -> float:
        if self.kind == "power":
            return self.k if self.k >= 1 else math.inf
        return float(np.max(np.diff(self.fs) / np.diff(self.xs)))

    def inverse(self, u, tol: float = 1e-12):
        """Smallest x with F(x) >= u, by bisection."""
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        while np.max(hi - lo, initial=0.0) > tol:
            mid = 0.5 * (lo + hi)
            ok = self(mid) >= u
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        return hi


# ---------------------------------------------------------------------------
# Environments


class Environment:
    name = "environment"

    def sample_many(self, horizon: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample(self, t: int, rng: np.random.Generator) -> tuple[float, float]:
        v1, v2 = self.sample_many(1, rng)
        return float(v1[0]), float(v2[0])

    def prob_box(self, x0, x1, y0, y1, t: int | None = None):
        """P(x0 <= V1 < x1, y0 <= V2 < y1) for densities; None when unknown."""
        return None

    def expected_revenue(self, mech: Mechanism, t: int | None = None) -> float | None:
        """Expected revenue of a fixed mechanism under the round-t law."""
        nodes = np.array([[float(x), float(y)] for x, y in mech.nodes])
        if self.prob_box(0.0, 1.0, 0.0, 1.0, t) is None:
            return None
        total = 0.0
        for (x0, y0), (x1, y1) in zip(nodes, nodes[1:]):
            if x0 == x1:
                total += x0 * float(self.prob_box(x0, 1.0, y1, y0, t))
            else:
                total += y0 * float(self.prob_box(x0, x1, y0, 1.0, t))
        return total

    def expected_revenue_heights(self, heights: np.ndarray, k: int) -> np.ndarray | None:
        """Vectorised expected revenue of grid paths given as height rows."""
        if self.prob_box(0.0, 1.0, 0.0, 1.0) is None:
            return None
        h = np.asarray(heights, dtype=float) / k
        t_len = h.shape[0]
        upper = np.hstack([np.ones((t_len, 1)), h])  # top of the vertical run in column i
        lower = np.hstack([h, np.zeros((t_len, 1))])
        cols = np.arange(k + 1) / k
        vert = cols * self.prob_box(cols, 1.0, lower, upper)
        horiz = h * self.prob_box(cols[:-1], cols[1:], h, 1.0)
        return vert.sum(axis=1) + horiz.sum(axis=1)

    def optimum(self) -> tuple[float, Mechanism | None] | None:
        """Best expected revenue under the law, when known in closed form."""
        return None

    def smoothness_bound(self) -> float:
        raise ValueError(f"{self.name} has no density bound")


def _overlap(a0, a1, b0, b1):
    return np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)


@dataclass
class DiscreteEnv(Environment):
    dist: DiscreteDistribution
    name: str = "discrete"

    def __post_init__(self):
        self.dist = snap_to_floats(self.dist)
        self._pts = np.array([[float(v[0]), float(v[1])] for v, _ in self.dist.atoms])
        self._p = np.array([float(p) for _, p in self.dist.atoms])
        self._p /= self._p.sum()
        self._cache: dict[str, float] = {}
        self._opt = None

    def sample_many(self, horizon, rng):
        idx = rng.choice(len(self._p), size=horizon, p=self._p)
        return self._pts[idx, 0].copy(), self._pts[idx, 1].copy()

    def expected_revenue(self, mech, t=None):
        key = mech.key()
        if key not in self._cache:
            total = sum((p * mech.revenue(v) for v, p in self.dist.atoms), ZERO)
            self._cache[key] = float(total)
        return self._cache[key]

    def expected_revenue_heights(self, heights, k):
        from .learners import grid_index

        h = np.asarray(heights, dtype=np.int64)
        t_len = h.shape[0]
        out = np.zeros(t_len)
        cs = grid_index(self._pts[:, 0], k)
        rs = grid_index(self._pts[:, 1], k)
        hk = np.hstack([h, np.zeros((t_len, 1), dtype=np.int64)])
        for (c, r), p in zip(zip(cs, rs), self._p):
            below = h <= r
            first = np.where(below.any(axis=1), below.argmax(axis=1), k)
            rev = np.where(c >= first, first + hk[:, c], 0)
            out += p * rev / k
        return out

    def optimum(self):
        if self._opt is None:
            mech, val = best_mechanism(self.dist)
            self._opt = (float(val), mech)
        return self._opt


@dataclass
class ProductCdfEnv(Environment):
    f1: Cdf
    f2: Cdf
    name: str = "product_cdf"

    def sample_many(self, horizon, rng):
        u = rng.random((horizon, 2))
        return self.f1.inverse(u[:, 0]), self.f2.inverse(u[:, 1])

    def prob_box(self, x0, x1, y0, y1, t=None):
        return (self.f1(x1) - self.f1(x0)) * (self.f2(y1) - self.f2(y0))

    def smoothness_bound(self):
        d = self.f1.sup_density() * self.f2.sup_density()
        return 0.0 if math.isinf(d) else 1.0 / d


def uniform_env() -> ProductCdfEnv:
    return ProductCdfEnv(Cdf({"power": 1}), Cdf({"power": 1}), name="uniform")


@dataclass
class SmoothMixtureEnv(Environment):
    """With probability alpha uniform on [1/2,3/4]^2, otherwise uniform on [3/4,1]^2."""

    alpha: float
    name: str = "smooth_mixture"

    def __post_init__(self):
        a = float(self.alpha)
        if not (4 / 15 < a < 2 / 5):
            raise ValueError(f"alpha must lie in (4/15, 2/5), got {a}")
        self.alpha = a

    def sample_many(self, horizon, rng):
        first = rng.random(horizon) < self.alpha
        lo = np.where(first, Q1[0], Q2[0])
        u = rng.random((horizon, 2))
        return lo + 0.25 * u[:, 0], lo + 0.25 * u[:, 1]

    def density(self, v1, v2):
        v1, v2 = np.asarray(v1), np.asarray(v2)
        in1 = (v1 >= Q1[0]) & (v1 < Q1[1]) & (v2 >= Q1[0]) & (v2 < Q1[1])
        in2 = (v1 >= Q2[0]) & (v1 <= Q2[1]) & (v2 >= Q2[0]) & (v2 <= Q2[1])
        return 16 * (self.alpha * in1 + (1 - self.alpha) * in2)

    def prob_box(self, x0, x1, y0, y1, t=None):
        a = self.alpha
        m1 = _overlap(x0, x1, *Q1) * _overlap(y0, y1, *Q1)
        m2 = _overlap(x0, x1, *Q2) * _overlap(y0, y1, *Q2)
        return 16 * (a * m1 + (1 - a) * m2)

    def family_revenues(self) -> tuple[float, float]:
        return smooth_family_revenues(self.alpha)

    def optimum(self):
        r1, r2 = self.family_revenues()
        return (r1, M1) if r1 >= r2 else (r2, M2)

    def smoothness_bound(self):
        return 1.0 / (16 * max(self.alpha, 1 - self.alpha))


@dataclass
class SmoothSequenceEnv(Environment):
    """Cycles through phases, each held for ``period`` rounds."""

    phases: list
    period: int = 1
    name: str = "smooth_sequence"

    def __post_init__(self):
        if not self.phases or self.period < 1:
            raise ValueError("need at least one phase and a positive period")

    def phase(self, t: int) -> Environment:
        return self.phases[((t - 1) // self.period) % len(self.phases)]

    def sample_many(self, horizon, rng):
        v1 = np.empty(horizon)
        v2 = np.empty(horizon)
        for idx, env in enumerate(self.phases):
            rounds = np.array([t for t in range(1, horizon + 1) if self.phase(t) is env], dtype=int)
            if len(rounds):
                a, b = env.sample_many(len(rounds), rng)
                v1[rounds - 1], v2[rounds - 1] = a, b
        return v1, v2

    def prob_box(self, x0, x1, y0, y1, t=None):
        if t is None:
            parts = [e.prob_box(x0, x1, y0, y1) for e in self.phases]
            if any(p is None for p in parts):
                return None
            return sum(parts) / len(parts)
        return self.phase(t).prob_box(x0, x1, y0, y1)

    def smoothness_bound(self):
        return min(e.smoothness_bound() for e in self.phases)


@dataclass
class CustomSamplerEnv(Environment):
    """Valuations from a user function ``f(rng, horizon) -> array of shape (horizon, 2)``."""

    target: str
    name: str = "custom_sampler"

    def __post_init__(self):
        mod, _, attr = self.target.partition(":")
        if not mod or not attr:
            raise ValueError("custom sampler must be given as 'module:function'")
        self._fn: Callable = getattr(importlib.import_module(mod), attr)

    def sample_many(self, horizon, rng):
        arr = np.asarray(self._fn(rng, horizon), dtype=float).reshape(horizon, 2)
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("custom sampler produced valuations outside [0, 1]")
        return arr[:, 0].copy(), arr[:, 1].copy()


# ---------------------------------------------------------------------------
# Two-square smooth family


M1 = Mechanism.posted_price(Fraction(1, 2), Fraction(1, 2))
M2 = Mechanism.posted_price(Fraction(3, 4), Fraction(3, 4))


def smooth_family_revenues(alpha) -> tuple[float, float]:
    alpha = float(alpha)
    if not (4 / 15 < alpha < 2 / 5):
        raise ValueError(f"alpha must lie in (4/15, 2/5), got {alpha}")
    return 1.0, 1.5 * (1 - alpha)


def domination_check(alpha, mech: Mechanism, samples: int = 10 ** 6, seed: int = 0) -> bool:
    """Monte Carlo: does M1 or M2 (whichever applies) earn at least as much as ``mech``?

    M1 is the comparator when ``mech`` allocates somewhere in [1/2,3/4]^2,
    M2 otherwise.  Ties are accepted within two standard errors.
    """
    env = SmoothMixtureEnv(alpha)
    rng = np.random.default_rng(seed)
    v1, v2 = env.sample_many(samples, rng)
    # a monotone region meets the closed lower square iff it holds its top-right corner
    ref = M1 if mech.allocates((Fraction(3, 4), Fraction(3, 4))) else M2
    diff = ref.revenue_many(v1, v2) - mech.revenue_many(v1, v2)
    se = diff.std(ddof=1) / math.sqrt(samples)
    return bool(diff.mean() >= -2 * se)


# ---------------------------------------------------------------------------
# Adversarial instance


@dataclass
class AdversarialTrace:
    delta: Fraction
    zeta: Fraction
    denominator: int  # a_t = a_num[t-1] / denominator
    coins: list  # "R" or "L"
    a_num: list
    b_num: list

    @property
    def horizon(self) -> int:
        return len(self.coins)

    def a(self, t: int) -> Fraction:
        return Fraction(self.a_num[t - 1], self.denominator)

    def b(self, t: int) -> Fraction:
        return Fraction(self.b_num[t - 1], self.denominator)

    def valuation(self, t: int) -> tuple[Fraction, Fraction]:
        if self.coins[t - 1] == "R":
            return self.b(t), ONE
        return self.a(t), self.zeta

    def valuations_float(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.denominator
        v1 = np.array([
            (b if c == "R" else a) / d for c, a, b in zip(self.coins, self.a_num, self.b_num)
        ], dtype=float)
        v2 = np.array([1.0 if c == "R" else float(self.zeta) for c in self.coins])
        return v1, v2


def adversarial_trace(delta, zeta, horizon: int, rng) -> AdversarialTrace:
    """Coin R (probability zeta) emits (b_t, 1), coin L emits (a_t, zeta).

    Values are kept as integer numerators over delta's denominator times 3^T,
    so the whole trace is exact.
    """
    delta, zeta = as_rational(delta), as_rational(zeta)
    if not (0 < delta < 1 and 0 < zeta < 1):
        raise ValueError("delta and zeta must lie in (0, 1)")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    den = delta.denominator * 3 ** horizon
    # delta / 3^t as a numerator over den
    step = [0] + [delta.numerator * 3 ** (horizon - t) for t in range(1, horizon + 1)]
    a, b = step[1], 2 * step[1]
    coins, a_num, b_num = [], [], []
    draws = _coin_draws(rng, horizon)
    for t in range(1, horizon + 1):
        coin = "R" if draws[t - 1] < zeta else "L"
        coins.append(coin)
        a_num.append(a)
        b_num.append(b)
        if t == horizon:
            break
        if coin == "R":
            a, b = b + step[t + 1], b + 2 * step[t + 1]
        else:
            a, b = a - step[t + 1], a - 2 * step[t + 1]
    return AdversarialTrace(delta, zeta, den, coins, a_num, b_num)


def _coin_draws(rng, n):
    if isinstance(rng, np.random.Generator):
        return [Fraction(float(u)) for u in rng.random(n)]
    if isinstance(rng, _random.Random):
        return [Fraction(rng.random()) for _ in range(n)]
    raise TypeError("rng must be a numpy Generator or random.Random")


def closed_form_ab(trace: AdversarialTrace) -> list[tuple[int, int]]:
    """(a_t, b_t) numerators from sums of signed steps instead of the recursion."""
    horizon = trace.horizon
    step = [0] + [trace.delta.numerator * 3 ** (horizon - t) for t in range(1, horizon + 1)]
    out = []
    acc = 0
    for t in range(1, horizon + 1):
        prev_r = t == 1 or trace.coins[t - 2] == "R"
        sign = 1 if prev_r else -1
        out.append((acc + sign * step[t], acc + 2 * sign * step[t]))
        mult = 2 if trace.coins[t - 1] == "R" else 1
        acc += sign * mult * step[t]
    return out


def separating_threshold(trace: AdversarialTrace) -> Fraction:
    """Midpoint between the largest b_t on R rounds and the smallest a_t on L rounds."""
    r_b = [n for c, n in zip(trace.coins, trace.b_num) if c == "R"]
    l_a = [n for c, n in zip(trace.coins, trace.a_num) if c == "L"]
    d = trace.denominator
    hi = Fraction(min(l_a), d) if l_a else trace.delta
    lo = Fraction(max(r_b), d) if r_b else ZERO
    if not lo < hi:
        raise InvariantViolation(f"R-round values reach {lo}, L-round values start at {hi}")
    tau = (lo + hi) / 2
    if not (0 < tau < trace.delta):
        raise InvariantViolation(f"threshold {tau} outside (0, delta)")
    return tau


def threshold_mechanism(tau, zeta) -> Mechanism:
    """Allocate (x, 1) for every x, and (x, y) with x >= tau, y >= zeta."""
    tau, zeta = as_rational(tau), as_rational(zeta)
    return Mechanism(((ZERO, ONE), (tau, ONE), (tau, zeta), (ONE, zeta)))


def grid_floor(x: Fraction, k: int) -> Fraction:
    return Fraction(math.floor(x * k), k)


def grid_round_cap(a: Fraction, b: Fraction, zeta: Fraction, k: int) -> Fraction:
    """Best expected revenue of any 1/k-grid mechanism against the two-point law
    (b, 1) w.p. zeta, (a, zeta) w.p. 1 - zeta."""
    fa, fb, fz = grid_floor(a, k), grid_floor(b, k), grid_floor(zeta, k)
    rev_q = fa + fz
    only_p = zeta * (fb + 1)
    if b >= fa:
        only_q = rev_q  # the smallest region holding (a, zeta) also holds (b, 1)
        both = rev_q
    else:
        only_q = (1 - zeta) * rev_q
        both = zeta * (fb + 1) + (1 - zeta) * rev_q
    return max(only_p, only_q, both)


def any_mechanism_round_cap(a: Fraction, b: Fraction, zeta: Fraction) -> Fraction:
    """Best expected revenue of any mechanism against the same two-point law."""
    dist = DiscreteDistribution.from_weights([((b, ONE), zeta), ((a, zeta), 1 - zeta)])
    return best_mechanism(dist)[1]


# ---------------------------------------------------------------------------
# Rectangles and virtual surplus


def clip_to_corner(mech: Mechanism, a, c) -> Mechanism:
    """Mechanism whose region is the original one intersected with {v1 >= a, v2 >= c}."""
    a, c = as_rational(a), as_rational(c)
    nodes = []
    for x, y in mech.nodes:
        p = (max(x, a), max(y, c))
        if not nodes or nodes[-1] != p:
            nodes.append(p)
    return Mechanism(tuple(nodes))


def rectangle_virtual_revenue(rect, mech: Mechanism, tol: float = 1e-6) -> float:
    """Integral of (2(v1 + v2) - (b + d)) / area over the allocated part of [a,b]x[c,d].

    Under the uniform law on the rectangle this is the expected revenue of the
    mechanism clipped at the rectangle's lower-left corner.
    """
    a, b, c, d = (float(z) for z in rect)
    if not (a < b and c < d):
        raise ValueError("rectangle must have positive area")
    area = (b - a) * (d - c)

    def floor_at(x):
        h = mech.price_agent2(Fraction(x))
        return None if h is None else float(h)

    def inner(x):
        h = floor_at(x)
        if h is None:
            return 0.0
        lo = max(c, h)
        if lo >= d:
            return 0.0
        val, _ = integrate.quad(lambda y: 2 * (x + y) - (b + d), lo, d, epsabs=tol / 10)
        return val

    breaks = sorted({float(x) for x, _ in mech.nodes if a < float(x) < b})
    val, _ = integrate.quad(inner, a, b, points=breaks or None, epsabs=tol, limit=200)
    return val / area


def rectangle_virtual_revenue_exact(rect, mech: Mechanism) -> Fraction:
    """Closed-form version of ``rectangle_virtual_revenue`` for rational inputs."""
    a, b, c, d = (as_rational(z) for z in rect)
    xs = sorted({a, b} | {x for x, _ in mech.nodes if a < x < b})
    total = ZERO
    for x0, x1 in zip(xs, xs[1:]):
        h = mech.price_agent2((x0 + x1) / 2)
        if h is None:
            continue
        lo = max(c, h)
        if lo >= d:
            continue
        # integral of 2x + 2y - (b + d) over [x0,x1] x [lo,d]
        total += (x1 ** 2 - x0 ** 2) * (d - lo) + (x1 - x0) * (d ** 2 - lo ** 2) - (b + d) * (x1 - x0) * (d - lo)
    return total / ((b - a) * (d - c))


def smoothness_bound(env: Environment) -> float:
    return env.smoothness_bound()


# ---------------------------------------------------------------------------
# Shattering witness


def shatter_path(epsilon, subset: Sequence[int]) -> Mechanism:
    """Grid path earning exactly 1 at diagonal points (i eps, 1 - i eps) for i in
    ``subset`` and 0 at the other diagonal points, i in 1..1/eps."""
    k = grid_size(epsilon)
    chosen = set(int(i) for i in subset)
    if not chosen <= set(range(1, k + 1)):
        raise ValueError(f"diagonal indices must lie in 1..{k}")
    corners = []
    for i in range(1, k + 1):
        corners.append((i, k - i) if i in chosen else (i, k - i + 1))
    nodes = [(1, k)]
    for idx, (i, y) in enumerate(corners):
        nodes.append((i, y))
        nodes.append((i + 1, y) if i < k else (i, y))
    out = []
    for x, y in nodes:
        p = (Fraction(x, k), Fraction(y, k))
        if not out or out[-1] != p:
            out.append(p)
    return Mechanism(tuple(out))


def diagonal_point(i: int, epsilon) -> tuple[Fraction, Fraction]:
    eps = Fraction(1, grid_size(epsilon))
    return (i * eps, 1 - i * eps)


@dataclass
class AdversarialEnv(Environment):
    """Replays a freshly drawn adversarial trace; the round law is the two-point coin."""

    delta: Fraction
    zeta: Fraction
    name: str = "adversarial"

    def __post_init__(self):
        self.delta, self.zeta = as_rational(self.delta), as_rational(self.zeta)
        if not (0 < self.delta < 1 and 0 < self.zeta < 1):
            raise ValueError("delta and zeta must lie in (0, 1)")
        self.trace: AdversarialTrace | None = None

    def sample_many(self, horizon, rng):
        self.trace = adversarial_trace(self.delta, self.zeta, horizon, rng)
        return self.trace.valuations_float()

    def expected_revenue(self, mech, t=None):
        if self.trace is None or t is None:
            return None
        p = (float(self.trace.b(t)), 1.0)
        q = (float(self.trace.a(t)), float(self.zeta))
        z = float(self.zeta)
        return z * mech.revenue_float(*p) + (1 - z) * mech.revenue_float(*q)
