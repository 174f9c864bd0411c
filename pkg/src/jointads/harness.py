"""Episode runner, hindsight benchmark, regret reports and slope fits."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .config import ExperimentConfig, build_environment, epsilon_override, fixed_mechanism
from .environments import AdversarialEnv, Environment, SmoothSequenceEnv
from .learners import (
    AtbmLearner,
    FixedLearner,
    PathLearningLearner,
    heights_to_mechanism,
)
from .mechanism import InvariantViolation, Mechanism
from .solver import solve_samples

CSV_VERSION = "artifact-rounds v1"
CSV_COLUMNS = ["t", "mechanism", "v1", "v2", "revenue", "cumulative", "expected"]
HINDSIGHT_CAP = 5000  # distinct valuations above which a known optimum replaces the hindsight solve


def seeded_generators(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams for the environment and the learner."""
    env_ss, learner_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(learner_ss)


def mechanism_id(mech: Mechanism) -> str:
    return hashlib.blake2b(mech.key().encode(), digest_size=6).hexdigest()


@dataclass(frozen=True)
class RoundRecord:
    t: int
    mechanism: str
    v1: float
    v2: float
    revenue: float
    cumulative: float
    expected: float


@dataclass
class Episode:
    seed: int
    learner: str
    v1: np.ndarray
    v2: np.ndarray
    revenue: np.ndarray
    expected: np.ndarray  # nan where the law is unknown
    mechanisms: list | None = None  # one Mechanism per round
    heights: np.ndarray | None = None  # grid paths, one row per round
    grid_size: int | None = None

    @property
    def horizon(self) -> int:
        return len(self.v1)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.revenue)

    def mechanism_at(self, t: int) -> Mechanism:
        if self.mechanisms is not None:
            return self.mechanisms[t - 1]
        return heights_to_mechanism(self.heights[t - 1], self.grid_size)

    def mechanism_ids(self) -> list[str]:
        cache: dict = {}
        out = []
        for t in range(1, self.horizon + 1):
            key = id(self.mechanisms[t - 1]) if self.mechanisms is not None else self.heights[t - 1].tobytes()
            if key not in cache:
                cache[key] = mechanism_id(self.mechanism_at(t))
            out.append(cache[key])
        return out

    def records(self) -> Iterator[RoundRecord]:
        cum = self.cumulative
        ids = self.mechanism_ids()
        for i in range(self.horizon):
            yield RoundRecord(i + 1, ids[i], float(self.v1[i]), float(self.v2[i]),
                              float(self.revenue[i]), float(cum[i]), float(self.expected[i]))


def build_learner(cfg: ExperimentConfig, horizon: int, rng: np.random.Generator):
    spec, c = cfg.learner, cfg.constants
    if spec.kind == "atbm":
        return AtbmLearner(horizon, constant=c.atbm_constant, refresh_growth=c.refresh_growth)
    if spec.kind == "path_learning":
        return PathLearningLearner(horizon, rng, epsilon=epsilon_override(c), eta=c.hedge_eta)
    return FixedLearner(fixed_mechanism(spec))


def _stationary(env: Environment) -> bool:
    return not isinstance(env, (AdversarialEnv, SmoothSequenceEnv))


def play(env: Environment, learner, horizon: int, env_rng: np.random.Generator,
         seed: int = 0, use_batch: bool = True) -> Episode:
    """Run the posting protocol for ``horizon`` rounds.

    The environment is oblivious, so its valuations are drawn up front; the
    learner still sees round t's valuation only after posting for round t.
    """
    v1, v2 = env.sample_many(horizon, env_rng)
    name = getattr(learner, "name", type(learner).__name__)
    if use_batch and isinstance(learner, PathLearningLearner):
        heights, rev = learner.run_batch(v1, v2)
        k = learner.hedge.k
        if _stationary(env):
            exp = env.expected_revenue_heights(heights, k)
        else:
            exp = None
        if exp is None:
            exp = np.array([
                _maybe(env.expected_revenue(heights_to_mechanism(heights[t], k), t + 1))
                for t in range(horizon)
            ]) if not _stationary(env) else np.full(horizon, np.nan)
        return Episode(seed, name, v1, v2, rev, np.asarray(exp, dtype=float), heights=heights, grid_size=k)
    revenue = np.empty(horizon)
    expected = np.empty(horizon)
    mechs = []
    stationary = _stationary(env)
    cache: dict[int, float] = {}
    for t in range(1, horizon + 1):
        mech = learner.propose(t)
        mechs.append(mech)
        a, b = float(v1[t - 1]), float(v2[t - 1])
        revenue[t - 1] = mech.revenue_float(a, b)
        if stationary:
            key = id(mech)
            if key not in cache:
                cache[key] = _maybe(env.expected_revenue(mech))
            expected[t - 1] = cache[key]
        else:
            expected[t - 1] = _maybe(env.expected_revenue(mech, t))
        learner.observe((a, b))
    return Episode(seed, name, v1, v2, revenue, expected, mechanisms=mechs)


def _maybe(x):
    return np.nan if x is None else float(x)


def run_episode(cfg: ExperimentConfig, seed: int, horizon: int | None = None, use_batch: bool = True) -> Episode:
    horizon = cfg.horizon if horizon is None else horizon
    env = build_environment(cfg.environment)
    env_rng, learner_rng = seeded_generators(seed)
    learner = build_learner(cfg, horizon, learner_rng)
    ep = play(env, learner, horizon, env_rng, seed, use_batch)
    ep.environment = env
    return ep


# ---------------------------------------------------------------------------
# Benchmarks and reports


def hindsight_opt(v1: Sequence[float], v2: Sequence[float], exact_cap: int = 200) -> tuple[Mechanism, float]:
    """Best fixed mechanism on the realised valuations and its total revenue."""
    vals = np.column_stack([np.asarray(v1, dtype=float), np.asarray(v2, dtype=float)])
    if len(vals) == 0:
        raise ValueError("no valuations")
    mech, per_round = solve_samples(vals, exact_cap)
    total = float(mech.revenue_many(vals[:, 0], vals[:, 1]).sum())
    if abs(total - per_round * len(vals)) > 1e-7 * max(1.0, total):
        raise InvariantViolation(f"hindsight value {per_round * len(vals)} disagrees with replay {total}")
    return mech, total


@dataclass
class SeedResult:
    seed: int
    horizon: int
    learner_total: float
    hindsight_total: float | None
    regret: float | None
    hindsight_mechanism: str | None
    expected_total: float | None = None
    benchmark_total: float | None = None
    pseudo_regret: float | None = None


@dataclass
class RegretReport:
    learner: str
    environment: str
    horizon: int
    per_seed: list[SeedResult]
    mean_learner_total: float
    mean_hindsight_total: float | None
    mean_regret: float | None
    mean_pseudo_regret: float | None
    slope: dict | None = None

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def _distinct_points(ep: Episode) -> int:
    return len(np.unique(np.column_stack([ep.v1, ep.v2]), axis=0))


def regret_report(episodes: Sequence[Episode], env: Environment | None = None,
                  hindsight_cap: int = HINDSIGHT_CAP) -> RegretReport:
    """Per-seed totals against the hindsight optimum and, when the environment
    knows its optimum, against that benchmark.

    The hindsight solve is quadratic in the number of distinct valuations, so
    it is skipped above ``hindsight_cap`` when a known optimum can stand in.
    """
    if not episodes:
        raise ValueError("no episodes")
    rows = []
    opt = env.optimum() if env is not None else None
    for ep in episodes:
        total = float(ep.revenue.sum())
        if opt is not None and _distinct_points(ep) > hindsight_cap:
            res = SeedResult(ep.seed, ep.horizon, total, None, None, None)
        else:
            mech, hind = hindsight_opt(ep.v1, ep.v2)
            if ep.learner == "fixed" and hind < total - 1e-9 * max(1.0, total):
                raise InvariantViolation(f"fixed mechanism earned {total} above the hindsight optimum {hind}")
            res = SeedResult(ep.seed, ep.horizon, total, hind, hind - total, mechanism_id(mech))
        if not np.isnan(ep.expected).any():
            res.expected_total = float(ep.expected.sum())
            if opt is not None:
                res.benchmark_total = opt[0] * ep.horizon
                res.pseudo_regret = res.benchmark_total - res.expected_total
        rows.append(res)
    pseudo = [r.pseudo_regret for r in rows]
    hind = [r.hindsight_total for r in rows]
    return RegretReport(
        learner=episodes[0].learner,
        environment=getattr(env, "name", "unknown"),
        horizon=episodes[0].horizon,
        per_seed=rows,
        mean_learner_total=float(np.mean([r.learner_total for r in rows])),
        mean_hindsight_total=None if None in hind else float(np.mean(hind)),
        mean_regret=None if None in hind else float(np.mean([r.regret for r in rows])),
        mean_pseudo_regret=None if any(p is None for p in pseudo) else float(np.mean(pseudo)),
    )


@dataclass
class SlopeFit:
    exponent: float
    stderr: float
    intercept: float
    degenerate: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "stderr": self.stderr, "intercept": self.intercept,
                "degenerate": self.degenerate, "reason": self.reason}


def slope_estimate(horizons: Sequence[float], regrets: Sequence[float]) -> SlopeFit:
    """Least-squares slope of log(regret) against log(T)."""
    t = np.asarray(horizons, dtype=float)
    r = np.asarray(regrets, dtype=float)
    if t.shape != r.shape or t.ndim != 1:
        raise ValueError("horizons and regrets must be equal-length vectors")
    if len(t) < 3:
        return SlopeFit(math.nan, math.nan, math.nan, True, "fewer than 3 horizons")
    if np.any(r <= 0) or np.any(t <= 0):
        return SlopeFit(math.nan, math.nan, math.nan, True, "nonpositive regret or horizon")
    if len(np.unique(t)) < 2:
        return SlopeFit(math.nan, math.nan, math.nan, True, "horizons are all equal")
    x, y = np.log(t), np.log(r)
    xm = x.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = ((x - xm) * (y - y.mean())).sum() / sxx
    intercept = y.mean() - slope * xm
    resid = y - (intercept + slope * x)
    dof = len(t) - 2
    stderr = math.sqrt((resid ** 2).sum() / dof / sxx) if dof > 0 else math.nan
    return SlopeFit(float(slope), float(stderr), float(intercept), False)


def sweep(cfg: ExperimentConfig, horizons: Sequence[int], seeds: Sequence[int] | None = None,
          progress: Callable[[str], None] | None = None):
    """Mean regret per horizon and the fitted exponent.

    Pseudo-regret is used when the environment's optimum is known, realised
    hindsight regret otherwise.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    points = []
    reports = []
    for horizon in horizons:
        eps = [run_episode(cfg, s, horizon) for s in seeds]
        rep = regret_report(eps, eps[0].environment)
        value = rep.mean_pseudo_regret if rep.mean_pseudo_regret is not None else rep.mean_regret
        points.append((horizon, value))
        reports.append(rep)
        if progress:
            progress(f"T={horizon} regret={value:.4f}")
    fit = slope_estimate([p[0] for p in points], [p[1] for p in points])
    return points, fit, reports


# ---------------------------------------------------------------------------
# Output


def write_rounds_csv(episode: Episode, fh) -> None:
    fh.write(f"# {CSV_VERSION}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in episode.records():
        w.writerow([r.t, r.mechanism, repr(r.v1), repr(r.v2), repr(r.revenue), repr(r.cumulative),
                    "" if math.isnan(r.expected) else repr(r.expected)])


def rounds_csv_text(episode: Episode) -> str:
    buf = io.StringIO()
    write_rounds_csv(episode, buf)
    return buf.getvalue()


def read_rounds_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or lines[0] != f"# {CSV_VERSION}":
        raise ValueError("missing or unsupported rounds CSV header")
    return list(csv.DictReader(lines[1:]))
