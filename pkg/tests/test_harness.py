import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jointads.config import ConfigError, validate_config
from jointads.environments import M1, SmoothMixtureEnv, equal_revenue_dist
from jointads.harness import (
    CSV_VERSION,
    hindsight_opt,
    mechanism_id,
    play,
    read_rounds_csv,
    regret_report,
    rounds_csv_text,
    run_episode,
    seeded_generators,
    slope_estimate,
    sweep,
)
from jointads.learners import FixedLearner
from jointads.mechanism import InvariantViolation, Mechanism
from jointads.solver import DiscreteDistribution, brute_force_best


def config(env, learner=None, horizon=200, **extra):
    data = {"environment": env, "learner": learner or {"kind": "path_learning"}, "horizon": horizon}
    data.update(extra)
    return validate_config(data)


SMOOTH = {"kind": "smooth_mixture", "alpha": 1 / 3}
POINT = {"kind": "discrete", "atoms": [["1/2", "1/2", 1]]}


# ---------------------------------------------------------------------------
# slope fitting


@given(st.floats(0.1, 1.5), st.floats(0.01, 100))
def test_slope_recovers_power_law(exponent, scale):
    hs = [10 ** 3, 10 ** 4, 10 ** 5]
    fit = slope_estimate(hs, [scale * h ** exponent for h in hs])
    assert not fit.degenerate
    assert fit.exponent == pytest.approx(exponent, abs=1e-9)
    assert fit.stderr == pytest.approx(0, abs=1e-6)


def test_slope_three_quarters():
    fit = slope_estimate([1e3, 1e4, 3e4], [t ** 0.75 for t in (1e3, 1e4, 3e4)])
    assert fit.exponent == pytest.approx(0.75, abs=1e-12)


@pytest.mark.parametrize("hs,rs,why", [
    ([10, 100], [1, 2], "fewer"),
    ([10, 100, 1000], [1, 0, 2], "nonpositive"),
    ([10, 10, 10], [1, 2, 3], "equal"),
])
def test_slope_flags_degenerate_input(hs, rs, why):
    fit = slope_estimate(hs, rs)
    assert fit.degenerate and why in fit.reason and math.isnan(fit.exponent)


def test_slope_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        slope_estimate([1, 2, 3], [1, 2])


# ---------------------------------------------------------------------------
# episodes


def test_seeded_generators_are_independent_and_reproducible():
    a1, b1 = seeded_generators(7)
    a2, b2 = seeded_generators(7)
    assert a1.random() == a2.random() and b1.random() == b2.random()
    e, l = seeded_generators(7)
    assert e.random() != l.random()


@pytest.mark.parametrize("learner", ["path_learning", "atbm"])
def test_episodes_are_deterministic(learner):
    cfg = config(SMOOTH, {"kind": learner}, horizon=300)
    a, b = run_episode(cfg, 3), run_episode(cfg, 3)
    assert rounds_csv_text(a) == rounds_csv_text(b)
    assert rounds_csv_text(a) != rounds_csv_text(run_episode(cfg, 4))


def test_batch_and_protocol_loop_agree():
    cfg = config(SMOOTH, horizon=250)
    a = run_episode(cfg, 1, use_batch=True)
    b = run_episode(cfg, 1, use_batch=False)
    assert np.allclose(a.revenue, b.revenue, rtol=0, atol=1e-12)
    assert a.mechanism_ids() == b.mechanism_ids()
    assert np.allclose(a.expected, b.expected, atol=1e-12)


def test_full_square_earns_nothing():
    cfg = config(SMOOTH, {"kind": "fixed", "path": [[0, 1], [0, 0], [1, 0]]}, horizon=100)
    ep = run_episode(cfg, 0)
    assert np.all(ep.revenue == 0)
    assert np.all(ep.expected == 0)


def test_point_mass_hindsight_is_full_surplus():
    cfg = config(POINT, {"kind": "posted_price", "p1": "1/4", "p2": "1/4"}, horizon=50)
    rep = regret_report([run_episode(cfg, 0)])
    assert rep.per_seed[0].hindsight_total == 50
    assert rep.per_seed[0].learner_total == 25
    assert rep.mean_regret == 25


@given(st.integers(0, 10 ** 6), st.sampled_from(["1/4", "1/2", "3/4"]), st.sampled_from(["1/4", "1/2", "3/4"]))
def test_fixed_mechanism_never_beats_hindsight(seed, p1, p2):
    cfg = config(SMOOTH, {"kind": "posted_price", "p1": p1, "p2": p2}, horizon=60)
    ep = run_episode(cfg, seed)
    rep = regret_report([ep])
    assert rep.per_seed[0].regret >= -1e-9


def test_fixed_mechanism_above_hindsight_is_an_invariant_violation():
    cfg = config(POINT, {"kind": "posted_price", "p1": "1/2", "p2": "1/2"}, horizon=10)
    ep = run_episode(cfg, 0)
    ep.revenue = ep.revenue + 1
    with pytest.raises(InvariantViolation):
        regret_report([ep])


def test_hindsight_matches_replay():
    rng = np.random.default_rng(0)
    v = rng.random((300, 2))
    mech, total = hindsight_opt(v[:, 0], v[:, 1])
    assert total == pytest.approx(mech.revenue_many(v[:, 0], v[:, 1]).sum(), abs=1e-9)
    few = np.repeat([[0.5, 0.5], [0.25, 1.0]], [30, 10], axis=0)
    mech, total = hindsight_opt(few[:, 0], few[:, 1])
    # brute force over atom subsets: (1/4, 1) pays 1/4 + 1 and (1/2, 1/2) pays 1
    dist = DiscreteDistribution.from_weights([((F(1, 2), F(1, 2)), 30), ((F(1, 4), F(1)), 10)])
    assert brute_force_best(dist)[1] == F(17, 16)
    assert total == 42.5


def test_first_smooth_mechanism_earns_one_on_average():
    env = SmoothMixtureEnv(1 / 3)
    ep = play(env, FixedLearner(M1), 10 ** 5, np.random.default_rng(5))
    assert ep.revenue.mean() == pytest.approx(1.0, abs=0.01)
    assert np.all(ep.expected == pytest.approx(1.0, abs=1e-12))


def test_equal_revenue_hindsight_near_quarter():
    cfg = config({"kind": "equal_revenue", "n": 3, "delta": "1/10000"}, {"kind": "atbm"}, horizon=4000)
    ep = run_episode(cfg, 2)
    _, total = hindsight_opt(ep.v1, ep.v2)
    assert total / 4000 == pytest.approx(0.25, abs=0.02)


def test_known_optimum_replaces_large_hindsight_solves():
    cfg = config(SMOOTH, horizon=400)
    ep = run_episode(cfg, 0)
    rep = regret_report([ep], ep.environment, hindsight_cap=100)
    assert rep.mean_regret is None and rep.per_seed[0].hindsight_total is None
    assert rep.mean_pseudo_regret == pytest.approx(400 * 1.0 - ep.expected.sum())
    full = regret_report([ep], ep.environment)
    assert full.mean_regret is not None


def test_sweep_reports_each_horizon():
    cfg = config(SMOOTH, seeds=[0, 1])
    points, fit, reports = sweep(cfg, [100, 400, 1600])
    assert [p[0] for p in points] == [100, 400, 1600]
    assert all(p[1] == r.mean_pseudo_regret for p, r in zip(points, reports))
    assert not fit.degenerate


# ---------------------------------------------------------------------------
# CSV


def test_csv_prefix_sums_and_ranges():
    ep = run_episode(config(SMOOTH, horizon=500), 9)
    text = rounds_csv_text(ep)
    assert text.startswith(f"# {CSV_VERSION}\n")
    rows = read_rounds_csv(text)
    assert [int(r["t"]) for r in rows] == list(range(1, 501))
    acc = 0.0
    for r in rows:
        rev = float(r["revenue"])
        assert 0 <= rev <= 2
        acc += rev
        assert float(r["cumulative"]) == pytest.approx(acc, abs=1e-9)
        assert 0 <= float(r["v1"]) <= 1 and 0 <= float(r["v2"]) <= 1


def test_csv_mechanism_ids_match_posted_mechanisms():
    ep = run_episode(config(SMOOTH, {"kind": "atbm"}, horizon=40), 0)
    rows = read_rounds_csv(rounds_csv_text(ep))
    for t in (1, 2, 17, 40):
        assert rows[t - 1]["mechanism"] == mechanism_id(ep.mechanism_at(t))
    assert mechanism_id(Mechanism.full_square()) == rows[0]["mechanism"]


def test_csv_header_required():
    with pytest.raises(ValueError):
        read_rounds_csv("t,mechanism\n1,abc\n")


# ---------------------------------------------------------------------------
# configuration


@pytest.mark.parametrize("data", [
    {"environment": SMOOTH, "learner": {"kind": "path_learning"}},
    {"environment": {"kind": "smooth_mixture", "alpha": 0.5}, "learner": {"kind": "atbm"}, "horizon": 5},
    {"environment": SMOOTH, "learner": {"kind": "fixed"}, "horizon": 5},
    {"environment": SMOOTH, "learner": {"kind": "posted_price", "p1": "1/2"}, "horizon": 5},
    {"environment": SMOOTH, "learner": {"kind": "atbm"}, "horizon": 0},
    {"environment": SMOOTH, "learner": {"kind": "atbm"}, "horizon": 5, "colour": "red"},
    {"environment": {"kind": "discrete", "atoms": [["3/2", "1/2", 1]]}, "learner": {"kind": "atbm"}, "horizon": 5},
    {"environment": SMOOTH, "learner": {"kind": "path_learning"}, "horizon": 5, "constants": {"epsilon": "2/5"}},
])
def test_bad_configs_rejected(data):
    with pytest.raises(ConfigError):
        validate_config(data)


def test_equal_revenue_env_uses_float_snapped_atoms():
    cfg = config({"kind": "equal_revenue", "n": 3, "delta": "1/6"}, {"kind": "atbm"}, horizon=20)
    ep = run_episode(cfg, 0)
    atoms = {(float(v[0]), float(v[1])) for v, _ in equal_revenue_dist(3, F(1, 6)).atoms}
    assert set(zip(ep.v1.tolist(), ep.v2.tolist())) <= atoms
