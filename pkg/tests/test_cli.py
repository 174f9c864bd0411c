import json
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from jointads import cli
from jointads.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, main
from jointads.environments import adversarial_trace, separating_threshold
from jointads.harness import read_rounds_csv
from jointads.service import create_app

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DIST = CONFIGS / "equal_revenue_n3.dist"


def run(tmp_path, *args):
    return main(["--out-dir", str(tmp_path), *map(str, args)])


def small_config(tmp_path, name="cfg.yaml", **overrides):
    text = (
        "environment:\n  kind: smooth_mixture\n  alpha: 0.3\n"
        "learner:\n  kind: path_learning\n"
        f"horizon: {overrides.get('horizon', 300)}\n"
        f"seeds: {overrides.get('seeds', [0])}\n"
    )
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------------------
# solve


def test_solve_prints_value_and_oracle(tmp_path, capsys):
    assert run(tmp_path, "solve", DIST, "--oracle") == EXIT_OK
    out = capsys.readouterr().out
    assert "value 3/8" in out and "oracle 3/8 agrees" in out
    poly = (tmp_path / "solve.poly").read_text().splitlines()
    pts = [tuple(map(float, line.split())) for line in poly]
    assert pts[0] == pytest.approx((1 / 12, 1.0), abs=1e-12)
    assert pts[-1] == (1.0, 0.125)
    assert len(pts) == 7


def test_solve_oracle_mismatch_exits_with_invariant_code(tmp_path, monkeypatch):
    monkeypatch.setattr("jointads.service.brute_force_best", lambda dist: (None, F(0)))
    assert run(tmp_path, "solve", DIST, "--oracle") == EXIT_INVARIANT


@pytest.mark.parametrize("text", ["1/2 1/2 1/3\n", "5 1/2 1\n", "not a number\n", ""])
def test_solve_bad_distribution_is_a_config_error(tmp_path, text):
    f = tmp_path / "bad.dist"
    f.write_text(text)
    assert run(tmp_path, "solve", f) == EXIT_CONFIG


def test_solve_missing_file(tmp_path):
    assert run(tmp_path, "solve", tmp_path / "nope.dist") == EXIT_CONFIG


# ---------------------------------------------------------------------------
# simulate and sweep


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--seed", "5", "--out-dir", str(a), "simulate", str(cfg)]) == EXIT_OK
    assert main(["--seed", "5", "--out-dir", str(b), "simulate", str(cfg)]) == EXIT_OK
    assert (a / "rounds.csv").read_bytes() == (b / "rounds.csv").read_bytes()
    rows = read_rounds_csv((a / "rounds.csv").read_text())
    assert len(rows) == 300
    report = json.loads((a / "report.json").read_text())
    assert report["per_seed"][0]["seed"] == 5


def test_simulate_writes_one_csv_per_seed(tmp_path):
    cfg = small_config(tmp_path, seeds=[1, 2], horizon=50)
    assert run(tmp_path, "simulate", cfg) == EXIT_OK
    assert (tmp_path / "rounds_seed1.csv").exists() and (tmp_path / "rounds_seed2.csv").exists()


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.*ml")))
def test_shipped_configs_load(name):
    from jointads.config import load_config

    load_config(CONFIGS / name)


def test_simulate_toml_and_relative_distribution_file(tmp_path):
    assert run(tmp_path, "simulate", CONFIGS / "posted_price_uniform.toml") == EXIT_OK
    assert run(tmp_path, "simulate", CONFIGS / "atbm_discrete_file.yaml") == EXIT_OK


@pytest.mark.parametrize("text", [
    "environment: {kind: smooth_mixture, alpha: 0.9}\nlearner: {kind: atbm}\nhorizon: 10\n",
    "environment: {kind: uniform}\nlearner: {kind: atbm}\n",
    "environment: [\n",
    "just a string\n",
])
def test_simulate_bad_config(tmp_path, text):
    f = tmp_path / "bad.yaml"
    f.write_text(text)
    assert run(tmp_path, "simulate", f) == EXIT_CONFIG


def test_sweep_writes_csv_and_fit(tmp_path, capsys):
    cfg = small_config(tmp_path, seeds=[0, 1])
    assert run(tmp_path, "sweep", cfg, "--horizons", "100,300,900") == EXIT_OK
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "# artifact-sweep v1" and lines[1] == "T,regret"
    assert [line.split(",")[0] for line in lines[2:]] == ["100", "300", "900"]
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert not summary["fit"]["degenerate"]
    assert "exponent" in capsys.readouterr().out


def test_sweep_needs_horizons(tmp_path):
    assert run(tmp_path, "sweep", small_config(tmp_path)) == EXIT_CONFIG
    assert run(tmp_path, "sweep", small_config(tmp_path), "--horizons", "10,x") == EXIT_CONFIG


# ---------------------------------------------------------------------------
# adversarial dump


def test_adversarial_csv_layout(tmp_path):
    assert main(["--seed", "3", "--out-dir", str(tmp_path), "lb-adversarial",
                 "--delta", "3/10", "--zeta", "1/4", "--horizon", "30"]) == EXIT_OK
    lines = (tmp_path / "adversarial.csv").read_text().splitlines()
    assert lines[0] == "# artifact-adversarial v1"
    assert lines[1] == "t,coin,a_t,b_t,v1,v2"
    assert len(lines) == 2 + 30 + 1
    trace = adversarial_trace(F(3, 10), F(1, 4), 30, np.random.default_rng(3))
    assert lines[-1] == f"# tau={separating_threshold(trace)}"
    t, coin, a, b, v1, v2 = lines[2].split(",")
    assert (F(a), F(b)) == (F(1, 10), F(1, 5))
    assert (v1, v2) == ((b, "1") if coin == "R" else (a, "1/4"))


def test_adversarial_decimal(tmp_path):
    assert run(tmp_path, "lb-adversarial", "--delta", "0.3", "--zeta", "0.25", "--horizon", "5", "--decimal") == EXIT_OK
    row = (tmp_path / "adversarial.csv").read_text().splitlines()[2].split(",")
    assert float(row[2]) == pytest.approx(0.1)


@pytest.mark.parametrize("args", [
    ["--delta", "3/2", "--zeta", "1/4", "--horizon", "5"],
    ["--delta", "1/3", "--zeta", "0", "--horizon", "5"],
    ["--delta", "1/3", "--zeta", "1/4", "--horizon", "0"],
    ["--delta", "abc", "--zeta", "1/4", "--horizon", "5"],
    ["--zeta", "1/4", "--horizon", "5"],
])
def test_adversarial_bad_arguments(tmp_path, args):
    assert run(tmp_path, "lb-adversarial", *args) == EXIT_CONFIG


# ---------------------------------------------------------------------------
# figures


def _segments(text):
    return [s for s in text.strip().split("\n\n") if s]


def test_figures_grid_lattice(tmp_path):
    assert run(tmp_path, "figures", "--name", "grid_lattice") == EXIT_OK
    segs = _segments((tmp_path / "grid_lattice.poly").read_text())
    assert len(segs) == 84
    for seg in segs:
        (x0, y0), (x1, y1) = [tuple(map(float, line.split())) for line in seg.splitlines()]
        assert (x0 == x1) != (y0 == y1)


def test_figures_all_and_unknown(tmp_path):
    assert run(tmp_path, "figures") == EXIT_OK
    names = {p.stem for p in tmp_path.glob("*.poly")}
    assert {"convex_boundary", "grid_lattice", "augmented_grid", "inner_hull", "shatter"} <= names
    assert run(tmp_path, "figures", "--name", "nope") == EXIT_CONFIG


def test_unknown_command_and_help(tmp_path):
    assert run(tmp_path, "frobnicate") == EXIT_CONFIG
    assert run(tmp_path, "--help") == EXIT_OK


# ---------------------------------------------------------------------------
# service and remote mode


@pytest.fixture
def client():
    return TestClient(create_app())


def test_service_routes(client):
    assert client.get("/health").json()["status"] == "ok"
    r = client.post("/solve", json={"distribution": DIST.read_text(), "oracle": True})
    assert r.status_code == 200 and r.json()["value"] == "3/8" and r.json()["oracle_agrees"]
    r = client.get("/figures", params={"name": ["grid_lattice"]})
    assert len(_segments(r.json()["figures"]["grid_lattice"])) == 84


def test_service_error_mapping(client, monkeypatch):
    assert client.post("/solve", json={"distribution": "1/2 1/2 1/2\n"}).status_code == 422
    assert client.post("/simulate", json={"config": {"horizon": 3}}).status_code == 422
    assert client.post("/lb-adversarial", json={"delta": "2", "zeta": "1/4", "horizon": 3}).status_code == 422
    monkeypatch.setattr("jointads.service.brute_force_best", lambda dist: (None, F(0)))
    r = client.post("/solve", json={"distribution": DIST.read_text(), "oracle": True})
    assert r.status_code == 500 and "invariant" in r.json()["detail"]


def test_remote_mode_matches_local(tmp_path, monkeypatch):
    app = create_app()

    def fake_init(self, url):
        self.client = TestClient(app, base_url=url)

    monkeypatch.setattr(cli._Remote, "__init__", fake_init)
    cfg = small_config(tmp_path, horizon=80)
    local, remote = tmp_path / "local", tmp_path / "remote"
    assert main(["--out-dir", str(local), "simulate", str(cfg)]) == EXIT_OK
    assert main(["--server", "http://test", "--out-dir", str(remote), "simulate", str(cfg)]) == EXIT_OK
    assert (local / "rounds.csv").read_bytes() == (remote / "rounds.csv").read_bytes()
    assert main(["--server", "http://test", "--out-dir", str(remote), "figures", "--name", "shatter"]) == EXIT_OK
    assert main(["--server", "http://test", "--out-dir", str(remote), "solve", str(DIST)]) == EXIT_OK
    bad = tmp_path / "bad.dist"
    bad.write_text("1/2 1/2 1/2\n")
    assert main(["--server", "http://test", "--out-dir", str(remote), "solve", str(bad)]) == EXIT_CONFIG
