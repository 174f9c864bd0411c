"""Request handlers shared by the CLI and the HTTP service.

Handlers are plain functions over pydantic models; ``create_app`` wraps them
in FastAPI routes. Config errors map to HTTP 422, invariant violations to 500.
"""

from __future__ import annotations

import csv
import io
from fractions import Fraction
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from . import __version__
from .config import ConfigError, validate_config
from .environments import adversarial_trace, separating_threshold, threshold_mechanism
from .figures import FIGURES
from .harness import (
    regret_report,
    rounds_csv_text,
    run_episode,
    sweep,
)
from .mechanism import InvariantViolation, format_rational, write_polylines
from .solver import BRUTE_FORCE_CAP, DiscreteDistribution, best_mechanism, brute_force_best

ADVERSARIAL_VERSION = "artifact-adversarial v1"
SWEEP_VERSION = "artifact-sweep v1"


class SolveRequest(BaseModel):
    distribution: str = Field(description="lines of 'v1 v2 prob'")
    oracle: bool = False


class SolveResponse(BaseModel):
    path: list[tuple[str, str]]
    value: str
    value_float: float
    polyline: str
    oracle_value: Optional[str] = None
    oracle_agrees: Optional[bool] = None


class SimulateRequest(BaseModel):
    config: dict
    seed: Optional[int] = None


class SimulateResponse(BaseModel):
    report: dict
    rounds_csv: dict[str, str]


class SweepRequest(BaseModel):
    config: dict
    horizons: Optional[list[int]] = None
    seed: Optional[int] = None


class SweepResponse(BaseModel):
    points: list[tuple[int, float]]
    fit: dict
    reports: list[dict]
    csv: str


class AdversarialRequest(BaseModel):
    delta: str
    zeta: str
    horizon: int = Field(ge=1, le=5000)
    seed: int = 0
    decimal: bool = False


class AdversarialResponse(BaseModel):
    csv: str
    tau: str
    threshold_path: list[tuple[str, str]]


class FiguresResponse(BaseModel):
    figures: dict[str, str]


def _path(mech) -> list[tuple[str, str]]:
    return [(format_rational(x), format_rational(y)) for x, y in mech.nodes]


def handle_solve(req: SolveRequest) -> SolveResponse:
    try:
        dist = DiscreteDistribution.parse(req.distribution)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad distribution: {exc}") from None
    mech, value = best_mechanism(dist)
    buf = io.StringIO()
    write_polylines([mech.polyline()], buf)
    resp = SolveResponse(path=_path(mech), value=format_rational(value), value_float=float(value),
                         polyline=buf.getvalue())
    if req.oracle:
        if len(dist.atoms) > BRUTE_FORCE_CAP:
            raise ConfigError(f"oracle limited to {BRUTE_FORCE_CAP} atoms, got {len(dist.atoms)}")
        _, oracle_value = brute_force_best(dist)
        if oracle_value != value:
            raise InvariantViolation(f"solver value {value} differs from oracle value {oracle_value}")
        resp.oracle_value = format_rational(oracle_value)
        resp.oracle_agrees = True
    return resp


def _seeds(cfg, seed: Optional[int]) -> list[int]:
    return [seed] if seed is not None else list(cfg.seeds)


def handle_simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = validate_config(req.config)
    seeds = _seeds(cfg, req.seed)
    episodes = [run_episode(cfg, s) for s in seeds]
    report = regret_report(episodes, episodes[0].environment)
    csvs = {}
    if cfg.outputs.write_rounds:
        name = cfg.outputs.rounds_csv
        for ep in episodes:
            key = name if len(episodes) == 1 else _suffixed(name, f"seed{ep.seed}")
            csvs[key] = rounds_csv_text(ep)
    return SimulateResponse(report=report.to_dict(), rounds_csv=csvs)


def _suffixed(name: str, tag: str) -> str:
    stem, dot, ext = name.rpartition(".")
    return f"{stem}_{tag}.{ext}" if dot else f"{name}_{tag}"


def handle_sweep(req: SweepRequest) -> SweepResponse:
    cfg = validate_config(req.config)
    horizons = req.horizons or cfg.sweep_horizons
    if not horizons:
        raise ConfigError("sweep needs horizons (sweep_horizons in the config)")
    points, fit, reports = sweep(cfg, horizons, _seeds(cfg, req.seed))
    buf = io.StringIO()
    buf.write(f"# {SWEEP_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "regret"])
    for t, r in points:
        w.writerow([t, repr(float(r))])
    return SweepResponse(points=[(int(t), float(r)) for t, r in points], fit=fit.to_dict(),
                         reports=[r.to_dict() for r in reports], csv=buf.getvalue())


def handle_adversarial(req: AdversarialRequest) -> AdversarialResponse:
    try:
        delta, zeta = Fraction(req.delta), Fraction(req.zeta)
        trace = adversarial_trace(delta, zeta, req.horizon, np.random.default_rng(req.seed))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from None
    tau = separating_threshold(trace)

    def fmt(q: Fraction) -> str:
        return repr(float(q)) if req.decimal else format_rational(q)

    buf = io.StringIO()
    buf.write(f"# {ADVERSARIAL_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "coin", "a_t", "b_t", "v1", "v2"])
    for t in range(1, trace.horizon + 1):
        v1, v2 = trace.valuation(t)
        w.writerow([t, trace.coins[t - 1], fmt(trace.a(t)), fmt(trace.b(t)), fmt(v1), fmt(v2)])
    buf.write(f"# tau={fmt(tau)}\n")
    return AdversarialResponse(csv=buf.getvalue(), tau=format_rational(tau),
                               threshold_path=_path(threshold_mechanism(tau, zeta)))


def handle_figures(names: Optional[list[str]] = None) -> FiguresResponse:
    names = list(FIGURES) if not names else names
    unknown = [n for n in names if n not in FIGURES]
    if unknown:
        raise ConfigError(f"unknown figure(s) {unknown}; choose from {sorted(FIGURES)}")
    out = {}
    for n in names:
        buf = io.StringIO()
        write_polylines(FIGURES[n](), buf)
        out[n] = buf.getvalue()
    return FiguresResponse(figures=out)


def create_app():
    from fastapi import FastAPI, HTTPException, Query

    app = FastAPI(title="jointads", version=__version__)

    def call(fn, *args):
        try:
            return fn(*args)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except InvariantViolation as exc:
            raise HTTPException(status_code=500, detail=f"invariant violation: {exc}")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest):
        return call(handle_solve, req)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        return call(handle_simulate, req)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep_route(req: SweepRequest):
        return call(handle_sweep, req)

    @app.post("/lb-adversarial", response_model=AdversarialResponse)
    def adversarial(req: AdversarialRequest):
        return call(handle_adversarial, req)

    @app.get("/figures", response_model=FiguresResponse)
    def figures(name: Optional[list[str]] = Query(None)):
        return call(handle_figures, name)

    return app
