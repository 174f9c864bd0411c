"""Command-line entry point.

Every subcommand runs in-process by default; ``--server URL`` sends the same
request to a running HTTP service instead.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ConfigError, parse_config_text
from .mechanism import InvariantViolation
from . import service

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


class _Remote:
    def __init__(self, url: str):
        try:
            import httpx
        except ImportError:
            raise ConfigError("--server needs the optional httpx dependency") from None
        self.client = httpx.Client(base_url=url, timeout=None)

    def call(self, method: str, route: str, model, **kwargs):
        r = self.client.request(method, route, **kwargs)
        if r.status_code == 422:
            raise ConfigError(r.json().get("detail"))
        if r.status_code >= 500:
            raise InvariantViolation(r.json().get("detail"))
        r.raise_for_status()
        return model.model_validate(r.json())


def _dispatch(ctx, route: str, handler, req, model):
    server = ctx.obj["server"]
    if server is None:
        return handler(req)
    return _Remote(server).call("POST", route, model, json=req.model_dump())


def _write(ctx, name: str, text: str) -> Path:
    out = ctx.obj["out_dir"] / name
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    return out


def _read_config(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    data = parse_config_text(text, "toml" if p.suffix.lower() == ".toml" else "yaml")
    env = data.get("environment")
    if isinstance(env, dict) and isinstance(env.get("file"), str) and not Path(env["file"]).is_absolute():
        env["file"] = str((p.parent / env["file"]).resolve())
    return data


@click.group()
@click.option("--seed", type=int, default=None, help="Overrides the config's seed list.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--server", default=None, help="Base URL of a running service.")
@click.pass_context
def cli(ctx, seed, out_dir, server):
    """Revenue-optimal mechanisms for a jointly allocated ad slot."""
    ctx.obj = {"seed": seed, "out_dir": Path(out_dir), "server": server}


@cli.command()
@click.argument("distribution", type=click.Path(dir_okay=False))
@click.option("--oracle", is_flag=True, help="Cross-check against brute force (small inputs only).")
@click.pass_context
def solve(ctx, distribution, oracle):
    """Optimal mechanism for a discrete distribution file."""
    try:
        text = Path(distribution).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {distribution}: {exc}") from None
    req = service.SolveRequest(distribution=text, oracle=oracle)
    resp = _dispatch(ctx, "/solve", service.handle_solve, req, service.SolveResponse)
    out = _write(ctx, "solve.poly", resp.polyline)
    click.echo(f"value {resp.value} ({resp.value_float:.12g})")
    click.echo("path " + " ".join(f"({x},{y})" for x, y in resp.path))
    if resp.oracle_value is not None:
        click.echo(f"oracle {resp.oracle_value} agrees")
    click.echo(f"wrote {out}")


@cli.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.pass_context
def simulate(ctx, config):
    """Run episodes and write per-round CSVs plus a regret report."""
    data = _read_config(config)
    req = service.SimulateRequest(config=data, seed=ctx.obj["seed"])
    resp = _dispatch(ctx, "/simulate", service.handle_simulate, req, service.SimulateResponse)
    for name, text in resp.rounds_csv.items():
        click.echo(f"wrote {_write(ctx, name, text)}")
    report_name = data.get("outputs", {}).get("report", "report.json")
    click.echo(f"wrote {_write(ctx, report_name, json.dumps(resp.report, indent=2) + chr(10))}")
    r = resp.report
    line = f"learner {r['mean_learner_total']:.6g}"
    if r["mean_regret"] is not None:
        line += f" hindsight {r['mean_hindsight_total']:.6g} regret {r['mean_regret']:.6g}"
    if r["mean_pseudo_regret"] is not None:
        line += f" pseudo-regret {r['mean_pseudo_regret']:.6g}"
    click.echo(line)


@cli.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--horizons", default=None, help="Comma-separated horizons; defaults to sweep_horizons.")
@click.pass_context
def sweep(ctx, config, horizons):
    """Regret at several horizons and the fitted log-log exponent."""
    data = _read_config(config)
    hs = None
    if horizons:
        try:
            hs = [int(h) for h in horizons.split(",")]
        except ValueError:
            raise ConfigError(f"bad horizons {horizons!r}") from None
    req = service.SweepRequest(config=data, horizons=hs, seed=ctx.obj["seed"])
    resp = _dispatch(ctx, "/sweep", service.handle_sweep, req, service.SweepResponse)
    click.echo(f"wrote {_write(ctx, 'sweep.csv', resp.csv)}")
    summary = {"points": resp.points, "fit": resp.fit, "reports": resp.reports}
    click.echo(f"wrote {_write(ctx, 'sweep.json', json.dumps(summary, indent=2) + chr(10))}")
    f = resp.fit
    if f["degenerate"]:
        click.echo(f"fit degenerate: {f['reason']}")
    else:
        click.echo(f"exponent {f['exponent']:.4f} +/- {f['stderr']:.4f}")


@cli.command("lb-adversarial")
@click.option("--delta", required=True)
@click.option("--zeta", required=True)
@click.option("--horizon", type=int, required=True)
@click.option("--decimal", is_flag=True, help="Print floats instead of exact rationals.")
@click.pass_context
def lb_adversarial(ctx, delta, zeta, horizon, decimal):
    """Dump one adversarial trace and its separating threshold."""
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    try:
        req = service.AdversarialRequest(delta=delta, zeta=zeta, horizon=horizon, seed=seed, decimal=decimal)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    resp = _dispatch(ctx, "/lb-adversarial", service.handle_adversarial, req, service.AdversarialResponse)
    click.echo(f"wrote {_write(ctx, 'adversarial.csv', resp.csv)}")
    click.echo(f"tau {resp.tau}")


@cli.command()
@click.option("--name", "names", multiple=True, help="Figure to emit; repeatable. Default: all.")
@click.pass_context
def figures(ctx, names):
    """Write boundary polylines for the reference drawings."""
    if ctx.obj["server"] is None:
        resp = service.handle_figures(list(names))
    else:
        resp = _Remote(ctx.obj["server"]).call("GET", "/figures", service.FiguresResponse,
                                               params={"name": list(names)})
    for name, text in resp.figures.items():
        click.echo(f"wrote {_write(ctx, name + '.poly', text)}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service (needs uvicorn)."""
    try:
        import uvicorn
    except ImportError:
        raise ConfigError("serve needs uvicorn installed") from None
    uvicorn.run(service.create_app(), host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="jointads", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except InvariantViolation as exc:
        click.echo(f"invariant violation: {exc}", err=True)
        return EXIT_INVARIANT
    except (ConfigError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
