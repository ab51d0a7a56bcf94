"""Thin command-line client for the pipeline service layer.

Each subcommand assembles a run config (file + ``--set`` overrides + seed)
and either executes the stage in-process or, with ``--server``, posts the
same request to a running service. Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import json
import sys

import click

from .config import RunConfig, apply_overrides, load_config, parse_set_option
from .errors import ConfigError, MudlossError
from .pipeline import STAGES, run_stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON run-config file; defaults apply when omitted.")(fn)
    fn = click.option("--set", "set_pairs", multiple=True, metavar="KEY=VALUE",
                      help="Override a config field by dotted path, e.g. gp.restarts=5.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the global seed.")(fn)
    fn = click.option("--server", "server_url", default=None, metavar="URL",
                      help="Send the request to a running service instead of "
                           "executing in-process.")(fn)
    return fn


def _build_config(config_path, set_pairs, seed) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    overrides = parse_set_option(set_pairs)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg = apply_overrides(cfg, {"seed": str(seed)})
    return cfg


def _print_result(doc: dict) -> None:
    for name, digest in sorted(doc.get("artifacts", {}).items()):
        click.echo(f"wrote {name} ({digest[:12]})")
    summary = doc.get("summary", {})
    if summary:
        click.echo(json.dumps(summary, sort_keys=True, default=str))


def _post_stage(server_url: str, stage: str, config_path, set_pairs, seed) -> None:
    import httpx

    body = {
        "config_path": None,
        "config": None,
        "overrides": parse_set_option(set_pairs),
        "seed": seed,
    }
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            body["config"] = json.load(fh)
    endpoint = f"{server_url.rstrip('/')}/pipeline/{stage}"
    response = httpx.post(endpoint, json=body, timeout=None)
    if response.status_code >= 400:
        detail = response.json().get("detail", response.text)
        code = EXIT_USAGE if response.status_code in (400, 422) else EXIT_RUNTIME
        raise SystemExit(_fail(f"server error {response.status_code}: {detail}", code))
    doc = response.json()
    if stage == "run-all":
        for stage_doc in doc["stages"]:
            click.echo(f"== {stage_doc['stage']} ==")
            _print_result(stage_doc)
        click.echo(f"manifest: {doc['manifest_path']}")
    else:
        _print_result(doc)


def _fail(message: str, code: int) -> int:
    click.echo(f"error: {message}", err=True)
    return code


def _execute(stage: str, config_path, set_pairs, seed, server_url) -> None:
    if server_url:
        _post_stage(server_url, stage, config_path, set_pairs, seed)
        return
    cfg = _build_config(config_path, set_pairs, seed)
    if stage == "run-all":
        for name in STAGES:
            result = run_stage(name, cfg)
            click.echo(f"== {result.stage} ==")
            _print_result(result.__dict__)
        from .pipeline import MANIFEST_JSON

        click.echo(f"manifest: {cfg.output_dir}/{MANIFEST_JSON}")
    else:
        result = run_stage(stage, cfg)
        _print_result(result.__dict__)


@click.group()
def cli():
    """Mud-loss GP pipeline: preprocess, fit, predict, explain, select."""


def _make_stage_command(stage: str):
    @_common_options
    def command(config_path, set_pairs, seed, server_url):
        _execute(stage, config_path, set_pairs, seed, server_url)

    command.__name__ = stage.replace("-", "_")
    return cli.command(name=stage)(command)


for _stage in (*STAGES, "run-all"):
    _make_stage_command(_stage)


@cli.command()
@click.option("--kind", type=click.Choice(["gp", "linear"]), default="gp")
@click.option("--n", type=int, default=400, help="Number of rows.")
@click.option("--d", type=int, default=6, help="Number of features.")
@click.option("--noise", type=float, default=0.1, help="Noise standard deviation.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), required=True)
def synth(kind, n, d, noise, seed, out_path):
    """Generate a bundled synthetic dataset CSV for self-tests."""
    import numpy as np

    from .data import save_dataset
    from .synth import make_gp_dataset, make_linear_dataset

    if kind == "gp":
        scales = np.linspace(1.0, 3.0, d)
        ds = make_gp_dataset(n, d, scales, signal_std=2.0, noise_std=noise, seed=seed)
    else:
        coefficients = np.linspace(3.0, 0.5, d) * np.where(np.arange(d) % 2, -1, 1)
        ds = make_linear_dataset(n, coefficients, intercept=1.0, noise_std=noise, seed=seed)
    save_dataset(ds, out_path)
    schema_path = f"{out_path}.schema.json"
    from .data import schema_to_doc
    from .fileio import write_json

    write_json(schema_path, schema_to_doc(ds.schema))
    click.echo(f"wrote {out_path} ({n} rows, {d} features)")
    click.echo(f"wrote {schema_path} (pass as schema_path)")


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


def main() -> int:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        return _fail(exc.format_message(), EXIT_USAGE)
    except click.ClickException as exc:
        return _fail(exc.format_message(), EXIT_USAGE)
    except click.Abort:
        return _fail("aborted", EXIT_RUNTIME)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except MudlossError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
