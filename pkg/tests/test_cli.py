import json
import subprocess
import sys

import pytest

from mudloss.config import config_to_dict
from mudloss.fileio import read_json, write_json


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "mudloss.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


@pytest.fixture
def cli_env(tmp_path, run_env):
    cfg = run_env(n=70, **{"lime.n_samples": "120"})
    cfg_path = tmp_path / "run.json"
    write_json(cfg_path, config_to_dict(cfg))
    return cfg, cfg_path


def test_synth_writes_csv_and_schema(tmp_path):
    out = tmp_path / "s.csv"
    result = run_cli("synth", "--kind", "linear", "--n", "30", "--d", "3",
                     "--out", str(out))
    assert result.returncode == 0, result.stderr
    assert out.exists()
    assert (tmp_path / "s.csv.schema.json").exists()


def test_stage_commands_and_exit_zero(cli_env):
    cfg, cfg_path = cli_env
    for stage in ("preprocess", "fit", "predict"):
        result = run_cli(stage, "--config", str(cfg_path))
        assert result.returncode == 0, result.stderr
        assert "wrote" in result.stdout
    metrics = read_json(f"{cfg.output_dir}/metrics.json")
    assert metrics["n_test"] > 0


def test_run_all_command(cli_env):
    cfg, cfg_path = cli_env
    result = run_cli("run-all", "--config", str(cfg_path))
    assert result.returncode == 0, result.stderr
    assert "manifest:" in result.stdout
    manifest = read_json(f"{cfg.output_dir}/manifest.json")
    assert set(manifest["stages"]) == {"preprocess", "fit", "predict", "explain", "select"}


def test_set_override_changes_behavior(cli_env):
    cfg, cfg_path = cli_env
    result = run_cli("preprocess", "--config", str(cfg_path),
                     "--set", "preprocess.train_fraction=0.75", "--seed", "11")
    assert result.returncode == 0, result.stderr
    split = read_json(f"{cfg.output_dir}/split_indices.json")
    assert split["train_fraction"] == 0.75
    assert split["seed"] == 11


def test_usage_errors_exit_one(cli_env, tmp_path):
    _, cfg_path = cli_env
    cases = [
        ("preprocess", "--config", str(tmp_path / "absent.json")),
        ("preprocess", "--config", str(cfg_path), "--set", "gp.bogus=1"),
        ("preprocess", "--config", str(cfg_path), "--set", "novalue"),
        ("not-a-command",),
    ]
    for args in cases:
        result = run_cli(*args)
        assert result.returncode == 1, (args, result.returncode, result.stderr)
        assert "error" in result.stderr.lower() or "Error" in result.stderr


def test_runtime_errors_exit_two(cli_env, tmp_path):
    _, cfg_path = cli_env
    result = run_cli("fit", "--config", str(cfg_path),
                     "--set", f"output_dir={tmp_path / 'fresh'}")
    assert result.returncode == 2
    assert "run 'preprocess' first" in result.stderr


def test_precondition_violation_surfaces_with_message(cli_env):
    cfg, cfg_path = cli_env
    result = run_cli("preprocess", "--config", str(cfg_path),
                     "--set", "preprocess.filter.enabled=true",
                     "--set", "preprocess.filter.window=101")
    assert result.returncode == 2
    assert "window" in result.stderr


def test_cli_against_running_server(cli_env, tmp_path):
    # thin-client mode: the same command posts to a live HTTP service
    import threading
    import time

    import httpx
    import uvicorn

    from mudloss.service import create_app

    cfg, cfg_path = cli_env
    server = uvicorn.Server(uvicorn.Config(create_app(), host="127.0.0.1", port=8731,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            try:
                httpx.get("http://127.0.0.1:8731/health", timeout=1.0)
                break
            except httpx.HTTPError:
                time.sleep(0.05)
        result = run_cli("preprocess", "--config", str(cfg_path),
                         "--server", "http://127.0.0.1:8731")
        assert result.returncode == 0, result.stderr
        assert "wrote" in result.stdout
        assert (json.loads(open(f"{cfg.output_dir}/split_indices.json").read()))
        bad = run_cli("preprocess", "--config", str(cfg_path),
                      "--set", "gp.bogus=1", "--server", "http://127.0.0.1:8731")
        assert bad.returncode == 1
    finally:
        server.should_exit = True
        thread.join(timeout=5)
