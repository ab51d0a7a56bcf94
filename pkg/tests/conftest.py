"""Shared fixtures: small datasets and pipeline configs on tmp paths."""

from __future__ import annotations

import numpy as np
import pytest

from mudloss.config import RunConfig, apply_overrides
from mudloss.data import ColumnSchema, Dataset, save_dataset, schema_to_doc
from mudloss.fileio import write_json
from mudloss.synth import make_gp_dataset, synthetic_schema


def tiny_schema(d: int = 2) -> tuple[ColumnSchema, ...]:
    return synthetic_schema(d)


def tiny_dataset(features, target) -> Dataset:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    return Dataset(features, np.asarray(target, dtype=float), tiny_schema(features.shape[1]))


@pytest.fixture
def run_env(tmp_path):
    """A synthetic CSV + schema + fast pipeline config rooted in tmp_path."""

    def build(n=160, d=4, seed=3, **overrides) -> RunConfig:
        ds = make_gp_dataset(n, d, np.linspace(1.5, 3.0, d), signal_std=2.0,
                             noise_std=0.1, seed=seed)
        data_path = tmp_path / "data.csv"
        schema_path = tmp_path / "schema.json"
        save_dataset(ds, data_path)
        write_json(schema_path, schema_to_doc(ds.schema))
        base = {
            "input_path": str(data_path),
            "schema_path": str(schema_path),
            "output_dir": str(tmp_path / "out"),
            "preprocess.filter.enabled": "false",  # synthetic rows have no order
            "gp.restarts": "1",
            "gp.optimizer.max_iterations": "60",
            "lime.n_samples": "200",
        }
        base.update({k: str(v) for k, v in overrides.items()})
        return apply_overrides(RunConfig(), base)

    return build
