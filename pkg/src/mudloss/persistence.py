"""Model persistence: one JSON document that reproduces predictions exactly.

The document stores training inputs/targets at full precision (repr-based
floats round-trip bit-exactly), the fitted hyperparameters, the jitter used
in the Cholesky factorization, the optimizer trace, the scaling parameters,
and which feature columns the model consumes. Loading refactorizes with the
stored jitter, so the factor and weights match the saved model on the same
platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ScalingParams
from .errors import DataError
from .fileio import read_json, write_json
from .gp import KernelHyperparams, TrainedGP, _assemble

FORMAT = "mudloss-gp-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelBundle:
    """A trained GP plus the context needed to serve raw-unit predictions."""

    model: TrainedGP
    scaling: ScalingParams
    feature_indices: tuple[int, ...]  # columns of the full feature matrix used
    feature_symbols: tuple[str, ...]
    target_symbol: str

    @property
    def d_full(self) -> int:
        return self.scaling.feature_means.shape[0]


def save_model(bundle: ModelBundle, path) -> None:
    model = bundle.model
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "hyperparams": model.hyperparams.to_doc(),
        "jitter": float(model.jitter),
        "fit_log": model.fit_log,
        "training": {
            "inputs": [[float(v) for v in row] for row in model.X],
            "targets": [float(v) for v in model.y],
        },
        "scaling": bundle.scaling.to_doc(),
        "feature_indices": list(bundle.feature_indices),
        "feature_symbols": list(bundle.feature_symbols),
        "target_symbol": bundle.target_symbol,
    }
    write_json(path, doc)


def load_model(path) -> ModelBundle:
    doc = read_json(path)
    if doc.get("format") != FORMAT:
        raise DataError(f"{path} is not a {FORMAT} document")
    h = KernelHyperparams.from_doc(doc["hyperparams"])
    X = np.asarray(doc["training"]["inputs"], dtype=float)
    y = np.asarray(doc["training"]["targets"], dtype=float)
    model = _assemble(X, y, h, doc.get("fit_log", {}), jitter=float(doc["jitter"]))
    return ModelBundle(
        model=model,
        scaling=ScalingParams.from_doc(doc["scaling"]),
        feature_indices=tuple(int(i) for i in doc["feature_indices"]),
        feature_symbols=tuple(doc["feature_symbols"]),
        target_symbol=doc["target_symbol"],
    )
