"""FastAPI application exposing the pipeline stages and online prediction.

The pipeline endpoints execute stages against run directories on the service
host, so a long fit can be launched once and its artifacts served to many
clients; /models/predict answers per-row prediction queries (raw units in,
raw units out) from any persisted model file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import RunConfig, apply_overrides, config_from_dict, load_config
from ..errors import ConfigError, MudlossError
from ..gp import Z95, predict_arrays
from ..persistence import load_model
from ..pipeline import MANIFEST_JSON, STAGES, run_stage
from .schemas import (
    HealthResponse,
    PredictRowsRequest,
    PredictRowsResponse,
    RowPrediction,
    RunAllResponse,
    StageRequest,
    StageResponse,
)


def _build_config(request: StageRequest) -> RunConfig:
    if request.config is not None and request.config_path is not None:
        raise ConfigError("pass either config or config_path, not both")
    if request.config_path is not None:
        cfg = load_config(request.config_path)
    elif request.config is not None:
        cfg = config_from_dict(request.config)
    else:
        cfg = RunConfig()
    if request.overrides:
        cfg = apply_overrides(cfg, request.overrides)
    if request.seed is not None:
        cfg = apply_overrides(cfg, {"seed": str(request.seed)})
    return cfg


def create_app() -> FastAPI:
    app = FastAPI(title="mudloss", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(_, exc: ConfigError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(MudlossError)
    async def _runtime_error(_, exc: MudlossError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", service="mudloss", version=__version__)

    def _stage_endpoint(stage: str):
        def endpoint(request: StageRequest) -> StageResponse:
            cfg = _build_config(request)
            result = run_stage(stage, cfg)
            return StageResponse(
                stage=result.stage,
                artifacts=result.artifacts,
                summary=result.summary,
                elapsed_s=result.elapsed_s,
            )

        endpoint.__name__ = f"pipeline_{stage}"
        return endpoint

    for stage in STAGES:
        app.post(f"/pipeline/{stage}", response_model=StageResponse)(_stage_endpoint(stage))

    @app.post("/pipeline/run-all", response_model=RunAllResponse)
    def pipeline_run_all(request: StageRequest) -> RunAllResponse:
        cfg = _build_config(request)
        responses = []
        for stage in STAGES:
            result = run_stage(stage, cfg)
            responses.append(
                StageResponse(
                    stage=result.stage,
                    artifacts=result.artifacts,
                    summary=result.summary,
                    elapsed_s=result.elapsed_s,
                )
            )
        return RunAllResponse(
            stages=responses, manifest_path=str(Path(cfg.output_dir) / MANIFEST_JSON)
        )

    @app.post("/models/predict", response_model=PredictRowsResponse)
    def models_predict(request: PredictRowsRequest) -> PredictRowsResponse:
        if not Path(request.model_path).exists():
            raise HTTPException(status_code=404, detail=f"no model at {request.model_path}")
        bundle = load_model(request.model_path)
        rows = np.asarray(request.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != bundle.d_full:
            raise ConfigError(
                f"each row needs {bundle.d_full} features, got shape {rows.shape}"
            )
        X = bundle.scaling.transform_features(rows)[:, list(bundle.feature_indices)]
        mean_s, latent_s, obs_s = predict_arrays(bundle.model, X)
        scaling = bundle.scaling
        mean = scaling.invert_target(mean_s)
        half = scaling.invert_target_scale(Z95 * np.sqrt(obs_s))
        latent_std = scaling.invert_target_scale(np.sqrt(latent_s))
        obs_std = scaling.invert_target_scale(np.sqrt(obs_s))
        return PredictRowsResponse(
            predictions=[
                RowPrediction(
                    mean=float(m),
                    lower95=float(m - h),
                    upper95=float(m + h),
                    latent_std=float(ls),
                    observation_std=float(os_),
                )
                for m, h, ls, os_ in zip(mean, half, latent_std, obs_std)
            ],
            target_symbol=bundle.target_symbol,
        )

    return app


app = create_app()
