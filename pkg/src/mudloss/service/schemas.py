"""Pydantic request/response models for the HTTP surface."""

from __future__ import annotations

from pydantic import BaseModel, Field


class StageRequest(BaseModel):
    """One pipeline stage invocation.

    ``config`` is a (possibly partial) run-config document; omitted fields take
    their defaults. ``overrides`` are dotted-path assignments applied on top,
    identical to the CLI's ``--set key=value``. Paths inside the config are
    resolved on the service host.
    """

    config: dict | None = None
    config_path: str | None = None
    overrides: dict[str, str] = Field(default_factory=dict)
    seed: int | None = None


class StageResponse(BaseModel):
    stage: str
    artifacts: dict[str, str]
    summary: dict
    elapsed_s: float


class RunAllResponse(BaseModel):
    stages: list[StageResponse]
    manifest_path: str


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str


class PredictRowsRequest(BaseModel):
    """Online predictions from a persisted model: raw-unit feature rows in."""

    model_path: str
    rows: list[list[float]]


class RowPrediction(BaseModel):
    mean: float
    lower95: float
    upper95: float
    latent_std: float
    observation_std: float


class PredictRowsResponse(BaseModel):
    predictions: list[RowPrediction]
    target_symbol: str
