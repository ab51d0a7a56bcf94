"""FastAPI service wrapping the pipeline and online model predictions."""

from .app import app, create_app

__all__ = ["app", "create_app"]
