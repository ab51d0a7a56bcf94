"""Synthetic dataset generators for self-tests and offline pipeline runs.

Two planted-truth families: samples from a known ARD GP (for recovery and
calibration checks) and a linear target with known coefficients (for
explanation-fidelity checks).
"""

from __future__ import annotations

import numpy as np

from .data import ColumnSchema, Dataset, ROLE_FEATURE, ROLE_TARGET
from .errors import DataError
from .gp import KernelHyperparams, kernel_matrix


def synthetic_schema(d: int) -> tuple[ColumnSchema, ...]:
    cols = [ColumnSchema(f"Feature {j + 1}", f"X{j + 1}", "-", ROLE_FEATURE) for j in range(d)]
    cols.append(ColumnSchema("Response", "Y", "-", ROLE_TARGET))
    return tuple(cols)


def make_gp_dataset(
    n: int,
    d: int,
    length_scales,
    signal_std: float = 1.0,
    noise_std: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Inputs ~ N(0, 1); target drawn from a GP with the given kernel plus noise."""
    if n < 1 or d < 1:
        raise DataError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    h = KernelHyperparams(signal_std, np.asarray(length_scales, dtype=float), 0.0)
    K = kernel_matrix(X, X, h) + 1e-10 * np.eye(n)
    L = np.linalg.cholesky(K)
    f = L @ rng.standard_normal(n)
    y = f + noise_std * rng.standard_normal(n)
    return Dataset(X, y, synthetic_schema(d))


def make_linear_dataset(
    n: int,
    coefficients,
    intercept: float = 0.0,
    noise_std: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """Inputs ~ N(0, 1); target is the given linear function plus optional noise."""
    coefficients = np.asarray(coefficients, dtype=float)
    d = coefficients.shape[0]
    if n < 1 or d < 1:
        raise DataError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X @ coefficients + intercept
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(n)
    return Dataset(X, y, synthetic_schema(d))
