"""Exact Gaussian process regression with an ARD exponential-quadratic kernel.

The kernel is k(x, x') = signal_std^2 * exp(-0.5 * sum_j (x_j - x'_j)^2 / l_j^2)
with one length scale per feature (or a single shared scale in isotropic
mode). Hyperparameters are fitted by maximizing the log marginal likelihood
over log-parameters with L-BFGS; inference goes through a jittered Cholesky
factorization, never an explicit inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .data import Dataset
from .errors import CholeskyError, DataError, FitError
from .lbfgs import LbfgsConfig, minimize

#: Half-width multiplier for a central 95% normal interval.
Z95 = 1.959964

_LOG_2PI = math.log(2.0 * math.pi)
_JITTER_START = 1e-10
_JITTER_CAP = 1e-4


@dataclass(frozen=True)
class KernelHyperparams:
    """Signal std, per-feature (or shared) length scales, observation noise std."""

    signal_std: float
    length_scales: np.ndarray
    noise_std: float

    def __post_init__(self):
        scales = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if not (math.isfinite(self.signal_std) and self.signal_std > 0):
            raise DataError(f"signal_std must be positive, got {self.signal_std}")
        if scales.ndim != 1 or np.any(~np.isfinite(scales)) or np.any(scales <= 0):
            raise DataError("every length scale must be positive and finite")
        if not (math.isfinite(self.noise_std) and self.noise_std >= 0):
            raise DataError(f"noise_std must be >= 0, got {self.noise_std}")
        object.__setattr__(self, "length_scales", scales)

    def scales_for(self, d: int) -> np.ndarray:
        """Length scales broadcast to d features (shared scale repeats)."""
        if self.length_scales.shape[0] == d:
            return self.length_scales
        if self.length_scales.shape[0] == 1:
            return np.full(d, self.length_scales[0])
        raise DataError(
            f"kernel has {self.length_scales.shape[0]} length scales "
            f"but data has {d} features"
        )

    def to_doc(self) -> dict:
        return {
            "signal_std": float(self.signal_std),
            "length_scales": [float(v) for v in self.length_scales],
            "noise_std": float(self.noise_std),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "KernelHyperparams":
        return cls(
            float(doc["signal_std"]),
            np.asarray(doc["length_scales"], dtype=float),
            float(doc["noise_std"]),
        )


@dataclass(frozen=True)
class LogParams:
    """Optimization variable: (log signal_std, log length scales..., log noise_std)."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.shape[0] < 3:
            raise DataError(f"log-parameter vector needs >= 3 entries, got shape {theta.shape}")
        with np.errstate(over="ignore"):
            exp_theta = np.exp(theta)
        if (
            np.any(~np.isfinite(theta))
            or np.any(~np.isfinite(exp_theta))
            or np.any(exp_theta <= 0.0)
        ):
            raise DataError("exp of every log-parameter must be finite and positive")
        object.__setattr__(self, "theta", theta)

    @property
    def n_scales(self) -> int:
        return self.theta.shape[0] - 2

    def to_hyperparams(self) -> KernelHyperparams:
        values = np.exp(self.theta)
        return KernelHyperparams(float(values[0]), values[1:-1], float(values[-1]))

    @classmethod
    def from_hyperparams(cls, h: KernelHyperparams) -> "LogParams":
        if h.noise_std <= 0:
            raise DataError("log parameterization requires noise_std > 0")
        return cls(np.log(np.concatenate(([h.signal_std], h.length_scales, [h.noise_std]))))

    @classmethod
    def default(cls, n_scales: int) -> "LogParams":
        theta = np.zeros(n_scales + 2)
        theta[-1] = math.log(0.1)
        return cls(theta)


def kernel_eval(x, xp, h: KernelHyperparams) -> float:
    """Covariance between two points; equals signal_std^2 at zero distance."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.shape != xp.shape or x.ndim != 1:
        raise DataError(f"point shapes differ: {x.shape} vs {xp.shape}")
    scales = h.scales_for(x.shape[0])
    z = (x - xp) / scales
    return float(h.signal_std**2 * math.exp(-0.5 * float(z @ z)))


def kernel_matrix(X, Xp, h: KernelHyperparams) -> np.ndarray:
    """Pairwise covariance matrix; exactly symmetric when Xp is X."""
    X = np.asarray(X, dtype=float)
    Xp = np.asarray(Xp, dtype=float)
    if X.ndim != 2 or Xp.ndim != 2 or X.shape[1] != Xp.shape[1]:
        raise DataError(f"incompatible shapes {X.shape} and {Xp.shape}")
    scales = h.scales_for(X.shape[1])
    symmetric = Xp is X or (X.shape == Xp.shape and np.array_equal(X, Xp))
    A = X / scales
    B = A if symmetric else Xp / scales
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    if symmetric:
        sq = 0.5 * (sq + sq.T)
        np.fill_diagonal(sq, 0.0)
    return h.signal_std**2 * np.exp(-0.5 * sq)


def _chol_with_jitter(Kf: np.ndarray, noise_var: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of Kf + noise_var*I, escalating jitter on failure."""
    n = Kf.shape[0]
    if not np.all(np.isfinite(Kf)) or not math.isfinite(noise_var):
        raise CholeskyError("covariance contains non-finite values")
    scale = float(np.mean(np.diag(Kf))) + noise_var
    K = Kf + noise_var * np.eye(n)
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K if jitter == 0.0 else K + jitter * np.eye(n))
            if not np.all(np.isfinite(L)):  # LAPACK can overflow without raising
                raise np.linalg.LinAlgError("non-finite factor")
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = _JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_CAP * scale:
                raise CholeskyError(
                    f"covariance not positive definite after jitter up to "
                    f"{_JITTER_CAP * scale:.3e} (ill-conditioned hyperparameters)"
                ) from None


def log_marginal_likelihood(params: LogParams, X, y) -> tuple[float, np.ndarray]:
    """Log marginal likelihood of y under the GP prior, with its analytic gradient.

    Value: -0.5 y' K^-1 y - 0.5 log|K| - n/2 log(2 pi), K = Kf + noise^2 I,
    computed via Cholesky. The gradient is with respect to the log-parameters.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 1:
        raise DataError("need at least one training row")
    h = params.to_hyperparams()
    n_scales = params.n_scales
    if n_scales not in (1, d):
        raise DataError(f"{n_scales} length scales incompatible with {d} features")

    Kf = kernel_matrix(X, X, h)
    L, _ = _chol_with_jitter(Kf, h.noise_std**2)
    alpha = cho_solve((L, True), y)
    value = float(
        -0.5 * (y @ alpha) - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI
    )

    K_inv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - K_inv
    B = A * Kf  # elementwise; symmetric since both factors are

    grad = np.empty(n_scales + 2)
    grad[0] = float(np.sum(B))  # d/d log signal_std: 0.5 * tr(A * 2 Kf)
    scales = h.scales_for(d)
    row_sums = B.sum(axis=1)
    BX = B @ X
    # tr(A dK/d log l_j) uses sum_ii' B_ii' (x_ij - x_i'j)^2 expanded to avoid
    # materializing per-feature distance matrices
    col_sq = X * X
    per_feature = 2.0 * (col_sq.T @ row_sums) - 2.0 * np.sum(X * BX, axis=0)
    if n_scales == d:
        grad[1:-1] = 0.5 * per_feature / scales**2
    else:
        grad[1] = 0.5 * float(np.sum(per_feature)) / scales[0] ** 2
    grad[-1] = h.noise_std**2 * float(np.trace(A))
    return value, grad


@dataclass(frozen=True)
class Prediction:
    """Posterior prediction at one query point, in the model's training units."""

    mean: float
    latent_var: float
    observation_var: float
    interval_95: tuple[float, float]


@dataclass(frozen=True)
class TrainedGP:
    """Frozen fit artifacts: training data, hyperparameters, Cholesky factor, weights."""

    X: np.ndarray
    y: np.ndarray
    hyperparams: KernelHyperparams
    chol_L: np.ndarray
    alpha: np.ndarray
    jitter: float
    fit_log: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def _assemble(X, y, h: KernelHyperparams, fit_log: dict, jitter: float | None = None) -> TrainedGP:
    Kf = kernel_matrix(X, X, h)
    if jitter is None:
        L, jitter = _chol_with_jitter(Kf, h.noise_std**2)
    else:
        K = Kf + (h.noise_std**2 + jitter) * np.eye(X.shape[0])
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            L, jitter = _chol_with_jitter(Kf, h.noise_std**2)
    alpha = cho_solve((L, True), y)
    return TrainedGP(X=X, y=y, hyperparams=h, chol_L=L, alpha=alpha, jitter=jitter, fit_log=fit_log)


def fit(
    train: Dataset,
    init: LogParams | None = None,
    opt_cfg: LbfgsConfig | None = None,
    restarts: int = 1,
    seed: int = 0,
    isotropic: bool = False,
) -> TrainedGP:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood.

    Runs L-BFGS on the negated likelihood from ``init`` and from restarts-1
    randomized starts (log-uniform in [e^-2, e^2] per coordinate), keeping the
    best final likelihood. Deterministic for a fixed seed.
    """
    if train.n < 1:
        raise DataError("training set is empty")
    if restarts < 1:
        raise DataError(f"restarts must be >= 1, got {restarts}")
    X, y = train.features, train.target
    n_scales = 1 if isotropic else train.d
    init = init if init is not None else LogParams.default(n_scales)
    if init.n_scales != n_scales:
        raise DataError(
            f"init has {init.n_scales} length scales, expected {n_scales}"
        )
    opt_cfg = opt_cfg if opt_cfg is not None else LbfgsConfig()

    def objective(theta: np.ndarray):
        # reject unfactorizable, degenerate, or overflowing parameter points;
        # the line search treats a non-finite value as "step too far"
        try:
            with np.errstate(all="ignore"):
                value, grad = log_marginal_likelihood(LogParams(theta), X, y)
        except (CholeskyError, DataError, OverflowError, FloatingPointError, ValueError):
            return math.inf, np.zeros_like(theta)
        return -value, -grad

    rng = np.random.default_rng(seed)
    starts = [init.theta]
    for _ in range(restarts - 1):
        starts.append(rng.uniform(-2.0, 2.0, n_scales + 2))

    attempts = []
    best = None
    for k, theta0 in enumerate(starts):
        try:
            result = minimize(objective, theta0, opt_cfg)
        except FitError as exc:
            attempts.append({"restart": k, "error": str(exc)})
            continue
        lml = -result.value
        attempts.append(
            {
                "restart": k,
                "initial_lml": -result.trace[0][1],
                "lml": lml,
                "iterations": result.iterations,
                "termination": result.termination,
            }
        )
        if math.isfinite(lml) and (best is None or lml > best[0]):
            best = (lml, result)
    if best is None:
        raise FitError(f"all {restarts} restarts failed: {attempts}")

    lml, result = best
    h = LogParams(result.point).to_hyperparams()
    model = _assemble(
        X,
        y,
        h,
        fit_log={
            "final_lml": lml,
            "restarts": attempts,
            "trace": [[it, value, gnorm] for it, value, gnorm in result.trace],
            "optimizer": opt_cfg.to_doc(),
            "jitter_policy": {"start": _JITTER_START, "cap": _JITTER_CAP, "step": 10.0},
            "isotropic": isotropic,
            "seed": seed,
        },
    )
    return model


def predict_mean(model: TrainedGP, Xq) -> np.ndarray:
    """Posterior mean only; cheap path for explanation sampling."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != model.d:
        raise DataError(f"query has {Xq.shape[1]} features, model expects {model.d}")
    Ks = kernel_matrix(model.X, Xq, model.hyperparams)
    return Ks.T @ model.alpha


def predict_arrays(model: TrainedGP, Xq) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Posterior mean, latent variance and observation variance per query row."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != model.d:
        raise DataError(f"query has {Xq.shape[1]} features, model expects {model.d}")
    Ks = kernel_matrix(model.X, Xq, model.hyperparams)
    mean = Ks.T @ model.alpha
    V = solve_triangular(model.chol_L, Ks, lower=True)
    latent = model.hyperparams.signal_std**2 - np.sum(V * V, axis=0)
    latent = np.maximum(latent, 0.0)
    observation = latent + model.hyperparams.noise_std**2
    return mean, latent, observation


def predict(model: TrainedGP, Xq) -> list[Prediction]:
    """Posterior predictions with 95% observation intervals, one per query row."""
    mean, latent, observation = predict_arrays(model, Xq)
    half = Z95 * np.sqrt(observation)
    return [
        Prediction(
            mean=float(m),
            latent_var=float(lv),
            observation_var=float(ov),
            interval_95=(float(m - h), float(m + h)),
        )
        for m, lv, ov, h in zip(mean, latent, observation, half)
    ]


def score(predictions, actual) -> tuple[float, float]:
    """(RMSE, R^2) of predictions against actual values."""
    pred = np.asarray(predictions, dtype=float)
    act = np.asarray(actual, dtype=float)
    if pred.shape != act.shape or pred.ndim != 1:
        raise DataError(f"prediction/actual shapes differ: {pred.shape} vs {act.shape}")
    if act.shape[0] < 2:
        raise DataError("scoring needs at least 2 points")
    sse = float(np.sum((act - pred) ** 2))
    sst = float(np.sum((act - act.mean()) ** 2))
    if sst == 0.0:
        raise DataError("R^2 undefined: actual values have zero variance")
    rmse = math.sqrt(sse / act.shape[0])
    return rmse, 1.0 - sse / sst
