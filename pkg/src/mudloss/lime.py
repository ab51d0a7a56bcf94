"""Local surrogate explanations of GP predictions, aggregated into global scores.

Per instance: sample perturbations around the point, predict the GP posterior
mean there, weight samples by an exponential proximity kernel, and fit a
weighted L1-penalized linear surrogate by cyclic coordinate descent. Local
coefficient vectors are then aggregated into per-feature global importance
scores (mean absolute, support frequency, fit-quality-weighted mean) and fed
to one of three feature-selection rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, NotConvergedError
from .gp import TrainedGP, predict_mean

#: Coefficients smaller than this count as exactly zero for support frequency.
SUPPORT_EPS = 1e-12

_CD_TOL = 1e-8
_CD_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class LimeConfig:
    """Perturbation, locality and sparsity settings for one explanation run."""

    n_samples: int = 1000
    kernel_width: float | None = None  # None resolves to 0.75 * sqrt(d)
    distribution: str = "gaussian"
    scale: float = 1.0
    l1_penalty: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 3:
            raise ConfigError(f"n_samples must be >= 3, got {self.n_samples}")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ConfigError(f"kernel width must be > 0, got {self.kernel_width}")
        if self.distribution not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown perturbation distribution {self.distribution!r}")
        if self.scale < 0:
            raise ConfigError(f"perturbation scale must be >= 0, got {self.scale}")
        if self.l1_penalty < 0:
            raise ConfigError(f"l1 penalty must be >= 0, got {self.l1_penalty}")

    def width_for(self, d: int) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(d)


@dataclass(frozen=True)
class LocalExplanation:
    """Surrogate fit around one instance: intercept, coefficients, fit quality."""

    index: int
    intercept: float
    coefficients: np.ndarray
    r2: float
    kernel_width: float
    n_samples: int

    def to_doc(self) -> dict:
        return {
            "index": self.index,
            "intercept": float(self.intercept),
            "coefficients": [float(b) for b in self.coefficients],
            "r2": float(self.r2),
            "kernel_width": float(self.kernel_width),
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class GlobalImportanceReport:
    """Per-feature aggregate scores over K local surrogates plus a ranking."""

    mean_abs: np.ndarray
    support_freq: np.ndarray
    weighted_mean: np.ndarray
    actual_mean: np.ndarray
    ranking: tuple[int, ...]
    rank_by: str
    n_explanations: int
    weight_fallback: bool = False  # all surrogate R^2 <= 0: weighted == mean_abs

    @property
    def d(self) -> int:
        return self.mean_abs.shape[0]

    def score(self, name: str) -> np.ndarray:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ConfigError(f"unknown importance score {name!r}") from None

    def to_doc(self) -> dict:
        return {
            "mean_abs": [float(v) for v in self.mean_abs],
            "support_freq": [float(v) for v in self.support_freq],
            "weighted_mean": [float(v) for v in self.weighted_mean],
            "actual_mean": [float(v) for v in self.actual_mean],
            "ranking": list(self.ranking),
            "rank_by": self.rank_by,
            "n_explanations": self.n_explanations,
            "weight_fallback": self.weight_fallback,
        }


def perturb_samples(x, cfg: LimeConfig) -> np.ndarray:
    """N perturbations of x (row 0 is x itself), deterministic for a seed."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 1:
        raise DataError(f"instance must be a 1-D vector, got shape {x.shape}")
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n_samples, x.shape[0]
    Z = np.empty((n, d))
    Z[0] = x
    if cfg.distribution == "gaussian":
        noise = cfg.scale * rng.standard_normal((n - 1, d))
    else:
        bound = cfg.scale * math.sqrt(3.0)  # variance matched to the gaussian mode
        noise = rng.uniform(-bound, bound, (n - 1, d))
    Z[1:] = x + noise
    return Z


def proximity_weights(x, Z, width: float) -> np.ndarray:
    """exp(-squared distance / width^2) per perturbation row; 1 at zero distance."""
    if width <= 0:
        raise DataError(f"kernel width must be > 0, got {width}")
    x = np.asarray(x, dtype=float)
    diff = np.asarray(Z, dtype=float) - x
    return np.exp(-np.sum(diff * diff, axis=1) / width**2)


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def fit_local_surrogate(Z, y, weights, l1_penalty: float) -> LocalExplanation:
    """Weighted lasso with an unpenalized intercept, by coordinate descent.

    Solves min over (b0, beta) of
        0.5 * sum_i w_i (y_i - b0 - z_i . beta)^2 + l1_penalty * ||beta||_1
    so the all-zero solution appears exactly at
    l1_penalty >= max_j |sum_i w_i ztilde_ij ytilde_i| (centered variables).
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, d = Z.shape
    if y.shape != (n,) or w.shape != (n,):
        raise DataError(f"shape mismatch: Z {Z.shape}, y {y.shape}, weights {w.shape}")
    if n < d + 2:
        raise DataError(f"need at least d+2={d+2} samples, got {n}")
    if np.any(w < 0):
        raise DataError("weights must be nonnegative")
    w_sum = float(w.sum())
    if w_sum <= 0:
        raise DataError("all proximity weights are zero")
    if np.all(y == y[0]):  # degenerate constant target: intercept-only, perfect fit
        return LocalExplanation(
            index=-1,
            intercept=float(y[0]),
            coefficients=np.zeros(d),
            r2=1.0,
            kernel_width=math.nan,
            n_samples=n,
        )

    z_bar = (w @ Z) / w_sum
    y_bar = float(w @ y) / w_sum
    Zc = Z - z_bar
    yc = y - y_bar
    col_scale = w @ (Zc * Zc)

    beta = np.zeros(d)
    residual = yc.copy()
    converged = False
    sweeps = 0
    for sweeps in range(1, _CD_MAX_SWEEPS + 1):
        max_delta = 0.0
        for j in range(d):
            if col_scale[j] <= 0.0:
                continue
            old = beta[j]
            rho = float(w @ (Zc[:, j] * residual)) + col_scale[j] * old
            new = _soft_threshold(rho, l1_penalty) / col_scale[j]
            if new != old:
                residual += Zc[:, j] * (old - new)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < _CD_TOL:
            converged = True
            break
    if not converged:
        raise NotConvergedError(
            f"coordinate descent did not converge in {sweeps} sweeps", iterations=sweeps
        )

    intercept = y_bar - float(z_bar @ beta)
    fitted = intercept + Z @ beta
    sse = float(w @ (y - fitted) ** 2)
    sst = float(w @ (y - y_bar) ** 2)
    r2 = 1.0 if sst <= 0.0 else 1.0 - sse / sst
    return LocalExplanation(
        index=-1,
        intercept=intercept,
        coefficients=beta,
        r2=r2,
        kernel_width=math.nan,
        n_samples=n,
    )


def lasso_zero_threshold(Z, y, weights) -> float:
    """Smallest l1 penalty that forces every surrogate coefficient to zero."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    w_sum = float(w.sum())
    Zc = Z - (w @ Z) / w_sum
    yc = y - float(w @ y) / w_sum
    # same per-column reduction order as the coordinate-descent update so the
    # threshold is exact in floating point, not just analytically
    return max(abs(float(w @ (Zc[:, j] * yc))) for j in range(Z.shape[1]))


def explain_instance(model: TrainedGP, x, cfg: LimeConfig, index: int = -1) -> LocalExplanation:
    """Full local explanation: perturb, predict, weight, fit the surrogate."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise DataError(f"instance has shape {x.shape}, model expects ({model.d},)")
    if cfg.n_samples < model.d + 2:
        raise DataError(
            f"n_samples={cfg.n_samples} too small for d={model.d} (need >= d+2)"
        )
    width = cfg.width_for(model.d)
    Z = perturb_samples(x, cfg)
    y = predict_mean(model, Z)
    w = proximity_weights(x, Z, width)
    local = fit_local_surrogate(Z, y, w, cfg.l1_penalty)
    return replace(local, index=index, kernel_width=width)


def global_scores(explanations, rank_by: str = "mean_abs") -> GlobalImportanceReport:
    """Aggregate K local coefficient vectors into global per-feature scores."""
    explanations = list(explanations)
    if not explanations:
        raise DataError("no explanations to aggregate")
    d = explanations[0].coefficients.shape[0]
    if any(e.coefficients.shape[0] != d for e in explanations):
        raise DataError("explanations disagree on the number of features")
    B = np.vstack([e.coefficients for e in explanations])
    abs_B = np.abs(B)

    mean_abs = abs_B.mean(axis=0)
    support_freq = (abs_B > SUPPORT_EPS).mean(axis=0)
    actual_mean = B.mean(axis=0)
    weights = np.maximum(np.array([e.r2 for e in explanations]), 0.0)
    w_sum = float(weights.sum())
    if w_sum > 0:
        weighted_mean = (weights @ abs_B) / w_sum
        fallback = False
    else:
        weighted_mean = mean_abs.copy()
        fallback = True

    if rank_by not in ("mean_abs", "support_freq", "weighted_mean"):
        raise ConfigError(f"unknown importance score {rank_by!r}")
    scores = {"mean_abs": mean_abs, "support_freq": support_freq, "weighted_mean": weighted_mean}
    ranking = _rank_descending(scores[rank_by])
    return GlobalImportanceReport(
        mean_abs=mean_abs,
        support_freq=support_freq,
        weighted_mean=weighted_mean,
        actual_mean=actual_mean,
        ranking=ranking,
        rank_by=rank_by,
        n_explanations=len(explanations),
        weight_fallback=fallback,
    )


def _rank_descending(scores: np.ndarray) -> tuple[int, ...]:
    """Feature indices by score descending, ties broken by ascending index."""
    return tuple(sorted(range(scores.shape[0]), key=lambda j: (-scores[j], j)))


def select_features(
    report: GlobalImportanceReport,
    strategy: str,
    *,
    threshold: float = 0.90,
    bootstrap_samples: int = 100,
    inclusion_threshold: float = 0.7,
    explanations=None,
    seed: int = 0,
) -> list[int]:
    """Pick a feature subset from the global report.

    - "elbow": smallest prefix of the weighted-mean ranking whose normalized
      cumulative score reaches ``threshold``.
    - "bootstrap": resample the explanations ``bootstrap_samples`` times,
      apply the elbow rule to each resample, keep features present in at
      least ``inclusion_threshold`` of the subsets. Needs ``explanations``.
    - "forward": no selection here; returns the full ranked candidate list
      for the caller's retrain-and-stop loop.
    """
    if strategy == "forward":
        return list(_rank_descending(report.weighted_mean))
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be inside (0, 1), got {threshold}")

    if strategy == "elbow":
        return _elbow(report.weighted_mean, threshold)

    if strategy == "bootstrap":
        if explanations is None:
            raise ConfigError("bootstrap selection needs the local explanations")
        explanations = list(explanations)
        if bootstrap_samples < 10:
            raise ConfigError(f"bootstrap needs >= 10 resamples, got {bootstrap_samples}")
        rng = np.random.default_rng(seed)
        counts = np.zeros(report.d)
        k = len(explanations)
        for _ in range(bootstrap_samples):
            picks = rng.integers(0, k, size=k)
            resampled = [explanations[i] for i in picks]
            sub_report = global_scores(resampled, rank_by=report.rank_by)
            for j in _elbow(sub_report.weighted_mean, threshold):
                counts[j] += 1
        kept = [j for j in _rank_descending(report.weighted_mean)
                if counts[j] >= inclusion_threshold * bootstrap_samples]
        if not kept:
            raise DataError("bootstrap selection kept no features; lower the thresholds")
        return kept

    raise ConfigError(f"unknown selection strategy {strategy!r}")


def _elbow(scores: np.ndarray, threshold: float) -> list[int]:
    order = _rank_descending(scores)
    total = float(np.sum(scores))
    if total <= 0:
        raise DataError("all importance scores are zero; cannot select features")
    cumulative = 0.0
    chosen: list[int] = []
    for j in order:
        chosen.append(j)
        cumulative += float(scores[j])
        if cumulative / total >= threshold:
            break
    return chosen
