"""File-based pipeline stages wiring preprocessing, fitting, prediction,
explanation and feature selection into reproducible runs.

Each stage reads its inputs from the run directory and writes artifacts
atomically, so stages are independently re-runnable and a failed stage leaves
earlier artifacts intact. A manifest records the config echo, per-stage
artifact hashes and timings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .data import (
    DEFAULT_SCHEMA,
    Dataset,
    ScalingParams,
    SplitSpec,
    deduplicate,
    load_dataset,
    load_schema,
    schema_to_doc,
    split_indices,
    standardize,
)
from .errors import DataError, MudlossError, StageError
from .fileio import read_json, sha256_file, write_csv, write_json, write_json_lines
from .gp import Z95, fit, predict_arrays, score
from .lbfgs import LbfgsConfig
from .lime import LimeConfig, explain_instance, global_scores, select_features
from .lime import GlobalImportanceReport, LocalExplanation
from .persistence import ModelBundle, load_model, save_model
from .smoothing import savitzky_golay

STAGES = ("preprocess", "fit", "predict", "explain", "select")

TRAIN_CSV = "train.csv"
TEST_CSV = "test.csv"
SCALING_JSON = "scaling.json"
SPLIT_JSON = "split_indices.json"
PREPROCESS_JSON = "preprocess.json"
MODEL_JSON = "model.json"
FIT_REPORT_JSON = "fit_report.json"
PREDICTIONS_CSV = "predictions.csv"
PREDICTIONS_HEAD_CSV = "predictions_first150.csv"
METRICS_JSON = "metrics.json"
EXPLANATIONS_JSONL = "local_explanations.jsonl"
GLOBAL_CSV = "global_importance.csv"
GLOBAL_JSON = "global_importance.json"
SELECTED_JSON = "selected_features.json"
SELECTION_STEPS_CSV = "selection_steps.csv"
MODEL_SELECTED_JSON = "model_selected.json"
METRICS_SELECTED_JSON = "metrics_selected.json"
MANIFEST_JSON = "manifest.json"


@dataclass
class StageResult:
    stage: str
    artifacts: dict[str, str] = field(default_factory=dict)  # name -> sha256
    summary: dict = field(default_factory=dict)
    elapsed_s: float = 0.0


def _out(config: RunConfig) -> Path:
    return Path(config.output_dir)


def _require(config: RunConfig, names: tuple[str, ...], needed_stage: str) -> None:
    out = _out(config)
    missing = [name for name in names if not (out / name).exists()]
    if missing:
        raise DataError(f"missing {missing[0]!r}: run {needed_stage!r} first")


def _schema(config: RunConfig):
    if config.schema_path is None:
        return DEFAULT_SCHEMA
    return load_schema(config.schema_path)


def _hash_artifacts(out: Path, names) -> dict[str, str]:
    return {name: sha256_file(out / name) for name in names}


def _update_manifest(config: RunConfig, result: StageResult) -> None:
    out = _out(config)
    path = out / MANIFEST_JSON
    manifest = read_json(path) if path.exists() else {}
    from .config import config_to_dict

    manifest["config"] = config_to_dict(config)
    manifest.setdefault("stages", {})
    manifest["stages"][result.stage] = {
        "artifacts": result.artifacts,
        "summary": result.summary,
        "elapsed_s": result.elapsed_s,
    }
    manifest["versions"] = _versions()
    write_json(path, manifest)


def _versions() -> dict:
    import platform

    import numpy
    import scipy

    return {
        "mudloss": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run_preprocess(config: RunConfig) -> StageResult:
    """Load, deduplicate, denoise, split and standardize the input CSV."""
    t0 = time.perf_counter()
    out = _out(config)
    schema = _schema(config)
    ds = load_dataset(config.input_path, schema)
    n_loaded = ds.n

    removed = 0
    if config.preprocess.deduplicate:
        before = ds.n
        ds = deduplicate(ds)
        removed = before - ds.n

    filt = config.preprocess.filter
    if filt.enabled:
        feats = np.column_stack(
            [savitzky_golay(ds.features[:, j], filt.window, filt.order) for j in range(ds.d)]
        )
        targ = savitzky_golay(ds.target, filt.window, filt.order)
        ds = Dataset(feats, targ, ds.schema)

    spec = SplitSpec(
        train_fraction=config.preprocess.train_fraction,
        seed=config.split_seed,
        bins=config.preprocess.stratify_bins,
    )
    train_idx, test_idx = split_indices(ds, spec)
    train_raw = ds.take(train_idx)
    test_raw = ds.take(test_idx)

    train_std, scaling = standardize(train_raw)
    test_std = scaling.transform(test_raw)

    _write_dataset_csv(out / TRAIN_CSV, train_std)
    _write_dataset_csv(out / TEST_CSV, test_std)
    write_json(out / SCALING_JSON, scaling.to_doc())
    split_doc = {
        "train_indices": [int(i) for i in train_idx],
        "test_indices": [int(i) for i in test_idx],
        "train_fraction": spec.train_fraction,
        "bins": spec.bins,
        "seed": spec.seed,
    }
    write_json(out / SPLIT_JSON, split_doc)
    sidecar = {
        "rows_loaded": n_loaded,
        "duplicates_removed": removed,
        "filter": {"enabled": filt.enabled, "window": filt.window, "order": filt.order},
        "scaling": scaling.to_doc(),
        "split": split_doc,
        "schema": schema_to_doc(schema),
    }
    write_json(out / PREPROCESS_JSON, sidecar)

    names = (TRAIN_CSV, TEST_CSV, SCALING_JSON, SPLIT_JSON, PREPROCESS_JSON)
    result = StageResult(
        stage="preprocess",
        artifacts=_hash_artifacts(out, names),
        summary={
            "rows_loaded": n_loaded,
            "duplicates_removed": removed,
            "train_rows": train_std.n,
            "test_rows": test_std.n,
        },
        elapsed_s=time.perf_counter() - t0,
    )
    _update_manifest(config, result)
    return result


def _write_dataset_csv(path, ds: Dataset) -> None:
    header = [c.name for c in ds.schema]
    target_pos = next(i for i, c in enumerate(ds.schema) if c.role == "target")
    rows = []
    for i in range(ds.n):
        row = list(ds.features[i])
        row.insert(target_pos, float(ds.target[i]))
        rows.append([float(v) for v in row])
    write_csv(path, header, rows)


def _load_split_csv(config: RunConfig, name: str) -> Dataset:
    schema_doc = read_json(_out(config) / PREPROCESS_JSON)["schema"]
    from .data import ColumnSchema

    schema = tuple(ColumnSchema(c["name"], c["symbol"], c["unit"], c["role"]) for c in schema_doc)
    return load_dataset(_out(config) / name, schema)


def _fit_bundle(config: RunConfig, train: Dataset, scaling: ScalingParams, feature_indices) -> ModelBundle:
    opt = config.gp.optimizer
    opt_cfg = LbfgsConfig(
        memory=opt.memory,
        max_iterations=opt.max_iterations,
        gradient_tolerance=opt.gradient_tolerance,
        c1=opt.c1,
        c2=opt.c2,
        max_line_search_steps=opt.max_line_search_steps,
    )
    model = fit(
        train,
        opt_cfg=opt_cfg,
        restarts=config.gp.restarts,
        seed=config.fit_seed,
        isotropic=not config.gp.ard,
    )
    return ModelBundle(
        model=model,
        scaling=scaling,
        feature_indices=tuple(feature_indices),
        feature_symbols=tuple(c.symbol for c in train.feature_columns),
        target_symbol=train.target_column.symbol,
    )


def run_fit(config: RunConfig) -> StageResult:
    """Fit GP hyperparameters on the preprocessed training split."""
    t0 = time.perf_counter()
    _require(config, (TRAIN_CSV, SCALING_JSON, PREPROCESS_JSON), "preprocess")
    out = _out(config)
    train = _load_split_csv(config, TRAIN_CSV)
    scaling = ScalingParams.from_doc(read_json(out / SCALING_JSON))

    bundle = _fit_bundle(config, train, scaling, range(train.d))
    save_model(bundle, out / MODEL_JSON)

    h = bundle.model.hyperparams
    report = {
        "signal_std": float(h.signal_std),
        "noise_std": float(h.noise_std),
        "length_scales": {
            sym: float(v)
            for sym, v in zip(bundle.feature_symbols, h.scales_for(train.d))
        },
        "final_lml": bundle.model.fit_log.get("final_lml"),
        "restarts": bundle.model.fit_log.get("restarts"),
        "jitter": float(bundle.model.jitter),
        "ard": config.gp.ard,
    }
    write_json(out / FIT_REPORT_JSON, report)

    names = (MODEL_JSON, FIT_REPORT_JSON)
    result = StageResult(
        stage="fit",
        artifacts=_hash_artifacts(out, names),
        summary={
            "final_lml": report["final_lml"],
            "noise_std": report["noise_std"],
            "train_rows": train.n,
        },
        elapsed_s=time.perf_counter() - t0,
    )
    _update_manifest(config, result)
    return result


def _predictions_raw(bundle: ModelBundle, test: Dataset):
    """Predict the standardized test split; return raw-unit arrays."""
    X = test.features[:, list(bundle.feature_indices)] if test.d != bundle.model.d else test.features
    mean_s, latent_s, obs_s = predict_arrays(bundle.model, X)
    scaling = bundle.scaling
    mean = scaling.invert_target(mean_s)
    half = scaling.invert_target_scale(Z95 * np.sqrt(obs_s))
    actual = scaling.invert_target(test.target)
    return actual, mean, mean - half, mean + half


def run_predict(config: RunConfig) -> StageResult:
    """Emit raw-unit predictions with 95% bands, metrics and plot-ready rows."""
    t0 = time.perf_counter()
    _require(config, (MODEL_JSON, TEST_CSV, SPLIT_JSON), "fit")
    out = _out(config)
    bundle = load_model(out / MODEL_JSON)
    test = _load_split_csv(config, TEST_CSV)
    test_indices = read_json(out / SPLIT_JSON)["test_indices"]

    actual, mean, lower, upper = _predictions_raw(bundle, test)
    header = ["index", "actual", "predicted", "lower95", "upper95"]
    rows = [
        [int(idx), float(a), float(m), float(lo), float(hi)]
        for idx, a, m, lo, hi in zip(test_indices, actual, mean, lower, upper)
    ]
    write_csv(out / PREDICTIONS_CSV, header, rows)
    write_csv(out / PREDICTIONS_HEAD_CSV, header, rows[:150])

    rmse, r2 = score(mean, actual)
    coverage = float(np.mean((actual >= lower) & (actual <= upper)))
    metrics = {
        "rmse": rmse,
        "r2": r2,
        "coverage95": coverage,
        "n_test": len(rows),
        "target_unit": _target_unit(config),
    }
    write_json(out / METRICS_JSON, metrics)

    names = (PREDICTIONS_CSV, PREDICTIONS_HEAD_CSV, METRICS_JSON)
    result = StageResult(
        stage="predict",
        artifacts=_hash_artifacts(out, names),
        summary=metrics,
        elapsed_s=time.perf_counter() - t0,
    )
    _update_manifest(config, result)
    return result


def _target_unit(config: RunConfig) -> str:
    try:
        schema_doc = read_json(_out(config) / PREPROCESS_JSON)["schema"]
        return next(c["unit"] for c in schema_doc if c["role"] == "target")
    except (OSError, KeyError, StopIteration):
        return "-"


def _lime_config(config: RunConfig) -> LimeConfig:
    return LimeConfig(
        n_samples=config.lime.n_samples,
        kernel_width=config.lime.kernel_width,
        distribution=config.lime.distribution,
        scale=config.lime.scale,
        l1_penalty=config.lime.l1_penalty,
        seed=config.lime_seed,
    )


def _explain_all(bundle: ModelBundle, test: Dataset, base_cfg: LimeConfig) -> list[LocalExplanation]:
    # per-instance derived seeds keep results independent of execution order
    locals_ = []
    for k in range(test.n):
        cfg_k = replace(base_cfg, seed=base_cfg.seed + k)
        locals_.append(explain_instance(bundle.model, test.features[k], cfg_k, index=k))
    return locals_


def run_explain(config: RunConfig) -> StageResult:
    """Explain every test instance and aggregate into a global importance report."""
    t0 = time.perf_counter()
    _require(config, (MODEL_JSON, TEST_CSV), "fit")
    out = _out(config)
    bundle = load_model(out / MODEL_JSON)
    test = _load_split_csv(config, TEST_CSV)

    base_cfg = _lime_config(config)
    explanations = _explain_all(bundle, test, base_cfg)
    write_json_lines(out / EXPLANATIONS_JSONL, [e.to_doc() for e in explanations])

    report = global_scores(explanations, rank_by=config.lime.rank_by)
    feature_cols = test.feature_columns
    order = report.ranking
    header = ["symbol", "name", "mean_abs", "actual_mean", "support_freq", "weighted_mean", "rank"]
    rows = [
        [
            feature_cols[j].symbol,
            feature_cols[j].name,
            float(report.mean_abs[j]),
            float(report.actual_mean[j]),
            float(report.support_freq[j]),
            float(report.weighted_mean[j]),
            rank + 1,
        ]
        for rank, j in enumerate(order)
    ]
    write_csv(out / GLOBAL_CSV, header, rows)
    report_doc = report.to_doc()
    report_doc["feature_symbols"] = [c.symbol for c in feature_cols]
    report_doc["feature_names"] = [c.name for c in feature_cols]
    report_doc["config"] = {
        "n_samples": base_cfg.n_samples,
        "kernel_width": base_cfg.width_for(test.d),
        "distribution": base_cfg.distribution,
        "scale": base_cfg.scale,
        "l1_penalty": base_cfg.l1_penalty,
        "seed": base_cfg.seed,
        "rank_by": config.lime.rank_by,
    }
    write_json(out / GLOBAL_JSON, report_doc)

    names = (EXPLANATIONS_JSONL, GLOBAL_CSV, GLOBAL_JSON)
    result = StageResult(
        stage="explain",
        artifacts=_hash_artifacts(out, names),
        summary={
            "n_explanations": report.n_explanations,
            "top_feature": feature_cols[order[0]].symbol,
            "weight_fallback": report.weight_fallback,
        },
        elapsed_s=time.perf_counter() - t0,
    )
    _update_manifest(config, result)
    return result


def _report_from_doc(doc: dict) -> GlobalImportanceReport:
    return GlobalImportanceReport(
        mean_abs=np.asarray(doc["mean_abs"], dtype=float),
        support_freq=np.asarray(doc["support_freq"], dtype=float),
        weighted_mean=np.asarray(doc["weighted_mean"], dtype=float),
        actual_mean=np.asarray(doc["actual_mean"], dtype=float),
        ranking=tuple(doc["ranking"]),
        rank_by=doc["rank_by"],
        n_explanations=doc["n_explanations"],
        weight_fallback=doc["weight_fallback"],
    )


def _load_explanations(path) -> list[LocalExplanation]:
    import json

    explanations = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            explanations.append(
                LocalExplanation(
                    index=doc["index"],
                    intercept=doc["intercept"],
                    coefficients=np.asarray(doc["coefficients"], dtype=float),
                    r2=doc["r2"],
                    kernel_width=doc["kernel_width"],
                    n_samples=doc["n_samples"],
                )
            )
    return explanations


def run_select(config: RunConfig) -> StageResult:
    """Select features per the configured strategy and retrain on the subset."""
    t0 = time.perf_counter()
    _require(config, (GLOBAL_JSON, MODEL_JSON, TRAIN_CSV, TEST_CSV), "explain")
    out = _out(config)
    report = _report_from_doc(read_json(out / GLOBAL_JSON))
    train = _load_split_csv(config, TRAIN_CSV)
    test = _load_split_csv(config, TEST_CSV)
    full_bundle = load_model(out / MODEL_JSON)
    scaling = full_bundle.scaling

    sel = config.select
    actual, mean, _, _ = _predictions_raw(full_bundle, test)
    full_rmse, full_r2 = score(mean, actual)

    steps = [["full", train.d, "|".join(c.symbol for c in train.feature_columns), full_rmse, full_r2]]

    def retrain(indices) -> tuple[ModelBundle, float, float]:
        sub_train = train.select_features(indices)
        sub_bundle = _fit_bundle(config, sub_train, scaling, indices)
        sub_actual, sub_mean, _, _ = _predictions_raw(sub_bundle, test.select_features(indices))
        sub_rmse, sub_r2 = score(sub_mean, sub_actual)
        return sub_bundle, sub_rmse, sub_r2

    if sel.strategy == "forward":
        candidates = select_features(report, "forward")
        chosen: list[int] = []
        best_rmse = None
        best_bundle = None
        best_r2 = None
        for j in candidates:
            trial = chosen + [j]
            bundle_j, rmse_j, r2_j = retrain(trial)
            symbols = "|".join(train.feature_columns[i].symbol for i in trial)
            steps.append([f"step{len(trial)}", len(trial), symbols, rmse_j, r2_j])
            if best_rmse is not None:
                improvement = (best_rmse - rmse_j) / best_rmse
                if improvement < sel.improvement_floor:
                    break
            chosen = trial
            best_rmse, best_r2, best_bundle = rmse_j, r2_j, bundle_j
        selected = chosen
        sub_bundle, sub_rmse, sub_r2 = best_bundle, best_rmse, best_r2
    else:
        selected = select_features(
            report,
            sel.strategy,
            threshold=sel.threshold,
            bootstrap_samples=sel.bootstrap_samples,
            inclusion_threshold=sel.inclusion_threshold,
            explanations=(
                _load_explanations(out / EXPLANATIONS_JSONL)
                if sel.strategy == "bootstrap"
                else None
            ),
            seed=config.select_seed,
        )
        sub_bundle, sub_rmse, sub_r2 = retrain(selected)
        symbols = "|".join(train.feature_columns[i].symbol for i in selected)
        steps.append(["selected", len(selected), symbols, sub_rmse, sub_r2])

    if not selected:
        raise DataError("selection produced an empty feature set")

    save_model(sub_bundle, out / MODEL_SELECTED_JSON)
    selected_doc = {
        "strategy": sel.strategy,
        "threshold": sel.threshold,
        "selected_indices": [int(i) for i in selected],
        "selected_symbols": [train.feature_columns[i].symbol for i in selected],
    }
    write_json(out / SELECTED_JSON, selected_doc)
    write_csv(
        out / SELECTION_STEPS_CSV,
        ["step", "n_features", "features", "rmse", "r2"],
        steps,
    )
    write_json(
        out / METRICS_SELECTED_JSON,
        {
            "before": {"rmse": full_rmse, "r2": full_r2, "n_features": train.d},
            "after": {"rmse": sub_rmse, "r2": sub_r2, "n_features": len(selected)},
            "target_unit": _target_unit(config),
        },
    )

    names = (SELECTED_JSON, SELECTION_STEPS_CSV, MODEL_SELECTED_JSON, METRICS_SELECTED_JSON)
    result = StageResult(
        stage="select",
        artifacts=_hash_artifacts(out, names),
        summary={
            "strategy": sel.strategy,
            "n_selected": len(selected),
            "rmse_before": full_rmse,
            "rmse_after": sub_rmse,
        },
        elapsed_s=time.perf_counter() - t0,
    )
    _update_manifest(config, result)
    return result


_RUNNERS = {
    "preprocess": run_preprocess,
    "fit": run_fit,
    "predict": run_predict,
    "explain": run_explain,
    "select": run_select,
}


def run_stage(stage: str, config: RunConfig) -> StageResult:
    """Run one named stage, wrapping failures with the stage name."""
    if stage not in _RUNNERS:
        raise StageError(stage, f"unknown stage; expected one of {STAGES}")
    try:
        return _RUNNERS[stage](config)
    except StageError:
        raise
    except MudlossError as exc:
        raise StageError(stage, str(exc)) from exc


def run_all(config: RunConfig) -> list[StageResult]:
    """Run every stage in order; the first failure halts with prior artifacts intact."""
    return [run_stage(stage, config) for stage in STAGES]
