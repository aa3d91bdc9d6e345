"""Metrics, baselines, and report tables.

The status-quo baseline predicts the planner's own flight time verbatim. The
linear baseline is an L1-penalized least-squares model solved by cyclic
coordinate descent over exactly the flattened feature vector the network
sees. The ablation variant of the network (no spatial layers) is built by
the training module from a config with ``with_swl=False``.

Error sign convention throughout: error = predicted - actual.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping, Sequence

import numpy as np

from flighttime.features.dataset import FeatureDataset
from flighttime.features.network import NetworkIndex

logger = logging.getLogger(__name__)

SUBSETS = ("all", "normal", "outlier")


@dataclass(frozen=True)
class MetricsRow:
    method: str
    subset: str
    n: int
    rmse: float
    mae: float
    r2: float


def _r2(errors: np.ndarray, truths: np.ndarray) -> float:
    sse = float(np.sum(errors**2))
    sst = float(np.sum((truths - truths.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if sse == 0.0 else float("-inf")
    return 1.0 - sse / sst


def metrics(
    preds: np.ndarray, truths: np.ndarray, outlier: np.ndarray, method: str = "model"
) -> list[MetricsRow]:
    """RMSE / MAE / R² per subset; empty subsets are omitted."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    outlier = np.asarray(outlier, dtype=bool)
    rows = []
    masks = {"all": np.ones(len(truths), dtype=bool), "normal": ~outlier, "outlier": outlier}
    for subset in SUBSETS:
        mask = masks[subset]
        if not mask.any():
            continue
        e = preds[mask] - truths[mask]
        rows.append(
            MetricsRow(
                method=method,
                subset=subset,
                n=int(mask.sum()),
                rmse=float(np.sqrt(np.mean(e**2))),
                mae=float(np.mean(np.abs(e))),
                r2=_r2(e, truths[mask]),
            )
        )
    return rows


def fps_baseline(dataset: FeatureDataset) -> np.ndarray:
    """The planner's own flight time, verbatim."""
    return dataset.planned.copy()


# ---------------------------------------------------------------------------
# L1-penalized linear baseline (cyclic coordinate descent)
# ---------------------------------------------------------------------------


class NonConvergence(RuntimeWarning):
    """Coordinate descent hit the sweep cap before reaching tolerance."""


@dataclass
class LassoModel:
    coef: np.ndarray
    intercept: float
    lam: float
    column_hash: str
    converged: bool
    n_sweeps: int
    objectives: list[float]


def _soft_threshold(x: float, lam: float) -> float:
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


def _column_hash(width: int) -> str:
    return hashlib.sha256(str(width).encode()).hexdigest()[:16]


def lasso_fit(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
    coef0: np.ndarray | None = None,
) -> LassoModel:
    """Minimize (1/2n)||y - b0 - X b||^2 + lam * ||b||_1 by cyclic updates.

    The unpenalized intercept is re-centered every sweep. Stops when the
    largest coefficient change in a sweep falls below `tol`; if the sweep cap
    is reached first, the best iterate so far is returned and flagged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    col_sq = (X * X).sum(axis=0) / n
    beta = np.zeros(d) if coef0 is None else coef0.copy()
    intercept = float(y.mean())
    r = y - intercept - X @ beta
    objectives: list[float] = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        shift = float(r.mean())
        intercept += shift
        r -= shift
        max_delta = abs(shift)
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            rho = float(X[:, j] @ r) / n + col_sq[j] * beta[j]
            new = _soft_threshold(rho, lam) / col_sq[j]
            delta = new - beta[j]
            if delta != 0.0:
                r -= X[:, j] * delta
                beta[j] = new
                max_delta = max(max_delta, abs(delta))
        objectives.append(0.5 * float(np.mean(r**2)) + lam * float(np.abs(beta).sum()))
        if max_delta < tol:
            converged = True
            break
    if not converged:
        logger.warning("coordinate descent stopped at sweep cap %d (lam=%g)", max_sweeps, lam)
    return LassoModel(
        coef=beta,
        intercept=intercept,
        lam=lam,
        column_hash=_column_hash(d),
        converged=converged,
        n_sweeps=sweeps,
        objectives=objectives,
    )


def lasso_predict(model: LassoModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != len(model.coef):
        raise ValueError("feature width does not match the fitted model")
    return model.intercept + X @ model.coef


def lasso_fit_validated(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    n_lambdas: int = 20,
    lam_min_ratio: float = 1e-3,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
) -> LassoModel:
    """Fit a descending log-spaced penalty path; keep the best validation RMSE."""
    n = len(y_train)
    centered = y_train - y_train.mean()
    lam_max = float(np.max(np.abs(X_train.T @ centered)) / n)
    if lam_max <= 0.0:
        return lasso_fit(X_train, y_train, 0.0, tol=tol, max_sweeps=max_sweeps)
    grid = np.logspace(np.log10(lam_max), np.log10(lam_max * lam_min_ratio), n_lambdas)
    best: LassoModel | None = None
    best_rmse = np.inf
    coef = None
    for lam in grid:
        model = lasso_fit(X_train, y_train, float(lam), tol=tol, max_sweeps=max_sweeps, coef0=coef)
        coef = model.coef
        rmse = float(np.sqrt(np.mean((lasso_predict(model, X_val) - y_val) ** 2)))
        if rmse < best_rmse:
            best_rmse = rmse
            best = model
    return best


# ---------------------------------------------------------------------------
# Predictions file and report emission
# ---------------------------------------------------------------------------


def save_predictions(path, rows: Sequence[dict]) -> None:
    """rows: dicts with flight_id, method, y_true, y_pred, subset."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("flight_id,method,y_true,y_pred,subset\n")
        for r in rows:
            fh.write(
                f"{r['flight_id']},{r['method']},{r['y_true']!r},{r['y_pred']!r},{r['subset']}\n"
            )


def load_predictions(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["flight_id", "method", "y_true", "y_pred", "subset"]:
            raise ValueError(f"{path} is not a predictions file")
        for line in fh:
            fid, method, y_true, y_pred, subset = line.rstrip("\n").split(",")
            rows.append(
                {
                    "flight_id": fid,
                    "method": method,
                    "y_true": float(y_true),
                    "y_pred": float(y_pred),
                    "subset": subset,
                }
            )
    return rows


def prediction_rows(
    dataset: FeatureDataset, preds_by_method: Mapping[str, np.ndarray]
) -> list[dict]:
    rows = []
    for method in sorted(preds_by_method):
        preds = preds_by_method[method]
        for i in range(dataset.n):
            rows.append(
                {
                    "flight_id": dataset.ids[i],
                    "method": method,
                    "y_true": float(dataset.y[i]),
                    "y_pred": float(preds[i]),
                    "subset": "outlier" if dataset.outlier[i] else "normal",
                }
            )
    return rows


def flight_number_of(dataset: FeatureDataset, i: int, index: NetworkIndex) -> str:
    """Flights sharing origin, destination, and departure hour share a number."""
    origin, dest = index.od_pairs[int(dataset.od_idx[i])]
    hour = datetime.fromtimestamp(int(dataset.dep_time_s[i]), tz=timezone.utc).hour
    return f"{origin}-{dest}-{hour:02d}"


def emit_reports(
    out_dir,
    dataset: FeatureDataset,
    preds_by_method: Mapping[str, np.ndarray],
    index: NetworkIndex,
    n_hist_bins: int = 40,
) -> dict[str, str]:
    """Write the delimited report tables; returns name -> path.

    Tables: per-method metrics by subset, error summary stats, shared-bin
    error histograms, (actual, error) scatter rows, the daily series for the
    best-covered flight number, and that flight number's per-method metrics.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        name: os.path.join(out_dir, name + ".csv")
        for name in (
            "metrics",
            "error_stats",
            "error_hist",
            "scatter",
            "flight_series",
            "case_metrics",
        )
    }
    methods = sorted(preds_by_method)

    with open(paths["metrics"], "w", encoding="utf-8") as fh:
        fh.write("method,subset,n,rmse,mae,r2\n")
        for method in methods:
            for row in metrics(preds_by_method[method], dataset.y, dataset.outlier, method):
                fh.write(
                    f"{row.method},{row.subset},{row.n},{row.rmse!r},{row.mae!r},{row.r2!r}\n"
                )

    errors = {m: preds_by_method[m] - dataset.y for m in methods}
    with open(paths["error_stats"], "w", encoding="utf-8") as fh:
        fh.write("method,n,mean,std\n")
        for m in methods:
            e = errors[m]
            fh.write(f"{m},{len(e)},{float(e.mean())!r},{float(e.std())!r}\n")

    if methods and dataset.n:
        lo = min(float(errors[m].min()) for m in methods)
        hi = max(float(errors[m].max()) for m in methods)
        edges = np.linspace(lo, hi, n_hist_bins + 1) if hi > lo else np.array([lo, lo + 1.0])
    else:
        edges = np.array([0.0, 1.0])
    with open(paths["error_hist"], "w", encoding="utf-8") as fh:
        fh.write("method,bin_left,bin_right,count\n")
        for m in methods:
            counts, _ = np.histogram(errors[m], bins=edges)
            for b, count in enumerate(counts):
                fh.write(f"{m},{edges[b]!r},{edges[b + 1]!r},{int(count)}\n")

    with open(paths["scatter"], "w", encoding="utf-8") as fh:
        fh.write("method,flight_id,actual,error\n")
        for m in methods:
            for i in range(dataset.n):
                fh.write(f"{m},{dataset.ids[i]},{dataset.y[i]!r},{errors[m][i]!r}\n")

    numbers = [flight_number_of(dataset, i, index) for i in range(dataset.n)]
    by_number: dict[str, list[int]] = {}
    for i, num in enumerate(numbers):
        by_number.setdefault(num, []).append(i)
    case = max(sorted(by_number), key=lambda k: len(by_number[k])) if by_number else None

    with open(paths["flight_series"], "w", encoding="utf-8") as fh:
        fh.write("flight_number,date,actual," + ",".join(methods) + "\n")
        if case is not None:
            rows = sorted(by_number[case], key=lambda i: int(dataset.dep_time_s[i]))
            for i in rows:
                date = datetime.fromtimestamp(
                    int(dataset.dep_time_s[i]), tz=timezone.utc
                ).strftime("%Y-%m-%d")
                preds = ",".join(repr(float(preds_by_method[m][i])) for m in methods)
                fh.write(f"{case},{date},{dataset.y[i]!r},{preds}\n")

    with open(paths["case_metrics"], "w", encoding="utf-8") as fh:
        fh.write("flight_number,method,n,rmse,mae,r2\n")
        if case is not None:
            idx = np.array(by_number[case])
            for m in methods:
                e = preds_by_method[m][idx] - dataset.y[idx]
                rmse = float(np.sqrt(np.mean(e**2)))
                mae = float(np.mean(np.abs(e)))
                r2 = _r2(e, dataset.y[idx])
                fh.write(f"{case},{m},{len(idx)},{rmse!r},{mae!r},{r2!r}\n")

    return paths
