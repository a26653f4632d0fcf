"""Classification and regression metrics plus a two-component PCA."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


def _check_pair(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.size == 0:
        raise ValueError("empty input")
    if s.shape != y.shape:
        raise ValueError(f"length mismatch: {s.size} scores vs {y.size} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(bool)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def precision_recall_f1(scores, labels, threshold: float = 0.5) -> tuple[float, float, float]:
    """Precision, recall and F1 of ``score >= threshold``; empty ratios count as 0."""
    s, y = _check_pair(scores, labels)
    pred = s >= threshold
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    return _prf(tp, fp, fn)


def f1_max(scores, labels) -> tuple[float, float]:
    """Best micro F1 over all thresholds, with the smallest threshold reaching it.

    F1 only changes at observed score values, so sweeping the unique scores
    (plus one value above the maximum, where nothing is predicted) is exact.
    """
    s, y = _check_pair(scores, labels)
    n_pos = int(np.count_nonzero(y))
    if n_pos == 0:
        raise ValueError("f1_max undefined without positive labels")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp_cum = np.cumsum(y_sorted)
    fp_cum = np.cumsum(~y_sorted)
    uniq = np.unique(s)
    best_f1, best_tau = 0.0, float(np.nextafter(s.max(), np.inf))
    # descending sweep; ties (>=) keep the smallest threshold
    for tau in uniq[::-1]:
        last = np.searchsorted(-s_sorted, -tau, side="right") - 1
        tp, fp = int(tp_cum[last]), int(fp_cum[last])
        f1 = _prf(tp, fp, n_pos - tp)[2]
        if f1 >= best_f1:
            best_f1, best_tau = f1, float(tau)
    return best_f1, best_tau


def mae(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("empty input")
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    return float(np.mean(np.abs(t - p)))


@dataclass
class MetricsReport:
    count: int
    mae: float | None = None
    threshold: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    f1_max: float | None = None
    f1_max_threshold: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(predictions, targets, task: str = "regression", threshold: float = 0.5) -> MetricsReport:
    """Metrics over labelled predictions.

    Regression reports MAE only.  Classification adds P/R/F1 at ``threshold``
    and F1max (skipped when there is no positive label).
    """
    report = MetricsReport(count=len(np.asarray(predictions).ravel()), mae=mae(predictions, targets))
    if task == "binary-classification":
        p, r, f = precision_recall_f1(predictions, targets, threshold)
        report.threshold, report.precision, report.recall, report.f1 = threshold, p, r, f
        if np.any(np.asarray(targets) == 1):
            report.f1_max, report.f1_max_threshold = f1_max(predictions, targets)
    return report


# -- PCA -------------------------------------------------------------------------

@dataclass
class PCAResult:
    coords: np.ndarray  # (n, 2)
    components: np.ndarray  # (2, dim), rows are unit axes
    eigenvalues: np.ndarray  # (2,)
    explained_variance_ratio: np.ndarray  # (2,)
    mean: np.ndarray


def _power_iteration(c: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    start = int(np.argmax(np.linalg.norm(c, axis=0)))
    v = c[:, start].copy()
    norm = np.linalg.norm(v)
    if norm == 0:
        return v, 0.0
    v /= norm
    for _ in range(max_iter):
        w = c @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return v, 0.0
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return v, float(v @ c @ v)


def _orthogonal_fallback(axis: np.ndarray) -> np.ndarray:
    for k in range(axis.size):
        e = np.zeros(axis.size)
        e[k] = 1.0
        e -= (e @ axis) * axis
        n = np.linalg.norm(e)
        if n > 1e-6:
            return e / n
    raise ValueError("cannot build an orthogonal axis")


def pca2(x, tol: float = 1e-10, max_iter: int = 10_000) -> PCAResult:
    """Project rows of ``x`` onto their first two principal axes.

    Axes come from power iteration with deflation on the sample covariance.
    Each axis is signed so its largest-magnitude loading is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("pca2 needs a 2-D array with at least 3 rows")
    if x.shape[1] < 2:
        raise ValueError("pca2 needs at least 2 columns")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    total = float(np.trace(cov))
    if total <= 0:
        raise ValueError("degenerate input: all rows are equal")
    axes, vals = [], []
    c = cov.copy()
    for _ in range(2):
        v, lam = _power_iteration(c, tol, max_iter)
        if lam <= total * 1e-14 or np.linalg.norm(v) == 0:
            v = _orthogonal_fallback(axes[0]) if axes else v
            lam = float(v @ cov @ v)
        if axes:
            # re-orthogonalise against the first axis to remove drift
            v = v - (v @ axes[0]) * axes[0]
            v /= np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        axes.append(v)
        vals.append(max(lam, 0.0))
        c = c - lam * np.outer(v, v)
    comps = np.vstack(axes)
    eig = np.array(vals)
    return PCAResult(xc @ comps.T, comps, eig, eig / total, mean)
