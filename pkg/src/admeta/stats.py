"""Selector comparison statistics: distance from the top, paired t-test, Cohen's d."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .metamodel import SelectionReport
from .perfmatrix import PerformanceMatrix, top_performance

LOG_ERROR_FLOOR = 1e-12


def meta_error(y_top: float, y_sel: float) -> float:
    return float(y_top) - float(y_sel)


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    degenerate: bool = False


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    x = df / (df + t * t)
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, x))))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on ``a - b``.

    Zero-variance differences give a flagged result with p = 1 (t = 0 when the
    mean difference is 0, otherwise signed infinity) instead of raising.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ValueError(f"paired t-test needs n >= 2, got {n}")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if not sd > 0:
        t = 0.0 if mean == 0 else math.copysign(math.inf, mean)
        return TTestResult(t, n - 1, 1.0, degenerate=True)
    t = float(mean / (sd / math.sqrt(n)))
    return TTestResult(t, n - 1, student_t_sf2(t, n - 1))


def effect_label(d: float) -> str:
    m = abs(d)
    if m <= 0.2:
        return "small"
    if m <= 0.5:
        return "medium"
    return "large"


def cohens_d(a: Sequence[float], b: Sequence[float]) -> tuple[float, str]:
    """Difference of means over the pooled standard deviation, with its size class."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ValueError("cohens_d needs nonempty samples")
    if na + nb < 3:
        raise ValueError("pooled variance needs at least 3 observations")
    va = a.var(ddof=1) if na > 1 else 0.0
    vb = b.var(ddof=1) if nb > 1 else 0.0
    pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
    if not pooled > 0:
        raise ValueError("zero pooled variance")
    d = float((a.mean() - b.mean()) / math.sqrt(pooled))
    return d, effect_label(d)


@dataclass
class ComparisonReport:
    mean_a: float
    mean_b: float
    std_a: float
    std_b: float
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    effect_size_d: float
    effect_label: str
    degenerate: bool

    def to_json(self) -> dict:
        out = asdict(self)
        if math.isinf(out["t_statistic"]):
            out["t_statistic"] = str(out["t_statistic"])
        return out


def _compare(a: np.ndarray, b: np.ndarray) -> ComparisonReport:
    tt = paired_t_test(a, b)
    try:
        d, label = cohens_d(a, b)
    except ValueError:
        d, label = 0.0, "small"  # both samples constant; identical selectors land here
    return ComparisonReport(float(a.mean()), float(b.mean()), float(a.std(ddof=1)), float(b.std(ddof=1)),
                            tt.t, tt.df, tt.p, d, label, tt.degenerate)


def log_error(y_top: float, y_sel: float) -> float | None:
    gap = y_top - y_sel
    return math.log(gap) if gap > LOG_ERROR_FLOOR else None


def compare_selectors(matrix: PerformanceMatrix, reports_a: Sequence[SelectionReport],
                      reports_b: Sequence[SelectionReport]) -> dict:
    """Paired comparison of two selectors on measured performance and on error.

    Returns ``{"performance": ComparisonReport, "error": ComparisonReport,
    "rows": [...]}`` where each row holds the per-dataset selections, measured
    values, errors and log-errors (None when the error is ~0).
    """
    by_a = {r.dataset: r for r in reports_a}
    by_b = {r.dataset: r for r in reports_b}
    if set(by_a) != set(by_b):
        raise ValueError("report lists cover different datasets")
    names = [r.dataset for r in reports_a]
    rows = []
    ya, yb, da, db = [], [], [], []
    for name in names:
        if name not in matrix.dataset_names:
            raise KeyError(f"dataset {name!r} is not in the performance matrix")
        top_id, top = top_performance(matrix, name)
        sa, sb = by_a[name].selected, by_b[name].selected
        va, vb = matrix.value(name, sa), matrix.value(name, sb)
        if math.isnan(va) or math.isnan(vb):
            raise ValueError(f"{name}: a selected detector has a missing cell")
        ya.append(va)
        yb.append(vb)
        da.append(meta_error(top, va))
        db.append(meta_error(top, vb))
        rows.append({
            "dataset": name, "top": top_id, "y_top": top,
            "selected_a": sa, "y_sel_a": va, "error_a": da[-1], "log_error_a": log_error(top, va),
            "selected_b": sb, "y_sel_b": vb, "error_b": db[-1], "log_error_b": log_error(top, vb),
        })
    return {
        "metric": matrix.metric,
        "n": len(names),
        "performance": _compare(np.array(ya), np.array(yb)),
        "error": _compare(np.array(da), np.array(db)),
        "rows": rows,
    }


def comparison_to_json(result: dict) -> dict:
    return {**result, "performance": result["performance"].to_json(), "error": result["error"].to_json()}
