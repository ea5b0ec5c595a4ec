"""Small helpers shared by the model sweeps: slope fits and CSV rows."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_slope(pairs: Iterable[tuple[float, float]]) -> SlopeFit:
    """Least-squares line through ``(log x, log y)``.

    ``residual`` is the root-mean-square misfit in log space.
    """
    pts = np.asarray(list(pairs), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least 3 (x, y) pairs")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError("slope fit needs finite positive data")
    X, Y = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([X, np.ones_like(X)])
    (slope, intercept), *_ = np.linalg.lstsq(design, Y, rcond=None)
    resid = Y - design @ np.array([slope, intercept])
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


def format_value(v) -> str:
    """17 significant digits; ``None`` and non-finite floats become empty fields."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if not math.isfinite(x):
        return ""
    return f"{x:.17g}"


def rows_to_csv(columns: Sequence[str], rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()
