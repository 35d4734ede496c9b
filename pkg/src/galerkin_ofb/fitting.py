"""Log-log slope fits for sweep tables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n: int


def fit_loglog_slope(table, x_col, y_col, min_rows=5):
    """OLS fit of log y against log x over the rows of ``table`` (list of dicts).

    Rows whose value is NaN are skipped; non-positive values raise
    :class:`DegenerateFit`.
    """
    x, y = [], []
    for row in table:
        xv, yv = float(row[x_col]), float(row[y_col])
        if math.isnan(xv) or math.isnan(yv):
            continue
        if xv <= 0 or yv <= 0 or math.isinf(yv):
            raise DegenerateFit(f"non-positive or infinite value in ({x_col}, {y_col}): ({xv}, {yv})")
        x.append(xv)
        y.append(yv)
    if len(x) < min_rows:
        raise DegenerateFit(f"need at least {min_rows} usable rows, got {len(x)}")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    n = len(lx)
    if n > 2:
        s2 = float(resid @ resid) / (n - 2)
        stderr = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    else:
        stderr = math.nan
    return SlopeFit(float(coef[0]), stderr, float(coef[1]), n)
