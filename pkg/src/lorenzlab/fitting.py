"""Least-squares line fits shared by every scaling-law estimator.

All the asymptotic laws exercised here (dimension, hitting/recurrence
logarithm laws, correlation and deviation rates) are estimated as slopes
of straight-line fits in suitable log coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class FitResult:
    """Slope/intercept of a least-squares line, with diagnostics.

    `residual_rms` is the root-mean-square vertical residual; `stderr` the
    standard error of the slope; `x_range` the abscissa interval used.
    """

    slope: float
    intercept: float
    stderr: float
    residual_rms: float
    r_squared: float
    x_range: tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_range"] = list(d["x_range"])
        return d


def fit_line(x, y, weights=None) -> FitResult:
    """Weighted least squares y ~ a + b x; needs >= 3 points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise PreconditionError("fit_line needs matching 1-d arrays")
    if len(x) < 3:
        raise PreconditionError(f"need >= 3 points to fit, got {len(x)}")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    if sxx <= 0.0:
        raise PreconditionError("degenerate abscissa (all x equal)")
    sxy = (w * (x - xm) * (y - ym)).sum()
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    dof = max(len(x) - 2, 1)
    sigma2 = (w * resid**2).sum() / dof
    stderr = float(np.sqrt(sigma2 / sxx))
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - (w * resid**2).sum() / ss_tot if ss_tot > 0.0 else 1.0
    return FitResult(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        r_squared=float(r2),
        x_range=(float(x.min()), float(x.max())),
        n_points=len(x),
    )
