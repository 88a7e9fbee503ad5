"""Empirical rate diagnostics: least-squares slope of log(metric) against
log(scale), with a confidence interval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass
class RateFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n_used: int
    n_excluded: int

    def to_json(self):
        return {k: (int(v) if isinstance(v, int) else float(v))
                for k, v in self.__dict__.items()}


def ratefit(scales, values, confidence=0.95):
    """Fit log(values) ~ slope * log(scales) + intercept.

    Nonpositive values are excluded (noted in n_excluded). Requires at least
    4 usable grid points.
    """
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    if scales.shape != values.shape:
        raise ValueError("scales and values must have matching shapes")
    keep = (values > 0) & (scales > 0)
    n_excluded = int((~keep).sum())
    xs = np.log(scales[keep])
    ys = np.log(values[keep])
    if xs.size < 4:
        raise ValueError(f"need at least 4 positive points, have {xs.size}")
    res = stats.linregress(xs, ys)
    dof = xs.size - 2
    tval = stats.t.ppf(0.5 + confidence / 2, dof) if dof > 0 else np.inf
    return RateFit(slope=float(res.slope), intercept=float(res.intercept),
                   stderr=float(res.stderr),
                   ci_low=float(res.slope - tval * res.stderr),
                   ci_high=float(res.slope + tval * res.stderr),
                   n_used=int(xs.size), n_excluded=n_excluded)
