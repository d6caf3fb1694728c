"""Least-squares recovery of log-polynomial growth laws from tables.

The fit target is values ~ sum_k a_k (log x)^k over a window of x.  Known
coefficients can be pinned, which is how the constrained leading-term
checks are run: the pinned parts are subtracted from the data and only the
free powers enter the design matrix.
"""

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_WINDOW = (math.exp(6.0), 2e4)


@dataclass
class FitResult:
    coefficients: np.ndarray  # a_k for k = degree .. 0
    residual_rms: float
    window: tuple
    condition_number: float
    degree: int

    def coefficient(self, k):
        if not 0 <= k <= self.degree:
            raise ValueError("power outside fitted range")
        return float(self.coefficients[self.degree - k])


def _as_xy(data):
    # MomentTable-like objects expose mean over n = 0..n_max; curves from
    # the rho side expose grid points and values; otherwise an (x, y) pair.
    mean = getattr(data, "mean", None)
    if mean is not None and not callable(mean):
        return np.arange(len(mean), dtype=float), np.asarray(mean, dtype=float)
    values = getattr(data, "values", None)
    if values is not None:
        return np.asarray(data.grid.points(), dtype=float), np.asarray(values, dtype=float)
    xs, ys = data
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)


def fit_log_polynomial(data, degree, window=DEFAULT_WINDOW, fixed=None):
    """Fit values against powers of log x on the window.

    fixed maps powers to pinned coefficient values.  Returns a FitResult
    whose coefficient array carries the pinned entries in their slots.
    """
    degree = int(degree)
    if not 0 <= degree <= 3:
        raise ValueError("degree must be between 0 and 3")
    fixed = dict(fixed or {})
    for k in fixed:
        if not 0 <= int(k) <= degree:
            raise ValueError("pinned power %r outside degree range" % (k,))
    lo, hi = float(window[0]), float(window[1])
    xs, ys = _as_xy(data)
    keep = (xs >= max(lo, 1.0)) & (xs <= hi)
    xs, ys = xs[keep], ys[keep]
    if xs.size < 20:
        raise ValueError("window holds %d points, need at least 20" % xs.size)
    L = np.log(xs)
    target = ys.astype(float).copy()
    for k, val in fixed.items():
        target -= float(val) * L ** int(k)
    free = [k for k in range(degree, -1, -1) if k not in fixed]
    coefs = np.zeros(degree + 1)
    for k, val in fixed.items():
        coefs[degree - int(k)] = float(val)
    if free:
        design = np.column_stack([L**k for k in free])
        sol, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
        for k, a in zip(free, sol):
            coefs[degree - k] = a
        cond = float(np.linalg.cond(design))
        resid = target - design @ sol
    else:
        cond = 1.0
        resid = target
    rms = float(np.sqrt(np.mean(resid**2)))
    return FitResult(coefs, rms, (lo, hi), cond, degree)
