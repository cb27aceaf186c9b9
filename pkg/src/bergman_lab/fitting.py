"""Exponent fits for boundary growth ``v(x) ~ (1-|x|^2)^-e``.

A plain log-log fit is biased for small ``e`` because the bounded part of
``v`` is of the same size as the singular part over any practical sweep.  The
corrected fit uses the model ``v = A t^-e + B + C t^(1-e)`` with
``t = 1-|x|^2``, profiling ``e`` and solving the linear coefficients by
weighted least squares (relative weights ``1/v``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

MAX_WINDOW_SHIFTS = 8


@dataclass(frozen=True)
class ExponentFit:
    exponent: float  # e in v ~ t^-e, so the log-log slope is -e
    plain_exponent: float
    max_log_residual: float

    @property
    def slope(self):
        return -self.exponent


def plain_exponent(t, v):
    t, v = np.asarray(t, float), np.asarray(v, float)
    slope, icept = np.polyfit(np.log(t), np.log(v), 1)
    resid = np.log(v) - (slope * np.log(t) + icept)
    return -float(slope), float(np.max(np.abs(resid)))


def _model_residual(t, v, e, corrections=1):
    cols = np.column_stack([t ** (k - e) for k in range(corrections + 1)] + [np.ones_like(t)])
    w = 1.0 / np.abs(v)
    coef, *_ = np.linalg.lstsq(cols * w[:, None], v * w, rcond=None)
    r = (cols @ coef - v) * w
    return float(r @ r)


def fit_exponent(t, v, window=0.3, corrections=1):
    """Fit ``e`` in ``v ~ A t^-e`` for samples ``t = 1-|x|^2 -> 0``.

    Exact power laws (plain fit residual below 1e-9) return the plain slope;
    otherwise ``e`` is profiled in ``[e_plain - window, e_plain + window]``
    (``window`` may be a ``(below, above)`` pair), moving the window while the
    best value sits on its edge.
    ``corrections`` counts the terms ``t^(k-e)``, ``k >= 1``, in the model;
    large exponents need more of them.
    """
    t, v = np.asarray(t, float), np.asarray(v, float)
    if t.size < 2 or np.any(t <= 0) or np.any(v <= 0):
        raise ValueError("exponent fit needs at least two positive samples")
    e0, resid = plain_exponent(t, v)
    if resid < 1e-9 or t.size < corrections + 3:
        return ExponentFit(e0, e0, resid)
    model = lambda e: _model_residual(t, v, e, corrections)
    below, above = window if np.ndim(window) else (window, window)
    lo, hi = e0 - below, e0 + above
    for _ in range(MAX_WINDOW_SHIFTS):
        grid = np.linspace(lo, hi, 601)
        k = int(np.argmin([model(e) for e in grid]))
        # a minimum on the window edge means the plain slope was too biased
        if k == 0:
            lo, hi = lo - below, lo + above
        elif k == grid.size - 1:
            lo, hi = hi - below, hi + above
        else:
            break
    best = grid[k]
    step = grid[1] - grid[0]
    opt = minimize_scalar(model, bounds=(best - step, best + step), method="bounded",
                          options={"xatol": 1e-10})
    return ExponentFit(float(opt.x), e0, resid)


def boundary_radii(lo=0.9, hi=0.995, count=12):
    """Radii whose distances ``1-|x|`` are geometric between ``1-lo`` and ``1-hi``."""
    return 1.0 - np.geomspace(1.0 - lo, 1.0 - hi, count)
