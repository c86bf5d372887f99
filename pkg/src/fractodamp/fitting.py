"""Least-squares power-law fits used by the sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d

MIN_POINTS = 5


@dataclass
class FitResult:
    slope: float
    intercept: float
    slope_stderr: float
    window: tuple[float, float]
    points: int
    r2: float = float("nan")

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "slope_stderr": self.slope_stderr,
                "window_lo": self.window[0], "window_hi": self.window[1], "points": self.points,
                "r2": self.r2}


class PowerLawFit(RegressorMixin, BaseEstimator):
    """Fit ``y = C * x**slope`` by linear regression in log-log coordinates.

    ``x_transform="log1p"`` regresses against ``log(1 + x)`` instead, as used
    for decay in time.  ``window`` restricts the fit to ``lo <= x <= hi``.
    """

    def __init__(self, x_transform="log", window=None, min_points=MIN_POINTS, log_y=True):
        self.x_transform = x_transform
        self.window = window
        self.min_points = min_points
        self.log_y = log_y

    def _tx(self, x):
        if self.x_transform == "log":
            return np.log(x)
        if self.x_transform == "log1p":
            return np.log1p(x)
        if self.x_transform == "identity":
            return np.asarray(x, float)
        raise ValueError(f"unknown x_transform {self.x_transform!r}")

    def fit(self, X, y):
        X, y = check_X_y(np.reshape(X, (-1, 1)), y, y_numeric=True)
        x = X[:, 0]
        sel = np.ones(x.shape, bool)
        if self.window is not None:
            lo, hi = self.window
            sel = (x >= lo * (1 - 1e-12)) & (x <= hi * (1 + 1e-12))
        x, y = x[sel], y[sel]
        if x.size < self.min_points:
            raise ValueError(f"need at least {self.min_points} points in the fit window, got {x.size}")
        if self.log_y and np.any(y <= 0):
            raise ValueError("log fit needs positive y values")
        tx = self._tx(x)
        ty = np.log(y) if self.log_y else y
        res = stats.linregress(tx, ty)
        self.result_ = FitResult(float(res.slope), float(res.intercept), float(res.stderr),
                                 (float(x.min()), float(x.max())), int(x.size), float(res.rvalue**2))
        self.coef_ = np.array([res.slope])
        self.intercept_ = float(res.intercept)
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        x = column_or_1d(np.asarray(X, float).reshape(-1))
        out = self.intercept_ + self.coef_[0] * self._tx(x)
        return np.exp(out) if self.log_y else out
