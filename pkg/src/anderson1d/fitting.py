"""Weighted log-linear fitting shared by the decay estimators."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["loglinear_fit"]


def loglinear_fit(xs: np.ndarray, means: np.ndarray, std_errors: np.ndarray):
    """Weighted least squares of log(mean) against x.

    Weights are 1 / (relative std error)^2, the delta-method variance of the
    log;  if every error is zero (deterministic curves) the fit is ordinary
    least squares.  Returns (slope, intercept, r_squared, covariance,
    weights), with covariance the 2x2 matrix of (intercept, slope) under the
    stated per-point variances (identity weights give the OLS residual-based
    covariance).
    """
    xs = np.asarray(xs, dtype=float)
    means = np.asarray(means, dtype=float)
    std_errors = np.asarray(std_errors, dtype=float)
    if np.any(means <= 0):
        raise ValueError("log-linear fit needs strictly positive means")
    y = np.log(means)
    rel = np.divide(std_errors, means)
    known_var = bool(np.any(rel > 0))
    if known_var:
        # guard exact-zero errors in otherwise noisy curves
        floor = rel[rel > 0].min()
        rel = np.maximum(rel, floor)
        w = 1.0 / rel**2
    else:
        w = np.ones_like(y)
    design = np.column_stack([np.ones_like(xs), xs])
    wd = design * w[:, None]
    normal = design.T @ wd
    cov = np.linalg.inv(normal)
    beta = cov @ (wd.T @ y)
    resid = y - design @ beta
    ybar = np.sum(w * y) / np.sum(w)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    if not known_var:
        dof = max(len(xs) - 2, 1)
        cov = cov * (ss_res / dof)
    return float(beta[1]), float(beta[0]), r_squared, cov, w
