"""Least-squares decay-class fitting shared by model strength estimation and
correlation decay reports."""

from __future__ import annotations

import numpy as np

FLOOR = 1e-15


def fit_exponential(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Fit y ~ c * exp(-rate * x); returns (rate, log c, residual)."""
    A = np.vstack([-xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ys), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(ys)) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def fit_power(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Fit y ~ c * (1+x)^(-rate); returns (rate, log c, residual)."""
    A = np.vstack([-np.log1p(xs), np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ys), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(ys)) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def classify_decay(xs, ys) -> dict:
    """Model selection between exponential and power-law decay by residual.

    Zeros are dropped with a floor of ``FLOOR``; needs at least 4 points.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.maximum(np.asarray(ys, dtype=float), FLOOR)
    mask = ys > FLOOR
    if mask.sum() >= 4:
        xs, ys = xs[mask], ys[mask]
    if len(xs) < 4:
        raise ValueError("need at least 4 positive points to classify decay")
    e_rate, e_c, e_res = fit_exponential(xs, ys)
    p_rate, p_c, p_res = fit_power(xs, ys)
    if e_res <= p_res:
        return {"class": "exponential", "rate": e_rate, "residual": e_res,
                "log_prefactor": e_c}
    return {"class": "power", "rate": p_rate, "residual": p_res,
            "log_prefactor": p_c}
