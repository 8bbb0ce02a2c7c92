"""Student t tail probabilities via the regularized incomplete beta function."""

from __future__ import annotations

import numpy as np
from scipy.special import betainc


def t_sf(t, df):
    """Upper tail P(T > t) for Student's t with ``df`` degrees of freedom."""
    t = np.asarray(t, dtype=float)
    if np.any(np.asarray(df) <= 0):
        raise ValueError("degrees of freedom must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        half_tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    out = np.where(t >= 0, half_tail, 1.0 - half_tail)
    out = np.where(np.isposinf(t), 0.0, np.where(np.isneginf(t), 1.0, out))
    return out[()] if out.ndim == 0 else out


def t_cdf(t, df):
    return 1.0 - t_sf(t, df)


def t_two_sided(t, df):
    return np.minimum(1.0, 2.0 * t_sf(np.abs(t), df))
