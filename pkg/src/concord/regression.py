"""
Objective factor weights: min-max normalization of company factors and an OLS
fit of the company's ideal-portfolio share on them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateFactor,
    MalformedRow,
    RankDeficient,
    TooFewStages,
    ZeroSlopeSum,
    ZeroVariance,
)
from .market_data import _text_stream as _text
from .tdist import t_two_sided

FACTOR_NAMES = ("f1", "f2", "f3", "f4", "f5")
FACTOR_LABELS = {
    "f1": "fixed assets total",
    "f2": "gross payroll",
    "f3": "net income total",
    "f4": "profit margin",
    "f5": "major produce throughput rate",
}


@dataclass(frozen=True)
class FactorPanel:
    stages: tuple[str, ...]
    factor_names: tuple[str, ...]
    normalized: np.ndarray
    response: np.ndarray
    raw_bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        X = np.asarray(self.normalized, dtype=float)
        y = np.asarray(self.response, dtype=float)
        object.__setattr__(self, "normalized", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "factor_names", tuple(self.factor_names))
        S, k = len(self.stages), len(self.factor_names)
        if X.shape != (S, k) or y.shape != (S,) or len(self.raw_bounds) != k:
            raise ValueError("factor panel shapes are inconsistent")
        if np.any(X < -1e-12) or np.any(X > 1 + 1e-12):
            raise ValueError("normalized factors must lie in [0, 1]")
        for i in range(k):
            lo, hi = self.raw_bounds[i]
            if not lo < hi:
                raise DegenerateFactor(i + 1, self.factor_names[i])
            col = X[:, i]
            if abs(col.min()) > 1e-9 or abs(col.max() - 1) > 1e-9:
                raise ValueError(f"factor {self.factor_names[i]} does not attain both 0 and 1")

    @property
    def n_stages(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class RegressionFit:
    factor_names: tuple[str, ...]
    intercept: float
    slopes: np.ndarray
    r_squared: float
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray
    residuals: np.ndarray
    alpha: float = 0.05

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.slopes])

    def to_dict(self, weights=None) -> dict:
        names = ["c0", *self.factor_names]
        out = {
            "coefficients": dict(zip(names, map(float, self.coefficients))),
            "std_errors": dict(zip(names, map(float, self.std_errors))),
            "t_stats": dict(zip(names, map(float, self.t_stats))),
            "p_values": dict(zip(names, map(float, self.p_values))),
            "significant": dict(zip(names, map(bool, self.significant))),
            "alpha": self.alpha,
            "r_squared": float(self.r_squared),
        }
        if weights is not None:
            out["weights"] = dict(zip(self.factor_names, map(float, weights)))
        return out


def normalize_factors(
    raw,
    response,
    stages: Sequence[str] | None = None,
    factor_names: Sequence[str] | None = None,
) -> FactorPanel:
    """Map each factor column onto [0, 1] by its own min and max."""
    raw = np.asarray(raw, dtype=float)
    y = np.asarray(response, dtype=float)
    if raw.ndim != 2:
        raise ValueError("raw factors must be a 2-D array")
    S, k = raw.shape
    if S < 2:
        raise TooFewStages(f"need at least 2 stages, got {S}")
    if y.shape != (S,):
        raise ValueError("response length does not match the factor rows")
    stages = tuple(stages) if stages is not None else tuple(str(i + 1) for i in range(S))
    names = tuple(factor_names) if factor_names is not None else tuple(f"f{i + 1}" for i in range(k))
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    for i in range(k):
        if not hi[i] > lo[i]:
            raise DegenerateFactor(i + 1, names[i])
    norm = (raw - lo) / (hi - lo)
    return FactorPanel(stages, names, norm, y, tuple(zip(lo.tolist(), hi.tolist())))


def ols(design, y):
    """
    Plain least squares. ``design`` must already contain the intercept column.

    Returns (coef, residuals, std_errors). Standard errors use s^2 = SSR / (S - p).
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    S, p = X.shape
    if S <= p:
        raise TooFewStages(f"{S} observations for {p} parameters")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficient("design matrix columns are collinear")
    q, r = np.linalg.qr(X)
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    s2 = resid @ resid / (S - p)
    r_inv = np.linalg.inv(r)
    # diag((X'X)^-1) = row norms of R^-1
    se = np.sqrt(s2 * np.sum(r_inv * r_inv, axis=1))
    return coef, resid, se


def ols_fit(panel: FactorPanel, alpha: float = 0.05) -> RegressionFit:
    """Fit ``response = c0 + sum c_i f_i`` with two-sided t tests on every coefficient."""
    y = panel.response
    S = panel.n_stages
    X = np.column_stack([np.ones(S), panel.normalized])
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise ZeroVariance("response is constant; R^2 is undefined")
    coef, resid, se = ols(X, y)
    df = S - X.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    p = t_two_sided(t, df)
    ssr = float(resid @ resid)
    return RegressionFit(
        factor_names=panel.factor_names,
        intercept=float(coef[0]),
        slopes=coef[1:],
        r_squared=1.0 - ssr / sst,
        std_errors=se,
        t_stats=t,
        p_values=p,
        significant=p < alpha,
        residuals=resid,
        alpha=alpha,
    )


def market_weights(fit) -> np.ndarray:
    """Slopes rescaled to sum to one (intercept excluded; negative weights kept)."""
    slopes = fit.slopes if isinstance(fit, RegressionFit) else np.asarray(fit, dtype=float)
    total = float(np.sum(slopes))
    if abs(total) <= 1e-15 * max(1.0, float(np.abs(slopes).max(initial=0.0))):
        raise ZeroSlopeSum("slopes sum to zero; weights cannot be normalized")
    return slopes / total


def rank_factors(weights, names: Sequence[str] = FACTOR_NAMES) -> list[tuple[str, float]]:
    w = [float(v) for v in weights]
    order = sorted(range(len(w)), key=lambda i: (-w[i], i))
    return [(names[i], w[i]) for i in order]


def read_factors_csv(source) -> tuple[list[str], list[str], np.ndarray]:
    """Read ``stage,f1,...`` rows; returns (stages, factor names, raw matrix)."""
    reader = csv.reader(_text(source))
    header = [h.strip() for h in next(reader, [])]
    if not header or header[0] != "stage" or len(header) < 2:
        raise MalformedRow(1, "expected header stage,f1,...")
    stages, rows = [], []
    for line, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise MalformedRow(line, "bad field count")
        try:
            rows.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        stages.append(row[0].strip())
    return stages, header[1:], np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)


def read_response_csv(source) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(_text(source))
    header = [h.strip() for h in next(reader, [])]
    if header != ["stage", "x1"]:
        raise MalformedRow(1, "expected header stage,x1")
    stages, values = [], []
    for line, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 2:
            raise MalformedRow(line, "bad field count")
        try:
            values.append(float(row[1]))
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        stages.append(row[0].strip())
    return stages, np.array(values)


def align_response(
    factor_stages: Sequence[str], raw, response_stages: Sequence[str], response
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Keep only stages present in both inputs, in factor-file order."""
    lookup = dict(zip(response_stages, np.asarray(response, dtype=float)))
    keep = [i for i, s in enumerate(factor_stages) if s in lookup]
    stages = [factor_stages[i] for i in keep]
    return stages, np.asarray(raw)[keep], np.array([lookup[s] for s in stages])
