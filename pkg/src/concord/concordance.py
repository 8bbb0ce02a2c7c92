"""Agreement between the market-derived and the expert-derived factor weights."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConstantVector, FactorMismatch, MalformedRow
from .market_data import _text_stream
from .tdist import t_sf

CONCORDANT = "concordant"
DISCORDANT = "discordant"


@dataclass(frozen=True)
class Thresholds:
    r_min: float = 0.5
    s_max: float = 0.1


@dataclass(frozen=True)
class ConcordanceReport:
    r_f: float
    t_stat: float
    p_value: float
    sigma_f: float
    mean_u: float
    mean_v: float
    n: int
    verdict: str
    thresholds: Thresholds = Thresholds()

    @property
    def variance_f(self) -> float:
        return self.sigma_f ** 2

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variance_f"] = self.variance_f
        return out

    def summary(self) -> str:
        th = self.thresholds
        return "\n".join([
            f"factors            n       = {self.n}",
            f"correlation        r_f     = {self.r_f:+.4f}",
            f"t statistic        t       = {self.t_stat:.4f}",
            f"one-sided tail     P       = {self.p_value:.4f}",
            f"difference RMSD    sigma_f = {self.sigma_f:.4f}",
            f"vector means       m_u     = {self.mean_u:.4f}, m_v = {self.mean_v:.4f}",
            f"verdict: {self.verdict} (r_f >= {th.r_min:g} and sigma_f <= {th.s_max:g})",
        ])


def _pair(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise FactorMismatch(f"weight vectors differ in shape: {u.shape} vs {v.shape}")
    return u, v


def correlation_test(u, v) -> tuple[float, float, float]:
    """
    Pearson r, its t statistic |r| sqrt(n-2) / sqrt(1-r^2), and the one-sided
    upper-tail probability of that t under n - 2 degrees of freedom.
    """
    u, v = _pair(u, v)
    n = u.size
    if n < 3:
        raise ValueError("need at least 3 factors for a correlation test")
    du, dv = u - u.mean(), v - v.mean()
    su, sv = np.sqrt(du @ du), np.sqrt(dv @ dv)
    if su == 0 or sv == 0:
        raise ConstantVector("a weight vector is constant; correlation undefined")
    r = float(np.clip((du @ dv) / (su * sv), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, float("inf"), 0.0
    t = abs(r) * np.sqrt(n - 2) / np.sqrt(1.0 - r * r)
    return r, float(t), float(t_sf(t, n - 2))


def rmsd(u, v) -> float:
    """Sample standard deviation (n - 1 divisor) of the componentwise differences."""
    u, v = _pair(u, v)
    if u.size < 2:
        raise ValueError("need at least 2 factors")
    return float(np.std(u - v, ddof=1))


def build_report(u, v, thresholds: Thresholds | None = None) -> ConcordanceReport:
    th = thresholds or Thresholds()
    r, t, p = correlation_test(u, v)
    s = rmsd(u, v)
    verdict = CONCORDANT if (r >= th.r_min and s <= th.s_max) else DISCORDANT
    u, v = _pair(u, v)
    return ConcordanceReport(
        r_f=r, t_stat=t, p_value=p, sigma_f=s,
        mean_u=float(u.mean()), mean_v=float(v.mean()),
        n=int(u.size), verdict=verdict, thresholds=th,
    )


def read_weights_csv(source) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(_text_stream(source))
    header = [h.strip() for h in next(reader, [])]
    if header != ["factor", "weight"]:
        raise MalformedRow(1, "expected header factor,weight")
    names, weights = [], []
    for line, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 2:
            raise MalformedRow(line, "bad field count")
        try:
            weights.append(float(row[1]))
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        names.append(row[0].strip())
    return names, np.array(weights)
