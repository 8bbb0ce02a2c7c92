"""
Minimum-variance ("ideal") portfolio at a prescribed return level.

The problem is

    minimize    x' K x
    subject to  m' x = m_p,  1' x = 1    (and optionally x >= 0)

The equality-constrained form is solved directly through its bordered
(KKT) linear system; the long-only form uses a primal active-set method
on top of the same system.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ConcordError,
    DegenerateInterval,
    Infeasible,
    NoConvergence,
    SingularSystem,
)
from .market_data import AssetStats

NEG_TOL = 1e-12
MULT_TOL = 1e-9


@dataclass(frozen=True)
class PortfolioProblem:
    stats: AssetStats
    target_return: float
    long_only: bool = True
    regularization: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.target_return):
            raise ValueError("target_return must be finite")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")


@dataclass(frozen=True)
class PortfolioSolution:
    securities: tuple[str, ...]
    weights: np.ndarray
    variance: float
    target_return: float
    multipliers: tuple[float, float]
    active_bounds: frozenset = field(default_factory=frozenset)

    @property
    def risk(self) -> float:
        return float(np.sqrt(max(self.variance, 0.0)))

    def weight_of(self, security_id: str) -> float:
        return float(self.weights[self.securities.index(security_id)])

    def to_record(self, stage=None) -> dict:
        """JSON wire record ``{stage, weights: {id: fraction}, variance, m_p}``."""
        return {
            "stage": stage,
            "weights": {s: float(w) for s, w in zip(self.securities, self.weights)},
            "variance": float(self.variance),
            "m_p": float(self.target_return),
        }


@dataclass(frozen=True)
class FrontierPoint:
    security_id: object
    mean: float
    risk: float
    dominated: bool


def target_return(stats: AssetStats, rho: float) -> float:
    """Return level a fraction ``rho`` of the way up the pool's mean-return interval."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    means = np.asarray(stats.means, dtype=float)
    if means.size < 2:
        raise DegenerateInterval("need at least two securities")
    lo, hi = float(means.min()), float(means.max())
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        raise DegenerateInterval(f"all mean returns equal ({lo}); no return interval")
    return lo + rho * (hi - lo)


def _means_degenerate(m: np.ndarray) -> bool:
    spread = float(m.max() - m.min())
    return spread <= 1e-12 * max(1.0, float(np.abs(m).max()))


def _kkt_solve(K, m, m_p, ridge=0.0, *, strict=True):
    """
    Solve the bordered system

        [2(K + ridge I)  m  1] [ x  ]   [ 0  ]
        [      m'        0  0] [-l1 ] = [m_p ]
        [      1'        0  0] [-l2 ]   [ 1  ]

    so that 2(K + ridge I) x = l1 m + l2 1. When every mean in ``m`` is equal the
    return row is dropped (l1 = 0); the caller is responsible for consistency.
    With ``strict`` a rank-deficient system raises SingularSystem, otherwise a
    minimum-norm least-squares solution is used.
    """
    n = len(m)
    H = 2.0 * (K + ridge * np.eye(n))
    ones = np.ones(n)
    if n > 1 and _means_degenerate(m):
        cons = ones[None, :]
        rhs_c = np.array([1.0])
    else:
        cons = np.vstack([m, ones])
        rhs_c = np.array([m_p, 1.0])
    k = cons.shape[0]
    A = np.zeros((n + k, n + k))
    A[:n, :n] = H
    A[:n, n:] = cons.T
    A[n:, :n] = cons
    b = np.concatenate([np.zeros(n), rhs_c])

    sv = np.linalg.svd(A, compute_uv=False)
    singular = sv[-1] <= 1e-13 * sv[0] * (n + k)
    if singular:
        if strict:
            raise SingularSystem(
                f"bordered {n + k}x{n + k} system is rank-deficient "
                f"(condition ~ {sv[0] / max(sv[-1], 1e-300):.3g}); "
                "consider a positive regularization"
            )
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
    else:
        lu = scipy.linalg.lu_factor(A)
        sol = scipy.linalg.lu_solve(lu, b)
        # one step of iterative refinement keeps constraint residuals at rounding level
        sol += scipy.linalg.lu_solve(lu, b - A @ sol)
    x = sol[:n]
    mu = -sol[n:]
    lam = (float(mu[0]), float(mu[1])) if k == 2 else (0.0, float(mu[0]))
    return x, lam


def _solution(stats, x, m_p, lam, active=()) -> PortfolioSolution:
    K = stats.covariance
    return PortfolioSolution(
        securities=stats.securities,
        weights=x,
        variance=float(x @ K @ x),
        target_return=float(m_p),
        multipliers=lam,
        active_bounds=frozenset(active),
    )


def solve_equality_qp(problem: PortfolioProblem) -> PortfolioSolution:
    """Minimum-variance weights under the return and budget constraints only (shorting allowed)."""
    stats = problem.stats
    m = np.asarray(stats.means, dtype=float)
    if m.size < 2 or _means_degenerate(m):
        raise DegenerateInterval("all mean returns equal; the return constraint is degenerate")
    x, lam = _kkt_solve(stats.covariance, m, problem.target_return, problem.regularization)
    return _solution(stats, x, problem.target_return, lam)


def _bound_multipliers(K, m, x, lam, ridge, idx):
    grad = 2.0 * ((K + ridge * np.eye(len(m))) @ x)
    return grad[idx] - lam[0] * m[idx] - lam[1]


def solve_long_only(problem: PortfolioProblem, max_iter: int | None = None) -> PortfolioSolution:
    """
    Minimum-variance weights with ``x >= 0``.

    If the unconstrained optimum is already nonnegative it is returned as is.
    Otherwise a primal active-set iteration runs from a feasible two-asset
    vertex: each step solves the equality problem on the free set, walks toward
    it until a weight hits zero (that bound becomes active, lowest index on
    ties), and once stationary releases the bound with the most negative
    multiplier. It stops when every bound multiplier is >= -1e-9.
    """
    stats = problem.stats
    K = np.asarray(stats.covariance, dtype=float)
    m = np.asarray(stats.means, dtype=float)
    m_p = float(problem.target_return)
    ridge = problem.regularization
    n = m.size
    if n < 2 or _means_degenerate(m):
        raise DegenerateInterval("all mean returns equal; the return constraint is degenerate")
    tol = 1e-9 * max(1.0, abs(m_p))
    lo, hi = float(m.min()), float(m.max())
    if m_p < lo - tol or m_p > hi + tol:
        raise Infeasible(f"target return {m_p} outside the long-only range [{lo}, {hi}]")

    try:
        direct = solve_equality_qp(problem)
    except SingularSystem:
        direct = None
    if direct is not None and direct.weights.min() >= -NEG_TOL:
        return direct

    # feasible start: mix of the lowest- and highest-return securities
    i_lo, i_hi = int(np.argmin(m)), int(np.argmax(m))
    x = np.zeros(n)
    w_hi = min(max((m_p - lo) / (hi - lo), 0.0), 1.0)
    x[i_hi] = w_hi
    x[i_lo] = 1.0 - w_hi
    working = set(range(n)) - {i_lo, i_hi}

    scale = max(1.0, float(np.abs(K).max()), float(np.abs(m).max()))
    max_iter = max_iter if max_iter is not None else 50 * n + 50
    for _ in range(max_iter):
        free = [i for i in range(n) if i not in working]
        x_free, lam = _kkt_solve(K[np.ix_(free, free)], m[free], m_p, ridge, strict=False)
        step = np.zeros(n)
        step[free] = x_free - x[free]
        if np.max(np.abs(step)) <= 1e-12:
            fixed = sorted(working)
            if not fixed:
                break
            mult = _bound_multipliers(K, m, x, lam, ridge, fixed)
            worst = int(np.argmin(mult))
            if mult[worst] >= -MULT_TOL * scale:
                break
            working.discard(fixed[worst])
            continue
        alpha, blocking = 1.0, None
        for i in free:
            if step[i] < 0:
                ratio = -x[i] / step[i]
                if ratio < alpha:
                    alpha, blocking = ratio, i
        x = x + alpha * step
        if blocking is not None:
            working.add(blocking)
            x[blocking] = 0.0
    else:
        raise NoConvergence(f"active-set iteration did not settle in {max_iter} steps")

    x[sorted(working)] = 0.0
    x = np.where(x < 0.0, 0.0, x)
    free = [i for i in range(n) if i not in working]
    _, lam = _kkt_solve(K[np.ix_(free, free)], m[free], m_p, ridge, strict=False)
    return _solution(stats, x, m_p, lam, active=working)


def solve(problem: PortfolioProblem) -> PortfolioSolution:
    return solve_long_only(problem) if problem.long_only else solve_equality_qp(problem)


def solve_trajectory(
    stages: Sequence[tuple[str, AssetStats]],
    rho: float,
    long_only: bool = True,
    regularization: float = 0.0,
    max_workers: int | None = None,
) -> list[tuple[str, PortfolioSolution]]:
    """
    One ideal-portfolio solve per stage, with the target return recomputed from
    each stage's own mean interval. Errors carry the failing stage label in
    ``err.stage``. ``max_workers`` > 1 solves stages in a thread pool; the
    output order and values are the same as the sequential run.
    """

    def one(item):
        label, stats = item
        try:
            m_p = target_return(stats, rho)
            return label, solve(PortfolioProblem(stats, m_p, long_only, regularization))
        except ConcordError as err:
            err.stage = label
            raise

    items = list(stages)
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, items))
    return [one(item) for item in items]


def pareto_frontier(points: Iterable[Sequence[float]], ids: Sequence | None = None) -> list[FrontierPoint]:
    """
    Classify (mean, risk) points under "higher mean, lower risk".

    Returns every point: the non-dominated ones first, sorted by risk ascending
    (higher mean first on ties), followed by the dominated ones in input order.
    """
    pts = [(float(mu), float(r)) for mu, r in points]
    if ids is None:
        ids = list(range(1, len(pts) + 1))
    if len(ids) != len(pts):
        raise ValueError("ids and points differ in length")
    arr = np.array(pts, dtype=float).reshape(-1, 2)
    means, risks = arr[:, 0], arr[:, 1]
    dominated = np.zeros(len(pts), dtype=bool)
    order = np.lexsort((-means, risks))
    # sweep by increasing risk: a point is dominated by a strictly less risky point
    # with at least its mean, or by an equally risky point with a higher mean
    best_mean = -np.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and risks[order[j]] == risks[order[i]]:
            j += 1
        group = order[i:j]
        group_best = means[group].max()
        for k in group:
            dominated[k] = best_mean >= means[k] or means[k] < group_best
        best_mean = max(best_mean, group_best)
        i = j
    out_front = [
        FrontierPoint(ids[k], means[k], risks[k], False) for k in order if not dominated[k]
    ]
    out_dom = [FrontierPoint(ids[k], means[k], risks[k], True) for k in range(len(pts)) if dominated[k]]
    return out_front + out_dom


def stats_frontier(stats: AssetStats) -> list[FrontierPoint]:
    return pareto_frontier(zip(stats.means, stats.risks), ids=list(stats.securities))


@dataclass(frozen=True)
class ScreeningStep:
    pool: tuple[str, ...]
    weights: np.ndarray
    dropped: tuple[str, ...]


def screen_pool(
    stats: AssetStats,
    rho: float,
    epsilon: float = 0.01,
    max_iter: int = 10,
    long_only: bool = True,
    regularization: float = 0.0,
) -> tuple[AssetStats, list[ScreeningStep]]:
    """
    Iteratively drop securities whose weight magnitude is below ``epsilon`` and re-solve.

    The target return is fixed from the initial pool and held through the
    iterations. Never shrinks the pool below two securities.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if len(stats.securities) < 2:
        raise ValueError("need at least two securities")
    m_p = target_return(stats, rho)
    pool = stats
    log: list[ScreeningStep] = []
    for _ in range(max_iter):
        sol = solve(PortfolioProblem(pool, m_p, long_only, regularization))
        w = sol.weights
        keep = [i for i in range(len(w)) if abs(w[i]) >= epsilon]
        if len(keep) < 2:
            keep = sorted(np.argsort(-np.abs(w), kind="stable")[:2].tolist())
        dropped = tuple(pool.securities[i] for i in range(len(w)) if i not in keep)
        log.append(ScreeningStep(pool.securities, w, dropped))
        if not dropped:
            break
        pool = pool.subset(keep)
        if len(pool.securities) <= 2:
            break
    return pool, log


def trajectory_json(trajectory: Sequence[tuple[str, PortfolioSolution]]) -> str:
    return json.dumps([sol.to_record(stage) for stage, sol in trajectory], indent=2)
