"""
Acceptance gate. Each test prints one PASS/FAIL line; run with

    pytest tests/test_acceptance.py -v

The lines are written with capture disabled so they show without ``-s``.
"""

import itertools
from fractions import Fraction

import numpy as np
import pytest

from concord.concordance import build_report, correlation_test, rmsd
from concord.config import load_config
from concord.expert import (
    PairedComparisonMatrix,
    QuestionnaireResponse,
    build_pcm,
    weights_lewis,
    weights_multiplication,
    weights_summation,
)
from concord.market_data import AssetStats, detrend
from concord.pipeline import run_pipeline
from concord.portfolio import (
    PortfolioProblem,
    pareto_frontier,
    solve_equality_qp,
    solve_long_only,
    stats_frontier,
    target_return,
)
from concord.regression import market_weights, normalize_factors, ols_fit
from oracles import enumerate_long_only, grid_min_variance_3, pareto_brute, random_psd
from published_tables import (
    PUBLISHED_COEFS,
    SYNTHETIC,
    TABLE1_X,
    TABLE1_Y,
    TABLE2_ANSWERS,
    TABLE3,
    TABLE4,
    TABLE5_EXPERT,
    TABLE5_MARKET,
)

PAIRS = list(itertools.combinations(range(1, 6), 2))
JSON_ARTIFACTS = ["stats.json", "trajectory.json", "regression.json", "expert.json",
                  "concordance.json", "manifest.json"]


@pytest.fixture
def gate(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def check(label, ok, detail=""):
        with capman.global_and_fixture_disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}" + (f"  ({detail})" if detail else ""))
        assert ok, f"{label}: {detail}"

    return check


def table1_fit():
    return ols_fit(normalize_factors(TABLE1_X, TABLE1_Y))


def stats_of(means, K):
    return AssetStats(tuple(f"S{i + 1}" for i in range(len(means))), np.asarray(means, float), np.asarray(K, float))


def random_instance(rng, n):
    s = stats_of(rng.normal(size=n) * 0.1, random_psd(rng, n))
    return s, target_return(s, rng.uniform(0.05, 0.95))


def test_c01_regression_reproduction(gate):
    fit = table1_fit()
    err = np.abs(fit.coefficients - PUBLISHED_COEFS).max()
    gate("1 regression coefficients and R^2 on Table 1",
         err <= 0.002 and abs(fit.r_squared - 0.87) <= 0.01,
         f"max coef err {err:.4f}, R^2 {fit.r_squared:.4f}")


def test_c02a_f1_f4_insignificant(gate):
    fit = table1_fit()
    p = dict(zip(["c0", *fit.factor_names], fit.p_values))
    gate("2a f1 and f4 insignificant at alpha 0.05",
         not fit.significant[1] and not fit.significant[4],
         f"p(f1) {p['f1']:.3f}, p(f4) {p['f4']:.3f}")


def test_c02b_f2_or_f3_significant(gate):
    fit = table1_fit()
    p = dict(zip(["c0", *fit.factor_names], fit.p_values))
    gate("2b at least one of f2, f3 significant at alpha 0.05",
         bool(fit.significant[2] or fit.significant[3]),
         f"two-sided p(f2) {p['f2']:.4f}, p(f3) {p['f3']:.4f}")


def test_c03_market_weights(gate):
    # normalizing the published rounded slopes and the refitted slopes
    published = market_weights(PUBLISHED_COEFS[1:])
    refit = market_weights(table1_fit())
    err = max(np.abs(published - TABLE5_MARKET).max(), np.abs(refit - TABLE5_MARKET).max())
    gate("3 normalized slopes reproduce the unprejudiced row", err <= 0.002, f"max err {err:.4f}")


def test_c04_concordance_metrics(gate):
    r, t, p = correlation_test(TABLE5_MARKET, TABLE5_EXPERT)
    rep = build_report(TABLE5_MARKET, TABLE5_EXPERT)
    ok = (abs(r + 0.27) <= 0.01 and abs(t - 0.48) <= 0.02 and abs(p - 0.34) <= 0.02
          and abs(rep.sigma_f - 0.201) <= 0.001
          and abs(rep.mean_u - 0.2) <= 0.001 and abs(rep.mean_v - 0.2) <= 0.001)
    gate("4 concordance metrics on Table 5", ok,
         f"r {r:.4f}, t {t:.4f}, P {p:.4f}, sigma {rep.sigma_f:.4f}, means {rep.mean_u:.4f}/{rep.mean_v:.4f}")


def test_c05_pcm_construction(gate):
    resp = QuestionnaireResponse("E1", "discrete", tuple((i, j, v) for (i, j), v in zip(PAIRS, TABLE2_ANSWERS)))
    a = build_pcm(resp).entries
    exact = np.array_equal(a, TABLE3)
    comp3 = all(Fraction(TABLE3[i, j]) + Fraction(TABLE3[j, i]) == 2 for i in range(5) for j in range(5))
    comp4 = all(Fraction(str(TABLE4[i, j])) + Fraction(str(TABLE4[j, i])) == 1 for i in range(5) for j in range(5))
    gate("5 Table 2 -> Table 3 exactly, complements exact on Tables 3 and 4",
         exact and comp3 and comp4, f"match {exact}, discrete {comp3}, continuous {comp4}")


def test_c06_summation_weights(gate):
    rational = [Fraction(int(r.sum()), int(TABLE3.sum())) for r in TABLE3]
    want3 = [Fraction(36, 100), Fraction(12, 100), Fraction(20, 100), Fraction(28, 100), Fraction(4, 100)]
    w3 = weights_summation(PairedComparisonMatrix("discrete", TABLE3)).weights
    w4 = weights_summation(PairedComparisonMatrix("continuous", TABLE4)).weights
    err4 = np.abs(w4 - [0.18, 0.084, 0.26, 0.208, 0.268]).max()
    ok = rational == want3 and list(w3) == [float(f) for f in want3] and err4 <= 1e-12
    gate("6 summation weights on Tables 3 and 4", ok, f"Table 4 max err {err4:.2e}")


def test_c07a_constraint_residuals(gate, rng):
    worst = 0.0
    negative = 0.0
    for _ in range(500):
        stats, m_p = random_instance(rng, int(rng.integers(2, 11)))
        for sol in (solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False)),
                    solve_long_only(PortfolioProblem(stats, m_p))):
            worst = max(worst, abs(sol.weights.sum() - 1), abs(stats.means @ sol.weights - m_p))
        negative = min(negative, sol.weights.min())
    gate("7a constraint residuals on 500 random PSD instances", worst <= 1e-9 and negative >= 0,
         f"max residual {worst:.2e}, min long-only weight {negative:.1e}")


def test_c07b_grid_oracle(gate, rng):
    worst = -np.inf
    for _ in range(100):
        stats, m_p = random_instance(rng, 3)
        sol = solve_equality_qp(PortfolioProblem(stats, m_p, long_only=False))
        worst = max(worst, sol.variance - grid_min_variance_3(stats.covariance, stats.means, m_p))
    gate("7b 3-asset grid oracle never beats the solver by more than 1e-4", worst <= 1e-4,
         f"max solver excess {worst:.2e}")


def test_c07c_enumeration(gate, rng):
    worst = 0.0
    for _ in range(300):
        stats, m_p = random_instance(rng, int(rng.integers(2, 7)))
        ref = enumerate_long_only(stats.covariance, stats.means, m_p)
        got = solve_long_only(PortfolioProblem(stats, m_p)).weights
        worst = max(worst, np.abs(got - ref).max())
    gate("7c long-only active set matches enumeration for n <= 6", worst <= 1e-7, f"max diff {worst:.2e}")


def test_c07d_covariance_scaling(gate, rng):
    worst = 0.0
    for _ in range(100):
        stats, m_p = random_instance(rng, int(rng.integers(2, 11)))
        c = float(10 ** rng.uniform(-3, 3))
        scaled = stats_of(stats.means, c * stats.covariance)
        for long_only in (False, True):
            solver = solve_long_only if long_only else solve_equality_qp
            a = solver(PortfolioProblem(stats, m_p, long_only=long_only)).weights
            b = solver(PortfolioProblem(scaled, m_p, long_only=long_only)).weights
            worst = max(worst, np.abs(a - b).max())
    gate("7d K -> cK leaves weights unchanged", worst <= 1e-9, f"max diff {worst:.2e}")


def test_c08_pareto(gate, rng):
    mismatches = 0
    for k in range(1000):
        n = int(rng.integers(1, 30))
        if k % 2:
            pts = [tuple(p) for p in rng.integers(0, 6, size=(n, 2)).astype(float)]
        else:
            pts = [(m, abs(r)) for m, r in rng.normal(size=(n, 2))]
        got = [p.dominated for p in sorted(pareto_frontier(pts), key=lambda p: p.security_id)]
        mismatches += got != pareto_brute(pts)
    # security 1 has high mean and high risk; 9 beats it on both
    mean = [0.30, 0.05, 0.12, 0.04, 0.10, 0.00, 0.20, 0.08, 0.31, 0.33]
    risk = [0.50, 0.05, 0.10, 0.15, 0.25, 0.30, 0.40, 0.12, 0.20, 0.35]
    stats = AssetStats(tuple(str(i + 1) for i in range(10)), np.array(mean), np.diag(np.square(risk)))
    front = {p.security_id for p in stats_frontier(stats) if not p.dominated}
    gate("8 Pareto frontier vs brute force and the reference layout",
         mismatches == 0 and "1" not in front and front == {"2", "3", "9", "10"},
         f"{mismatches} mismatches, frontier {sorted(front, key=int)}")


def test_c09_consistent_pcm(gate, rng):
    worst = 0.0
    rank_ok = True
    for _ in range(200):
        v = rng.uniform(0.05, 1.0, size=5)
        pcm = PairedComparisonMatrix("continuous", v[:, None] / (v[:, None] + v[None, :]))
        lw = weights_lewis(pcm).weights
        worst = max(worst, np.abs(lw - v / v.sum()).max())
        order = np.argsort(-v)
        for method in (weights_summation, weights_multiplication, weights_lewis):
            rank_ok &= bool(np.array_equal(np.argsort(-method(pcm).weights), order))
    gate("9 Lewis recovers hidden weights, all methods agree on ranking",
         worst <= 1e-9 and rank_ok, f"max err {worst:.2e}, rankings agree {rank_ok}")


def test_c10_detrending(gate, rng):
    worst = 0.0
    for _ in range(500):
        S = int(rng.integers(3, 60))
        y = rng.normal(size=S) * rng.uniform(0.01, 100) + rng.uniform(-50, 50) * np.arange(S)
        e = detrend(y)
        t = np.arange(1, S + 1)
        worst = max(worst, abs(e.mean()), abs(np.mean((t - t.mean()) * e)))
    # lines with exactly representable coefficients
    exact = all(
        not np.any(detrend(a + b * np.arange(1, S + 1)))
        for S in range(3, 40) for a, b in [(0.0, 1.0), (2.5, -0.125), (-7.0, 3.0), (1e3, 0.5)]
    )
    gate("10 detrend residuals orthogonal to 1 and t; exact lines give zero",
         worst <= 1e-9 and exact, f"max moment {worst:.2e}, exact lines zero {exact}")


def test_c11_pipeline_determinism(gate, tmp_path):
    cfg = load_config(SYNTHETIC / "config.json")
    run_pipeline(cfg, tmp_path / "a")
    run_pipeline(cfg, tmp_path / "b")
    differ = [n for n in JSON_ARTIFACTS if (tmp_path / "a" / n).read_bytes() != (tmp_path / "b" / n).read_bytes()]
    gate("11 two pipeline runs give byte-identical JSON", not differ, f"differing: {differ or 'none'}")
