#!/usr/bin/env python3
"""
Recompute the published regression, expert and concordance figures from the
transcribed tables in data/published/ and print them next to the published values.

    python3 scripts/reproduce_tables.py
"""

from pathlib import Path

import numpy as np

from concord.concordance import build_report
from concord.expert import build_pcm, parse_questionnaire, weights_lewis, weights_multiplication, weights_summation
from concord.regression import market_weights, normalize_factors, ols_fit, read_factors_csv, read_response_csv

DATA = Path(__file__).resolve().parents[1] / "data" / "published"


def fmt(v):
    return "(" + ", ".join(f"{x:+.3f}" for x in v) + ")"


def main():
    with open(DATA / "table1_factors.csv", "rb") as fh:
        stages, names, raw = read_factors_csv(fh)
    with open(DATA / "table1_response.csv", "rb") as fh:
        _, y = read_response_csv(fh)
    fit = ols_fit(normalize_factors(raw, y, stages, names))
    print("regression coefficients", fmt(fit.coefficients))
    print("  published             ", fmt([-0.075, -0.006, 0.262, 0.216, 0.029, 0.179]))
    print(f"R^2 {fit.r_squared:.4f} (published 0.87)")
    print("two-sided p-values     ", fmt(fit.p_values))
    w = market_weights(fit)
    print("market weights         ", fmt(w))

    with open(DATA / "table2_discrete.csv", "rb") as fh:
        disc = build_pcm(parse_questionnaire(fh, "discrete"))
    with open(DATA / "table4_continuous.csv", "rb") as fh:
        cont = build_pcm(parse_questionnaire(fh, "continuous"))
    print("discrete PCM\n", disc.entries)
    for label, vec in [
        ("discrete summation     ", weights_summation(disc)),
        ("continuous summation   ", weights_summation(cont)),
        ("continuous mult.       ", weights_multiplication(cont)),
        ("continuous Lewis       ", weights_lewis(cont)),
    ]:
        print(label, fmt(vec.weights))

    u = np.array([-0.008, 0.384, 0.317, 0.043, 0.263])
    v = np.array([0.253, 0.138, 0.287, 0.178, 0.144])
    print(build_report(u, v).summary())


if __name__ == "__main__":
    main()
