#!/usr/bin/env python3
"""
Generate the bundled synthetic end-to-end fixture in data/synthetic/.

21 quarters (2006Q4..2011Q4) of monthly sessions for ten securities, company
factor reports for the 12 retained quarters, and ten experts' questionnaires
on both scales. Security S01 plays the studied company: high mean, high risk
early on, steadier and better later, so its ideal-portfolio share grows in
the final stages.

    python scripts/make_synthetic_fixture.py [--out data/synthetic] [--seed 7]
"""

from __future__ import annotations

import argparse
import datetime as dt
import itertools
import json
from pathlib import Path

import numpy as np

from concord.config import PipelineConfig
from concord.pipeline import ingest
from concord.portfolio import solve_trajectory

N_SEC = 10
FIRST = (2006, 4)
N_QUARTERS = 21
HIDDEN_EXPERT_WEIGHTS = np.array([0.253, 0.138, 0.287, 0.178, 0.144])


def quarters():
    y, q = FIRST
    for _ in range(N_QUARTERS):
        yield y, q
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)


def make_quotes(rng) -> str:
    ids = [f"S{i + 1:02d}" for i in range(N_SEC)]
    nominal = rng.choice([1.0, 5.0, 10.0, 100.0], size=N_SEC)
    base = rng.uniform(5.0, 40.0, size=N_SEC)
    base[0] = 45.0
    slope = rng.uniform(-0.5, 1.0, size=N_SEC)
    slope[0] = 1.5
    vol = rng.uniform(2.0, 8.0, size=N_SEC)
    lines = ["security_id,session_date,price,nominal"]
    for t, (y, q) in enumerate(quarters()):
        crisis = 4 <= t <= 8
        for i in range(N_SEC):
            sigma = vol[i] * (3.0 if crisis else 1.0)
            if i == 0:
                sigma *= max(0.3, 2.0 - t / 10.0)
            level = base[i] + slope[i] * t + rng.normal(0.0, sigma) - (25.0 if crisis else 0.0)
            for month in range(3):
                profit = level + rng.normal(0.0, 1.0)
                price = max(nominal[i] * (1.0 + profit / 100.0), 0.01 * nominal[i])
                date = dt.date(y, 3 * (q - 1) + month + 1, 5)
                lines.append(f"{ids[i]},{date.isoformat()},{price:.4f},{nominal[i]:g}")
    return "\n".join(lines) + "\n"


def make_factors(rng, stages, response) -> str:
    x = np.asarray(response)
    lookup = dict(zip(stages, x))
    fill = float(np.mean(x))
    scales = [5.0e9, 8.0e8, 2.0e9, 0.15, 3.0e5]
    loads = [0.1, 1.0, 0.8, 0.2, 0.6]
    lines = ["stage,f1,f2,f3,f4,f5"]
    for k, stage in enumerate(stages_all):
        xi = lookup.get(stage, fill)
        row = [
            scales[j] * (1.0 + loads[j] * xi + rng.normal(0.0, 0.15) + 0.02 * k)
            for j in range(5)
        ]
        lines.append(stage + "," + ",".join(f"{v:.6g}" for v in row))
    return "\n".join(lines) + "\n"


def make_questionnaires(rng) -> str:
    lines = ["expert_id,scale,row_factor,col_factor,value"]
    for e in range(10):
        v = np.clip(HIDDEN_EXPERT_WEIGHTS * rng.lognormal(0.0, 0.25, size=5), 0.01, None)
        cont, disc = [], []
        for i, j in itertools.combinations(range(5), 2):
            share = v[i] / (v[i] + v[j]) + rng.normal(0.0, 0.05)
            share = float(np.clip(np.round(share * 20) / 20, 0.05, 0.95))
            cont.append((i + 1, j + 1, f"{share:g}"))
            answer = "yes" if share > 0.5 else "no" if share < 0.5 else "equal"
            disc.append((i + 1, j + 1, answer))
        who = f"E{e + 1:02d}"
        lines += [f"{who},discrete,{i},{j},{a}" for i, j, a in disc]
        lines += [f"{who},continuous,{i},{j},{a}" for i, j, a in cont]
    return "\n".join(lines) + "\n"


def main():
    global stages_all
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "synthetic"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    (out / "quotes.csv").write_text(make_quotes(rng), encoding="utf-8")
    cfg = PipelineConfig(quotes=str(out / "quotes.csv"))
    res = ingest(cfg)
    traj = solve_trajectory(res.stage_stats, cfg.rho, cfg.long_only)
    stages = [s for s, _ in traj]
    x1 = [sol.weight_of("S01") for _, sol in traj]
    stages_all = list(res.window.stages)
    (out / "factors.csv").write_text(make_factors(rng, stages, x1), encoding="utf-8")
    (out / "questionnaires.csv").write_text(make_questionnaires(rng), encoding="utf-8")
    (out / "config.json").write_text(json.dumps({
        "quotes": "quotes.csv",
        "factors": "factors.csv",
        "questionnaires": "questionnaires.csv",
        "target_security": "S01",
        "drop_prefix": 9,
        "rho": 0.75,
        "long_only": True,
        "min_window": 4,
        "epsilon": 0.01,
        "alpha": 0.05,
        "r_min": 0.5,
        "s_max": 0.1,
    }, indent=2) + "\n", encoding="utf-8")
    print("S01 share by stage:", ", ".join(f"{s}={x:.3f}" for s, x in zip(stages, x1)))


if __name__ == "__main__":
    main()
