"""Command-line entry point: ``concord <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .concordance import Thresholds
from .config import load_config
from .errors import ConcordError
from .market_data import read_stats_csv
from .pipeline import (
    PipelineFailure,
    _Writer,
    compare_files,
    expert_panel,
    ingest,
    regress,
    regression_record,
    run_pipeline,
    write_ingest,
    write_trajectory,
)
from .portfolio import PortfolioProblem, solve, solve_trajectory, target_return
from .regression import read_response_csv

FLAG_KEYS = ("long_only", "rho", "drop_prefix", "epsilon", "alpha", "out")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--long-only", dest="long_only", action=argparse.BooleanOptionalAction, default=None,
                   help="forbid short positions (default on)")
    p.add_argument("--rho", type=float, help="target return position in the mean interval (default 0.75)")
    p.add_argument("--drop-prefix", dest="drop_prefix", type=int, help="leading quarters to drop (default 9)")
    p.add_argument("--epsilon", type=float, help="pool screening weight threshold (default 0.01)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="concord", description=__doc__)
    parser.add_argument("--version", action="version", version=f"concord {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="quotes CSV -> return panel and pool statistics")
    p.add_argument("--quotes")

    p = sub.add_parser("portfolio", parents=[common], help="ideal-portfolio trajectory or a single solve")
    p.add_argument("--quotes")
    p.add_argument("--stats", help="stats CSV for a single solve instead of a quotes-driven trajectory")

    p = sub.add_parser("regress", parents=[common], help="factor regression and market weights")
    p.add_argument("--factors")
    p.add_argument("--response", help="stage,x1 CSV (default: derive from quotes)")
    p.add_argument("--quotes")

    p = sub.add_parser("expert", parents=[common], help="expert questionnaire panel weights")
    p.add_argument("--questionnaires")

    p = sub.add_parser("compare", parents=[common], help="concordance of two weights CSVs")
    p.add_argument("weights_a")
    p.add_argument("weights_b")
    p.add_argument("--r-min", dest="r_min", type=float)
    p.add_argument("--s-max", dest="s_max", type=float)

    p = sub.add_parser("pipeline", parents=[common], help="run everything end to end")
    for key in ("quotes", "factors", "questionnaires", "response"):
        p.add_argument(f"--{key}")
    return parser


def _config(args):
    overrides = {k: getattr(args, k, None) for k in FLAG_KEYS}
    for key in ("quotes", "factors", "questionnaires", "response", "r_min", "s_max"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return load_config(args.config, overrides=overrides)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_ingest(args) -> int:
    cfg = _config(args)
    res = ingest(cfg)
    write_ingest(_Writer(Path(cfg.out)), res)
    print(f"{res.panel.n_stages} quarters, {res.window.n_stages} retained, "
          f"{len(res.stage_stats)} expanding-window stages -> {cfg.out}")
    return 0


def cmd_portfolio(args) -> int:
    cfg = _config(args)
    if args.stats:
        with open(args.stats, "rb") as fh:
            stats = read_stats_csv(fh)
        sol = solve(PortfolioProblem(stats, target_return(stats, cfg.rho), cfg.long_only, cfg.regularization))
        _print_json([sol.to_record(None)])
        return 0
    res = ingest(cfg)
    trajectory = solve_trajectory(res.stage_stats, cfg.rho, cfg.long_only, cfg.regularization)
    write_trajectory(_Writer(Path(cfg.out)), trajectory)
    _print_json([sol.to_record(stage) for stage, sol in trajectory])
    return 0


def cmd_regress(args) -> int:
    cfg = _config(args)
    if cfg.factors is None:
        raise ValueError("--factors (or config key 'factors') is required")
    if cfg.response is not None:
        with open(cfg.response, "rb") as fh:
            stages, y = read_response_csv(fh)
        mode = "file"
    else:
        res = ingest(cfg)
        trajectory = solve_trajectory(res.stage_stats, cfg.rho, cfg.long_only, cfg.regularization)
        target = cfg.target_security or res.window.securities[0]
        stages = [s for s, _ in trajectory]
        y = np.array([sol.weight_of(target) for _, sol in trajectory])
        mode = "long_only" if cfg.long_only else "equality"
    panel, fit, weights = regress(cfg, stages, y)
    record = regression_record(panel, fit, weights, mode)
    _Writer(Path(cfg.out)).json("regression.json", record)
    _print_json(record)
    return 0


def cmd_expert(args) -> int:
    cfg = _config(args)
    if cfg.questionnaires is None:
        raise ValueError("--questionnaires (or config key 'questionnaires') is required")
    panel = expert_panel(cfg)
    _Writer(Path(cfg.out)).json("expert.json", panel.to_dict())
    _print_json(panel.to_dict())
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    report = compare_files(args.weights_a, args.weights_b, Thresholds(cfg.r_min, cfg.s_max))
    print(report.summary())
    if args.out:
        _Writer(Path(args.out)).json("concordance.json", report.to_dict())
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    art = run_pipeline(cfg)
    print(art.report.summary())
    print(f"artifacts -> {cfg.out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "portfolio": cmd_portfolio,
    "regress": cmd_regress,
    "expert": cmd_expert,
    "compare": cmd_compare,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except PipelineFailure as err:
        print(json.dumps(err.to_dict()), file=sys.stderr)
        return 2
    except (ConcordError, ValueError, FileNotFoundError) as err:
        print(json.dumps({"stage": args.command, "error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
