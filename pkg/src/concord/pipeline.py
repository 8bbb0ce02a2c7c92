"""
End-to-end run: exchange data -> ideal-portfolio shares -> regression weights,
questionnaires -> expert weights, then the concordance of the two.

Every stage writes its artifacts as soon as it finishes. A failed run leaves
what it produced plus a ``.partial`` marker describing the failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .concordance import ConcordanceReport, Thresholds, build_report, read_weights_csv
from .config import PipelineConfig
from .errors import ConcordError, FactorMismatch
from .expert import PanelResult, parse_questionnaires, process_panel
from .market_data import (
    AssetStats,
    ReturnPanel,
    compute_stats,
    expanding_stats,
    parse_quotes,
    quarterly_returns,
    select_window,
)
from .portfolio import (
    PortfolioSolution,
    ScreeningStep,
    screen_pool,
    solve_trajectory,
    stats_frontier,
)
from .regression import (
    FactorPanel,
    RegressionFit,
    align_response,
    market_weights,
    normalize_factors,
    ols_fit,
    rank_factors,
    read_factors_csv,
    read_response_csv,
)

log = logging.getLogger(__name__)

PARTIAL_MARKER = ".partial"


class PipelineFailure(ConcordError):
    """A pipeline stage failed; ``cause`` is the original exception."""

    def __init__(self, step: str, cause: BaseException):
        self.step = step
        self.cause = cause
        super().__init__(f"{step} failed: {type(cause).__name__}: {cause}")

    def to_dict(self) -> dict:
        return {"stage": self.step, "error": type(self.cause).__name__, "message": str(self.cause)}


@dataclass
class IngestResult:
    panel: ReturnPanel
    window: ReturnPanel
    window_stats: AssetStats
    stage_stats: list[tuple[str, AssetStats]]


@dataclass
class RunArtifacts:
    ingest: IngestResult
    trajectory: list[tuple[str, PortfolioSolution]]
    factor_panel: FactorPanel
    fit: RegressionFit
    market_weights: np.ndarray
    expert: PanelResult
    report: ConcordanceReport
    manifest: dict
    screening: list[ScreeningStep] = field(default_factory=list)
    files: list[str] = field(default_factory=list)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt6(x) -> str:
    """Six-significant-digit CSV serialization."""
    return f"{float(x):.6g}"


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


class _Writer:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.files: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> None:
        (self.out / name).write_text(_dump_json(obj), encoding="utf-8")
        self.files.append(name)

    def text(self, name: str, text: str) -> None:
        (self.out / name).write_text(text, encoding="utf-8")
        self.files.append(name)

    def csv(self, name: str, header: Sequence[str], rows) -> None:
        with open(self.out / name, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt6(c) if isinstance(c, (float, np.floating)) else c for c in row])
        self.files.append(name)


def stats_record(stats: AssetStats, stage=None) -> dict:
    return {
        "stage": stage,
        "window": list(stats.window),
        "securities": list(stats.securities),
        "means": [float(v) for v in stats.means],
        "covariance": [[float(v) for v in row] for row in stats.covariance],
    }


def ingest(cfg: PipelineConfig) -> IngestResult:
    if cfg.quotes is None:
        raise ValueError("config key 'quotes' is required")
    path = Path(cfg.quotes)
    if not path.is_file():
        raise FileNotFoundError(f"quotes: no such file: {path}")
    with open(path, "rb") as fh:
        try:
            sessions = parse_quotes(fh)
        except ConcordError as err:
            err.args = (f"{path}: {err.args[0]}",) + err.args[1:]
            raise
    panel = quarterly_returns(sessions, cfg.fiscal_offset)
    window = select_window(panel, cfg.drop_prefix)
    log.info("ingested %d sessions, %d quarters, %d retained", len(sessions), panel.n_stages, window.n_stages)
    return IngestResult(
        panel=panel,
        window=window,
        window_stats=compute_stats(window),
        stage_stats=expanding_stats(window, cfg.min_window),
    )


def write_ingest(w: _Writer, res: IngestResult) -> None:
    w.json("stats.json", {
        "stages": list(res.window.stages),
        "window": stats_record(res.window_stats),
        "expanding": [stats_record(s, label) for label, s in res.stage_stats],
    })
    retained = set(res.window.stages)
    w.csv(
        "returns_dynamics.csv",
        ["stage", "retained", *res.panel.securities],
        ([st, int(st in retained), *map(float, row)] for st, row in zip(res.panel.stages, res.panel.returns)),
    )
    w.csv(
        "mean_risk.csv",
        ["security_id", "mean", "risk", "dominated"],
        ([p.security_id, p.mean, p.risk, int(p.dominated)] for p in
         sorted(stats_frontier(res.window_stats), key=lambda p: res.window_stats.securities.index(p.security_id))),
    )
    w.csv(
        "frontier.csv",
        ["security_id", "mean", "risk"],
        ([p.security_id, p.mean, p.risk] for p in stats_frontier(res.window_stats) if not p.dominated),
    )


def write_trajectory(w: _Writer, trajectory) -> None:
    w.json("trajectory.json", [sol.to_record(stage) for stage, sol in trajectory])
    if trajectory:
        ids = trajectory[0][1].securities
        w.csv(
            "trajectory.csv",
            ["stage", *ids, "variance", "m_p"],
            ([stage, *map(float, sol.weights), sol.variance, sol.target_return] for stage, sol in trajectory),
        )


def regress(cfg: PipelineConfig, response_stages, response) -> tuple[FactorPanel, RegressionFit, np.ndarray]:
    with open(cfg.factors, "rb") as fh:
        f_stages, names, raw = read_factors_csv(fh)
    stages, raw, y = align_response(f_stages, raw, response_stages, response)
    panel = normalize_factors(raw, y, stages, names)
    fit = ols_fit(panel, cfg.alpha)
    return panel, fit, market_weights(fit)


def regression_record(panel: FactorPanel, fit: RegressionFit, weights, response_mode: str) -> dict:
    rec = fit.to_dict(weights)
    rec["stages"] = list(panel.stages)
    rec["response_mode"] = response_mode
    rec["ranking"] = [[name, w] for name, w in rank_factors(weights, panel.factor_names)]
    return rec


def expert_panel(cfg: PipelineConfig) -> PanelResult:
    with open(cfg.questionnaires, "rb") as fh:
        return process_panel(parse_questionnaires(fh))


def _response_from_trajectory(trajectory, target: str | None):
    if not trajectory:
        raise ValueError("empty trajectory; no response values")
    ids = trajectory[0][1].securities
    target = target if target is not None else ids[0]
    if target not in ids:
        raise ValueError(f"target security {target!r} not in the pool {list(ids)}")
    return [s for s, _ in trajectory], np.array([sol.weight_of(target) for _, sol in trajectory])


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> RunArtifacts:
    """
    Run every step and write artifacts into ``out_dir`` (default ``cfg.out``).

    Raises PipelineFailure tagged with the failing step; artifacts written before
    the failure stay in place next to a ``.partial`` marker.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    w = _Writer(out)
    marker = out / PARTIAL_MARKER
    if marker.exists():
        marker.unlink()
    step = "config"
    try:
        cfg.validate(require=("quotes", "factors", "questionnaires"))
        inputs = {
            key: {"path": getattr(cfg, key), "sha256": sha256_file(getattr(cfg, key))}
            for key in ("quotes", "factors", "questionnaires", "response")
            if getattr(cfg, key) is not None
        }

        step = "ingest"
        ing = ingest(cfg)
        write_ingest(w, ing)

        step = "screening"
        screening: list[ScreeningStep] = []
        stage_stats = ing.stage_stats
        if cfg.screen:
            pool, screening = screen_pool(
                ing.window_stats, cfg.rho, cfg.epsilon, cfg.screen_max_iter,
                cfg.long_only, cfg.regularization,
            )
            keep_ids = list(pool.securities)
            target = cfg.target_security or ing.window_stats.securities[0]
            if target not in keep_ids:
                keep_ids.append(target)
            keep = [i for i, s in enumerate(ing.window_stats.securities) if s in keep_ids]
            stage_stats = [(label, s.subset(keep)) for label, s in stage_stats]
            w.json("screening.json", [
                {"pool": list(st.pool), "weights": [float(x) for x in st.weights], "dropped": list(st.dropped)}
                for st in screening
            ])

        step = "portfolio"
        trajectory = solve_trajectory(stage_stats, cfg.rho, cfg.long_only, cfg.regularization)
        write_trajectory(w, trajectory)

        step = "regression"
        if cfg.response is not None:
            with open(cfg.response, "rb") as fh:
                r_stages, r_values = read_response_csv(fh)
            response_mode = "file"
        else:
            r_stages, r_values = _response_from_trajectory(trajectory, cfg.target_security)
            response_mode = "long_only" if cfg.long_only else "equality"
        f_panel, fit, m_weights = regress(cfg, r_stages, r_values)
        w.json("regression.json", regression_record(f_panel, fit, m_weights, response_mode))
        w.csv("market_ranking.csv", ["rank", "factor", "weight"],
              ([k + 1, name, wt] for k, (name, wt) in enumerate(rank_factors(m_weights, f_panel.factor_names))))

        step = "expert"
        panel = expert_panel(cfg)
        w.json("expert.json", panel.to_dict())
        w.csv("expert_ranking.csv", ["rank", "factor", "weight"],
              ([k + 1, name, wt] for k, (name, wt) in enumerate(panel.ranking())))

        step = "concordance"
        if len(m_weights) != len(panel.final.weights):
            raise FactorMismatch(
                f"{len(m_weights)} regression factors vs {len(panel.final.weights)} expert factors"
            )
        report = build_report(m_weights, panel.final.weights, Thresholds(cfg.r_min, cfg.s_max))
        w.json("concordance.json", report.to_dict())
        w.text("concordance.txt", report.summary() + "\n")
        w.csv("weights.csv", ["factor", "market", "expert"],
              ([name, float(a), float(b)] for name, a, b in
               zip(f_panel.factor_names, m_weights, panel.final.weights)))

        step = "manifest"
        manifest = {
            "tool": "concord",
            "version": __version__,
            "inputs": inputs,
            "config": cfg.echo(),
            "response_mode": response_mode,
            "stages": {
                "quarters": ing.panel.n_stages,
                "retained": ing.window.n_stages,
                "solved": len(trajectory),
                "regression": f_panel.n_stages,
            },
            "artifacts": sorted(w.files),
        }
        w.json("manifest.json", manifest)
    except Exception as exc:
        failure = exc if isinstance(exc, PipelineFailure) else PipelineFailure(step, exc)
        marker.write_text(_dump_json(failure.to_dict()), encoding="utf-8")
        raise failure from exc

    return RunArtifacts(
        ingest=ing, trajectory=trajectory, factor_panel=f_panel, fit=fit,
        market_weights=m_weights, expert=panel, report=report, manifest=manifest,
        screening=screening, files=list(w.files),
    )


def compare_files(path_a, path_b, thresholds: Thresholds | None = None) -> ConcordanceReport:
    with open(path_a, "rb") as fh:
        names_a, a = read_weights_csv(fh)
    with open(path_b, "rb") as fh:
        names_b, b = read_weights_csv(fh)
    if names_a != names_b:
        raise FactorMismatch(f"factor lists differ: {names_a} vs {names_b}")
    return build_report(a, b, thresholds)
