"""
Subjective factor weights from expert paired-comparison questionnaires.

Each expert answers every unordered factor pair twice: on a discrete scale
(yes / no / equal: "is the first factor more significant?") and on a
continuous scale (the share of significance given to the first factor).
Discrete matrices use {0, 1, 2} with a_ji = 2 - a_ij; continuous matrices use
[0, 1] with a_ji = 1 - a_ij.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicatePair,
    EmptyPanel,
    MalformedRow,
    MissingPair,
    NoConvergence,
    OutOfRangeValue,
    ScaleNotSupported,
    WrongVectorCount,
    ZeroEntry,
)
from .market_data import _text_stream

N_FACTORS = 5
DISCRETE = "discrete"
CONTINUOUS = "continuous"
SCALES = (DISCRETE, CONTINUOUS)
DISCRETE_CODES = {"yes": 2.0, "no": 0.0, "equal": 1.0}
QUESTIONNAIRE_HEADER = ("expert_id", "scale", "row_factor", "col_factor", "value")


@dataclass(frozen=True)
class QuestionnaireResponse:
    expert_id: str
    scale: str
    answers: tuple[tuple[int, int, object], ...]
    n_factors: int = N_FACTORS

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ScaleNotSupported(f"unknown scale {self.scale!r}")
        seen = set()
        for i, j, value in self.answers:
            if not (1 <= i < j <= self.n_factors):
                raise OutOfRangeValue(f"pair ({i},{j}) is not an upper-triangle pair")
            if (i, j) in seen:
                raise DuplicatePair(i, j, self.expert_id)
            seen.add((i, j))
            if self.scale == DISCRETE and value not in DISCRETE_CODES:
                raise OutOfRangeValue(f"discrete answer {value!r} for pair ({i},{j})")
            if self.scale == CONTINUOUS and not 0.0 <= float(value) <= 1.0:
                raise OutOfRangeValue(f"continuous answer {value} for pair ({i},{j}) outside [0, 1]")
        for i, j in itertools.combinations(range(1, self.n_factors + 1), 2):
            if (i, j) not in seen:
                raise MissingPair(i, j, self.expert_id)


@dataclass(frozen=True)
class PairedComparisonMatrix:
    scale: str
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a paired-comparison matrix must be square")
        if self.scale == DISCRETE:
            diag, total = 1.0, 2.0
            if not np.all(np.isin(a, (0.0, 1.0, 2.0))):
                raise OutOfRangeValue("discrete entries must be 0, 1 or 2")
        elif self.scale == CONTINUOUS:
            diag, total = 0.5, 1.0
            if np.any(a < 0) or np.any(a > 1):
                raise OutOfRangeValue("continuous entries must lie in [0, 1]")
        else:
            raise ScaleNotSupported(f"unknown scale {self.scale!r}")
        if np.any(np.abs(np.diag(a) - diag) > 1e-12):
            raise ValueError(f"{self.scale} diagonal must equal {diag}")
        if np.any(np.abs(a + a.T - total) > 1e-12):
            raise ValueError(f"{self.scale} matrix violates a_ji = {total:g} - a_ij")

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    method: str
    provenance: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "provenance": self.provenance,
            "weights": [float(w) for w in self.weights],
        }


def _parse_rows(source) -> list[tuple[int, dict]]:
    reader = csv.reader(_text_stream(source))
    header = tuple(h.strip() for h in next(reader, ()))
    if header != QUESTIONNAIRE_HEADER:
        raise MalformedRow(1, f"expected header {','.join(QUESTIONNAIRE_HEADER)}")
    rows = []
    for line, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise MalformedRow(line, "bad field count")
        rows.append((line, dict(zip(header, (c.strip() for c in row)))))
    return rows


def _convert(line, rec) -> tuple[int, int, object]:
    try:
        i, j = int(rec["row_factor"]), int(rec["col_factor"])
    except ValueError:
        raise MalformedRow(line, "factor indices must be integers") from None
    raw = rec["value"]
    if rec["scale"] == DISCRETE:
        value = raw.lower()
        if value not in DISCRETE_CODES:
            raise OutOfRangeValue(f"line {line}: discrete answer must be yes/no/equal, got {raw!r}")
    elif rec["scale"] == CONTINUOUS:
        try:
            value = float(raw)
        except ValueError:
            raise MalformedRow(line, f"unparseable share {raw!r}") from None
        if not 0.0 <= value <= 1.0:
            raise OutOfRangeValue(f"line {line}: share {value} outside [0, 1]")
    else:
        raise ScaleNotSupported(f"line {line}: unknown scale {rec['scale']!r}")
    return i, j, value


def parse_questionnaires(source, n_factors: int = N_FACTORS) -> list[QuestionnaireResponse]:
    """All (expert, scale) questionnaires in a file, in order of first appearance."""
    groups: dict[tuple[str, str], list] = {}
    for line, rec in _parse_rows(source):
        key = (rec["expert_id"], rec["scale"])
        groups.setdefault(key, []).append(_convert(line, rec))
    return [
        QuestionnaireResponse(expert, scale, tuple(answers), n_factors)
        for (expert, scale), answers in groups.items()
    ]


def parse_questionnaire(source, scale: str, expert_id: str | None = None,
                        n_factors: int = N_FACTORS) -> QuestionnaireResponse:
    found = [
        r for r in parse_questionnaires(source, n_factors)
        if r.scale == scale and (expert_id is None or r.expert_id == expert_id)
    ]
    if not found:
        raise MissingPair(1, 2, expert_id)
    if len(found) > 1:
        raise ValueError(f"{len(found)} {scale} questionnaires found; pass expert_id")
    return found[0]


def build_pcm(response: QuestionnaireResponse) -> PairedComparisonMatrix:
    n = response.n_factors
    if response.scale == DISCRETE:
        a = np.ones((n, n))
        for i, j, v in response.answers:
            a[i - 1, j - 1] = DISCRETE_CODES[v]
            a[j - 1, i - 1] = 2.0 - DISCRETE_CODES[v]
    else:
        a = np.full((n, n), 0.5)
        for i, j, v in response.answers:
            a[i - 1, j - 1] = float(v)
            a[j - 1, i - 1] = 1.0 - float(v)
    return PairedComparisonMatrix(response.scale, a)


def weights_summation(pcm: PairedComparisonMatrix, provenance: str = "") -> WeightVector:
    rows = pcm.entries.sum(axis=1)
    return WeightVector(rows / rows.sum(), "summation", provenance)


def _require_interior(pcm: PairedComparisonMatrix, method: str) -> np.ndarray:
    if pcm.scale != CONTINUOUS:
        raise ScaleNotSupported(f"the {method} method needs a continuous-scale matrix")
    a = pcm.entries
    if np.any(a <= 0.0) or np.any(a >= 1.0):
        raise ZeroEntry(f"the {method} method needs every entry strictly inside (0, 1)")
    return a


def weights_multiplication(pcm: PairedComparisonMatrix, provenance: str = "") -> WeightVector:
    """Normalized geometric row means."""
    a = _require_interior(pcm, "multiplication")
    g = np.exp(np.log(a).mean(axis=1))
    return WeightVector(g / g.sum(), "multiplication", provenance)


def weights_lewis(
    pcm: PairedComparisonMatrix,
    provenance: str = "",
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> WeightVector:
    """
    Principal eigenvector of the reciprocal matrix r_ij = a_ij / a_ji.

    Power iteration from the uniform vector until the largest component-wise
    relative change is at most ``tol``.
    """
    a = _require_interior(pcm, "lewis")
    r = a / a.T
    w = np.full(pcm.n, 1.0 / pcm.n)
    for _ in range(max_iter):
        nxt = r @ w
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - w) / nxt) <= tol:
            return WeightVector(nxt, "lewis", provenance)
        w = nxt
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps")


def check_transitivity(pcm: PairedComparisonMatrix) -> list[tuple[int, int, int]]:
    """
    Ordered triples (1-based) where i beats j and j beats k but i does not beat k.
    """
    a = pcm.entries
    if pcm.scale == DISCRETE:
        beats = a == 2.0
    else:
        beats = a > 0.5
    out = []
    for i, j, k in itertools.permutations(range(pcm.n), 3):
        if beats[i, j] and beats[j, k] and not beats[i, k]:
            out.append((i + 1, j + 1, k + 1))
    return out


def aggregate_expert(vectors: Sequence[WeightVector], provenance: str = "") -> WeightVector:
    if len(vectors) != 4:
        raise WrongVectorCount(f"expected 4 per-method vectors, got {len(vectors)}")
    mean = np.mean([v.weights for v in vectors], axis=0)
    return WeightVector(mean, "average", provenance)


def aggregate_panel(per_expert: Sequence[WeightVector]) -> WeightVector:
    if not per_expert:
        raise EmptyPanel("no expert vectors to aggregate")
    mean = np.mean([v.weights for v in per_expert], axis=0)
    return WeightVector(mean, "average", f"panel of {len(per_expert)}")


@dataclass
class ExpertResult:
    expert_id: str
    vectors: list[WeightVector]
    average: WeightVector
    violations: dict[str, list[tuple[int, int, int]]]


@dataclass
class PanelResult:
    experts: list[ExpertResult]
    final: WeightVector
    per_method: dict[str, np.ndarray]
    dispersion: np.ndarray
    factor_names: tuple[str, ...] = field(default=("f1", "f2", "f3", "f4", "f5"))

    def ranking(self) -> list[tuple[str, float]]:
        w = self.final.weights
        order = sorted(range(len(w)), key=lambda i: (-w[i], i))
        return [(self.factor_names[i], float(w[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "factors": list(self.factor_names),
            "experts": [
                {
                    "expert_id": e.expert_id,
                    "vectors": [v.to_dict() for v in e.vectors],
                    "average": [float(x) for x in e.average.weights],
                    "transitivity_violations": {
                        k: [list(t) for t in v] for k, v in e.violations.items()
                    },
                }
                for e in self.experts
            ],
            "per_method": {k: [float(x) for x in v] for k, v in self.per_method.items()},
            "final": [float(x) for x in self.final.weights],
            "ranking": [[name, w] for name, w in self.ranking()],
            "dispersion": [float(x) for x in self.dispersion],
        }


def process_expert(discrete: QuestionnaireResponse, continuous: QuestionnaireResponse) -> ExpertResult:
    """Four weight vectors for one expert: discrete summation, continuous summation, multiplication, Lewis."""
    if discrete.scale != DISCRETE or continuous.scale != CONTINUOUS:
        raise ScaleNotSupported("expected one discrete and one continuous questionnaire")
    who = discrete.expert_id
    d_pcm, c_pcm = build_pcm(discrete), build_pcm(continuous)
    vectors = [
        weights_summation(d_pcm, f"{who}/discrete"),
        weights_summation(c_pcm, f"{who}/continuous"),
        weights_multiplication(c_pcm, f"{who}/continuous"),
        weights_lewis(c_pcm, f"{who}/continuous"),
    ]
    return ExpertResult(
        expert_id=who,
        vectors=vectors,
        average=aggregate_expert(vectors, who),
        violations={DISCRETE: check_transitivity(d_pcm), CONTINUOUS: check_transitivity(c_pcm)},
    )


def process_panel(responses: Iterable[QuestionnaireResponse]) -> PanelResult:
    """Pair every expert's two questionnaires, average per expert, then across experts."""
    by_expert: dict[str, dict[str, QuestionnaireResponse]] = {}
    for r in responses:
        slot = by_expert.setdefault(r.expert_id, {})
        if r.scale in slot:
            raise ValueError(f"expert {r.expert_id} has two {r.scale} questionnaires")
        slot[r.scale] = r
    if not by_expert:
        raise EmptyPanel("no questionnaires")
    experts = []
    for who, slot in by_expert.items():
        missing = [s for s in SCALES if s not in slot]
        if missing:
            raise ScaleNotSupported(f"expert {who} lacks a {missing[0]} questionnaire")
        experts.append(process_expert(slot[DISCRETE], slot[CONTINUOUS]))
    final = aggregate_panel([e.average for e in experts])
    labels = ("discrete-summation", "continuous-summation", "multiplication", "lewis")
    per_method = {
        label: np.mean([e.vectors[k].weights for e in experts], axis=0)
        for k, label in enumerate(labels)
    }
    # spread of the experts x methods observations behind each factor's weight
    obs = np.array([v.weights for e in experts for v in e.vectors])
    dispersion = obs.std(axis=0, ddof=1) if len(obs) > 1 else np.zeros(obs.shape[1])
    n = experts[0].vectors[0].weights.size
    return PanelResult(experts, final, per_method, dispersion, tuple(f"f{i + 1}" for i in range(n)))
