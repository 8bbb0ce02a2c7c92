"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ConcordError(ValueError):
    """Base class. ``stage`` is filled in when an error is raised inside a per-stage loop."""

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        if self.stage is not None:
            return f"[stage {self.stage}] {msg}"
        return msg


# market_data
class MalformedRow(ConcordError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {detail}" if detail else ""))


class NonPositivePrice(ConcordError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"non-positive price at line {line}" + (f": {detail}" if detail else ""))


class MissingQuarter(ConcordError):
    def __init__(self, security: str, stage: str):
        self.security = security
        self.quarter = stage
        super().__init__(f"security {security!r} has no sessions in quarter {stage}")


class WindowTooSmall(ConcordError):
    pass


class SeriesTooShort(ConcordError):
    pass


# portfolio
class DegenerateInterval(ConcordError):
    pass


class SingularSystem(ConcordError):
    pass


class Infeasible(ConcordError):
    pass


# regression
class DegenerateFactor(ConcordError):
    def __init__(self, index: int, name: str | None = None):
        self.index = index
        label = name if name is not None else f"#{index}"
        super().__init__(f"factor {label} is constant; cannot normalize")


class RankDeficient(ConcordError):
    pass


class TooFewStages(ConcordError):
    pass


class ZeroVariance(ConcordError):
    pass


class ZeroSlopeSum(ConcordError):
    pass


# expert
class MissingPair(ConcordError):
    def __init__(self, i: int, j: int, expert: str | None = None):
        self.pair = (i, j)
        who = f" (expert {expert})" if expert else ""
        super().__init__(f"missing answer for pair ({i},{j}){who}")


class DuplicatePair(ConcordError):
    def __init__(self, i: int, j: int, expert: str | None = None):
        self.pair = (i, j)
        who = f" (expert {expert})" if expert else ""
        super().__init__(f"duplicate answer for pair ({i},{j}){who}")


class OutOfRangeValue(ConcordError):
    pass


class ScaleNotSupported(ConcordError):
    pass


class ZeroEntry(ConcordError):
    pass


class NoConvergence(ConcordError):
    pass


class WrongVectorCount(ConcordError):
    pass


class EmptyPanel(ConcordError):
    pass


# concordance / cli
class ConstantVector(ConcordError):
    pass


class FactorMismatch(ConcordError):
    pass
