"""Pipeline configuration: JSON file, then ``CONCORD_*`` environment, then CLI flags."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

ENV_PREFIX = "CONCORD_"
PATH_KEYS = ("quotes", "factors", "questionnaires", "response", "out")


@dataclass
class PipelineConfig:
    quotes: str | None = None
    factors: str | None = None
    questionnaires: str | None = None
    # optional stage,x1 CSV; when absent the response comes from the portfolio trajectory
    response: str | None = None
    # security whose portfolio share is the response; default is the first in the quotes file
    target_security: str | None = None
    drop_prefix: int = 9
    rho: float = 0.75
    long_only: bool = True
    regularization: float = 0.0
    min_window: int = 4
    fiscal_offset: int = 0
    screen: bool = False
    epsilon: float = 0.01
    screen_max_iter: int = 10
    alpha: float = 0.05
    r_min: float = 0.5
    s_max: float = 0.1
    out: str = "out"

    def validate(self, require: tuple[str, ...] = ()) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.drop_prefix < 0:
            raise ValueError("drop_prefix must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for key in require:
            value = getattr(self, key)
            if value is None:
                raise ValueError(f"config key {key!r} is required")
            if not Path(value).is_file():
                raise FileNotFoundError(f"{key}: no such file: {value}")
        if self.response is not None and not Path(self.response).is_file():
            raise FileNotFoundError(f"response: no such file: {self.response}")

    def echo(self) -> dict:
        """Config as recorded in the run manifest (the output directory is left out)."""
        out = dataclasses.asdict(self)
        out.pop("out")
        return out


def _coerce(field: dataclasses.Field, raw: str):
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    if "bool" in kind:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot read {raw!r} as a boolean for {field.name}")
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def load_config(path: str | os.PathLike | None = None, env: dict | None = None,
                overrides: dict | None = None) -> PipelineConfig:
    """
    Build a config from defaults, an optional JSON file, ``CONCORD_<KEY>``
    environment variables and explicit overrides, in that order of precedence.
    Relative paths in the file are resolved against the file's directory.
    """
    cfg = PipelineConfig()
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    if path is not None:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(data) - set(fields)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            if key in PATH_KEYS and value is not None and not Path(value).is_absolute():
                value = str(path.parent / value)
            setattr(cfg, key, value)
    env = os.environ if env is None else env
    for name, f in fields.items():
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            setattr(cfg, name, _coerce(f, raw))
    for key, value in (overrides or {}).items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        if value is not None:
            setattr(cfg, key, value)
    return cfg
