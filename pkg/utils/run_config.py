"""
Run configuration
Flat `key = value` text (one per line, `#` comments) <-> typed RunConfig
"""
import math
from typing import Dict, List, Literal

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

import config
from utils.errors import ConfigError
from utils.state_model import InitialData

REQUIRED_KEYS = ("n", "dt", "t_end", "init.generator")
SECTIONS = ("init", "output", "monitor")


class OutputOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = ""                 # empty = config.DATA_DIR
    checkpoint_every: int = 0     # steps between checkpoints; 0 = final state only
    keep_trajectory: bool = False


class MonitorOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    besov: bool = True
    higher_order: bool = True
    weight_a0: float = config.WEIGHTED_INTEGRAL["a0"]
    weight_beta: float = config.WEIGHTED_INTEGRAL["beta"]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int
    L: float = config.DEFAULT_BOX_LEN
    dt: float
    t_end: float
    scheme: Literal["nonconservative", "conservative"] = "nonconservative"
    order: int = 2
    integrating_factor: bool = True
    cfl: float = config.CFL_NUMBER
    cadence: int = config.DEFAULT_CADENCE
    rho_floor_factor: float = config.RHO_FLOOR_FACTOR
    init: InitialData
    output: OutputOptions = OutputOptions()
    monitor: MonitorOptions = MonitorOptions()

    @field_validator("dt")
    @classmethod
    def _positive_dt(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("t_end")
    @classmethod
    def _nonnegative_end(cls, v: float) -> float:
        if not v >= 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("order")
    @classmethod
    def _known_order(cls, v: int) -> int:
        if v not in (2, 4):
            raise ValueError("must be 2 or 4")
        return v

    @field_validator("cadence")
    @classmethod
    def _positive_cadence(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("cfl", "L")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be > 0")
        return v

    @model_validator(mode="after")
    def _whole_steps(self) -> "RunConfig":
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("t_end must be a whole number of dt steps")
        if round(steps) % self.cadence:
            raise ValueError(f"cadence {self.cadence} must divide the step count {round(steps)}")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


def _flat_key(loc, message: str) -> str:
    parts = [str(p) for p in loc if not isinstance(p, int)]
    if parts:
        return ".".join(parts)
    # cross-field checks carry no location
    return "cadence" if "cadence" in message else "t_end"


def _split_value(key: str, raw: str):
    if key in ("init.u_mean", "init.w_mean", "init.center"):
        if raw.lower() == "none":
            return None
        return [item.strip() for item in raw.split(",")]
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse the flat grammar; unknown, duplicate or malformed keys raise ConfigError"""
    nested: Dict[str, dict] = {}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {content!r}")
        key, raw = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in seen:
            raise ConfigError("duplicate key", key=key)
        seen.add(key)

        *parents, leaf = key.split(".")
        if (parents and (len(parents) > 1 or parents[0] not in SECTIONS)) or (not parents and leaf in SECTIONS):
            raise ConfigError("unknown key", key=key)
        target = nested
        for parent in parents:
            target = target.setdefault(parent, {})
            if not isinstance(target, dict):
                raise ConfigError("unknown key", key=key)
        if isinstance(target.get(leaf), dict):
            raise ConfigError("unknown key", key=key)
        target[leaf] = _split_value(key, raw)

    for key in REQUIRED_KEYS:
        if key not in seen:
            raise ConfigError("missing required key", key=key)

    try:
        return RunConfig.model_validate(nested)
    except ValidationError as e:
        first = e.errors()[0]
        key = _flat_key(first["loc"], first["msg"])
        if first["type"] == "extra_forbidden":
            raise ConfigError("unknown key", key=key) from None
        raise ConfigError(first["msg"], key=key) from None


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            return str(value)
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _flatten(prefix: str, data: dict, out: List[str]):
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            _flatten(f"{name}.", value, out)
        else:
            out.append(f"{name} = {_format(value)}")


def emit_config(cfg: RunConfig) -> str:
    """Every key written out; parse_config(emit_config(c)) == c"""
    lines: List[str] = ["# enslab run configuration"]
    _flatten("", cfg.model_dump(), lines)
    return "\n".join(lines) + "\n"
