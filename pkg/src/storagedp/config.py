"""Run configuration: a keyed text file overridden by command-line flags.

The file holds one ``key = value`` pair per line; ``#`` starts a comment.
Keys use the long flag names with underscores (``power_cap = 1``).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .model import StorageParams


@dataclass
class RunConfig:
    power_cap: float = 1.0
    duration: float | None = None
    energy_cap: float | None = None
    eta: float | None = None
    roundtrip: float | None = None
    soc0: float = 0.0
    delta: float = 0.1
    samples: int = 200
    backend: str = "parallel"
    threads: int | None = None
    seed: int = 0
    out: str = "out"
    train: str | None = None
    eval: str | None = None
    prices: str | None = None
    price_column: str = "rt"
    scenarios: str | None = None
    strategy: str | None = None
    lag_prior: float | None = None
    fine_delta: float | None = None
    durations: str = "4,20,100"
    deltas: str = "0.1"
    horizon: int = 168
    variant: str = "exact"
    seeds: int = 200
    max_T: int = 4
    max_S: int = 5
    max_P: int = 5
    max_R: int = 3
    mutate: bool = False
    dump_values: bool = False

    def storage_params(self, horizon: int = 1, duration: float | None = None) -> StorageParams:
        """Asset parameters; ``duration`` overrides the configured energy capacity."""
        if self.eta is not None and self.roundtrip is not None:
            raise ConfigError("give either --eta or --roundtrip, not both")
        if self.eta is not None:
            eta = self.eta
        else:
            rt = 0.85 if self.roundtrip is None else self.roundtrip
            if not 0 < rt <= 1:
                raise ConfigError(f"roundtrip must lie in (0, 1], got {rt}")
            eta = math.sqrt(rt)
        if (duration is None and self.duration is not None and self.energy_cap is not None
                and abs(self.duration * self.power_cap - self.energy_cap) > 1e-9):
            raise ConfigError(
                f"energy_cap {self.energy_cap} != duration {self.duration} x power_cap")
        if duration is None:
            duration = self.duration
        if duration is not None:
            energy_cap = duration * self.power_cap
        elif self.energy_cap is not None:
            energy_cap = self.energy_cap
        else:
            energy_cap = 4.0 * self.power_cap
        return StorageParams(self.power_cap, energy_cap, eta, self.soc0, horizon)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def float_list(self, key: str) -> list[float]:
        text = getattr(self, key)
        try:
            return [float(x) for x in str(text).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be a comma-separated list of numbers") from None


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, text: str):
    kind = _TYPES[key]
    if text.lower() in ("", "none", "null"):
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


def read_config_file(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Defaults, then file values, then flags that were actually given."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None and k in _TYPES})
    return RunConfig(**merged)
