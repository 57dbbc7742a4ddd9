"""Storage physics: asset parameters, the SoC transition and feasibility.

Sign convention: p > 0 is discharge (export), p < 0 is charge.  The SoC
delta returned by :func:`transition` carries the opposite sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

FEAS_TOL = 1e-9  # MWh, absolute


@dataclass(frozen=True)
class StorageParams:
    power_cap: float
    energy_cap: float
    efficiency: float
    initial_soc: float = 0.0
    horizon: int = 1

    def __post_init__(self):
        if not (self.power_cap > 0 and math.isfinite(self.power_cap)):
            raise ConfigError(f"power_cap must be positive, got {self.power_cap}")
        if not (self.energy_cap > 0 and math.isfinite(self.energy_cap)):
            raise ConfigError(f"energy_cap must be positive, got {self.energy_cap}")
        if not 0 < self.efficiency <= 1:
            raise ConfigError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if not 0 <= self.initial_soc <= self.energy_cap:
            raise ConfigError(
                f"initial_soc {self.initial_soc} outside [0, {self.energy_cap}]")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon}")

    @classmethod
    def from_duration(cls, power_cap, duration, roundtrip=None, efficiency=None,
                      initial_soc=0.0, horizon=1):
        """Build parameters from an energy-to-power ratio in hours.

        Exactly one of ``roundtrip`` and ``efficiency`` may be given; the
        one-way efficiency is the square root of the round-trip value.
        """
        if roundtrip is not None and efficiency is not None:
            raise ConfigError("give either efficiency or roundtrip, not both")
        if efficiency is None:
            rt = 0.85 if roundtrip is None else roundtrip
            if not 0 < rt <= 1:
                raise ConfigError(f"roundtrip must lie in (0, 1], got {rt}")
            efficiency = math.sqrt(rt)
        return cls(power_cap, power_cap * duration, efficiency, initial_soc, horizon)

    def replace(self, **changes) -> "StorageParams":
        values = dict(power_cap=self.power_cap, energy_cap=self.energy_cap,
                      efficiency=self.efficiency, initial_soc=self.initial_soc,
                      horizon=self.horizon)
        values.update(changes)
        return StorageParams(**values)


@dataclass
class DispatchSchedule:
    """Net powers (MW) and end-of-stage SoC levels (MWh), both length T."""

    powers: np.ndarray
    socs: np.ndarray

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float)
        self.socs = np.asarray(self.socs, dtype=float)

    def __len__(self):
        return len(self.powers)


@dataclass(frozen=True)
class Violation:
    stage: int
    constraint: str
    magnitude: float = field(compare=False)

    def __str__(self):
        return f"stage {self.stage}: {self.constraint} violated by {self.magnitude:.3g}"


def transition(p, eta):
    """Signed change in stored energy caused by net power ``p``.

    Works on scalars and arrays.  Discharge drains ``p / eta``, charge
    stores ``eta * |p|``.
    """
    if np.ndim(p) == 0:
        p = float(p)
        return -p / eta if p >= 0 else -eta * p
    p = np.asarray(p, dtype=float)
    return np.where(p >= 0, -p / eta, -eta * p)


def feasible_action_interval(s, params: StorageParams):
    """Closed interval ``(lo, hi)`` of feasible net powers from SoC ``s``."""
    if not -FEAS_TOL <= s <= params.energy_cap + FEAS_TOL:
        raise DomainError(f"state {s} outside [0, {params.energy_cap}]")
    s = min(max(s, 0.0), params.energy_cap)
    eta = params.efficiency
    lo = -min(params.power_cap, (params.energy_cap - s) / eta)
    hi = min(params.power_cap, s * eta)
    return lo, hi


def validate_schedule(schedule: DispatchSchedule, params: StorageParams,
                      tol: float = FEAS_TOL) -> list[Violation]:
    """Check power bounds, energy bounds and the SoC recursion stage by stage.

    Complementarity cannot be violated by a net-power schedule, so it never
    produces a violation.
    """
    T = params.horizon
    if len(schedule.powers) != T or len(schedule.socs) != T:
        raise DomainError(
            f"schedule length {len(schedule.powers)}/{len(schedule.socs)} != horizon {T}")
    out = []
    prev = params.initial_soc
    for t, (p, s) in enumerate(zip(schedule.powers, schedule.socs)):
        excess = abs(p) - params.power_cap
        if excess > tol:
            out.append(Violation(t, "power bound", excess))
        if s < -tol:
            out.append(Violation(t, "energy lower bound", -s))
        elif s > params.energy_cap + tol:
            out.append(Violation(t, "energy upper bound", s - params.energy_cap))
        gap = abs(s - (prev + transition(p, params.efficiency)))
        if gap > tol:
            out.append(Violation(t, "soc recursion", gap))
        prev = s
    return out


def complementarity_frequency(schedule: DispatchSchedule) -> float:
    """Fraction of stages with simultaneous charge and discharge.

    The net power is split as p_d = max(p, 0), p_c = max(-p, 0), so the
    product is zero at every stage.
    """
    p = schedule.powers
    if len(p) == 0:
        return 0.0
    charge = np.maximum(-p, 0.0)
    discharge = np.maximum(p, 0.0)
    return float(np.mean(charge * discharge > 0))


def rollout(powers, params: StorageParams) -> DispatchSchedule:
    """Apply a power sequence from ``params.initial_soc``."""
    socs = np.empty(len(powers))
    s = params.initial_soc
    for t, p in enumerate(powers):
        s = s + transition(p, params.efficiency)
        socs[t] = s
    return DispatchSchedule(np.asarray(powers, dtype=float), socs)
