"""State and action discretization plus the stage-invariant transition tables.

The action grid is "recombining": interior charge actions are -k*delta/eta
and interior discharge actions k*delta*eta, so from any grid state they land
exactly on another grid state.  Only the +/- power-cap endpoints may need
linear interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import FEAS_TOL, StorageParams, transition

_SNAP = 1e-9  # relative, for integer ratios and index proxies


def _integer_ratio(x: float) -> int | None:
    k = round(x)
    if abs(x - k) <= _SNAP * max(1.0, abs(x)):
        return int(k)
    return None


def _ceil(x: float) -> int:
    k = _integer_ratio(x)
    return k if k is not None else math.ceil(x)


@dataclass(frozen=True)
class Grid:
    delta: float
    states: np.ndarray
    actions: np.ndarray
    n_charge: int
    n_discharge: int
    efficiency: float

    @property
    def S(self) -> int:
        return len(self.states)

    @property
    def P(self) -> int:
        return len(self.actions)

    @property
    def energy_cap(self) -> float:
        return float(self.states[-1])

    @property
    def power_cap(self) -> float:
        return float(self.actions[-1])

    @classmethod
    def build(cls, params: StorageParams, delta: float) -> "Grid":
        states = build_state_grid(params.energy_cap, delta)
        actions, n_c, n_d = build_action_grid(params.power_cap, params.efficiency, delta)
        return cls(delta, states, actions, n_c, n_d, params.efficiency)


@dataclass(frozen=True)
class TransitionTables:
    sigma: np.ndarray
    z_low: np.ndarray
    z_high: np.ndarray
    interp_weight: np.ndarray
    infeasible: np.ndarray


def build_state_grid(energy_cap: float, delta: float) -> np.ndarray:
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    n = _integer_ratio(energy_cap / delta)
    if n is None or n < 1:
        raise ConfigError(
            f"energy cap {energy_cap} is not an integer multiple of delta {delta}")
    states = np.arange(n + 1) * delta
    states[-1] = energy_cap
    return states


def build_action_grid(power_cap: float, efficiency: float, delta: float):
    """Return ``(actions, n_charge, n_discharge)`` with actions ascending."""
    if not power_cap > 0 or not delta > 0 or not 0 < efficiency <= 1:
        raise ConfigError("power_cap, delta must be positive and efficiency in (0, 1]")
    n_c = _ceil(power_cap * efficiency / delta)
    n_d = _ceil(power_cap / (delta * efficiency))
    charge = np.minimum(np.arange(1, n_c + 1) * delta / efficiency, power_cap)
    discharge = np.minimum(np.arange(1, n_d + 1) * delta * efficiency, power_cap)
    # the last multiple is the cap itself, not a near-miss from rounding
    charge[-1] = power_cap
    discharge[-1] = power_cap
    actions = np.concatenate([-charge[::-1], [0.0], discharge])
    return actions, n_c, n_d


def build_transition_tables(grid: Grid, energy_cap: float | None = None,
                            tol: float = FEAS_TOL) -> TransitionTables:
    s_bar = grid.energy_cap if energy_cap is None else energy_cap
    sigma = grid.states[:, None] + transition(grid.actions, grid.efficiency)[None, :]
    infeasible = (sigma < -tol) | (sigma > s_bar + tol)
    z = np.clip(sigma, 0.0, s_bar) / grid.delta
    nearest = np.rint(z)
    on_lattice = np.abs(z - nearest) <= _SNAP * np.maximum(1.0, nearest)
    z = np.where(on_lattice, nearest, z)
    z_low = np.floor(z).astype(np.int64)
    z_high = np.ceil(z).astype(np.int64)
    np.clip(z_low, 0, grid.S - 1, out=z_low)
    np.clip(z_high, 0, grid.S - 1, out=z_high)
    span = z_high - z_low
    weight = np.zeros_like(z)
    split = span > 0
    weight[split] = (z[split] - z_low[split]) / span[split]
    return TransitionTables(sigma, z_low, z_high, weight, infeasible)
