"""Forward simulation of dispatch strategies against realized prices.

Strategies, from most to least informed:

* ``perfect``: deterministic DP on the realized prices at a fine grid (upper bound)
* ``bids``: hourly bid curves from the stochastic value table, cleared at the realized price
* ``self``: the same curves cleared at the one-hour-lagged price, settled at the realized price
* ``myopic``: deterministic DP on day-ahead prices, quantities settled at realized prices
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .backend import KernelSet
from .bidding import bid_curve, clear_bid
from .dp import ValueTable, next_state, solve_deterministic
from .errors import DomainError
from .grid import Grid, build_transition_tables
from .model import DispatchSchedule, StorageParams, feasible_action_interval

STRATEGIES = ("perfect", "bids", "self", "myopic")


@dataclass
class SimulationResult:
    profit: float
    dispatch: DispatchSchedule
    prices: np.ndarray
    strategy: str
    metadata: dict = field(default_factory=dict)
    curves: list = field(default_factory=list)

    @property
    def per_stage(self):
        return list(zip(range(len(self.prices)), self.prices.tolist(),
                        self.dispatch.powers.tolist(), self.dispatch.socs.tolist()))

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "price", "p", "s"])
        for t, price, p, s in self.per_stage:
            writer.writerow([t, f"{price:.12g}", f"{p:.12g}", f"{s:.12g}"])

    def summary(self, perfect_value: float | None = None) -> dict:
        out = {"strategy": self.strategy, "profit": self.profit, "T": len(self.prices)}
        if perfect_value is not None:
            out["capture_ratio"] = capture_ratio(self.profit, perfect_value)
        out.update(self.metadata)
        return out

    def to_json(self, perfect_value: float | None = None) -> str:
        return json.dumps(self.summary(perfect_value), indent=1)


def capture_ratio(profit: float, perfect_value: float) -> float:
    return profit / perfect_value if perfect_value else float("nan")


def _check_horizon(table: ValueTable, prices):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1 or len(prices) != table.T:
        raise DomainError(f"price series length {prices.shape} != table horizon {table.T}")
    return prices


def _clear_loop(table, clearing, realized, params, grid, strategy, keep_curves):
    T = len(realized)
    powers, socs = np.zeros(T), np.zeros(T)
    curves = []
    s = params.initial_soc
    for t in range(T):
        curve = bid_curve(table, t, s, grid)
        if keep_curves:
            curves.append(curve)
        p = clear_bid(curve, clearing[t])
        lo, hi = feasible_action_interval(s, params)
        p = min(max(p, lo), hi)
        s = next_state(s, p, grid)
        powers[t], socs[t] = p, s
    profit = float(realized @ powers)
    return SimulationResult(profit, DispatchSchedule(powers, socs), realized, strategy,
                            curves=curves)


def simulate_bidding(table: ValueTable, realized, params: StorageParams, grid: Grid,
                     tables=None, keep_curves: bool = False) -> SimulationResult:
    """Rebuild the bid curve from the actual SoC each hour and clear it at the realized price."""
    realized = _check_horizon(table, realized)
    return _clear_loop(table, realized, realized, params, grid, "bids", keep_curves)


def lagged_prices(realized, prior: float | None = None):
    """One-hour-lagged series; the first entry is ``prior`` (default ``realized[0]``)."""
    realized = np.asarray(realized, dtype=float)
    first = realized[0] if prior is None else prior
    return np.concatenate([[first], realized[:-1]])


def simulate_self_schedule(table: ValueTable, realized, lagged, params: StorageParams,
                           grid: Grid, tables=None, prior_source: str = "given",
                           keep_curves: bool = False) -> SimulationResult:
    """Fix each quantity by clearing the curve at the lagged price, settle at the realized one."""
    realized = _check_horizon(table, realized)
    lagged = _check_horizon(table, lagged)
    result = _clear_loop(table, lagged, realized, params, grid, "self", keep_curves)
    result.metadata["lag_prior"] = float(lagged[0])
    result.metadata["lag_prior_source"] = prior_source
    return result


def simulate_myopic(da_prices, realized, params: StorageParams, grid: Grid,
                    backend: KernelSet, tables=None) -> SimulationResult:
    da_prices = np.asarray(da_prices, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if da_prices.shape != realized.shape:
        raise DomainError(f"DA {da_prices.shape} and realized {realized.shape} lengths differ")
    tables = tables if tables is not None else build_transition_tables(grid)
    planned, schedule = solve_deterministic(da_prices, params, grid, tables, backend)
    profit = float(realized @ schedule.powers)
    return SimulationResult(profit, schedule, realized, "myopic",
                            metadata={"planned_objective": planned})


def default_fine_delta(params: StorageParams, configured: float | None = None) -> float:
    fine = 0.01 * params.energy_cap
    return fine if configured is None else min(fine, configured)


def perfect_foresight(realized, params: StorageParams, backend: KernelSet,
                      fine_grid: Grid | None = None, delta: float | None = None):
    """Deterministic DP on the realized prices at a fine grid; returns ``(value, schedule)``."""
    if fine_grid is None:
        fine_grid = Grid.build(params, default_fine_delta(params, delta))
    tables = build_transition_tables(fine_grid)
    return solve_deterministic(realized, params, fine_grid, tables, backend)


def simulate_perfect(realized, params, backend, fine_grid=None, delta=None):
    realized = np.asarray(realized, dtype=float)
    value, schedule = perfect_foresight(realized, params, backend, fine_grid, delta)
    grid_delta = fine_grid.delta if fine_grid is not None else default_fine_delta(params, delta)
    return SimulationResult(value, schedule, realized, "perfect",
                            metadata={"fine_delta": grid_delta})


def build_negative_price_series(prices):
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        raise DomainError("empty price series")
    if not np.isfinite(prices).all():
        raise DomainError("prices must be finite")
    return prices - prices.max()


def discharge_prohibited_mask(prices, grid: Grid):
    """(T, P) mask forbidding every discharge action in intervals with price <= 0."""
    prices = np.asarray(prices, dtype=float)
    mask = np.zeros((len(prices), grid.P), dtype=bool)
    mask[:, grid.actions > 0] = (prices <= 0)[:, None]
    return mask


def simulate_discharge_prohibited(prices, params: StorageParams, grid: Grid,
                                  backend: KernelSet, tables=None) -> SimulationResult:
    """Deterministic DP that never discharges at non-positive prices."""
    prices = np.asarray(prices, dtype=float)
    tables = tables if tables is not None else build_transition_tables(grid)
    mask = discharge_prohibited_mask(prices, grid)
    value, schedule = solve_deterministic(prices, params, grid, tables, backend,
                                          action_mask=mask)
    return SimulationResult(value, schedule, prices, "discharge-prohibited")
