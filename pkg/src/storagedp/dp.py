"""Backward induction over the discretized storage DP and forward policy extraction.

Storage is 0-based: ``values[t]`` is the expected value of entering stage
``t`` (before the price of interval ``t`` is drawn) and ``scenarios.prices[t]``
is the price support of interval ``t``.  Hence ``values[T] == 0`` and
``values[t]`` is computed from ``values[t + 1]`` and ``prices[t]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import NEG_INF, KernelSet, check_simplex
from .errors import DomainError, InvariantError
from .grid import Grid, TransitionTables
from .model import FEAS_TOL, DispatchSchedule, StorageParams, transition

_LATTICE_SNAP = 1e-10  # MWh


@dataclass(frozen=True)
class ScenarioSet:
    prices: np.ndarray  # (T, R)
    probs: np.ndarray  # (T, R)

    def __post_init__(self):
        prices = np.atleast_2d(np.asarray(self.prices, dtype=float))
        probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if prices.shape != probs.shape or prices.ndim != 2:
            raise DomainError(f"prices {prices.shape} and probs {probs.shape} differ")
        if not np.isfinite(prices).all():
            raise DomainError("scenario prices must be finite")
        for row in probs:
            check_simplex(row)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "probs", probs)

    @property
    def T(self) -> int:
        return self.prices.shape[0]

    @property
    def R(self) -> int:
        return self.prices.shape[1]

    @classmethod
    def deterministic(cls, prices) -> "ScenarioSet":
        prices = np.asarray(prices, dtype=float).reshape(-1, 1)
        return cls(prices, np.ones_like(prices))

    @classmethod
    def uniform(cls, prices) -> "ScenarioSet":
        prices = np.asarray(prices, dtype=float)
        return cls(prices, np.tile(uniform_probs(prices.shape[1]), (prices.shape[0], 1)))


def uniform_probs(R: int) -> np.ndarray:
    """Equal weights whose exactly rounded sum (``math.fsum``) is 1.0."""
    probs = np.full(R, 1.0 / R)
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    return probs


@dataclass(frozen=True)
class ValueTable:
    values: np.ndarray  # (T + 1, S)
    grid: Grid

    @property
    def T(self) -> int:
        return self.values.shape[0] - 1


def backward_induction(grid: Grid, tables: TransitionTables, scenarios: ScenarioSet,
                       backend: KernelSet, keep_policies: bool = False,
                       action_mask=None):
    """Solve the discretized DP and return the full value table.

    ``action_mask`` is an optional (T, P) boolean array of actions forbidden
    at each stage, on top of the physical infeasibility mask.  With
    ``keep_policies`` the (T, S, R) argmax action indices are returned too.
    """
    T, R = scenarios.T, scenarios.R
    S, P = grid.S, grid.P
    if tables.sigma.shape != (S, P):
        raise DomainError(f"tables shape {tables.sigma.shape} != grid shape {(S, P)}")
    if action_mask is not None:
        action_mask = np.array(action_mask, dtype=bool)
        if action_mask.shape != (T, P):
            raise DomainError(f"action mask shape {action_mask.shape} != {(T, P)}")
        # doing nothing is always allowed
        action_mask[:, grid.n_charge] = False
    values = np.zeros((T + 1, S))
    policies = np.empty((T, S, R), dtype=np.int64) if keep_policies else None
    for t in range(T - 1, -1, -1):
        values[t] = _stage(values[t + 1], t, grid, tables, scenarios, backend,
                           action_mask, policies)
    _check_values(values)
    table = ValueTable(values, grid)
    return (table, policies) if keep_policies else table


def solve_value(grid: Grid, tables: TransitionTables, scenarios: ScenarioSet,
                backend: KernelSet, action_mask=None) -> np.ndarray:
    """Valuation-only solve keeping two value rows; returns the stage-0 values."""
    v = np.zeros(grid.S)
    for t in range(scenarios.T - 1, -1, -1):
        v = _stage(v, t, grid, tables, scenarios, backend, action_mask, None)
    _check_values(v[None, :])
    return v


def _stage(v_next, t, grid, tables, scenarios, backend, action_mask, policies):
    cont = backend.gather_interpolate(v_next, tables)
    mask = tables.infeasible
    if action_mask is not None and action_mask[t].any():
        mask = mask | action_mask[t][None, :]
    cont = backend.mask_assign(cont, mask, NEG_INF)
    payoff = backend.outer_payoff(grid.actions, scenarios.prices[t])
    if policies is not None:
        q, policies[t] = backend.broadcast_payoff_and_max(cont, payoff, return_argmax=True)
    else:
        q = backend.broadcast_payoff_and_max(cont, payoff)
    return backend.expectation(q, scenarios.probs[t])


def _check_values(values):
    if not np.isfinite(values).all():
        raise InvariantError("value table has non-finite entries")
    scale = max(1.0, float(np.abs(values).max()))
    if values.min() < -1e-9 * scale:
        raise InvariantError(f"negative value {values.min()} despite the do-nothing action")


def value_at(table: ValueTable, t: int, s: float) -> float:
    """Piecewise-linear interpolation of ``values[t]`` at SoC ``s``."""
    if not 0 <= t <= table.T:
        raise DomainError(f"stage {t} outside [0, {table.T}]")
    states = table.grid.states
    if not -FEAS_TOL <= s <= states[-1] + FEAS_TOL:
        raise DomainError(f"state {s} outside [0, {states[-1]}]")
    return float(np.interp(s, states, table.values[t]))


def feasible_actions(grid: Grid, s: float, tol: float = FEAS_TOL):
    """Indices of grid actions feasible from the (possibly off-grid) state ``s``."""
    nxt = s + transition(grid.actions, grid.efficiency)
    return np.flatnonzero((nxt >= -tol) & (nxt <= grid.energy_cap + tol))


def candidate_actions(grid: Grid, s: float) -> np.ndarray:
    """Feasible grid actions from ``s``, plus lattice-return actions when ``s`` is off-grid.

    After a power-cap endpoint action the SoC sits between grid points and
    the recombining grid actions would keep it there.  Lattice-return actions
    are the exact powers that land on each grid state within the feasible
    interval, so energy is never stranded below one grid step.
    """
    acts = grid.actions[feasible_actions(grid, s)]
    k = round(s / grid.delta)
    if abs(s - k * grid.delta) <= _LATTICE_SNAP:
        return acts
    eta = grid.efficiency
    lo = -min(grid.power_cap, (grid.energy_cap - s) / eta)
    hi = min(grid.power_cap, s * eta)
    d = grid.states - s
    ret = np.where(d > 0, -d / eta, -d * eta)
    ret = ret[(ret >= lo - FEAS_TOL) & (ret <= hi + FEAS_TOL)]
    ret = ret[np.min(np.abs(ret[:, None] - acts[None, :]), axis=1) > 1e-12]
    return np.concatenate([acts, ret])


def next_state(s: float, p: float, grid: Grid) -> float:
    """Post-action SoC, clipped to the box and snapped onto nearby lattice points."""
    nxt = s + transition(p, grid.efficiency)
    k = round(nxt / grid.delta)
    if abs(nxt - k * grid.delta) <= _LATTICE_SNAP:
        nxt = float(grid.states[min(max(k, 0), grid.S - 1)])
    return min(max(nxt, 0.0), grid.energy_cap)


def next_states(s: float, actions, grid: Grid) -> np.ndarray:
    """Vector form of :func:`next_state`."""
    nxt = s + transition(np.asarray(actions, dtype=float), grid.efficiency)
    k = np.rint(nxt / grid.delta)
    snap = np.abs(nxt - k * grid.delta) <= _LATTICE_SNAP
    idx = np.clip(k, 0, grid.S - 1).astype(np.int64)
    nxt = np.where(snap, grid.states[idx], nxt)
    return np.clip(nxt, 0.0, grid.energy_cap)


def greedy_action(table: ValueTable, t: int, s: float, price: float, grid: Grid,
                  allowed=None) -> float:
    """Action maximizing ``price * p + V[t + 1](s + F(p))`` over :func:`candidate_actions`.

    ``allowed`` optionally marks permitted grid actions (length P); extra
    lattice-return actions are permitted when their sign is.  Ties go to
    the first candidate.
    """
    acts = candidate_actions(grid, s)
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool)
        ok_charge = allowed[grid.actions < 0].any()
        ok_discharge = allowed[grid.actions > 0].any()
        on_grid = np.isin(acts, grid.actions[allowed])
        keep = on_grid | ((acts < 0) & ok_charge) | ((acts > 0) & ok_discharge)
        keep &= ~np.isin(acts, grid.actions[~allowed])
        acts = acts[keep]
    if acts.size == 0:
        return 0.0
    if not 0 <= t + 1 <= table.T:
        raise DomainError(f"stage {t} outside [0, {table.T - 1}]")
    cont = np.interp(next_states(s, acts, grid), grid.states, table.values[t + 1])
    return float(acts[int(np.argmax(price * acts + cont))])


def forward_pass(table: ValueTable, prices, params: StorageParams, grid: Grid,
                 action_mask=None):
    """Re-optimize each stage from the actual state against ``table``."""
    prices = np.asarray(prices, dtype=float)
    powers = np.zeros(len(prices))
    socs = np.zeros(len(prices))
    s = params.initial_soc
    for t, price in enumerate(prices):
        allowed = None if action_mask is None else ~np.asarray(action_mask[t])
        if allowed is not None:
            allowed[grid.n_charge] = True
        p = greedy_action(table, t, s, price, grid, allowed)
        s = next_state(s, p, grid)
        powers[t], socs[t] = p, s
    objective = float(prices @ powers)
    return objective, DispatchSchedule(powers, socs)


def solve_deterministic(prices, params: StorageParams, grid: Grid,
                        tables: TransitionTables, backend: KernelSet, action_mask=None):
    """Single-sample DP followed by a forward pass; returns ``(objective, schedule)``."""
    prices = np.asarray(prices, dtype=float)
    if not np.isfinite(prices).all():
        raise DomainError("prices must be finite")
    table = backward_induction(grid, tables, ScenarioSet.deterministic(prices), backend,
                               action_mask=action_mask)
    return forward_pass(table, prices, params.replace(horizon=len(prices)), grid,
                        action_mask)
