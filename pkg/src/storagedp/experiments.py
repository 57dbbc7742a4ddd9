"""Strategy comparisons and solver benchmarks shared by the CLI and the acceptance suite."""
from __future__ import annotations

import time

import numpy as np

from .backend import KernelSet, get_backend
from .dp import ScenarioSet, backward_induction
from .forecast import fit_spread_quantiles, generate_scenarios
from .grid import Grid, build_transition_tables
from .market_sim import (
    lagged_prices,
    simulate_bidding,
    simulate_myopic,
    simulate_perfect,
    simulate_self_schedule,
)
from .model import StorageParams

BENCH_COLUMNS = ["duration", "delta", "S", "P", "T", "R", "reference_sec",
                 "parallel_sec", "speedup", "max_rel_diff"]


def run_strategies(scenarios: ScenarioSet, da, realized, params: StorageParams, delta: float,
                   backend: KernelSet, strategies=("perfect", "bids", "self", "myopic"),
                   lag_prior: float | None = None, fine_delta: float | None = None,
                   keep_curves: bool = False) -> dict:
    """Run each requested strategy on one evaluation window."""
    da = np.asarray(da, dtype=float)
    realized = np.asarray(realized, dtype=float)
    params = params.replace(horizon=len(realized))
    grid = Grid.build(params, delta)
    tables = build_transition_tables(grid)
    table = None
    if {"bids", "self"} & set(strategies):
        table = backward_induction(grid, tables, scenarios, backend)
    out = {}
    for name in strategies:
        if name == "perfect":
            out[name] = simulate_perfect(realized, params, backend, delta=fine_delta)
        elif name == "bids":
            out[name] = simulate_bidding(table, realized, params, grid, tables,
                                         keep_curves=keep_curves)
        elif name == "self":
            # the DA price is known ahead of the first interval; use it as the lag prior
            prior, source = (lag_prior, "configured") if lag_prior is not None \
                else (float(da[0]), "day-ahead")
            out[name] = simulate_self_schedule(
                table, realized, lagged_prices(realized, prior), params, grid, tables,
                prior_source=source, keep_curves=keep_curves)
        elif name == "myopic":
            out[name] = simulate_myopic(da, realized, params, grid, backend, tables)
        else:
            raise ValueError(f"unknown strategy {name!r}")
    return out


def duration_sweep(train, evaluation, durations, params: StorageParams, delta: float,
                   R: int, backend: KernelSet, fine_delta: float | None = None):
    """Profit and capture ratio per (duration, strategy) in tidy rows."""
    model = fit_spread_quantiles(train)
    stamps = [rec.timestamp for rec in evaluation]
    da = np.array([rec.da for rec in evaluation])
    realized = np.array([rec.rt for rec in evaluation])
    scenarios = generate_scenarios(model, stamps, da, R)
    rows = []
    for duration in durations:
        p = params.replace(energy_cap=duration * params.power_cap,
                           initial_soc=min(params.initial_soc, duration * params.power_cap))
        results = run_strategies(scenarios, da, realized, p, delta, backend,
                                 fine_delta=fine_delta)
        perfect = results["perfect"].profit
        for name, res in results.items():
            rows.append({"duration": duration, "strategy": name, "profit": res.profit,
                         "capture_ratio": res.profit / perfect if perfect else float("nan")})
    return rows


def bench_cell(duration: float, delta: float, T: int, R: int, seed: int,
               power_cap: float = 1.0, efficiency: float = 0.85 ** 0.5,
               threads: int | None = None, backends=("reference", "parallel")) -> dict:
    """Time one (duration, delta) cell on each backend on seeded random prices."""
    params = StorageParams(power_cap, duration * power_cap, efficiency)
    grid = Grid.build(params, delta)
    tables = build_transition_tables(grid)
    rng = np.random.default_rng(seed)
    scenarios = ScenarioSet.uniform(rng.normal(40.0, 20.0, size=(T, R)))
    row = {"duration": duration, "delta": delta, "S": grid.S, "P": grid.P, "T": T, "R": R}
    values = {}
    for name in backends:
        backend = get_backend(name, threads)
        # compile / warm caches outside the timed region
        backward_induction(grid, tables, ScenarioSet(scenarios.prices[:1], scenarios.probs[:1]),
                           backend)
        start = time.perf_counter()
        values[name] = backward_induction(grid, tables, scenarios, backend).values
        row[f"{name}_sec"] = time.perf_counter() - start
    if len(values) == 2:
        ref, par = values["reference"], values["parallel"]
        scale = np.maximum(np.abs(ref), 1.0)
        row["max_rel_diff"] = float(np.max(np.abs(ref - par) / scale))
        row["speedup"] = row["reference_sec"] / row["parallel_sec"]
    return row
