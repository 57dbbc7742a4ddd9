"""Command-line interface.

    storagedp forecast    --train 2023.csv --eval 2024.csv --samples 200
    storagedp solve       --scenarios out/scenarios.csv --duration 4
    storagedp simulate    --strategy bids --eval 2024.csv --scenarios out/scenarios.csv
    storagedp bench       --durations 4,20,100 --deltas 0.1 --horizon 168
    storagedp plot-data   --train 2023.csv --eval 2024.csv --durations 2,4,8
    storagedp export-lp   --prices prices.csv --variant relaxed
    storagedp oracle-check --seeds 200

Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal
invariant breach (including a failed oracle check).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import forecast
from .backend import get_backend
from .bidding import curves_to_csv
from .config import RunConfig, build_config, read_config_file
from .dp import ScenarioSet, backward_induction, value_at
from .errors import ConfigError, DataError, StorageDPError
from .experiments import BENCH_COLUMNS, bench_cell, duration_sweep, run_strategies
from .grid import Grid, build_transition_tables
from .market_sim import STRATEGIES
from .oracle import OffByOneBackend, export_deterministic_model, run_oracle_suite

log = logging.getLogger("storagedp")


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, default=float) + "\n")


def _require(cfg: RunConfig, *keys):
    for key in keys:
        if getattr(cfg, key) is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required for this command")


def _load_records(path):
    records = forecast.ingest_csv(path)
    gaps = forecast.find_gaps(records)
    if gaps:
        log.warning("%s: %d missing hour(s), first at %s", path, len(gaps), gaps[0].isoformat())
    return records, gaps


def _price_series(records, column: str) -> np.ndarray:
    if column not in ("da", "rt"):
        raise ConfigError(f"price column must be 'da' or 'rt', got {column!r}")
    return np.array([getattr(rec, column) for rec in records])


def cmd_forecast(cfg: RunConfig) -> dict:
    _require(cfg, "train", "eval")
    train, train_gaps = _load_records(cfg.train)
    evaluation, eval_gaps = _load_records(cfg.eval)
    model = forecast.fit_spread_quantiles(train)
    scenarios = forecast.generate_scenarios(
        model, [r.timestamp for r in evaluation], [r.da for r in evaluation], cfg.samples)
    out = _out_dir(cfg)
    with open(out / "scenarios.csv", "w", newline="") as fh:
        forecast.scenarios_to_csv(scenarios, fh)
    report = {"command": "forecast", "T": scenarios.T, "R": scenarios.R,
              "groups": len(model.groups),
              "train_gaps": [g.isoformat() for g in train_gaps],
              "eval_gaps": [g.isoformat() for g in eval_gaps],
              "config": cfg.as_dict()}
    _write_json(out / "forecast.json", report)
    return report


def _load_scenarios(cfg: RunConfig) -> ScenarioSet:
    if cfg.scenarios is not None:
        return forecast.scenarios_from_csv(cfg.scenarios)
    if cfg.prices is not None:
        records, _ = _load_records(cfg.prices)
        return ScenarioSet.deterministic(_price_series(records, cfg.price_column))
    raise ConfigError("give --scenarios or --prices")


def cmd_solve(cfg: RunConfig) -> dict:
    scenarios = _load_scenarios(cfg)
    params = cfg.storage_params(horizon=scenarios.T)
    grid = Grid.build(params, cfg.delta)
    tables = build_transition_tables(grid)
    backend = get_backend(cfg.backend, cfg.threads)
    start = time.perf_counter()
    table = backward_induction(grid, tables, scenarios, backend)
    elapsed = time.perf_counter() - start
    out = _out_dir(cfg)
    report = {"command": "solve", "value": value_at(table, 0, params.initial_soc),
              "solve_seconds": elapsed, "S": grid.S, "P": grid.P, "R": scenarios.R,
              "T": scenarios.T, "backend": backend.name, "config": cfg.as_dict()}
    if cfg.dump_values:
        np.savetxt(out / "values.csv", table.values, delimiter=",", fmt="%.12g",
                   header=",".join(f"{s:.12g}" for s in grid.states), comments="")
    _write_json(out / "solve.json", report)
    return report


def cmd_simulate(cfg: RunConfig) -> dict:
    if cfg.strategy not in STRATEGIES:
        raise ConfigError(f"--strategy must be one of {', '.join(STRATEGIES)}")
    _require(cfg, "eval")
    evaluation, _ = _load_records(cfg.eval)
    da = _price_series(evaluation, "da")
    realized = _price_series(evaluation, "rt")
    scenarios = None
    if cfg.strategy in ("bids", "self"):
        if cfg.scenarios is not None:
            scenarios = forecast.scenarios_from_csv(cfg.scenarios)
        elif cfg.train is not None:
            train, _ = _load_records(cfg.train)
            scenarios = forecast.generate_scenarios(
                forecast.fit_spread_quantiles(train), [r.timestamp for r in evaluation],
                da, cfg.samples)
        else:
            raise ConfigError("bid strategies need --scenarios or --train")
        if scenarios.T != len(realized):
            raise DataError(f"scenario horizon {scenarios.T} != evaluation length {len(realized)}")
    params = cfg.storage_params(horizon=len(realized))
    backend = get_backend(cfg.backend, cfg.threads)
    wanted = [cfg.strategy] if cfg.strategy == "perfect" else ["perfect", cfg.strategy]
    results = run_strategies(scenarios, da, realized, params, cfg.delta, backend,
                             strategies=wanted, lag_prior=cfg.lag_prior,
                             fine_delta=cfg.fine_delta, keep_curves=True)
    result = results[cfg.strategy]
    out = _out_dir(cfg)
    with open(out / f"simulate_{cfg.strategy}.csv", "w", newline="") as fh:
        result.write_csv(fh)
    if result.curves:
        with open(out / f"bids_{cfg.strategy}.csv", "w", newline="") as fh:
            curves_to_csv(result.curves, fh)
    report = {"command": "simulate", **result.summary(results["perfect"].profit),
              "config": cfg.as_dict()}
    _write_json(out / f"simulate_{cfg.strategy}.json", report)
    return report


def cmd_bench(cfg: RunConfig) -> dict:
    rows = []
    for duration in cfg.float_list("durations"):
        for delta in cfg.float_list("deltas"):
            row = bench_cell(duration, delta, cfg.horizon, cfg.samples, cfg.seed,
                             power_cap=cfg.power_cap,
                             efficiency=cfg.storage_params().efficiency, threads=cfg.threads)
            log.info("duration %g delta %g: S=%d P=%d speedup %.1fx", duration, delta,
                     row["S"], row["P"], row["speedup"])
            rows.append(row)
    out = _out_dir(cfg)
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    report = {"command": "bench", "cells": len(rows), "config": cfg.as_dict()}
    _write_json(out / "bench.json", report)
    return report


def cmd_plot_data(cfg: RunConfig) -> dict:
    _require(cfg, "train", "eval")
    train, _ = _load_records(cfg.train)
    evaluation, _ = _load_records(cfg.eval)
    rows = duration_sweep(train, evaluation, cfg.float_list("durations"),
                          cfg.storage_params(horizon=len(evaluation)), cfg.delta,
                          cfg.samples, get_backend(cfg.backend, cfg.threads),
                          fine_delta=cfg.fine_delta)
    out = _out_dir(cfg)
    with open(out / "plot_data.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["duration", "strategy", "profit",
                                                "capture_ratio"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    report = {"command": "plot-data", "rows": len(rows), "config": cfg.as_dict()}
    _write_json(out / "plot_data.json", report)
    return report


def cmd_export_lp(cfg: RunConfig) -> dict:
    _require(cfg, "prices")
    records, _ = _load_records(cfg.prices)
    prices = _price_series(records, cfg.price_column)
    params = cfg.storage_params(horizon=len(prices))
    text = export_deterministic_model(prices, params, cfg.variant)
    out = _out_dir(cfg)
    path = out / f"model_{cfg.variant}.lp"
    path.write_text(text)
    report = {"command": "export-lp", "path": str(path), "T": len(prices),
              "variant": cfg.variant, "config": cfg.as_dict()}
    _write_json(out / "export_lp.json", report)
    return report


def cmd_oracle_check(cfg: RunConfig) -> dict:
    backend = get_backend(cfg.backend, cfg.threads)
    if cfg.mutate:
        backend = OffByOneBackend(backend)
    report = run_oracle_suite(backend, cfg.seeds, cfg.seed, cfg.max_T, cfg.max_S,
                              cfg.max_P, cfg.max_R)
    report = {"command": "oracle-check", "backend": backend.name, **report,
              "config": cfg.as_dict()}
    _write_json(_out_dir(cfg) / "oracle_check.json", report)
    return report


COMMANDS = {
    "forecast": cmd_forecast,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "plot-data": cmd_plot_data,
    "export-lp": cmd_export_lp,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="keyed text file (key = value per line)")
    a("--power-cap", dest="power_cap", type=float)
    a("--duration", type=float, help="energy-to-power ratio in hours")
    a("--energy-cap", dest="energy_cap", type=float)
    eff = common.add_mutually_exclusive_group()
    eff.add_argument("--eta", type=float, help="one-way efficiency")
    eff.add_argument("--roundtrip", type=float, help="round-trip efficiency (eta = sqrt)")
    a("--soc0", type=float)
    a("--delta", type=float)
    a("--samples", type=int, help="scenario count R")
    a("--backend", choices=["reference", "parallel"])
    a("--threads", type=int)
    a("--seed", type=int)
    a("--out")
    a("--train")
    a("--eval")
    a("--prices")
    a("--price-column", dest="price_column")
    a("--scenarios")
    a("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="storagedp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("forecast", parents=[common])
    solve = sub.add_parser("solve", parents=[common])
    solve.add_argument("--dump-values", dest="dump_values", action="store_true", default=None)
    sim = sub.add_parser("simulate", parents=[common])
    sim.add_argument("--strategy", required=True)
    sim.add_argument("--lag-prior", dest="lag_prior", type=float)
    sim.add_argument("--fine-delta", dest="fine_delta", type=float)
    bench = sub.add_parser("bench", parents=[common])
    bench.add_argument("--durations")
    bench.add_argument("--deltas")
    bench.add_argument("--horizon", type=int)
    plot = sub.add_parser("plot-data", parents=[common])
    plot.add_argument("--durations")
    plot.add_argument("--fine-delta", dest="fine_delta", type=float)
    lp = sub.add_parser("export-lp", parents=[common])
    lp.add_argument("--variant", choices=["exact", "relaxed", "restricted"])
    oc = sub.add_parser("oracle-check", parents=[common])
    oc.add_argument("--seeds", type=int)
    oc.add_argument("--max-T", dest="max_T", type=int)
    oc.add_argument("--max-S", dest="max_S", type=int)
    oc.add_argument("--max-P", dest="max_P", type=int)
    oc.add_argument("--max-R", dest="max_R", type=int)
    oc.add_argument("--mutate", action="store_true", default=None,
                    help="inject an off-by-one interpolation bug; the check must fail")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, vars(args))
        report = COMMANDS[args.command](cfg)
    except StorageDPError as exc:
        print(f"storagedp {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"storagedp {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    summary = {k: v for k, v in report.items() if k not in ("config", "failures")}
    print(json.dumps(summary, default=float))
    if args.command == "oracle-check" and not report["passed"]:
        print(f"oracle check failed on {len(report['failures'])} instance(s)", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
