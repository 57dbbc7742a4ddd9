"""Independent correctness oracles and LP model export.

Nothing here touches the transition tables or the kernel backends.
``exhaustive_deterministic`` enumerates every action sequence;
``expectimax`` is a memoized recursion over exact post-action states.  On
recombining grids (every action, including the power-cap endpoints, moves
the SoC by an integer number of grid steps) both compute exactly the value
the tensor DP computes.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .dp import ScenarioSet
from .errors import ConfigError, GuardError
from .grid import Grid
from .model import FEAS_TOL, DispatchSchedule, StorageParams, transition

MAX_SEQUENCES = 10**7
MAX_PATHS = 10**6
MAX_LIVE_STATES = 2 * 10**6
RESIDUE_BUCKET = 1e-12  # MWh


@dataclass(frozen=True)
class OracleLimits:
    max_T: int = 80
    max_S: int = 101
    max_P: int = 25
    max_R: int = 10
    max_sequences: int = MAX_SEQUENCES
    max_paths: int = MAX_PATHS
    max_live_states: int = MAX_LIVE_STATES


@dataclass(frozen=True)
class OracleInstance:
    params: StorageParams
    grid: Grid
    scenarios: ScenarioSet
    limits: OracleLimits = field(default_factory=OracleLimits)

    def check_size(self):
        lim = self.limits
        T, R = self.scenarios.T, self.scenarios.R
        for name, value, cap in (("T", T, lim.max_T), ("S", self.grid.S, lim.max_S),
                                 ("P", self.grid.P, lim.max_P), ("R", R, lim.max_R)):
            if value > cap:
                raise GuardError(f"oracle guard: {name}={value} exceeds limit {cap}")


def exhaustive_deterministic(instance: OracleInstance, merge_states: bool = False):
    """Best of all P**T action sequences for a single-sample instance.

    Infeasible prefixes are discarded as soon as they leave [0, s_bar], which
    removes exactly the sequences a full feasibility check would reject.

    With ``merge_states`` prefixes that reach the same SoC (within the
    residue bucket) at the same stage are merged, keeping the better one.
    Their continuations are identical, so the optimum is unchanged; the
    search then scales with the number of distinct reachable states rather
    than with P**T, which makes long desk-scale horizons enumerable.
    """
    instance.check_size()
    sc = instance.scenarios
    if sc.R != 1:
        raise GuardError("exhaustive enumeration needs a single-sample (R=1) instance")
    grid, params = instance.grid, instance.params
    T, P = sc.T, grid.P
    if not merge_states and P ** T > instance.limits.max_sequences:
        raise GuardError(f"oracle guard: P**T = {P}**{T} exceeds {instance.limits.max_sequences}")
    prices = sc.prices[:, 0]
    actions = grid.actions
    deltas = np.array([transition(float(a), params.efficiency) for a in actions])
    soc = np.array([params.initial_soc])
    obj = np.zeros(1)
    parents = []
    for t in range(T):
        nxt = soc[:, None] + deltas[None, :]
        val = obj[:, None] + prices[t] * actions[None, :]
        ok = (nxt >= -FEAS_TOL) & (nxt <= params.energy_cap + FEAS_TOL)
        rows, cols = np.nonzero(ok)
        soc, obj = nxt[rows, cols], val[rows, cols]
        if merge_states:
            key = np.rint(soc / RESIDUE_BUCKET).astype(np.int64)
            # best objective first within each key; ties keep the earliest prefix
            order = np.lexsort((np.arange(len(obj)), -obj, key))
            first = np.ones(len(order), dtype=bool)
            first[1:] = key[order][1:] != key[order][:-1]
            keep = order[first]
            rows, cols, soc, obj = rows[keep], cols[keep], soc[keep], obj[keep]
            if len(soc) > instance.limits.max_live_states:
                raise GuardError(f"oracle guard: {len(soc)} live states exceed "
                                 f"{instance.limits.max_live_states}")
        parents.append((rows, cols))
    best = int(np.argmax(obj))
    idx = []
    k = best
    for rows, cols in reversed(parents):
        idx.append(cols[k])
        k = rows[k]
    idx.reverse()
    powers = actions[idx]
    socs = np.empty(T)
    s = params.initial_soc
    for t, p in enumerate(powers):
        s = s + transition(float(p), params.efficiency)
        socs[t] = s
    return float(obj[best]), DispatchSchedule(powers, socs)


def _state_key(s: float, delta: float):
    k = round(s / delta)
    return k, round((s - k * delta) / RESIDUE_BUCKET)


def expectimax(instance: OracleInstance, memoize: bool = True) -> float:
    """Expected optimal value at ``initial_soc`` by direct Bellman recursion.

    Without memoization the number of visited paths is guarded by
    ``limits.max_paths``.
    """
    instance.check_size()
    grid, params, sc = instance.grid, instance.params, instance.scenarios
    T = sc.T
    if not memoize and grid.P ** T > instance.limits.max_paths:
        raise GuardError(f"oracle guard: {grid.P}**{T} paths exceed {instance.limits.max_paths}")
    s_bar, delta, eta = params.energy_cap, grid.delta, params.efficiency
    actions = [float(a) for a in grid.actions]
    prices = sc.prices.tolist()
    probs = sc.probs.tolist()
    memo = {}

    def snap(s):
        k = round(s / delta)
        if abs(s - k * delta) <= 1e-10:
            return k * delta
        return min(max(s, 0.0), s_bar)

    def value(t, s):
        if t == T:
            return 0.0
        key = (t,) + _state_key(s, delta)
        if memoize and key in memo:
            return memo[key]
        moves = []
        for p in actions:
            nxt = s + transition(p, eta)
            if -FEAS_TOL <= nxt <= s_bar + FEAS_TOL:
                moves.append((p, value(t + 1, snap(nxt))))
        total = 0.0
        for lam, pi in zip(prices[t], probs[t]):
            total += pi * max(lam * p + v for p, v in moves)
        if memoize:
            memo[key] = total
        return total

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * T + 100))
    try:
        return value(0, params.initial_soc)
    finally:
        sys.setrecursionlimit(limit)


# ---------------------------------------------------------------- instances

# (efficiency, power cap in grid steps): both endpoints recombine
RECOMBINING = (
    (1.0, 1.0),
    (1.0, 2.0),
    (math.sqrt(0.5), 1 / math.sqrt(0.5)),
    (math.sqrt(1 / 3), 1 / math.sqrt(1 / 3)),
)


def random_instance(rng, max_T=4, max_S=5, max_P=5, max_R=3, recombining=True,
                    limits: OracleLimits | None = None) -> OracleInstance:
    """Small random instance; ``recombining`` keeps every reachable state on the lattice."""
    while True:
        delta = float(rng.choice([0.25, 0.5, 1.0]))
        n_s = int(rng.integers(1, max_S))
        if recombining:
            eta, steps = RECOMBINING[rng.integers(len(RECOMBINING))]
            power_cap = steps * delta
        else:
            eta = float(rng.uniform(0.7, 1.0))
            power_cap = float(rng.uniform(0.3, 1.6)) * delta
        grid = Grid.build(StorageParams(power_cap, n_s * delta, eta), delta)
        if grid.P <= max_P:
            break
    T = int(rng.integers(1, max_T + 1))
    R = int(rng.integers(1, max_R + 1))
    s0 = float(grid.states[rng.integers(grid.S)])
    params = StorageParams(power_cap, grid.energy_cap, eta, s0, T)
    prices = np.round(rng.normal(10.0, 25.0, size=(T, R)), 3)
    probs = rng.dirichlet(np.ones(R), size=T)
    return OracleInstance(params, grid, ScenarioSet(prices, probs), limits or OracleLimits())


# ---------------------------------------------------------------- LP export

LP_VARIANTS = ("exact", "relaxed", "restricted")


def _num(x: float) -> str:
    return f"{x:.12g}"


def _term(coef: float, var: str, first: bool = False) -> str:
    sign = "-" if coef < 0 else "+"
    body = f"{_num(abs(coef))} {var}"
    if first:
        return body if sign == "+" else f"- {body}"
    return f"{sign} {body}"


def _wrap(label: str, terms, per_line: int = 6):
    """Split long expressions over continuation lines (LP readers cap line length)."""
    chunks = [terms[k:k + per_line] for k in range(0, len(terms), per_line)] or [[]]
    first = " ".join(([label] if label else []) + chunks[0])
    return [" " + first] + ["   " + " ".join(chunk) for chunk in chunks[1:]]


def export_deterministic_model(prices, params: StorageParams, variant: str = "exact") -> str:
    """CPLEX-LP text of the separate charge/discharge model with a binary per stage.

    ``relaxed`` lets each binary range over [0, 1]; ``restricted`` does the
    same and also fixes discharge to zero wherever the price is not positive.
    """
    if variant not in LP_VARIANTS:
        raise ConfigError(f"unknown LP variant {variant!r}; choose from {LP_VARIANTS}")
    prices = np.asarray(prices, dtype=float)
    T = len(prices)
    eta, p_bar, s_bar = params.efficiency, params.power_cap, params.energy_cap
    names = [(f"p_c_{t}", f"p_d_{t}", f"s_{t}", f"z_{t}") for t in range(1, T + 1)]
    lines = [f"\\ storage arbitrage, T={T}, variant={variant}", "Maximize"]
    obj = []
    for t, (pc, pd, _, _) in enumerate(names):
        obj.append(_term(-prices[t], pc, first=(t == 0)))
        obj.append(_term(prices[t], pd))
    lines.extend(_wrap("obj:", obj))
    lines.append("Subject To")
    for t, (pc, pd, s, z) in enumerate(names):
        terms = [f"{s}"]
        if t > 0:
            terms.append(f"- {names[t - 1][2]}")
        terms += [_term(-eta, pc), _term(1 / eta, pd)]
        rhs = params.initial_soc if t == 0 else 0.0
        lines.append(f" soc_{t + 1}: {' '.join(terms)} = {_num(rhs)}")
        lines.append(f" charge_cap_{t + 1}: {pc} {_term(-p_bar, z)} <= 0")
        lines.append(f" discharge_cap_{t + 1}: {pd} {_term(p_bar, z)} <= {_num(p_bar)}")
    lines.append("Bounds")
    for t, (pc, pd, s, z) in enumerate(names):
        lines.append(f" 0 <= {pc} <= {_num(p_bar)}")
        if variant == "restricted" and prices[t] <= 0:
            lines.append(f" {pd} = 0")
        else:
            lines.append(f" 0 <= {pd} <= {_num(p_bar)}")
        lines.append(f" 0 <= {s} <= {_num(s_bar)}")
        lines.append(f" 0 <= {z} <= 1")
    if variant == "exact":
        lines.append("Binaries")
        lines.extend(_wrap("", [z for *_, z in names]))
    lines.append("End")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- suite

class OffByOneBackend:
    """Sentinel backend reading the next grid point too high when interpolating.

    Used by ``oracle-check --mutate`` to prove the suite catches a broken kernel.
    """

    name = "mutant"

    def __init__(self, inner):
        self._inner = inner

    def __getattr__(self, attr):
        return getattr(self._inner, attr)

    def gather_interpolate(self, values, tables):
        values = np.asarray(values, dtype=float)
        top = len(values) - 1
        w = tables.interp_weight
        low = np.minimum(tables.z_low + 1, top)
        high = np.minimum(tables.z_high + 1, top)
        return (1.0 - w) * values[low] + w * values[high]


def run_oracle_suite(backend, seeds: int = 200, seed: int = 0, max_T: int = 4,
                     max_S: int = 5, max_P: int = 5, max_R: int = 3, tol: float = 1e-9,
                     limits: OracleLimits | None = None) -> dict:
    """Compare tensor DP against expectimax on ``seeds`` random recombining instances."""
    from .dp import backward_induction, value_at
    from .grid import build_transition_tables

    limits = limits or OracleLimits(max_T=8, max_S=9, max_P=7, max_R=5)
    for name, value, cap in (("T", max_T, limits.max_T), ("S", max_S, limits.max_S),
                             ("P", max_P, limits.max_P), ("R", max_R, limits.max_R)):
        if value > cap:
            raise GuardError(f"oracle guard: max {name}={value} exceeds limit {cap}")
    failures = []
    worst = 0.0
    for k in range(seeds):
        rng = np.random.default_rng([seed, k])
        inst = random_instance(rng, max_T, max_S, max_P, max_R, limits=limits)
        table = backward_induction(inst.grid, build_transition_tables(inst.grid),
                                   inst.scenarios, backend)
        got = value_at(table, 0, inst.params.initial_soc)
        want = expectimax(inst)
        err = abs(got - want)
        worst = max(worst, err)
        if err > tol:
            failures.append({"instance": k, "dp": got, "oracle": want, "error": err})
    return {"instances": seeds, "seed": seed, "tolerance": tol, "max_error": worst,
            "failures": failures, "passed": not failures}
