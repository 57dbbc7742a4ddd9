"""Monotone price-quantity bid curves from the value table.

For an incoming state ``s`` and delivery interval ``t`` the action-value
profile maps each feasible action ``p`` to ``V[t + 1](s + F(p))``.  Its
upper concave envelope gives vertices whose negated slopes are the segment
prices of the bid, which are non-decreasing in quantity by concavity.
"""
from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .dp import ValueTable, candidate_actions, next_states
from .errors import DomainError
from .grid import Grid

MERGE_TOL = 1e-12  # MW


@dataclass(frozen=True)
class ActionValueProfile:
    p: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if p.shape != u.shape or p.ndim != 1 or p.size == 0:
            raise DomainError("profile needs matching, non-empty p and u vectors")
        if not np.isfinite(u).all():
            raise DomainError("profile values must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "u", u)

    @property
    def points(self):
        return list(zip(self.p.tolist(), self.u.tolist()))

    def __len__(self):
        return len(self.p)


@dataclass(frozen=True)
class BidCurve:
    quantities: np.ndarray
    values: np.ndarray
    segments: list = field(default_factory=list)  # (q_from, q_to, price)
    incoming_state: float = 0.0
    stage: int = 0

    @property
    def prices(self):
        return [seg[2] for seg in self.segments]

    @property
    def vertices(self):
        return list(zip(self.quantities.tolist(), self.values.tolist()))

    def to_rows(self):
        return [
            {"stage": self.stage, "s_in": self.incoming_state,
             "q_from": q0, "q_to": q1, "price": price}
            for q0, q1, price in self.segments
        ]

    def to_dict(self):
        return {
            "stage": self.stage,
            "s_in": self.incoming_state,
            "vertices": [[q, u] for q, u in self.vertices],
            "segments": [{"q_from": q0, "q_to": q1, "price": pr}
                         for q0, q1, pr in self.segments],
        }


BID_COLUMNS = ["stage", "s_in", "q_from", "q_to", "price"]


def curves_to_csv(curves, fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=BID_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for curve in curves:
        for row in curve.to_rows():
            writer.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v)
                             for k, v in row.items()})


def curves_to_json(curves) -> str:
    return json.dumps([c.to_dict() for c in curves], indent=1)


def curves_from_csv(text: str):
    """Parse bid rows back into ``{(stage, s_in): [(q_from, q_to, price), ...]}``."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = (int(row["stage"]), float(row["s_in"]))
        out.setdefault(key, []).append(
            (float(row["q_from"]), float(row["q_to"]), float(row["price"])))
    return out


def action_values(table: ValueTable, t: int, s: float, grid: Grid,
                  tables=None) -> ActionValueProfile:
    """Profile of next-stage values over the actions feasible from ``s`` in interval ``t``.

    Values are read from ``values[t + 1]`` at the exact post-action state, so
    an off-grid ``s`` is handled by interpolation and feasibility is checked
    against the true state.  Off-grid states also get the lattice-return
    actions of :func:`candidate_actions`.  ``tables`` is accepted for
    signature compatibility and is not required.
    """
    if not 0 <= t < table.T:
        raise DomainError(f"interval {t} outside [0, {table.T - 1}]")
    if not -1e-9 <= s <= grid.energy_cap + 1e-9:
        raise DomainError(f"state {s} outside [0, {grid.energy_cap}]")
    p = candidate_actions(grid, s)
    u = np.interp(next_states(s, p, grid), grid.states, table.values[t + 1])
    return ActionValueProfile(p, u)


def _price(a, b):
    return -(b[1] - a[1]) / (b[0] - a[0])


def convexify_hypograph(profile: ActionValueProfile) -> ActionValueProfile:
    """Upper concave hull (monotone chain); collinear interior points are dropped."""
    order = np.lexsort((profile.u, profile.p))
    pts = []
    for k in order:
        q = (float(profile.p[k]), float(profile.u[k]))
        if pts and abs(q[0] - pts[-1][0]) < MERGE_TOL:
            # same quantity: keep the larger value (sorted ascending in u)
            pts[-1] = (pts[-1][0], max(pts[-1][1], q[1]))
            continue
        pts.append(q)
    hull = []
    for q in pts:
        # the turn test uses the same arithmetic as the segment prices, so the
        # prices of the finished hull are strictly increasing even for
        # nearly collinear points
        while len(hull) >= 2 and _price(hull[-2], hull[-1]) >= _price(hull[-1], q):
            hull.pop()
        hull.append(q)
    p, u = zip(*hull)
    return ActionValueProfile(np.array(p), np.array(u))


def build_bid_curve(hull: ActionValueProfile, s: float, t: int) -> BidCurve:
    q, u = hull.p, hull.u
    dq = np.diff(q)
    if np.any(dq <= 0):
        raise DomainError("hull quantities must be strictly ascending without duplicates")
    prices = -np.diff(u) / dq
    if np.any(np.diff(prices) < -1e-9 * max(1.0, float(np.abs(prices).max(initial=0)))):
        raise DomainError("hull is not concave: segment prices decrease")
    segments = [(float(q[k]), float(q[k + 1]), float(prices[k])) for k in range(len(dq))]
    return BidCurve(q.copy(), u.copy(), segments, float(s), int(t))


def bid_curve(table: ValueTable, t: int, s: float, grid: Grid) -> BidCurve:
    """Convenience: profile, hull and curve for ``(t, s)`` in one call."""
    return build_bid_curve(convexify_hypograph(action_values(table, t, s, grid)), s, t)


def clear_bid(curve: BidCurve, price: float) -> float:
    """Quantity awarded at clearing price ``price``.

    The awarded quantity is the largest vertex whose incoming segment price
    is at most ``price``; at a tie the larger quantity wins.
    """
    k = bisect.bisect_right(curve.prices, price)
    return float(curve.quantities[k])
