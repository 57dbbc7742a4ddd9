import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from storagedp import (
    ActionValueProfile,
    ScenarioSet,
    StorageParams,
    ValueTable,
    action_values,
    backward_induction,
    bid_curve,
    build_bid_curve,
    clear_bid,
    convexify_hypograph,
    feasible_action_interval,
    get_backend,
)
from storagedp.bidding import BID_COLUMNS, curves_from_csv, curves_to_csv, curves_to_json
from storagedp.errors import DomainError
from storagedp.grid import Grid, build_transition_tables

ETA85 = math.sqrt(0.85)


def hull_oracle(points):
    """O(n^3): a point is a vertex iff no chord between two others reaches it or above."""
    pts = sorted(set(points))
    # keep the best value per quantity
    best = {}
    for p, u in pts:
        best[p] = max(u, best.get(p, -np.inf))
    pts = sorted(best.items())
    out = []
    for k, (p, u) in enumerate(pts):
        dominated = False
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                (pa, ua), (pb, ub) = pts[a], pts[b]
                if a == k or b == k or not pa < p < pb:
                    continue
                chord = ua + (ub - ua) * (p - pa) / (pb - pa)
                if chord >= u - 1e-12:
                    dominated = True
        if not dominated:
            out.append((p, u))
    return out


def test_action_values_hand_lookup(tiny):
    _, grid, _ = tiny
    table = ValueTable(np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 4.0]]), grid)
    prof = action_values(table, 0, 0.5, grid)
    assert prof.points == [(-0.5, 4.0), (0.0, 1.0), (0.5, 0.0)]


def test_action_values_terminal_and_empty(tiny):
    _, grid, _ = tiny
    table = ValueTable(np.array([[0.0, 1.0, 2.0], [0.0, 0.0, 0.0]]), grid)
    assert not action_values(table, 0, 0.5, grid).u.any()
    prof = action_values(ValueTable(np.array([[0, 0, 0], [0, 1.0, 4.0]]), grid), 0, 0.0, grid)
    assert (prof.p <= 0).all()
    with pytest.raises(DomainError):
        action_values(table, 1, 0.5, grid)
    with pytest.raises(DomainError):
        action_values(table, 0, 1.2, grid)


def test_off_grid_profile_respects_true_interval():
    params = StorageParams(1, 4, ETA85)
    grid = Grid.build(params, 0.1)
    rng = np.random.default_rng(0)
    table = ValueTable(np.vstack([np.cumsum(rng.random(grid.S)), np.zeros(grid.S)]), grid)
    s = 0.37 * ETA85
    prof = action_values(table, 0, s, grid)
    lo, hi = feasible_action_interval(s, params)
    assert prof.p.min() >= lo - 1e-9 and prof.p.max() <= hi + 1e-9
    assert prof.p.min() == pytest.approx(lo) and 0.0 in prof.p


def test_convexify_examples():
    dent = ActionValueProfile(np.array([0.0, 1.0, 2.0]), np.array([0.0, -2.0, 0.0]))
    assert convexify_hypograph(dent).points == [(0.0, 0.0), (2.0, 0.0)]
    concave = ActionValueProfile(np.array([-1.0, 0.0, 0.5, 1.0]),
                                 np.array([9.0, 5.0, 2.5, 0.0]))
    assert convexify_hypograph(concave).points == [(-1.0, 9.0), (0.0, 5.0), (1.0, 0.0)]


def test_convexify_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(300):
        p = np.round(rng.uniform(-1, 1, 10), 2)
        u = np.round(rng.normal(0, 3, 10), 2)
        got = convexify_hypograph(ActionValueProfile(p, u)).points
        assert got == pytest.approx(hull_oracle(list(zip(p, u))))


def test_build_curve_example():
    hull = ActionValueProfile(np.array([-1.0, 0.0, 1.0]), np.array([9.0, 5.0, 0.0]))
    curve = build_bid_curve(hull, 0.5, 3)
    assert curve.segments == [(-1.0, 0.0, 4.0), (0.0, 1.0, 5.0)]
    assert clear_bid(curve, 4.5) == 0.0
    assert clear_bid(curve, 4.0) == 0.0  # tie goes to the larger quantity
    assert clear_bid(curve, 5.0) == 1.0
    assert clear_bid(curve, 100.0) == 1.0
    assert clear_bid(curve, -100.0) == -1.0


def test_single_vertex_curve():
    curve = build_bid_curve(ActionValueProfile(np.array([0.0]), np.array([2.0])), 0.0, 0)
    assert curve.segments == []
    assert clear_bid(curve, 50.0) == 0.0


def test_terminal_curve_prices_zero(tiny):
    _, grid, _ = tiny
    table = ValueTable(np.zeros((2, 3)), grid)
    curve = bid_curve(table, 0, 0.5, grid)
    assert curve.prices == [0.0]
    assert curve.quantities.tolist() == [-0.5, 0.5]


def test_build_curve_errors():
    with pytest.raises(DomainError):
        build_bid_curve(ActionValueProfile(np.array([0.0, 0.0]), np.array([1.0, 2.0])), 0, 0)
    with pytest.raises(DomainError):
        build_bid_curve(ActionValueProfile(np.array([0.0, 1.0, 2.0]),
                                           np.array([0.0, -2.0, 0.0])), 0, 0)


def test_near_duplicate_quantities_merge():
    prof = ActionValueProfile(np.array([0.0, 1e-14, 1.0]), np.array([1.0, 3.0, 0.0]))
    hull = convexify_hypograph(prof)
    assert len(hull) == 2 and hull.u[0] == 3.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=12))
def test_concave_profile_equals_finite_differences(slopes):
    # strictly decreasing slopes on a uniform quantity grid give a concave profile
    slopes = np.sort(np.unique(np.round(slopes, 3)))[::-1]
    p = np.arange(len(slopes) + 1, dtype=float) - 2
    u = np.concatenate([[0.0], np.cumsum(slopes)])
    direct = -np.diff(u) / np.diff(p)
    curve = build_bid_curve(convexify_hypograph(ActionValueProfile(p, u)), 0, 0)
    np.testing.assert_allclose(curve.prices, direct, rtol=1e-12, atol=1e-9)


def _random_table(rng):
    eta = rng.uniform(0.6, 1.0)
    grid = Grid.build(StorageParams(rng.uniform(0.2, 1.5), 2.0, eta), 0.1)
    sc = ScenarioSet.uniform(rng.normal(30, 30, size=(4, 3)))
    return grid, backward_induction(grid, build_transition_tables(grid), sc,
                                    get_backend("parallel"))


def test_curves_are_monotone_and_clear_optimally():
    rng = np.random.default_rng(11)
    for _ in range(40):
        grid, table = _random_table(rng)
        for _ in range(3):
            s = rng.uniform(0, grid.energy_cap)
            t = int(rng.integers(table.T))
            curve = bid_curve(table, t, s, grid)
            assert np.all(np.diff(curve.prices) >= -1e-9)
            lams = np.sort(rng.normal(30, 60, 50))
            cleared = [clear_bid(curve, lam) for lam in lams]
            assert np.all(np.diff(cleared) >= 0)
            for lam, q in zip(lams, cleared):
                score = lam * curve.quantities + curve.values
                k = int(np.flatnonzero(curve.quantities == q)[0])
                assert score[k] >= score.max() - 1e-9 * max(1, abs(score.max()))


def test_curve_is_deterministic():
    grid, table = _random_table(np.random.default_rng(3))
    a = bid_curve(table, 1, 0.73, grid)
    b = bid_curve(table, 1, 0.73, grid)
    assert a.to_dict() == b.to_dict()


def test_serialization_round_trip():
    grid, table = _random_table(np.random.default_rng(4))
    curves = [bid_curve(table, t, 0.5, grid) for t in range(table.T)]
    buf = io.StringIO()
    curves_to_csv(curves, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(BID_COLUMNS)
    parsed = curves_from_csv(text)
    for c in curves:
        got = parsed[(c.stage, c.incoming_state)]
        np.testing.assert_allclose(np.array(got), np.array(c.segments), rtol=1e-11)
    blob = json.loads(curves_to_json(curves))
    assert blob[0]["stage"] == 0 and "vertices" in blob[0]


def test_csv_format_is_stable():
    hull = ActionValueProfile(np.array([-1.0, 0.0, 1.0]), np.array([9.0, 5.0, 0.0]))
    buf = io.StringIO()
    curves_to_csv([build_bid_curve(hull, 0.5, 3)], buf)
    assert buf.getvalue() == ("stage,s_in,q_from,q_to,price\n"
                              "3,0.5,-1,0,4\n"
                              "3,0.5,0,1,5\n")
