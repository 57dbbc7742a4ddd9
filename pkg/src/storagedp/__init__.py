"""Discretized stochastic dynamic programming for energy storage valuation and bidding."""
from .backend import ParallelBackend, ReferenceBackend, get_backend
from .bidding import (
    ActionValueProfile,
    BidCurve,
    action_values,
    bid_curve,
    build_bid_curve,
    clear_bid,
    convexify_hypograph,
)
from .dp import ScenarioSet, ValueTable, backward_induction, solve_deterministic, value_at
from .errors import ConfigError, DataError, DomainError, InvariantError, StorageDPError
from .grid import Grid, TransitionTables, build_transition_tables
from .model import (
    DispatchSchedule,
    StorageParams,
    feasible_action_interval,
    transition,
    validate_schedule,
)

__version__ = "0.1.0"
