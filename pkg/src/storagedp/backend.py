"""Compute kernels for one stage of tensor-based backward induction.

A stage is exactly one pass of

    gather_interpolate -> mask_assign -> outer_payoff
        -> broadcast_payoff_and_max -> expectation

``ReferenceBackend`` writes each kernel as plain NumPy array algebra and
builds the explicit (state, action, price) tensor in row blocks.
``ParallelBackend`` compiles fused loops with numba and splits the state
rows across threads.  Both return the same values; only the summation order
of ``expectation`` may differ.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, DomainError, InvariantError

NEG_INF = -np.inf
SIMPLEX_TOL = 1e-9


def check_simplex(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise DomainError("probabilities must be a non-empty vector")
    if not (np.isfinite(probs).all() and np.all(probs >= 0)
            and abs(probs.sum() - 1.0) <= SIMPLEX_TOL):
        raise DomainError(f"probabilities do not form a simplex (sum={probs.sum()!r})")
    return probs


class KernelSet:
    """Kernel contract shared by all backends."""

    name = "abstract"

    def __init__(self, threads: int | None = None):
        self.threads = threads or os.cpu_count() or 1

    def __repr__(self):
        return f"{type(self).__name__}(threads={self.threads})"

    def gather_interpolate(self, values, tables):
        raise NotImplementedError

    def mask_assign(self, matrix, mask, sentinel=NEG_INF):
        raise NotImplementedError

    def outer_payoff(self, actions, prices):
        raise NotImplementedError

    def broadcast_payoff_and_max(self, next_values, payoff, return_argmax=False):
        raise NotImplementedError

    def expectation(self, q, probs):
        raise NotImplementedError


def _check_mask(matrix, mask):
    if matrix.shape != mask.shape:
        raise DomainError(f"mask shape {mask.shape} != matrix shape {matrix.shape}")


def _check_payoff(next_values, payoff):
    if next_values.ndim != 2 or payoff.ndim != 2 or next_values.shape[1] != payoff.shape[0]:
        raise DomainError(
            f"incompatible shapes {next_values.shape} and {payoff.shape}")


class ReferenceBackend(KernelSet):
    name = "reference"
    # bound on the explicit tensor built per row block
    block_elems = 1 << 22

    def __init__(self, threads: int | None = None):
        super().__init__(1)

    def gather_interpolate(self, values, tables):
        values = np.asarray(values, dtype=float)
        w = tables.interp_weight
        return (1.0 - w) * values[tables.z_low] + w * values[tables.z_high]

    def mask_assign(self, matrix, mask, sentinel=NEG_INF):
        _check_mask(matrix, mask)
        return np.where(mask, sentinel, matrix)

    def outer_payoff(self, actions, prices):
        return np.outer(np.asarray(actions, dtype=float), np.asarray(prices, dtype=float))

    def broadcast_payoff_and_max(self, next_values, payoff, return_argmax=False):
        _check_payoff(next_values, payoff)
        S, P = next_values.shape
        R = payoff.shape[1]
        out = np.empty((S, R))
        arg = np.empty((S, R), dtype=np.int64) if return_argmax else None
        rows = max(1, self.block_elems // max(1, P * R))
        for start in range(0, S, rows):
            stop = min(S, start + rows)
            q_all = payoff[None, :, :] + next_values[start:stop, :, None]
            if return_argmax:
                idx = np.argmax(q_all, axis=1)
                arg[start:stop] = idx
                out[start:stop] = np.take_along_axis(q_all, idx[:, None, :], axis=1)[:, 0, :]
            else:
                out[start:stop] = q_all.max(axis=1)
        if np.isneginf(out).any():
            raise InvariantError("a state row has no feasible action")
        return (out, arg) if return_argmax else out

    def expectation(self, q, probs):
        probs = check_simplex(probs)
        return q @ probs


class ParallelBackend(KernelSet):
    name = "parallel"

    def __init__(self, threads: int | None = None):
        super().__init__(threads)
        from . import _kernels
        self._k = _kernels

    def _set_threads(self):
        import numba
        numba.set_num_threads(max(1, min(self.threads, numba.config.NUMBA_NUM_THREADS)))

    def gather_interpolate(self, values, tables):
        self._set_threads()
        return self._k.gather(np.ascontiguousarray(values, dtype=float), tables.z_low,
                              tables.z_high, tables.interp_weight)

    def mask_assign(self, matrix, mask, sentinel=NEG_INF):
        _check_mask(matrix, mask)
        self._set_threads()
        return self._k.mask_assign(np.ascontiguousarray(matrix, dtype=float),
                                   np.ascontiguousarray(mask), float(sentinel))

    def outer_payoff(self, actions, prices):
        self._set_threads()
        return self._k.outer(np.ascontiguousarray(actions, dtype=float),
                             np.ascontiguousarray(prices, dtype=float))

    def broadcast_payoff_and_max(self, next_values, payoff, return_argmax=False):
        _check_payoff(next_values, payoff)
        self._set_threads()
        out, arg = self._k.payoff_max(np.ascontiguousarray(next_values, dtype=float),
                                      np.ascontiguousarray(payoff, dtype=float))
        if (arg < 0).any():
            raise InvariantError("a state row has no feasible action")
        return (out, arg) if return_argmax else out

    def expectation(self, q, probs):
        probs = check_simplex(probs)
        self._set_threads()
        return self._k.expectation(np.ascontiguousarray(q, dtype=float), probs)


BACKENDS = {"reference": ReferenceBackend, "parallel": ParallelBackend}


def get_backend(name: str = "parallel", threads: int | None = None) -> KernelSet:
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise ConfigError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
    return cls(threads)
