"""numba kernels behind ParallelBackend; every loop is parallel over state rows."""
import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is too old on some systems; prefer OpenMP
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(parallel=True, cache=True)
def gather(values, z_low, z_high, w):
    S, P = z_low.shape
    out = np.empty((S, P))
    for i in prange(S):
        for j in range(P):
            out[i, j] = (1.0 - w[i, j]) * values[z_low[i, j]] + w[i, j] * values[z_high[i, j]]
    return out


@njit(parallel=True, cache=True)
def mask_assign(matrix, mask, sentinel):
    S, P = matrix.shape
    out = np.empty((S, P))
    for i in prange(S):
        for j in range(P):
            out[i, j] = sentinel if mask[i, j] else matrix[i, j]
    return out


@njit(parallel=True, cache=True)
def outer(actions, prices):
    P = actions.shape[0]
    R = prices.shape[0]
    out = np.empty((P, R))
    for j in prange(P):
        for r in range(R):
            out[j, r] = actions[j] * prices[r]
    return out


@njit(parallel=True, cache=True)
def payoff_max(next_values, payoff):
    S, P = next_values.shape
    R = payoff.shape[1]
    out = np.full((S, R), -np.inf)
    arg = np.full((S, R), -1, dtype=np.int64)
    for i in prange(S):
        for j in range(P):
            v = next_values[i, j]
            if v == -np.inf:
                continue
            for r in range(R):
                q = payoff[j, r] + v
                # strict comparison keeps the smallest index on ties
                if q > out[i, r]:
                    out[i, r] = q
                    arg[i, r] = j
    return out, arg


@njit(parallel=True, cache=True)
def expectation(q, probs):
    S, R = q.shape
    out = np.empty(S)
    for i in prange(S):
        acc = 0.0
        for r in range(R):
            acc += q[i, r] * probs[r]
        out[i] = acc
    return out
