"""Pure NumPy implementations of the inner kernels.

Same signatures as the compiled ``_ckernels`` module; selected at import
time by :mod:`sinkdiff.kernels` when the extension is unavailable.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def lse_log_scaling(log_k, log_b, x):
    """``log(b / K^T e^x)`` computed as ``log b_j - LSE_l(log K_lj + x_l)``."""
    return log_b - logsumexp(log_k + x[:, None], axis=0)


def lse_step(log_k, log_a, log_b, x):
    log_v = lse_log_scaling(log_k, log_b, x)
    return log_a - logsumexp(log_k + log_v[None, :], axis=1)


def lse_log_plan(log_k, log_b, x):
    log_v = lse_log_scaling(log_k, log_b, x)
    return x[:, None] + log_k + log_v[None, :]


def max_log_cross_ratio(log_k):
    """``max_{i,j,k,l} L_ik + L_jl - L_jk - L_il`` over all index quadruples.

    Loops over row pairs and takes the full ``m x m`` table of column pairs
    for each, so every quadruple is visited.
    """
    n = log_k.shape[0]
    best = 0.0
    for i in range(n):
        for j in range(n):
            d = log_k[i] - log_k[j]
            table = d[:, None] - d[None, :]
            best = max(best, float(table.max()))
    return best
