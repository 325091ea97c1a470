"""Log-domain Sinkhorn-Knopp recursion and convergence metrics.

The iterate is ``x = log u``; one step maps it to

    F(x) = log a - log(K (b / K^T e^x)),

and the associated plan is ``P(x) = diag(e^x) K diag(b / K^T e^x)``.
Two evaluation modes are available: ``"naive"`` forms the Gibbs kernel
``K = exp(-C/eps)`` explicitly, ``"lse"`` works on ``-C/eps`` through nested
log-sum-exp reductions and never overflows for finite input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from . import kernels
from .errors import KernelUnderflowError, ValidationError
from .problem import TransportInstance

Mode = Literal["naive", "lse"]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
CONTRACTION_MAX_ENTRIES = 10_000


@dataclass(frozen=True)
class SinkhornState:
    x: np.ndarray
    iteration: int
    marginal_violation: float


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics at iterate ``k``.

    ``hilbert_step`` is ``d_H(u_{k+1}, u_k)``; ``variation_step`` is the
    sup-norm change of the centered iterate.
    """

    iteration: int
    marginal_violation: float
    hilbert_step: float
    variation_step: float


@dataclass
class SolveReport:
    final_state: SinkhornState
    converged: bool
    history: list[IterationRecord] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None

    @property
    def x(self) -> np.ndarray:
        return self.final_state.x


class ContractionRatio(NamedTuple):
    theta: float
    kappa: float


def gibbs_kernel(inst: TransportInstance) -> np.ndarray:
    """``K = exp(-C / eps)``; raises if any entry underflows to zero."""
    with np.errstate(under="ignore"):
        K = np.exp(inst.log_kernel)
    if not np.all(K > 0) or not np.all(np.isfinite(K)):
        raise KernelUnderflowError(
            "Gibbs kernel left the double range (min -C/eps = "
            f"{inst.log_kernel.min():.4g}); use mode='lse'"
        )
    return K


def _naive_scaling(x, inst):
    K = gibbs_kernel(inst)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        ex = np.exp(x)
        s = K.T @ ex
        w = inst.b / s
        q = K @ w
    if not (
        np.all(np.isfinite(ex)) and np.all(ex > 0)
        and np.all(np.isfinite(s)) and np.all(s > 0)
        and np.all(np.isfinite(q)) and np.all(q > 0)
    ):
        raise KernelUnderflowError(
            "over/underflow in explicit-kernel products; use mode='lse'"
        )
    return K, ex, s, w, q


def step(x, inst: TransportInstance) -> np.ndarray:
    """One Sinkhorn step with the explicit kernel."""
    x = np.asarray(x, dtype=np.float64)
    _, _, _, _, q = _naive_scaling(x, inst)
    return np.log(inst.a) - np.log(q)


def step_lse(x, inst: TransportInstance) -> np.ndarray:
    """One Sinkhorn step through nested log-sum-exp; same map as :func:`step`."""
    x = np.asarray(x, dtype=np.float64)
    return kernels.lse_step(inst.log_kernel, np.log(inst.a), np.log(inst.b), x)


def apply_step(x, inst: TransportInstance, mode: Mode = "lse") -> np.ndarray:
    if mode == "lse":
        return step_lse(x, inst)
    if mode == "naive":
        return step(x, inst)
    raise ValueError(f"unknown mode {mode!r}")


def plan(x, inst: TransportInstance, mode: Mode = "lse") -> np.ndarray:
    """Transport plan ``diag(e^x) K diag(b / K^T e^x)``.

    Column sums equal ``b`` by construction.
    """
    x = np.asarray(x, dtype=np.float64)
    if mode == "naive":
        K, ex, s, w, _ = _naive_scaling(x, inst)
        return ex[:, None] * K * w[None, :]
    if mode == "lse":
        return np.exp(kernels.lse_log_plan(inst.log_kernel, np.log(inst.b), x))
    raise ValueError(f"unknown mode {mode!r}")


def marginal_violation(x, inst: TransportInstance, mode: Mode = "lse") -> float:
    """``||P(x) 1_m - a||_inf``; the target side is exact by construction."""
    return float(np.max(np.abs(plan(x, inst, mode).sum(axis=1) - inst.a)))


def solve(
    inst: TransportInstance,
    x0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    record: bool = False,
    mode: Mode = "lse",
    record_iterates: bool = False,
) -> SolveReport:
    """Iterate ``x <- F(x)`` until the source marginal is matched to ``tol``.

    The violation at ``x_k`` is read off the next step for free, since
    ``P(x_k) 1_m = a * exp(x_k - x_{k+1})``. The returned state is the last
    iterate whose violation was measured. Running out of iterations is
    reported through ``converged=False``.
    """
    if not tol > 0:
        raise ValidationError("tol must be > 0", field="tol")
    n, _ = inst.shape
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n,) or not np.all(np.isfinite(x)):
        raise ValidationError("x0 must be a finite vector of length n", field="x0")

    a = inst.a
    if mode == "lse":
        log_k = np.ascontiguousarray(inst.log_kernel)
        log_a, log_b = np.log(a), np.log(inst.b)

        def F(z):
            return kernels.lse_step(log_k, log_a, log_b, z)
    elif mode == "naive":
        gibbs_kernel(inst)

        def F(z):
            return step(z, inst)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    history: list[IterationRecord] = []
    iterates: list[np.ndarray] | None = [] if record_iterates else None
    k = 0
    while True:
        fx = F(x)
        delta = x - fx
        viol = float(np.max(np.abs(a * np.expm1(delta))))
        if record:
            cd = delta - delta.mean()
            history.append(
                IterationRecord(k, viol, float(np.ptp(delta)), float(np.max(np.abs(cd))))
            )
        if iterates is not None:
            iterates.append(x.copy())
        if viol <= tol or k >= max_iter:
            break
        x = fx
        k += 1
    state = SinkhornState(x, k, viol)
    return SolveReport(state, viol <= tol, history, iterates)


def center(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x - x.mean()


def variation_seminorm(x) -> float:
    """``max(x) - min(x)``."""
    x = np.asarray(x, dtype=np.float64)
    return float(x.max() - x.min())


def hilbert_distance(u, v) -> float:
    """Hilbert projective distance between two positive vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u <= 0) or np.any(v <= 0):
        raise ValidationError("Hilbert distance needs strictly positive vectors")
    return variation_seminorm(np.log(u) - np.log(v))


def contraction_ratio(K, log_kernel=None) -> ContractionRatio:
    """Birkhoff contraction ratio of a positive kernel.

    ``theta = max_{i,j,k,l} K_ik K_jl / (K_jk K_il)`` is found by exhaustive
    search over all index quadruples, which costs ``O(n^2 m^2)``; inputs with
    more than 10^4 entries are rejected. ``kappa = (sqrt(theta) - 1) /
    (sqrt(theta) + 1)``. Pass ``log_kernel`` instead of ``K`` (e.g. ``-C/eps``)
    when the kernel itself would underflow.
    """
    if log_kernel is None:
        K = np.asarray(K, dtype=np.float64)
        if K.ndim != 2 or not np.all(K > 0) or not np.all(np.isfinite(K)):
            raise ValidationError("contraction_ratio needs a finite positive matrix")
        log_kernel = np.log(K)
    log_kernel = np.asarray(log_kernel, dtype=np.float64)
    if log_kernel.size > CONTRACTION_MAX_ENTRIES:
        raise ValidationError(
            f"exhaustive cross-ratio search limited to n*m <= {CONTRACTION_MAX_ENTRIES}"
            f" (got {log_kernel.size})"
        )
    s = kernels.max_log_cross_ratio(log_kernel)
    # (e^{s/2} - 1) / (e^{s/2} + 1) == tanh(s/4), which does not overflow.
    return ContractionRatio(math.exp(s) if s < 709 else math.inf, math.tanh(s / 4.0))
