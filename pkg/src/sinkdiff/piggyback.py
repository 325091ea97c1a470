"""Forward-mode (piggyback) differentiation of the Sinkhorn recursion.

Alongside ``x_{k+1} = F(x_k)`` the derivative state ``D_k`` (n x p, one
column per parameter direction) follows either the raw recursion

    D_{k+1} = A_k D_k + B_k

or the reduced one ``D_{k+1} = G_k D_k + B_k``, with ``A_k, B_k, G_k``
evaluated at ``x_k``. The plan derivative is

    dP_k/dtheta = (dP/dx)(x_k) D_k + (dP/dtheta)(x_k),

and both recursions give the same ``dP_k`` since ``dP/dx`` kills ``1_n``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

from . import kernels
from .jacobians import Linearization
from .limit import PlanDerivative, limit_plan_derivative_tangents
from .problem import InstanceTangent, Parametrization, TransportInstance
from .sinkhorn import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    Mode,
    SinkhornState,
    SolveReport,
    apply_step,
)

Recursion = Literal["reduced", "raw"]
Reference = Literal["final-iterate", "closed-form"]

CSV_HEADER = ("iter", "plan_err", "deriv_err", "marginal_violation")


@dataclass(frozen=True)
class TangentState:
    D: np.ndarray
    iteration: int


@dataclass
class DerivativeTrace:
    """Per-iteration Frobenius errors against a reference plan and derivative."""

    iteration: np.ndarray
    plan_err: np.ndarray
    deriv_err: np.ndarray
    marginal_violation: np.ndarray
    d_norm: np.ndarray
    reference: str = "final-iterate"

    def __len__(self):
        return len(self.iteration)

    def rows(self):
        return zip(
            self.iteration.tolist(),
            self.plan_err.tolist(),
            self.deriv_err.tolist(),
            self.marginal_violation.tolist(),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in self.rows():
                writer.writerow([row[0], *(repr(v) for v in row[1:])])


def _as_matrix(D, n: int, p: int) -> np.ndarray:
    D = np.zeros((n, p)) if D is None else np.asarray(D, dtype=np.float64)
    if D.ndim == 1:
        D = D[:, None]
    if D.shape != (n, p):
        raise ValueError(f"derivative state has shape {D.shape}, expected {(n, p)}")
    return D


def _b_matrix(lin: Linearization, tangents: Sequence[InstanceTangent]) -> np.ndarray:
    n = len(lin.x)
    if not tangents:
        return np.zeros((n, 0))
    return np.column_stack([lin.f_theta(t) for t in tangents])


def piggyback_step(x, D, inst: TransportInstance, tangents, mode: Mode = "lse"):
    """One raw step: ``(F(x), A D + B)`` with ``A, B`` taken at ``x``."""
    lin = Linearization(x, inst, mode)
    D = _as_matrix(D, len(lin.x), len(tangents))
    return apply_step(lin.x, inst, mode), lin.apply_A(D) + _b_matrix(lin, tangents)


def reduced_piggyback_step(x, D, inst: TransportInstance, tangents, mode: Mode = "lse"):
    """One reduced step: ``(F(x), G D + B)`` with ``G = A - 1 v^T`` at ``x``."""
    lin = Linearization(x, inst, mode)
    D = _as_matrix(D, len(lin.x), len(tangents))
    return apply_step(lin.x, inst, mode), lin.apply_G(D) + _b_matrix(lin, tangents)


def plan_derivative_at(
    x, D, inst: TransportInstance, tangents, mode: Mode = "lse", labels=()
) -> PlanDerivative:
    lin = Linearization(x, inst, mode)
    return _plan_derivative(lin, _as_matrix(D, len(lin.x), len(tangents)), tangents, labels)


def _plan_derivative(lin, D, tangents, labels=()) -> PlanDerivative:
    n, m = lin.inst.shape
    slices = np.empty((len(tangents), n, m))
    for j, t in enumerate(tangents):
        slices[j] = lin.plan_x(D[:, j]) + lin.plan_theta(t)
    return PlanDerivative(slices, tuple(labels))


@dataclass
class _Iterate:
    k: int
    x: np.ndarray
    D: np.ndarray
    P: np.ndarray
    dP: PlanDerivative
    violation: float


def iterate_with_derivatives(
    inst: TransportInstance,
    tangents: Sequence[InstanceTangent],
    x0=None,
    D0=None,
    recursion: Recursion = "reduced",
    mode: Mode = "lse",
    labels=(),
) -> Iterator[_Iterate]:
    """Yield ``(x_k, D_k, P_k, dP_k)`` for ``k = 0, 1, ...`` without end."""
    n, _ = inst.shape
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    D = _as_matrix(D0, n, len(tangents)).copy()
    log_k = np.ascontiguousarray(inst.log_kernel)
    log_a, log_b = np.log(inst.a), np.log(inst.b)
    k = 0
    while True:
        lin = Linearization(x, inst, mode)
        viol = float(np.max(np.abs(lin.r - inst.a)))
        dP = _plan_derivative(lin, D, tangents, labels)
        yield _Iterate(k, x, D, lin.P, dP, viol)
        B = _b_matrix(lin, tangents)
        D = (lin.apply_G(D) if recursion == "reduced" else lin.apply_A(D)) + B
        if mode == "lse":
            x = kernels.lse_step(log_k, log_a, log_b, x)
        else:
            x = apply_step(x, inst, mode)
        k += 1


def run_with_derivatives(
    parametrization: Parametrization,
    theta,
    x0=None,
    D0=None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    reference: Reference = "final-iterate",
    recursion: Recursion = "reduced",
    mode: Mode = "lse",
    trace: bool = True,
    instance: TransportInstance | None = None,
):
    """Run Sinkhorn with piggyback derivatives until plan and derivative settle.

    Stops at the first ``k >= 1`` with marginal violation ``<= tol`` and
    ``||dP_k - dP_{k-1}||_F <= tol (1 + ||dP_k||_F)``, or at ``max_iter``.
    ``D0`` is ``dx0/dtheta`` and defaults to zero (constant initializer).

    The trace is measured in a second, identical pass against the final
    iterate (``reference="final-iterate"``) or against the closed-form limit
    derivative at the final iterate (``"closed-form"``).

    Returns:
        ``(SolveReport, PlanDerivative, DerivativeTrace | None)``.
    """
    inst = parametrization(theta) if instance is None else instance
    tangents = parametrization.tangents(theta)
    labels = parametrization.direction_labels()

    def run():
        return iterate_with_derivatives(inst, tangents, x0, D0, recursion, mode, labels)

    prev = None
    converged = False
    for it in run():
        if prev is not None and it.violation <= tol:
            step = it.dP.distance(prev.dP)
            if step <= tol * (1.0 + it.dP.frobenius()):
                converged = True
        if converged or it.k >= max_iter:
            last = it
            break
        prev = it

    report = SolveReport(SinkhornState(last.x, last.k, last.violation), converged)
    if not trace:
        return report, last.dP, None

    if reference == "final-iterate":
        ref_P, ref_dP = last.P, last.dP
    elif reference == "closed-form":
        ref_P = last.P
        ref_dP = limit_plan_derivative_tangents(
            last.x, inst, tangents, "resolvent", mode, labels, fixed_point_tol=np.inf
        )
    else:
        raise ValueError(f"unknown reference {reference!r}")

    N = last.k + 1
    plan_err, deriv_err = np.empty(N), np.empty(N)
    viols, d_norm = np.empty(N), np.empty(N)
    for it in run():
        k = it.k
        plan_err[k] = np.linalg.norm(it.P - ref_P)
        deriv_err[k] = it.dP.distance(ref_dP)
        viols[k] = it.violation
        d_norm[k] = np.linalg.norm(it.D)
        if k == last.k:
            break
    tr = DerivativeTrace(np.arange(N), plan_err, deriv_err, viols, d_norm, reference)
    return report, last.dP, tr


def decay_ratios(errors, floor: float = 0.0) -> np.ndarray:
    """Successive ratios ``e_{k+1} / e_k`` up to the first entry at or below ``floor``."""
    e = np.asarray(errors, dtype=np.float64)
    below = np.flatnonzero(e <= floor)
    if below.size:
        e = e[: below[0]]
    if e.size < 2:
        return np.empty(0)
    return e[1:] / e[:-1]


def fitted_decay_ratio(errors, floor: float = 0.0, window: int = 30) -> float:
    """Median ratio over the last ``window`` steps above ``floor``; a diagnostic."""
    r = decay_ratios(errors, floor)
    if r.size == 0:
        return float("nan")
    return float(np.median(r[-window:]))
