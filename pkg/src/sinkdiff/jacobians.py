"""Closed-form first derivatives of the Sinkhorn map and of the plan.

Notation: ``A = dF/dx`` (n x n), ``B`` the derivative of ``F`` along a
parameter tangent, ``v`` the normalized left unit eigenvector of ``A`` and
``G = A - 1 v^T`` the reduced Jacobian. Every quantity is assembled from the
plan ``P = P(x)`` and its row sums ``r = P 1_m = a * e^x / e^{F(x)}``:

    A = diag(1/r) P diag(1/b) P^T,       v = r / sum(r).

Derivatives along a tangent ``(dC, da, db, deps)`` use the log-kernel rate
``L' = -dC/eps + C deps/eps^2`` (so that ``dK = K * L'``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .problem import InstanceTangent, TransportInstance
from .sinkhorn import Mode, _naive_scaling, apply_step, plan

DEBUG_CHECKS = os.environ.get("SINKDIFF_DEBUG", "") in ("1", "true", "yes")


@dataclass(frozen=True)
class JacobianBundle:
    A: np.ndarray
    v: np.ndarray
    alpha: float
    G: np.ndarray


class Linearization:
    """First-order data of ``F`` and ``P`` at one iterate ``x``.

    Caches the plan so that repeated products (one per parameter direction,
    as in the piggyback recursion) cost ``O(nm)`` each without forming ``A``.
    """

    def __init__(self, x, inst: TransportInstance, mode: Mode = "lse"):
        self.x = np.asarray(x, dtype=np.float64)
        self.inst = inst
        self.mode = mode
        self.P = plan(self.x, inst, mode)
        self.r = self.P.sum(axis=1)

    @property
    def v(self) -> np.ndarray:
        return self.r / self.r.sum()

    def jacobian(self) -> np.ndarray:
        Pb = self.P / self.inst.b[None, :]
        return (Pb @ self.P.T) / self.r[:, None]

    def apply_A(self, D) -> np.ndarray:
        """``A @ D`` for a vector or an ``n x p`` matrix, without forming ``A``."""
        D = np.asarray(D, dtype=np.float64)
        inner = self.P.T @ D
        inner = inner / (self.inst.b if inner.ndim == 1 else self.inst.b[:, None])
        out = self.P @ inner
        return out / (self.r if out.ndim == 1 else self.r[:, None])

    def apply_G(self, D) -> np.ndarray:
        D = np.asarray(D, dtype=np.float64)
        return self.apply_A(D) - np.multiply.outer(np.ones(len(self.x)), self.v @ D)

    def log_kernel_rate(self, t: InstanceTangent) -> np.ndarray:
        eps = self.inst.epsilon
        return -t.d_cost / eps + self.inst.cost * (t.d_epsilon / eps**2)

    def f_theta(self, t: InstanceTangent) -> np.ndarray:
        """``dF/dtheta`` along the tangent ``t`` at fixed ``x``."""
        inst, P = self.inst, self.P
        lrate = self.log_kernel_rate(t)
        c = (P * lrate).sum(axis=0) / inst.b
        col = t.d_b / inst.b - c
        inner = (P * lrate).sum(axis=1) + P @ col
        return t.d_a / inst.a - inner / self.r

    def plan_x(self, xdot) -> np.ndarray:
        """``(dP/dx) xdot``; an ``n x p`` input gives a ``(p, n, m)`` stack."""
        xdot = np.asarray(xdot, dtype=np.float64)
        if xdot.ndim == 2:
            return np.stack([self.plan_x(col) for col in xdot.T])
        s = (self.P.T @ xdot) / self.inst.b
        return self.P * (xdot[:, None] - s[None, :])

    def plan_theta(self, t: InstanceTangent) -> np.ndarray:
        """``dP/dtheta`` along ``t`` at fixed ``x``; column sums equal ``db``."""
        inst, P = self.inst, self.P
        lrate = self.log_kernel_rate(t)
        c = (P * lrate).sum(axis=0) / inst.b
        return P * (lrate + (t.d_b / inst.b - c)[None, :])


def jacobian_F_x(x, inst: TransportInstance, mode: Mode = "lse") -> np.ndarray:
    """``A = dF/dx`` at ``x``.

    ``mode="naive"`` evaluates the explicit-kernel product form; ``"lse"``
    uses the plan form, which stays finite when the kernel underflows.
    """
    if mode == "naive":
        A = jacobian_F_x_kernel_form(x, inst)
        if DEBUG_CHECKS:
            A2 = jacobian_F_x_plan_form(x, inst)
            assert np.max(np.abs(A - A2)) <= 1e-12 * max(1.0, np.max(np.abs(A)))
        return A
    return Linearization(x, inst, mode).jacobian()


def jacobian_F_x_kernel_form(x, inst: TransportInstance) -> np.ndarray:
    """``diag(1/(K w)) K diag(b/s^2) K^T diag(e^x)`` with ``s = K^T e^x``, ``w = b/s``."""
    x = np.asarray(x, dtype=np.float64)
    K, ex, s, _, q = _naive_scaling(x, inst)
    middle = K * (inst.b / s**2)[None, :]
    return (middle @ K.T) * ex[None, :] / q[:, None]


def jacobian_F_x_plan_form(x, inst: TransportInstance, mode: Mode = "naive") -> np.ndarray:
    """``diag(e^F) diag(1/(a e^x)) P diag(1/b) P^T``, taken literally."""
    x = np.asarray(x, dtype=np.float64)
    fx = apply_step(x, inst, mode)
    P = plan(x, inst, mode)
    scale = np.exp(fx - x) / inst.a
    return scale[:, None] * ((P / inst.b[None, :]) @ P.T)


def left_eigenvector(x, inst: TransportInstance, mode: Mode = "lse"):
    """Return ``(alpha, v)`` with ``v = a e^x / (alpha e^{F(x)})`` and ``sum(v) = 1``."""
    x = np.asarray(x, dtype=np.float64)
    w = inst.a * np.exp(x - apply_step(x, inst, mode))
    alpha = float(w.sum())
    return alpha, w / alpha


def reduced_jacobian(x, inst: TransportInstance, mode: Mode = "lse") -> JacobianBundle:
    A = jacobian_F_x(x, inst, mode)
    alpha, v = left_eigenvector(x, inst, mode)
    G = A - np.outer(np.ones(len(v)), v)
    return JacobianBundle(A, v, alpha, G)


def f_theta_jvp(x, inst: TransportInstance, tangent: InstanceTangent, mode: Mode = "lse"):
    """``B theta_dot``: derivative of ``F(x, .)`` along one instance tangent."""
    return Linearization(x, inst, mode).f_theta(tangent)


def plan_x_jvp(x, inst: TransportInstance, xdot, mode: Mode = "lse") -> np.ndarray:
    return Linearization(x, inst, mode).plan_x(xdot)


def plan_theta_jvp(x, inst: TransportInstance, tangent: InstanceTangent, mode: Mode = "lse"):
    return Linearization(x, inst, mode).plan_theta(tangent)
