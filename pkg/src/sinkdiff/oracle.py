"""Central finite-difference oracles for every derivative the library computes.

The oracles only call the primal map (log-sum-exp Sinkhorn step and plan)
and never touch the analytic derivative code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OracleError, ValidationError
from .problem import Parametrization, TransportInstance
from .sinkhorn import plan, solve, step_lse


@dataclass(frozen=True)
class FdConfig:
    step: float = 1e-6
    scheme: str = "central"
    inner_tol: float = 1e-13
    inner_max_iter: int = 200_000

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError("step must be > 0", field="step")
        if not self.inner_tol > 0:
            raise ValidationError("inner_tol must be > 0", field="inner_tol")
        if self.scheme != "central":
            raise ValidationError("only the central scheme is supported", field="scheme")


def fd_jacobian_F_x(x, inst: TransportInstance, config: FdConfig = FdConfig()) -> np.ndarray:
    """Column ``j`` is ``(F(x + h e_j) - F(x - h e_j)) / 2h``."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    h = config.step
    out = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        out[:, j] = (step_lse(x + e, inst) - step_lse(x - e, inst)) / (2 * h)
    return out


def _scaled_step(theta, j, config):
    return config.step * (1.0 + abs(float(theta[j])))


def _shifted(theta, j, h):
    tp = np.array(theta, dtype=np.float64)
    tm = tp.copy()
    tp[j] += h
    tm[j] -= h
    return tp, tm


def fd_limit_derivative(
    parametrization: Parametrization, theta, j: int, config: FdConfig = FdConfig()
) -> np.ndarray:
    """Central difference of the converged plan along ``theta_j``.

    Raises:
        OracleError: if the inner solve misses ``inner_tol``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    h = _scaled_step(theta, j, config)
    plans = []
    for t in _shifted(theta, j, h):
        inst = parametrization(t)
        rep = solve(inst, tol=config.inner_tol, max_iter=config.inner_max_iter, mode="lse")
        if not rep.converged:
            raise OracleError(
                f"inner Sinkhorn solve did not reach {config.inner_tol:g} "
                f"(violation {rep.final_state.marginal_violation:.3e})"
            )
        plans.append(plan(rep.x, inst, "lse"))
    return (plans[0] - plans[1]) / (2 * h)


def fd_iterate_derivative(
    parametrization: Parametrization,
    theta,
    j: int,
    k: int,
    config: FdConfig = FdConfig(),
    x0=None,
) -> np.ndarray:
    """Central difference of ``P_k`` after exactly ``k`` steps from ``x0``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    h = _scaled_step(theta, j, config)
    plans = []
    for t in _shifted(theta, j, h):
        inst = parametrization(t)
        x = np.zeros(inst.shape[0]) if x0 is None else np.array(x0, dtype=np.float64)
        for _ in range(k):
            x = step_lse(x, inst)
        plans.append(plan(x, inst, "lse"))
    return (plans[0] - plans[1]) / (2 * h)
