"""Property suite run by ``sinkdiff check``.

Each check reports a measured value against an allowed bound. ``breaks``
injects a deliberate defect (negative control for the suite itself).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jacobians as jac
from .limit import fixed_point_spectrum, limit_plan_derivative
from .oracle import FdConfig, fd_jacobian_F_x, fd_limit_derivative
from .piggyback import run_with_derivatives
from .problem import TransportInstance, make_epsilon_parametrization
from .sinkhorn import center, plan, solve, step_lse, variation_seminorm

BREAKABLE = ("jacobian", "plan-derivative")


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    allowed: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured <= self.allowed)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<38} measured={self.measured:.3e}  allowed={self.allowed:.1e}"


def run_checks(inst: TransportInstance, seed: int = 0, breaks: tuple[str, ...] = ()):
    """Run every property on ``inst``; returns a list of :class:`CheckResult`."""
    for b in breaks:
        if b not in BREAKABLE:
            raise ValueError(f"unknown break target {b!r}; choose from {BREAKABLE}")
    rng = np.random.default_rng(seed)
    n, m = inst.shape
    rep = solve(inst, tol=1e-13)
    xbar = rep.x
    x = xbar + rng.normal(size=n)

    jacobian: Callable = jac.jacobian_F_x
    if "jacobian" in breaks:
        def jacobian(z, i, mode="lse"):
            return jac.jacobian_F_x(z, i, mode) * (1 + 1e-3)

    A = jacobian(x, inst)
    A_fd = fd_jacobian_F_x(x, inst)
    A_kernel = jac.jacobian_F_x_kernel_form(x, inst)
    A_plan = jac.jacobian_F_x_plan_form(x, inst)
    _, v = jac.left_eigenvector(x, inst)
    G = A - np.outer(np.ones(n), v)
    ones = np.ones(n)
    lam = float(rng.uniform(-5, 5))

    out = [
        CheckResult("fixed point reached", rep.final_state.marginal_violation, 1e-13),
        CheckResult(
            "dF/dx vs finite differences (rel)",
            float(np.max(np.abs(A - A_fd)) / np.max(np.abs(A_fd))),
            1e-6,
        ),
        CheckResult("dF/dx kernel form vs plan form", float(np.max(np.abs(A_kernel - A_plan))), 1e-12),
        CheckResult("A 1 = 1", float(np.max(np.abs(A @ ones - ones))), 1e-12),
        CheckResult("A^T v = v", float(np.max(np.abs(A.T @ v - v))), 1e-10),
        CheckResult("G 1 = 0", float(np.max(np.abs(G @ ones))), 1e-12),
        CheckResult(
            "F(x + l1) = F(x) + l1",
            float(np.max(np.abs(step_lse(x + lam, inst) - step_lse(x, inst) - lam))),
            1e-12,
        ),
        CheckResult(
            "(dP/dx) 1 = 0", float(np.max(np.abs(jac.plan_x_jvp(x, inst, ones)))), 1e-13
        ),
    ]

    spec = fixed_point_spectrum(xbar, inst)
    Ab = jacobian(xbar, inst)
    Gb = Ab - np.outer(np.ones(n), inst.a)
    out.append(
        CheckResult(
            "spectral radius of G < 1",
            float(np.max(np.abs(np.linalg.eigvals(Gb)))),
            1.0 - 1e-12,
        )
    )
    out.append(
        CheckResult(
            "eigen-decomposition reconstructs A",
            float(np.linalg.norm(spec.reconstruct() - Ab)),
            1e-9,
        )
    )

    par = make_epsilon_parametrization(inst)
    theta = par.theta0
    dP_spec = limit_plan_derivative(xbar, par, theta, route="spectral")
    dP_res = limit_plan_derivative(xbar, par, theta, route="resolvent")
    if "plan-derivative" in breaks:
        dP_res = type(dP_res)(dP_res.slices * (1 + 1e-3), dP_res.labels)
    fd = fd_limit_derivative(par, theta, 0, FdConfig())
    _, dP_pig, _ = run_with_derivatives(par, theta, tol=1e-12, trace=False)
    out += [
        CheckResult("limit derivative vs oracle", float(np.max(np.abs(dP_res[0] - fd))), 1e-5),
        CheckResult("spectral vs resolvent route", dP_spec.distance(dP_res), 1e-9),
        CheckResult("piggyback limit vs closed form", dP_pig.distance(dP_res), 1e-8),
        CheckResult(
            "row/column sums of dP/deps",
            float(max(np.max(np.abs(dP_res[0].sum(1))), np.max(np.abs(dP_res[0].sum(0))))),
            1e-8,
        ),
    ]

    worst = -np.inf
    for _ in range(1000):
        u, w = rng.normal(size=n) * 3, rng.normal(size=n) * 3
        worst = max(worst, np.max(np.abs(center(u) - center(w))) - variation_seminorm(u - w))
    out.append(CheckResult("centering bound (excess)", float(max(worst, 0.0)), 0.0))
    P = plan(xbar, inst)
    out.append(
        CheckResult("plan column sums = b (rel)", float(np.max(np.abs(P.sum(0) - inst.b) / inst.b)), 1e-14)
    )
    return out
