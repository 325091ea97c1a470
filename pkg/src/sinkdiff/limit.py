"""Exact derivative of the optimal entropic plan at a Sinkhorn fixed point.

With ``A``, ``B`` the partial Jacobians of ``F`` at the fixed point ``xbar``,

    dP/dtheta = (dP/dx) (I - A)^# B + dP/dtheta|_x,

where ``#`` is the spectral pseudo-inverse: invert ``I - A`` on its nonzero
eigenspaces and send the kernel (spanned by ``1_n``) to zero. Because
``dP/dx`` annihilates ``1_n``, the same result is obtained from the ordinary
inverse ``(I - G)^{-1}`` of the reduced Jacobian; both routes are provided.

``A`` is diagonalized through a symmetric similarity: with ``r = P 1_m`` and
``S = diag(1/sqrt(r))``, ``S^{-1} A S = N N^T`` for ``N = diag(1/sqrt(r)) P
diag(1/sqrt(b))``. At a fixed point ``r = a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ConditioningError, SpectralDegeneracyError, ValidationError
from .jacobians import Linearization
from .problem import InstanceTangent, Parametrization, TransportInstance
from .sinkhorn import Mode

Route = Literal["spectral", "resolvent"]

TOL_ONE = 1e-8
FIXED_POINT_TOL = 1e-8


@dataclass(frozen=True)
class PlanDerivative:
    """Stack of ``p`` derivative slices ``dP/dtheta_j``, shape ``(p, n, m)``."""

    slices: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        s = np.asarray(self.slices, dtype=np.float64)
        if s.ndim == 2:
            s = s[None]
        object.__setattr__(self, "slices", s)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"theta[{j}]" for j in range(len(s))))

    def __len__(self):
        return len(self.slices)

    def __getitem__(self, j) -> np.ndarray:
        return self.slices[j]

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.slices.ravel()))

    def distance(self, other: "PlanDerivative") -> float:
        """Frobenius norm of the difference over all slices."""
        return float(np.linalg.norm((self.slices - other.slices).ravel()))

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "slices": self.slices.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PlanDerivative":
        return cls(np.asarray(data["slices"], dtype=np.float64), tuple(data["labels"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


@dataclass(frozen=True)
class FixedPointSpectrum:
    """Eigen-decomposition ``A = Q diag(eigenvalues) Q^{-1}`` with ``Q = S U``.

    ``scaling`` holds the diagonal of ``S``; ``U`` is orthogonal, so
    ``Q^{-1} = U^T S^{-1}`` needs no general inversion.
    """

    eigenvalues: np.ndarray
    U: np.ndarray
    scaling: np.ndarray
    second_eigenvalue: float
    eigen_gap: float
    tol_one: float = TOL_ONE
    unit_index: int = 0

    @property
    def basis(self) -> np.ndarray:
        return self.scaling[:, None] * self.U

    @property
    def basis_inverse(self) -> np.ndarray:
        return self.U.T / self.scaling[None, :]

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues[None, :]) @ self.basis_inverse


def _check_fixed_point(lin: Linearization, tol: float):
    viol = float(np.max(np.abs(lin.r - lin.inst.a)))
    if viol > tol:
        raise ValidationError(
            f"x is not a fixed point: marginal violation {viol:.3e} > {tol:.1e}",
            field="xbar",
        )


def fixed_point_spectrum(
    xbar,
    inst: TransportInstance,
    mode: Mode = "lse",
    tol_one: float = TOL_ONE,
    fixed_point_tol: float = FIXED_POINT_TOL,
) -> FixedPointSpectrum:
    """Symmetrized eigen-decomposition of ``A`` at a fixed point.

    Raises:
        SpectralDegeneracyError: if the number of eigenvalues within
            ``tol_one`` of 1 is not exactly one.
    """
    lin = Linearization(xbar, inst, mode)
    _check_fixed_point(lin, fixed_point_tol)
    return _spectrum(lin, tol_one)


def _spectrum(lin: Linearization, tol_one: float) -> FixedPointSpectrum:
    sr = np.sqrt(lin.r)
    N = lin.P / sr[:, None] / np.sqrt(lin.inst.b)[None, :]
    sym = N @ N.T
    sym = 0.5 * (sym + sym.T)
    evals, U = np.linalg.eigh(sym)
    order = np.argsort(evals)[::-1]
    evals, U = evals[order], U[:, order]
    near_one = np.flatnonzero(np.abs(evals - 1.0) <= tol_one)
    if near_one.size != 1:
        raise SpectralDegeneracyError(
            f"{near_one.size} eigenvalues within {tol_one:g} of 1 "
            f"(top eigenvalues {evals[:3].tolist()}); x may not be converged"
        )
    unit = int(near_one[0])
    others = np.delete(evals, unit)
    second = float(others[np.argmax(np.abs(others))]) if others.size else 0.0
    return FixedPointSpectrum(
        evals, U, 1.0 / sr, second, 1.0 - abs(second), tol_one, unit
    )


def spectral_pseudo_inverse_apply(spectrum: FixedPointSpectrum, rhs) -> np.ndarray:
    """``(I - A)^# rhs`` using the decomposition in ``spectrum``."""
    rhs = np.asarray(rhs, dtype=np.float64)
    gap = 1.0 - spectrum.eigenvalues
    inv = np.where(np.abs(gap) > spectrum.tol_one, 1.0 / np.where(gap == 0, 1.0, gap), 0.0)
    coeffs = spectrum.basis_inverse @ rhs
    coeffs = coeffs * (inv if coeffs.ndim == 1 else inv[:, None])
    return spectrum.basis @ coeffs


def spectral_pseudo_inverse(M, tol: float = TOL_ONE) -> np.ndarray:
    """Spectral pseudo-inverse of a general diagonalizable matrix.

    Uses a non-symmetric eigendecomposition; eigenvalues with modulus at
    most ``tol`` are treated as zero.
    """
    M = np.asarray(M, dtype=np.float64)
    evals, Q = np.linalg.eig(M)
    inv = np.where(np.abs(evals) > tol, 1.0 / np.where(evals == 0, 1.0, evals), 0.0)
    out = (Q * inv[None, :]) @ np.linalg.inv(Q)
    return np.real_if_close(out, tol=1e6).real


def resolvent_apply(xbar, inst: TransportInstance, rhs, mode: Mode = "lse") -> np.ndarray:
    """Solve ``(I - G) X = rhs`` with ``G`` the reduced Jacobian at ``xbar``."""
    return _resolvent(Linearization(xbar, inst, mode), rhs)


def _resolvent(lin: Linearization, rhs) -> np.ndarray:
    n = len(lin.x)
    G = lin.jacobian() - np.outer(np.ones(n), lin.v)
    M = np.eye(n) - G
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > 1e14:
        raise ConditioningError(f"I - G is numerically singular (cond={cond:.3e})", cond)
    try:
        return np.linalg.solve(M, np.asarray(rhs, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"dense solve failed: {exc}", cond) from exc


def limit_plan_derivative_tangents(
    xbar,
    inst: TransportInstance,
    tangents: Sequence[InstanceTangent],
    route: Route = "resolvent",
    mode: Mode = "lse",
    labels: Sequence[str] = (),
    tol_one: float = TOL_ONE,
    fixed_point_tol: float = FIXED_POINT_TOL,
) -> PlanDerivative:
    """Limit derivative for explicit instance tangents."""
    lin = Linearization(xbar, inst, mode)
    _check_fixed_point(lin, fixed_point_tol)
    n = len(lin.x)
    B = np.column_stack([lin.f_theta(t) for t in tangents]) if tangents else np.zeros((n, 0))
    if route == "spectral":
        X = spectral_pseudo_inverse_apply(_spectrum(lin, tol_one), B)
    elif route == "resolvent":
        X = _resolvent(lin, B)
    else:
        raise ValueError(f"unknown route {route!r}")
    slices = [lin.plan_x(X[:, j]) + lin.plan_theta(t) for j, t in enumerate(tangents)]
    return PlanDerivative(np.array(slices).reshape(len(tangents), *inst.shape), tuple(labels))


def limit_plan_derivative(
    xbar,
    parametrization: Parametrization,
    theta,
    route: Route = "resolvent",
    mode: Mode = "lse",
    instance: TransportInstance | None = None,
    **kwargs,
) -> PlanDerivative:
    """Derivative of the optimal plan along every coordinate of ``theta``."""
    inst = parametrization(theta) if instance is None else instance
    return limit_plan_derivative_tangents(
        xbar,
        inst,
        parametrization.tangents(theta),
        route,
        mode,
        parametrization.direction_labels(),
        **kwargs,
    )
