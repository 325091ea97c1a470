"""Entropic transport instances, parametrizations and their serialization.

A :class:`TransportInstance` holds the data ``(C, a, b, eps)`` of one
entropic transport problem. A :class:`Parametrization` maps a parameter
vector ``theta`` to an instance and exposes the directional derivative of
the data along each coordinate of ``theta`` as an :class:`InstanceTangent`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import DomainError, ValidationError

MASS_RTOL = 1e-12
TANGENT_ATOL = 1e-12

Side = Literal["source", "target"]


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TransportInstance:
    """Concrete problem data at a fixed parameter value.

    Attributes:
        cost: Cost matrix ``C`` of shape ``(n, m)``.
        a: Source marginal, strictly positive, length ``n``.
        b: Target marginal, strictly positive, length ``m``.
        epsilon: Regularization level, strictly positive.
        points_x, points_y: Optional point clouds the cost was built from.
    """

    cost: np.ndarray
    a: np.ndarray
    b: np.ndarray
    epsilon: float
    points_x: np.ndarray | None = None
    points_y: np.ndarray | None = None

    def __post_init__(self):
        cost = _frozen(self.cost)
        a = _frozen(self.a)
        b = _frozen(self.b)
        if cost.ndim != 2:
            raise ValidationError("cost must be a 2-d matrix", field="cost")
        n, m = cost.shape
        if n < 1 or m < 1:
            raise ValidationError("cost must be non-empty", field="cost")
        if a.shape != (n,):
            raise ValidationError(
                f"source_marginal has shape {a.shape}, expected ({n},)",
                field="source_marginal",
            )
        if b.shape != (m,):
            raise ValidationError(
                f"target_marginal has shape {b.shape}, expected ({m},)",
                field="target_marginal",
            )
        if not np.all(np.isfinite(cost)):
            raise ValidationError("cost entries must be finite", field="cost")
        if not (np.all(np.isfinite(a)) and np.all(a > 0)):
            raise ValidationError(
                "source_marginal entries must be finite and strictly positive",
                field="source_marginal",
            )
        if not (np.all(np.isfinite(b)) and np.all(b > 0)):
            raise ValidationError(
                "target_marginal entries must be finite and strictly positive",
                field="target_marginal",
            )
        sa, sb = float(a.sum()), float(b.sum())
        if abs(sa - sb) > MASS_RTOL * max(sa, sb):
            raise ValidationError(
                f"mass balance violated: sum(a)={sa!r} but sum(b)={sb!r}",
                field="mass_balance",
            )
        eps = float(self.epsilon)
        if not (math.isfinite(eps) and eps > 0):
            raise ValidationError("epsilon must be finite and > 0", field="epsilon")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "epsilon", eps)
        for name in ("points_x", "points_y"):
            pts = getattr(self, name)
            if pts is not None:
                object.__setattr__(self, name, _frozen(pts))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape

    @property
    def log_kernel(self) -> np.ndarray:
        """``-C / eps``, the logarithm of the Gibbs kernel."""
        return -self.cost / self.epsilon

    def replace(self, **changes) -> "TransportInstance":
        fields = dict(
            cost=self.cost,
            a=self.a,
            b=self.b,
            epsilon=self.epsilon,
            points_x=self.points_x,
            points_y=self.points_y,
        )
        fields.update(changes)
        return TransportInstance(**fields)

    def __eq__(self, other):
        if not isinstance(other, TransportInstance):
            return NotImplemented

        def same(u, v):
            if u is None or v is None:
                return u is v
            return u.shape == v.shape and np.array_equal(u, v)

        return (
            self.epsilon == other.epsilon
            and same(self.cost, other.cost)
            and same(self.a, other.a)
            and same(self.b, other.b)
            and same(self.points_x, other.points_x)
            and same(self.points_y, other.points_y)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class InstanceTangent:
    """Directional derivative of ``(C, a, b, eps)`` along one parameter direction."""

    d_cost: np.ndarray
    d_a: np.ndarray
    d_b: np.ndarray
    d_epsilon: float = 0.0

    def __post_init__(self):
        d_cost = _frozen(self.d_cost)
        d_a = _frozen(self.d_a)
        d_b = _frozen(self.d_b)
        if d_cost.ndim != 2 or d_a.shape != (d_cost.shape[0],) or d_b.shape != (d_cost.shape[1],):
            raise ValidationError("tangent shapes are inconsistent", field="tangent")
        if abs(d_a.sum()) > TANGENT_ATOL:
            raise ValidationError(
                f"source tangent must sum to 0, got {d_a.sum()!r}", field="d_source"
            )
        if abs(d_b.sum()) > TANGENT_ATOL:
            raise ValidationError(
                f"target tangent must sum to 0, got {d_b.sum()!r}", field="d_target"
            )
        object.__setattr__(self, "d_cost", d_cost)
        object.__setattr__(self, "d_a", d_a)
        object.__setattr__(self, "d_b", d_b)
        object.__setattr__(self, "d_epsilon", float(self.d_epsilon))

    @classmethod
    def zeros(cls, n: int, m: int) -> "InstanceTangent":
        return cls(np.zeros((n, m)), np.zeros(n), np.zeros(m), 0.0)

    def is_zero(self) -> bool:
        return (
            self.d_epsilon == 0.0
            and not self.d_cost.any()
            and not self.d_a.any()
            and not self.d_b.any()
        )


@dataclass(frozen=True)
class Parametrization:
    """A map ``theta -> TransportInstance`` with analytic tangents.

    ``tangent_evaluator(theta, j)`` returns the derivative of the instance
    data along the ``j``-th coordinate of ``theta``. ``theta0`` is the
    parameter value at which the base instance is recovered.
    """

    dim_theta: int
    evaluator: Callable[[np.ndarray], TransportInstance]
    tangent_evaluator: Callable[[np.ndarray, int], InstanceTangent]
    theta0: np.ndarray
    labels: tuple[str, ...] = field(default=())
    kind: str = "custom"

    def __call__(self, theta) -> TransportInstance:
        return self.evaluator(self._check_theta(theta))

    def tangent(self, theta, j: int) -> InstanceTangent:
        if not 0 <= j < self.dim_theta:
            raise IndexError(f"direction {j} out of range for p={self.dim_theta}")
        return self.tangent_evaluator(self._check_theta(theta), j)

    def tangents(self, theta) -> list[InstanceTangent]:
        theta = self._check_theta(theta)
        return [self.tangent_evaluator(theta, j) for j in range(self.dim_theta)]

    def direction_labels(self) -> list[str]:
        if len(self.labels) == self.dim_theta:
            return list(self.labels)
        return [f"theta[{j}]" for j in range(self.dim_theta)]

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if theta.shape != (self.dim_theta,):
            raise ValidationError(
                f"theta has shape {theta.shape}, expected ({self.dim_theta},)",
                field="theta",
            )
        return theta


def make_epsilon_parametrization(base: TransportInstance) -> Parametrization:
    """Parametrize by the regularization level: ``theta = [eps]``."""
    n, m = base.shape

    def evaluate(theta):
        eps = float(theta[0])
        if not eps > 0:
            raise DomainError(f"epsilon must be > 0, got {eps!r}")
        return base.replace(epsilon=eps)

    def tangent(theta, j):
        return InstanceTangent(np.zeros((n, m)), np.zeros(n), np.zeros(m), 1.0)

    return Parametrization(
        1, evaluate, tangent, np.array([base.epsilon]), ("epsilon",), "eps"
    )


def _softmax(theta: np.ndarray) -> np.ndarray:
    z = np.exp(theta - theta.max())
    return z / z.sum()


def make_softmax_marginal_parametrization(
    base: TransportInstance, which: Side = "source"
) -> Parametrization:
    """Parametrize one marginal as ``mass * softmax(theta)``.

    ``mass`` is the total mass of the base instance so the balance constraint
    holds for every ``theta``. ``theta0`` is the centered log of the base
    marginal.
    """
    n, m = base.shape
    marg = _side(base, which)
    mass = float(marg.sum())
    size = marg.size

    def evaluate(theta):
        w = mass * _softmax(theta)
        return base.replace(**{_attr(which): w})

    def tangent(theta, j):
        s = _softmax(theta)
        d = -mass * s[j] * s
        d[j] += mass * s[j]
        zero_other = np.zeros(m if which == "source" else n)
        if which == "source":
            return InstanceTangent(np.zeros((n, m)), d, zero_other)
        return InstanceTangent(np.zeros((n, m)), zero_other, d)

    log_marg = np.log(marg)
    letter = "a" if which == "source" else "b"
    labels = tuple(f"softmax_{letter}[{i}]" for i in range(size))
    return Parametrization(
        size,
        evaluate,
        tangent,
        log_marg - log_marg.mean(),
        labels,
        f"softmax-{letter}",
    )


def make_direct_marginal_parametrization(
    base: TransportInstance,
    which: Side,
    directions: Sequence[Sequence[float]],
) -> Parametrization:
    """Move one marginal affinely: ``a(theta) = a + sum_j theta_j d_j``.

    Every direction must sum to zero so mass balance is preserved.
    """
    n, m = base.shape
    marg = _side(base, which)
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if dirs.shape[1] != marg.size:
        raise ValidationError(
            f"directions must have length {marg.size}", field="directions"
        )
    for k, d in enumerate(dirs):
        if abs(d.sum()) > TANGENT_ATOL:
            raise ValidationError(
                f"direction {k} sums to {d.sum()!r}, must sum to 0",
                field="directions",
            )

    def evaluate(theta):
        w = marg + theta @ dirs
        if np.any(w <= 0):
            raise DomainError(
                f"{_attr_long(which)} has a nonpositive entry at theta={theta.tolist()}"
            )
        return base.replace(**{_attr(which): w})

    def tangent(theta, j):
        zero_other = np.zeros(m if which == "source" else n)
        if which == "source":
            return InstanceTangent(np.zeros((n, m)), dirs[j], zero_other)
        return InstanceTangent(np.zeros((n, m)), zero_other, dirs[j])

    letter = "a" if which == "source" else "b"
    labels = tuple(f"direct_{letter}[{k}]" for k in range(len(dirs)))
    return Parametrization(
        len(dirs), evaluate, tangent, np.zeros(len(dirs)), labels, f"direct-{letter}"
    )


def zero_sum_basis(size: int) -> np.ndarray:
    """Directions ``e_i - e_last`` spanning the zero-sum subspace."""
    basis = np.zeros((max(size - 1, 0), size))
    for i in range(size - 1):
        basis[i, i] = 1.0
        basis[i, -1] = -1.0
    return basis


def make_affine_parametrization(
    base: TransportInstance, tangents: Sequence[InstanceTangent], labels=()
) -> Parametrization:
    """Move all data affinely along user-supplied tangents.

    ``instance(theta) = base + sum_j theta_j * tangents[j]`` componentwise;
    used for tangents read from a file.
    """
    tangents = list(tangents)
    n, m = base.shape
    for t in tangents:
        if t.d_cost.shape != (n, m):
            raise ValidationError("tangent shape does not match instance", field="tangent")

    def evaluate(theta):
        cost = base.cost + sum(t * tg.d_cost for t, tg in zip(theta, tangents))
        a = base.a + sum(t * tg.d_a for t, tg in zip(theta, tangents))
        b = base.b + sum(t * tg.d_b for t, tg in zip(theta, tangents))
        eps = base.epsilon + sum(t * tg.d_epsilon for t, tg in zip(theta, tangents))
        if np.any(a <= 0) or np.any(b <= 0) or eps <= 0:
            raise DomainError(f"instance leaves the positive orthant at theta={list(theta)}")
        return base.replace(cost=cost, a=a, b=b, epsilon=eps)

    def tangent(theta, j):
        return tangents[j]

    return Parametrization(
        len(tangents), evaluate, tangent, np.zeros(len(tangents)), tuple(labels), "file"
    )


def _side(inst: TransportInstance, which: Side) -> np.ndarray:
    if which == "source":
        return inst.a
    if which == "target":
        return inst.b
    raise ValueError(f"which must be 'source' or 'target', got {which!r}")


def _attr(which: Side) -> str:
    return "a" if which == "source" else "b"


def _attr_long(which: Side) -> str:
    return "source_marginal" if which == "source" else "target_marginal"


def generate_point_cloud_instance(
    n: int,
    m: int,
    seed: int,
    epsilon: float = 0.01,
    geometry: str = "square-to-circle",
) -> TransportInstance:
    """Euclidean cost between a uniform square and a uniform circle.

    Source points are uniform on ``[-1/2, 1/2]^2``; target points are uniform
    in angle on the circle of radius 1/2 inscribed in that square. Marginals
    are uniform. Randomness comes from ``numpy.random.default_rng(seed)``
    (PCG64), so the same seed always gives the same instance.
    """
    if n < 1 or m < 1:
        raise ValidationError("n and m must be >= 1", field="size")
    if geometry != "square-to-circle":
        raise ValidationError(f"unknown geometry {geometry!r}", field="geometry")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, size=(n, 2))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=m)
    y = 0.5 * np.column_stack([np.cos(angles), np.sin(angles)])
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    return TransportInstance(
        cost, np.full(n, 1.0 / n), np.full(m, 1.0 / m), epsilon, points_x=x, points_y=y
    )


# -- serialization -----------------------------------------------------------


def instance_to_dict(inst: TransportInstance) -> dict:
    out = {
        "cost": inst.cost.tolist(),
        "a": inst.a.tolist(),
        "b": inst.b.tolist(),
        "epsilon": inst.epsilon,
    }
    if inst.points_x is not None:
        out["points_x"] = inst.points_x.tolist()
    if inst.points_y is not None:
        out["points_y"] = inst.points_y.tolist()
    return out


def instance_from_dict(data: dict) -> TransportInstance:
    if not isinstance(data, dict):
        raise ValidationError("instance document must be a JSON object", field="root")
    for key in ("cost", "a", "b", "epsilon"):
        if key not in data:
            raise ValidationError(f"missing required field {key!r}", field=key)
    try:
        cost = np.asarray(data["cost"], dtype=np.float64)
        a = np.asarray(data["a"], dtype=np.float64)
        b = np.asarray(data["b"], dtype=np.float64)
        eps = float(data["epsilon"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"non-numeric instance data: {exc}", field="root") from exc
    if cost.ndim == 1 and cost.size == 0:
        cost = cost.reshape(0, 0)
    pts = {}
    for key in ("points_x", "points_y"):
        if data.get(key) is not None:
            pts[key] = np.asarray(data[key], dtype=np.float64)
    return TransportInstance(cost, a, b, eps, **pts)


def save_instance(inst: TransportInstance, path) -> None:
    """Write ``inst`` as JSON; floats use the shortest round-trip repr."""
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


def load_instance(path) -> TransportInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", field="root") from exc
    return instance_from_dict(data)


def tangent_from_dict(data: dict, n: int, m: int) -> InstanceTangent:
    return InstanceTangent(
        np.asarray(data.get("d_cost", np.zeros((n, m))), dtype=np.float64),
        np.asarray(data.get("d_a", np.zeros(n)), dtype=np.float64),
        np.asarray(data.get("d_b", np.zeros(m)), dtype=np.float64),
        float(data.get("d_epsilon", 0.0)),
    )


def load_tangents(path, inst: TransportInstance):
    """Read ``{"tangents": [{"label", "d_cost", "d_a", "d_b", "d_epsilon"}, ...]}``."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", field="root") from exc
    entries = data.get("tangents") if isinstance(data, dict) else None
    if not entries:
        raise ValidationError("tangent file needs a non-empty 'tangents' list", field="tangents")
    n, m = inst.shape
    tangents = [tangent_from_dict(e, n, m) for e in entries]
    labels = [e.get("label", f"t[{k}]") for k, e in enumerate(entries)]
    return tangents, labels
