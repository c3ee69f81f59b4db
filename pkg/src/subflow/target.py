"""Embedded target manifolds and potentials on them.

Points and vectors are ambient arrays whose FIRST axis is the ambient
coordinate; any trailing axes (typically the grid) broadcast through.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, PotentialDomainError, StateError, ValidationError

ON_MANIFOLD_TOL = 1e-8
TANGENT_TOL = 1e-8


def _dot(a, b):
    return np.sum(a * b, axis=0)


@dataclass(frozen=True)
class Target:
    """Unit sphere S^n in R^{n+1} or flat R^n."""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in ("sphere", "flat"):
            raise ConfigError(f"unknown target kind {self.kind!r}")
        if self.n < 1:
            raise ConfigError(f"target dimension must be positive, got {self.n}")

    @property
    def ambient_dim(self) -> int:
        return self.n + 1 if self.kind == "sphere" else self.n

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    def check_point(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.ambient_dim:
            raise ValidationError(f"expected ambient dimension {self.ambient_dim}, got {y.shape[0]}")
        if self.is_sphere:
            drift = np.max(np.abs(np.sqrt(_dot(y, y)) - 1.0), initial=0.0)
            if drift > ON_MANIFOLD_TOL:
                raise StateError(f"point is off the unit sphere by {drift:.3e}")

    def check_tangent(self, y, v, name="vector") -> None:
        if self.is_sphere:
            off = np.max(np.abs(_dot(y, v)), initial=0.0)
            if off > TANGENT_TOL:
                raise ValidationError(f"{name} is not tangent (normal component {off:.3e})")

    def normalize(self, y):
        if self.is_sphere:
            return y / np.sqrt(_dot(y, y))
        return y

    def project_tangent(self, y, w, check=True):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        if check:
            self.check_point(y)
        if not self.is_sphere:
            return w.copy()
        return w - _dot(w, y) * y

    def exp_map(self, y, v, check=True):
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        if check:
            self.check_point(y)
            self.check_tangent(y, v)
        if not self.is_sphere:
            return y + v
        r = np.sqrt(_dot(v, v))
        # sin(r)/r with the removable singularity at r = 0
        sinc = np.sinc(r / np.pi)
        out = np.cos(r) * y + sinc * v
        return out / np.sqrt(_dot(out, out))

    def curvature_term(self, y, X, V, check=True):
        """<R(X, V) V, X>; for the unit sphere |X|^2 |V|^2 - <X, V>^2."""
        if check:
            self.check_point(y)
            self.check_tangent(y, X, "X")
            self.check_tangent(y, V, "V")
        if not self.is_sphere:
            return np.zeros(np.shape(X)[1:])
        return _dot(X, X) * _dot(V, V) - _dot(X, V) ** 2

    def curvature_operator(self, y, X):
        """Matrix of V -> R(V, X) X, so that <R(X,V)V, X> = V^T K V for tangent V."""
        k = self.ambient_dim
        if not self.is_sphere:
            return np.zeros((k, k) + np.shape(X)[1:])
        eye = np.eye(k).reshape((k, k) + (1,) * (np.ndim(X) - 1))
        return _dot(X, X) * eye - X[:, None] * X[None, :]

    def tangent_projector(self, y):
        k = self.ambient_dim
        eye = np.eye(k).reshape((k, k) + (1,) * (np.ndim(y) - 1))
        if not self.is_sphere:
            return np.broadcast_to(eye, (k, k) + np.shape(y)[1:]).copy()
        return eye - y[:, None] * y[None, :]


POTENTIAL_KINDS = ("constant", "height", "squared-distance", "ambient-custom", "ambient-quadratic")


@dataclass(frozen=True)
class Potential:
    """A smooth function G on the target with tangential gradient and Hessian.

    For ``ambient-custom`` the caller provides an ambient function together
    with its Euclidean gradient and Hessian (each vectorised over trailing
    axes); G is its restriction to the target.  ``ambient-quadratic`` is the
    preset G(y) = coef * |y|^2.
    """

    kind: str
    target: Target
    value: float = 0.0
    coef: float = 0.0
    ambient: Optional[Callable] = None
    ambient_grad: Optional[Callable] = None
    ambient_hess: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}")
        if self.kind in ("height", "squared-distance") and not self.target.is_sphere:
            raise ConfigError(f"{self.kind} potential needs a sphere target")
        if self.kind == "ambient-custom" and None in (self.ambient, self.ambient_grad, self.ambient_hess):
            raise ConfigError("ambient-custom potential needs function, gradient and hessian")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "ambient-quadratic" and self.coef == 0.0)

    def _ambient_parts(self, y):
        if self.kind == "ambient-quadratic":
            k = y.shape[0]
            eye = np.eye(k).reshape((k, k) + (1,) * (y.ndim - 1))
            hess = np.broadcast_to(2.0 * self.coef * eye, (k, k) + y.shape[1:])
            return self.coef * _dot(y, y), 2.0 * self.coef * y, hess
        return self.ambient(y), self.ambient_grad(y), self.ambient_hess(y)

    def _sphere_radius(self, y):
        pole = y[-1]
        if np.any(pole <= 0.0):
            raise PotentialDomainError("squared-distance potential is only defined on the open upper hemisphere")
        return np.arccos(np.clip(pole, -1.0, 1.0))

    def _rcot(self, r):
        # r cot r, with series near 0
        small = r < 1e-4
        safe = np.where(small, 1.0, r)
        return np.where(small, 1.0 - r**2 / 3.0, safe / np.tan(safe))

    def evaluate(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "constant":
            return np.full(y.shape[1:], float(self.value))
        if self.kind == "height":
            return -y[-1]
        if self.kind == "squared-distance":
            return self._sphere_radius(y) ** 2
        return self._ambient_parts(y)[0]

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        t = self.target
        if self.kind == "constant":
            return np.zeros_like(y)
        if self.kind == "height":
            g = np.zeros_like(y)
            g[-1] = -1.0
            return t.project_tangent(y, g, check=False)
        if self.kind == "squared-distance":
            r = self._sphere_radius(y)
            p = np.zeros_like(y)
            p[-1] = 1.0
            # grad r^2 = -2 (r / sin r) (p - cos r y)
            r_over_sin = np.where(r < 1e-8, 1.0, r / np.where(r < 1e-8, 1.0, np.sin(r)))
            return -2.0 * r_over_sin * (p - y[-1] * y)
        return t.project_tangent(y, self._ambient_parts(y)[1], check=False)

    def hessian_matrix(self, y):
        """Ambient matrix M with hess(V, W) = V^T M W for tangent V, W."""
        y = np.asarray(y, dtype=float)
        t = self.target
        k = y.shape[0]
        grid = y.shape[1:]
        if self.kind == "constant":
            return np.zeros((k, k) + grid)
        proj = t.tangent_projector(y)
        if self.kind == "height":
            # hess(V, W) = -<V, W> G(y) = y_{n+1} <V, W>
            return y[-1] * proj
        if self.kind == "squared-distance":
            r = self._sphere_radius(y)
            rc = self._rcot(r)
            p = np.zeros_like(y)
            p[-1] = 1.0
            u = p - y[-1] * y
            nu = np.sqrt(_dot(u, u))
            u = u / np.where(nu > 0, nu, 1.0)
            # 2 dr(x)dr + 2 r cot r (g - dr(x)dr)
            return 2.0 * rc * proj + 2.0 * (1.0 - rc) * (u[:, None] * u[None, :])
        _, grad, hess = self._ambient_parts(y)
        if not t.is_sphere:
            return np.array(hess, dtype=float)
        shifted = hess - _dot(grad, y) * np.eye(k).reshape((k, k) + (1,) * len(grid))
        return np.einsum("ab...,bc...,cd...->ad...", proj, shifted, proj)

    def hessian(self, y, V, W):
        return np.einsum("a...,ab...,b...->...", V, self.hessian_matrix(y), W)


def potential_eval(p: Potential, y):
    """Return ``(value, grad, hess)`` with ``hess(V, W)`` a bilinear evaluator at y."""
    y = np.asarray(y, dtype=float)
    p.target.check_point(y)
    value = p.evaluate(y)
    grad = p.gradient(y)
    mat = p.hessian_matrix(y)

    def hess(V, W):
        return np.einsum("a...,ab...,b...->...", np.asarray(V, float), mat, np.asarray(W, float))

    return value, grad, hess


def make_potential(kind: str, target: Target, **params) -> Potential:
    if kind == "constant":
        return Potential("constant", target, value=float(params.get("value", 0.0)))
    if kind == "ambient-quadratic":
        return Potential("ambient-quadratic", target, coef=float(params.get("coef", 0.0)))
    if kind in ("height", "squared-distance"):
        return Potential(kind, target)
    if kind == "ambient-custom":
        return Potential(kind, target, ambient=params.get("function"),
                         ambient_grad=params.get("gradient"), ambient_hess=params.get("hessian"))
    raise ConfigError(f"unknown potential kind {kind!r}")
