"""Index-form probing, conformal fields on spheres and instability certificates."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import integrate
from .errors import PreconditionError, UnsupportedTargetError, ValidationError
from .fields import MapField, SectionField, horizontal_differential
from .flow import _low_frequency_field
from .target import Potential
from .variational import (energy_density, index_form_gradient, index_form_polarized, index_terms,
                          tension_sup, total_energy)

IDENTITY_RTOL = 1e-10
PROBE_SLACK = 1e-8


def _dot(a, b):
    return np.sum(a * b, axis=0)


def _require_sphere(f: MapField):
    if not f.target.is_sphere:
        raise UnsupportedTargetError("conformal fields are only defined for sphere targets")


@dataclass
class ConformalField:
    """v = a - <a, f> f along f, with phi = <a, f>."""

    a: np.ndarray
    v: SectionField
    phi: np.ndarray

    def covariant_derivatives(self, dfs: np.ndarray) -> list:
        """Exact pull-back derivatives nabla_{e_i} v = -phi df(e_i)."""
        return [-self.phi * dfs[i] for i in range(dfs.shape[0])]


def conformal_field(f: MapField, a) -> ConformalField:
    _require_sphere(f)
    a = np.asarray(a, dtype=float)
    if a.shape != (f.target.ambient_dim,) or abs(np.linalg.norm(a) - 1.0) > 1e-12:
        raise ValidationError("conformal direction must be a unit ambient vector")
    a_field = a.reshape((-1, 1, 1, 1))
    phi = _dot(a_field, f.values)
    v = a_field - phi * f.values
    return ConformalField(a, SectionField(f, v, check=False), phi)


def basis_vector(k: int, s: int) -> np.ndarray:
    e = np.zeros(k)
    e[s] = 1.0
    return e


@dataclass
class IdentityCheck:
    lhs: float
    rhs: float
    diff: float
    scale: float

    @property
    def ok(self) -> bool:
        return self.diff <= IDENTITY_RTOL * self.scale


def _conformal_index(f, cf, G, dfs):
    return index_terms(f, cf.v, G, derivatives=cf.covariant_derivatives(dfs), dfs=dfs)


def sphere_index_identity(f: MapField, G: Potential, a) -> IdentityCheck:
    """I(v, v) against int {2 e_H (phi^2 - |v|^2) + sum_i <df e_i, v>^2 - hess G(v, v)}."""
    cf = conformal_field(f, a)
    dfs = horizontal_differential(f)
    lhs = _conformal_index(f, cf, G, dfs).value
    e_h = energy_density(f, dfs)
    v = cf.v.values
    density = 2.0 * e_h * (cf.phi**2 - _dot(v, v))
    for i in range(f.chart.m):
        density += _dot(dfs[i], v) ** 2
    density -= G.hessian(f.values, v, v)
    rhs = integrate(f.chart, density)
    scale = abs(lhs) + abs(rhs) + 1.0
    return IdentityCheck(lhs, rhs, abs(lhs - rhs), scale)


@dataclass
class LeungSum:
    sum_direct: float
    sum_reduced: float
    diff: float
    scale: float
    per_direction: list

    @property
    def ok(self) -> bool:
        return self.diff <= IDENTITY_RTOL * self.scale


def leung_sum(f: MapField, G: Potential) -> LeungSum:
    """Sum of I(v_s, v_s) over the coordinate directions, and its reduced form
    2(2 - n) int e_H - sum_s int hess G(v_s, v_s)."""
    _require_sphere(f)
    n = f.target.n
    k = f.target.ambient_dim
    dfs = horizontal_differential(f)
    values = []
    hess_total = 0.0
    for s in range(k):
        cf = conformal_field(f, basis_vector(k, s))
        terms = _conformal_index(f, cf, G, dfs)
        values.append(terms.value)
        hess_total += terms.hessian
    direct = float(sum(values))
    reduced = 2.0 * (2 - n) * integrate(f.chart, energy_density(f, dfs)) - hess_total
    scale = abs(direct) + abs(reduced) + 1.0
    return LeungSum(direct, reduced, abs(direct - reduced), scale, values)


@dataclass
class StabilityVerdict:
    verdict: str
    min_index: float = float("inf")
    witness: Optional[SectionField] = field(default=None, repr=False)
    witness_ref: Optional[str] = None
    probes: int = 0
    lambda_min: Optional[float] = None
    tension_sup: Optional[float] = None
    hessian_min_eig: Optional[float] = None

    def to_record(self) -> dict:
        return {"verdict": self.verdict, "min_index": _finite_or_none(self.min_index),
                "witness_ref": self.witness_ref, "probes": self.probes,
                "lambda_min": self.lambda_min, "tension_sup": self.tension_sup,
                "hessian_min_eig": self.hessian_min_eig}


def _finite_or_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


def default_margin(f: MapField, G: Potential) -> float:
    return 1e-6 * (1.0 + abs(total_energy(f, G)))


def hessian_min_eigenvalue(f: MapField, G: Potential) -> float:
    """Smallest eigenvalue of hess G restricted to the tangent space, over the image of f."""
    mat = G.hessian_matrix(f.values)
    k = mat.shape[0]
    mats = np.moveaxis(mat.reshape(k, k, -1), -1, 0)
    pts = f.values.reshape(k, -1).T
    best = np.inf
    for M, y in zip(mats, pts):
        if f.target.is_sphere:
            # orthonormal basis of the tangent space at y
            q, _ = np.linalg.qr(np.column_stack([y, np.eye(k)]))
            basis = q[:, 1:k]
            M = basis.T @ M @ basis
        best = min(best, float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]))
    return best


def instability_certificate(f: MapField, G: Potential, margin: Optional[float] = None,
                            tension_threshold: float = 1e-2, rayleigh_iters: int = 200,
                            seed: int = 0) -> StabilityVerdict:
    """Look for a conformal direction v_s with I(v_s, v_s) < -margin.

    Falls back to Rayleigh-quotient minimisation when no v_s certifies.
    """
    _require_sphere(f)
    sup = tension_sup(f, G)
    if sup > tension_threshold:
        raise PreconditionError(f"map is not critical enough: sup|tau| = {sup:.3e} > {tension_threshold:.3e}")
    if margin is None:
        margin = default_margin(f, G)
    leung = leung_sum(f, G)
    values = leung.per_direction
    s = int(np.argmin(values))
    if values[s] < -margin:
        cf = conformal_field(f, basis_vector(f.target.ambient_dim, s))
        return StabilityVerdict("unstable-certified", values[s], cf.v, f"conformal:e{s + 1}",
                                probes=len(values), tension_sup=sup)
    lam, V = rayleigh_minimize(f, G, rayleigh_iters, seed)
    norm = integrate(f.chart, _dot(V.values, V.values))
    value = lam * norm
    if value < -margin:
        return StabilityVerdict("unstable-certified", value, V, "rayleigh", probes=len(values),
                                lambda_min=lam, tension_sup=sup)
    return StabilityVerdict("inconclusive", min(min(values), value), None, None, probes=len(values),
                            lambda_min=lam, tension_sup=sup)


def random_section(f: MapField, rng: np.random.Generator) -> SectionField:
    """Low-frequency random ambient field projected onto the tangent spaces of f."""
    w = _low_frequency_field(f.chart, f.target.ambient_dim, rng)
    return SectionField(f, f.target.project_tangent(f.values, w, check=False), check=False)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SUBFLOW_THREADS", "1")))
    except ValueError:
        return 1


def stability_probe(f: MapField, G: Potential, samples: int, seed: int = 0,
                    slack: float = PROBE_SLACK, extra=()) -> StabilityVerdict:
    """Evaluate I(V, V) on ``samples`` seeded random sections (plus ``extra``).

    A probe certifies instability when I(V, V) < -slack * scale, where scale is
    the sum of magnitudes of the three index-form integrals for that probe.
    """
    if samples <= 0 and not extra:
        return StabilityVerdict("inconclusive", probes=0)
    dfs = horizontal_differential(f)
    sections = list(extra)
    seeds = np.random.SeedSequence(seed).spawn(max(samples, 0))
    sections += [random_section(f, np.random.default_rng(s)) for s in seeds]

    def run(V):
        return index_terms(f, V, G, dfs=dfs)

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, sections))
    else:
        results = [run(V) for V in sections]

    best = None
    for idx, terms in enumerate(results):
        if best is None or terms.value < results[best].value:
            best = idx
        if terms.value < -slack * (1.0 + terms.scale):
            return StabilityVerdict("unstable-certified", terms.value, sections[idx], f"probe:{idx}",
                                    probes=len(sections))
    return StabilityVerdict("stable-probed", results[best].value, None, None, probes=len(sections))


def _l2(f, a, b):
    return integrate(f.chart, _dot(a.values, b.values))


def rayleigh_minimize(f: MapField, G: Potential, iters: int, seed: int = 0, start=None,
                      max_restarts: int = 5):
    """Minimise I(V, V) / ||V||^2 over tangent sections.

    Each iteration solves the Rayleigh-Ritz problem on span{V, g, p} where g is
    the projected gradient and p the previous step (locally optimal steepest
    descent); the reduced matrices are assembled with the polarised index form,
    so the Rayleigh value never increases.  Returns ``(lambda_estimate, V)``.
    """
    if iters < 1:
        raise ValidationError("rayleigh_minimize needs iters >= 1")
    rng = np.random.default_rng(seed)
    V = start if start is not None else random_section(f, rng)
    restarts = 0
    while np.sqrt(_l2(f, V, V)) < 1e-14:
        restarts += 1
        if restarts > max_restarts:
            raise ValidationError("could not draw a nondegenerate starting section")
        V = random_section(f, np.random.default_rng(seed + restarts))
    V = V * (1.0 / np.sqrt(_l2(f, V, V)))
    dfs = horizontal_differential(f)
    lam = index_form_polarized(f, V, V, G, dfs)
    prev = None
    for _ in range(iters):
        g = index_form_gradient(f, V, G, dfs)
        # residual direction: gradient of the Rayleigh quotient
        r = g - V * (2.0 * lam)
        basis = [V, r] + ([prev] if prev is not None else [])
        basis = _orthonormalize(f, basis)
        if len(basis) < 2:
            break
        A = np.empty((len(basis), len(basis)))
        for a, b1 in enumerate(basis):
            for b, b2 in enumerate(basis[a:], start=a):
                A[a, b] = A[b, a] = index_form_polarized(f, b1, b2, G, dfs)
        w, vecs = np.linalg.eigh(A)
        coeffs = vecs[:, 0]
        if w[0] >= lam:
            break
        newV = basis[0] * coeffs[0]
        for c, b in zip(coeffs[1:], basis[1:]):
            newV = newV + b * c
        newV = newV * (1.0 / np.sqrt(_l2(f, newV, newV)))
        prev = newV - V * _l2(f, newV, V)
        V, lam = newV, float(w[0])
    return float(lam), V


def _orthonormalize(f, vecs, tol=1e-10):
    out = []
    for v in vecs:
        for u in out:
            v = v - u * _l2(f, u, v)
        for u in out:
            v = v - u * _l2(f, u, v)
        nv = np.sqrt(max(_l2(f, v, v), 0.0))
        if nv > tol:
            out.append(v * (1.0 / nv))
    return out
