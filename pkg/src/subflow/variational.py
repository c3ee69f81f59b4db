"""Horizontal energy with potential, its tension field and index form.

Everything here is evaluated with the discrete operators of
:mod:`subflow.fields` and the quadrature of :mod:`subflow.domain`, so that the
residual checks compare two discretisations of the same continuous identity.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import integrate
from .fields import (MapField, SectionField, frame_derivative, frame_divergence_adjoint,
                     horizontal_differential, pullback_covariant_derivative)
from .target import Potential


@dataclass
class VariationReport:
    check: str
    analytic: float
    fd: float
    residual: float
    h: float
    dt: float
    grid: tuple = ()
    order: Optional[float] = None
    scale: float = 1.0

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["grid"] = list(self.grid)
        return rec


def _dot(a, b):
    return np.sum(a * b, axis=0)


def energy_density(f: MapField, dfs=None) -> np.ndarray:
    """e_H(f) = 1/2 sum_i |df(e_i)|^2."""
    if dfs is None:
        dfs = horizontal_differential(f)
    return 0.5 * np.sum(dfs**2, axis=(0, 1))


def total_energy(f: MapField, G: Potential) -> float:
    return integrate(f.chart, energy_density(f) - G.evaluate(f.values))


def _horizontal_connection_term(chart, dfs):
    """df_H(nabla_{e_i} e_i) summed over horizontal i."""
    m = chart.m
    coeff = np.zeros((m,) + chart.resolution)
    for i in range(m):
        coeff += chart.gamma[i, i, :m]
    return np.einsum("j...,ja...->a...", coeff, dfs)


def _zeta_term(chart, dfs):
    return np.einsum("j...,ja...->a...", chart.zeta[:chart.m], dfs)


def tension_with_potential(f: MapField, G: Potential) -> SectionField:
    """tau_HG(f) = trace beta_H(f) - df(zeta) + grad G(f)."""
    chart, t = f.chart, f.target
    dfs = horizontal_differential(f)
    trace = np.zeros_like(f.values)
    for i in range(chart.m):
        trace += frame_derivative(chart, dfs[i], i)
    trace = t.project_tangent(f.values, trace, check=False)
    tau = trace - _horizontal_connection_term(chart, dfs) - _zeta_term(chart, dfs) + G.gradient(f.values)
    # df(e_i) are tangent so the sum is tangent; strip rounding-level normal parts
    tau = t.project_tangent(f.values, tau, check=False)
    return SectionField(f, tau, check=False)


def tension_sup(f: MapField, G: Potential) -> float:
    tau = tension_with_potential(f, G).values
    return float(np.max(np.sqrt(np.sum(tau**2, axis=0))))


def varied_map(f: MapField, V: SectionField, t: float) -> MapField:
    return MapField(f.chart, f.target, f.target.exp_map(f.values, t * V.values, check=False))


def _energy_along(f, V, G, ts):
    return [total_energy(varied_map(f, V, t), G) for t in ts]


def default_dt(f: MapField) -> float:
    return f.chart.h


def first_variation_residual(f: MapField, V: SectionField, G: Potential,
                             dt: Optional[float] = None) -> VariationReport:
    """Compare -int <V, tau_HG> with a centred difference of E(exp_f(tV))."""
    dt = default_dt(f) if dt is None else float(dt)
    tau = tension_with_potential(f, G)
    analytic = -integrate(f.chart, _dot(V.values, tau.values))
    em2, em1, ep1, ep2 = _energy_along(f, V, G, (-2 * dt, -dt, dt, 2 * dt))
    fd = (8.0 * (ep1 - em1) - (ep2 - em2)) / (12.0 * dt)
    scale = 1.0 + abs(analytic) + abs(fd)
    return VariationReport("first_variation", analytic, fd, abs(analytic - fd), f.chart.h, dt,
                           f.chart.resolution, scale=scale)


def divergence_identity_residual(f: MapField, W: SectionField) -> VariationReport:
    """Both sides of int [e_i<W, df e_i> - <W, df_H(nabla_{e_i} e_i)>] = int <W, df(zeta)>.

    ``analytic`` holds the left side, ``fd`` the right side.
    """
    chart = f.chart
    dfs = horizontal_differential(f)
    lhs_density = np.zeros(chart.resolution)
    for i in range(chart.m):
        lhs_density += frame_derivative(chart, _dot(W.values, dfs[i]), i)
    lhs_density -= _dot(W.values, _horizontal_connection_term(chart, dfs))
    lhs = integrate(chart, lhs_density)
    rhs = integrate(chart, _dot(W.values, _zeta_term(chart, dfs)))
    scale = 1.0 + integrate(chart, np.abs(lhs_density)) + abs(rhs)
    return VariationReport("divergence_identity", lhs, rhs, abs(lhs - rhs), chart.h, 0.0,
                           chart.resolution, scale=scale)


@dataclass
class IndexTerms:
    """The three integrals making up the index form."""

    kinetic: float
    curvature: float
    hessian: float

    @property
    def value(self) -> float:
        return self.kinetic - self.curvature - self.hessian

    @property
    def scale(self) -> float:
        return abs(self.kinetic) + abs(self.curvature) + abs(self.hessian)


def index_terms(f: MapField, V: SectionField, G: Potential,
                derivatives: Optional[Sequence[np.ndarray]] = None,
                dfs: Optional[np.ndarray] = None) -> IndexTerms:
    """Integrals of sum_i |nabla_{e_i} V|^2, sum_i <R(df e_i, V)V, df e_i> and hess G(V, V).

    ``derivatives`` may supply nabla_{e_i} V (one array per horizontal i) in
    place of the finite-difference pull-back derivative.
    """
    chart, t = f.chart, f.target
    if dfs is None:
        dfs = horizontal_differential(f)
    kin = np.zeros(chart.resolution)
    curv = np.zeros(chart.resolution)
    for i in range(chart.m):
        if derivatives is None:
            dv = pullback_covariant_derivative(f, V, i).values
        else:
            dv = np.asarray(derivatives[i])
        kin += _dot(dv, dv)
        curv += t.curvature_term(f.values, dfs[i], V.values, check=False)
    hess = G.hessian(f.values, V.values, V.values)
    return IndexTerms(integrate(chart, kin), integrate(chart, curv), integrate(chart, hess))


def index_form(f: MapField, V: SectionField, G: Potential, derivatives=None, dfs=None) -> float:
    """I_HG(V, V)."""
    return index_terms(f, V, G, derivatives, dfs).value


def index_form_polarized(f: MapField, V: SectionField, W: SectionField, G: Potential, dfs=None) -> float:
    """I_HG(V, W) = (I(V+W) - I(V-W)) / 4."""
    if dfs is None:
        dfs = horizontal_differential(f)
    return 0.25 * (index_form(f, V + W, G, dfs=dfs) - index_form(f, V - W, G, dfs=dfs))


def index_form_gradient(f: MapField, V: SectionField, G: Potential, dfs=None) -> SectionField:
    """Tangent field g with <g, W>_{L2} = 2 I(V, W) for all tangent W.

    The L2 pairing is the discrete one used by ``integrate``.
    """
    chart, t = f.chart, f.target
    if dfs is None:
        dfs = horizontal_differential(f)
    out = np.zeros_like(V.values)
    for i in range(chart.m):
        dv = pullback_covariant_derivative(f, V, i).values
        # adjoint of W -> P D_i W under sum vol * <., .>
        out += frame_divergence_adjoint(chart, chart.vol * dv, i)
        K = t.curvature_operator(f.values, dfs[i])
        out -= chart.vol * np.einsum("ab...,b...->a...", K, V.values)
    out -= chart.vol * np.einsum("ab...,b...->a...", G.hessian_matrix(f.values), V.values)
    out = t.project_tangent(f.values, out, check=False)
    # convert from the plain-sum gradient to the vol-weighted L2 gradient
    return SectionField(f, 2.0 * out / chart.vol, check=False)


def second_variation_residual(f: MapField, V: SectionField, G: Potential, dt: Optional[float] = None,
                              literal_hessian_sign: bool = False) -> VariationReport:
    """Compare the index form with a 5-point second difference of E(exp_f(tV)).

    Geodesic variations have zero acceleration, so the tension term drops out
    and the comparison is valid for any f.  ``literal_hessian_sign`` flips the
    sign of the potential Hessian term (diagnostic for the sign convention).
    """
    dt = default_dt(f) if dt is None else float(dt)
    terms = index_terms(f, V, G)
    sign = -1.0 if literal_hessian_sign else 1.0
    analytic = terms.kinetic - terms.curvature - sign * terms.hessian
    em2, em1, e0, ep1, ep2 = _energy_along(f, V, G, (-2 * dt, -dt, 0.0, dt, 2 * dt))
    fd = (-ep2 + 16.0 * ep1 - 30.0 * e0 + 16.0 * em1 - em2) / (12.0 * dt * dt)
    scale = 1.0 + terms.scale
    name = "second_variation_literal" if literal_hessian_sign else "second_variation"
    return VariationReport(name, analytic, fd, abs(analytic - fd), f.chart.h, dt,
                           f.chart.resolution, scale=scale)


def convergence_order(hs: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of log(residual) against log(h)."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(residuals, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def pairwise_orders(hs, residuals) -> list[float]:
    return [float(np.log(r0 / r1) / np.log(h0 / h1))
            for h0, h1, r0, r1 in zip(hs[:-1], hs[1:], residuals[:-1], residuals[1:])]
