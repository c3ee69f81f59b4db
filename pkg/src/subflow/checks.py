"""Grid-refinement studies of the variational residuals."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import build_chart
from .flow import initial_map
from .stability import random_section
from .target import Potential, Target
from .variational import (VariationReport, convergence_order, divergence_identity_residual,
                          first_variation_residual, index_terms, pairwise_orders,
                          second_variation_residual)

# residuals below this fraction of the integrand scale count as exact zeros
EXACT_FLOOR = 1e-12
# observed order must reach this fraction of the stencil order (1.9 for 2, 3.8 for 4)
ORDER_FRACTION = 0.95


@dataclass
class RefinementStudy:
    check: str
    chart: str
    stencil_order: int
    reports: list = field(default_factory=list)
    observed_order: Optional[float] = None
    fitted_order: Optional[float] = None
    pair_orders: list = field(default_factory=list)
    exact: bool = False
    monotone: bool = False
    limit_hint: Optional[float] = None

    @property
    def threshold(self) -> float:
        return ORDER_FRACTION * self.stencil_order

    @property
    def passed(self) -> bool:
        if self.exact:
            return True
        return self.monotone and self.observed_order is not None and self.observed_order >= self.threshold

    def to_record(self) -> dict:
        return {"check": self.check, "chart": self.chart, "stencil_order": self.stencil_order,
                "levels": [r.to_record() for r in self.reports],
                "observed_order": self.observed_order, "fitted_order": self.fitted_order,
                "pair_orders": self.pair_orders, "exact": self.exact, "monotone": self.monotone,
                "threshold": self.threshold, "passed": self.passed, "limit_hint": self.limit_hint}


def study_inputs(chart_name: str, n: int, order: int, target: Target, seed: int, amplitude: float = 0.5):
    """Seeded random smooth map and tangent section on an n^3 grid."""
    chart = build_chart(chart_name, (n, n, n), order=order)
    f = initial_map("random-smooth", chart, target, seed=seed, amplitude=amplitude)
    V = random_section(f, np.random.default_rng(seed + 1))
    return f, V


def summarize(study: RefinementStudy) -> RefinementStudy:
    hs = [r.h for r in study.reports]
    res = [r.residual for r in study.reports]
    if all(r.residual <= EXACT_FLOOR * r.scale for r in study.reports):
        study.exact = True
        study.monotone = True
        return study
    study.monotone = all(b < a for a, b in zip(res[:-1], res[1:]))
    if min(res) > 0:
        study.pair_orders = pairwise_orders(hs, res)
        study.observed_order = study.pair_orders[-1]
        study.fitted_order = convergence_order(hs, res)
    return study


def refinement_study(check: str, chart_name: str, order: int, levels: Sequence[int], target: Target,
                     make_potential: Callable[[Target], Potential], seed: int = 0,
                     dt: Optional[float] = None, literal_hessian_sign: bool = False,
                     amplitude: float = 0.5) -> RefinementStudy:
    """Run one residual check on a sequence of n^3 grids.

    The observed order is the one between the two finest grids; ``passed``
    also requires the residual to decrease at every refinement.
    """
    label = check + ("_literal" if literal_hessian_sign else "")
    study = RefinementStudy(label, chart_name, order)
    G = make_potential(target)
    for n in levels:
        f, V = study_inputs(chart_name, n, order, target, seed, amplitude)
        if check == "first_variation":
            rep = first_variation_residual(f, V, G, dt)
        elif check == "divergence_identity":
            rep = divergence_identity_residual(f, V)
        elif check == "second_variation":
            rep = second_variation_residual(f, V, G, dt, literal_hessian_sign=literal_hessian_sign)
            if literal_hessian_sign:
                study.limit_hint = 2.0 * index_terms(f, V, G).hessian
        else:
            raise ValueError(f"unknown check {check!r}")
        if literal_hessian_sign and check != "second_variation":
            raise ValueError("literal_hessian_sign only applies to second_variation")
        study.reports.append(rep)
    summarize(study)
    for rep, o in zip(study.reports[1:], study.pair_orders):
        rep.order = o
    return study
