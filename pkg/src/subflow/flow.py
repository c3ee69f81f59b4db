"""Geodesic gradient flow of the horizontal energy with potential."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .domain import DomainChart
from .errors import ConfigError, NumericalBlowupError, ValidationError
from .fields import MapField
from .target import Potential, Target
from .variational import tension_with_potential, total_energy

INITIAL_KINDS = ("constant", "wrap", "random-smooth")


@dataclass
class FlowOptions:
    dt: float = 0.02
    tol: float = 1e-3
    max_steps: int = 5000
    backtrack: float = 0.5
    seed: int = 0
    backtracking: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"flow dt must be positive, got {self.dt}")
        if not self.tol > 0:
            raise ValidationError(f"flow tol must be positive, got {self.tol}")
        if not 0 < self.backtrack < 1:
            raise ValidationError(f"backtracking factor must lie in (0, 1), got {self.backtrack}")
        if self.max_steps < 0:
            raise ValidationError("max_steps must be nonnegative")


@dataclass
class FlowRecord:
    step: int
    energy: float
    tension_sup: float
    dt: float
    accepted: bool = True


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)

    def append(self, rec: FlowRecord) -> None:
        self.records.append(rec)

    def accepted(self) -> list:
        return [r for r in self.records if r.accepted]

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.accepted()])

    def write_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "E", "tension_sup", "dt", "accepted"])
            for r in self.records:
                w.writerow([r.step, repr(r.energy), repr(r.tension_sup), repr(r.dt), int(r.accepted)])
        tmp.replace(path)


def _low_frequency_field(chart: DomainChart, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random trigonometric field with wavenumbers in {-1, 0, 1}^3, sup norm 1."""
    x, y, z = chart.coords
    scale = [2 * np.pi / p for p in chart.periods]
    out = np.zeros((k,) + chart.resolution)
    modes = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
    for comp in range(k):
        for kx, ky, kz in modes:
            ph = kx * scale[0] * x + ky * scale[1] * y + kz * scale[2] * z
            ca, cb = rng.normal(size=2)
            out[comp] += ca * np.cos(ph) + cb * np.sin(ph)
    return out / np.max(np.abs(out))


def initial_map(kind: str, chart: DomainChart, target: Target, seed: int = 0,
                point=None, amplitude: float = 0.5) -> MapField:
    """Starting maps for the flow.

    constant       f = point (default: last basis vector)
    wrap           (cos x, sin x cos y, sin x sin y, 0, ...), sphere targets with n >= 2
    random-smooth  point + low-frequency perturbation, projected back to the target
    """
    k = target.ambient_dim
    if point is None:
        point = np.zeros(k)
        point[-1] = 1.0
    point = np.asarray(point, dtype=float)
    if point.shape != (k,):
        raise ConfigError(f"initial point must have {k} components")
    point = target.normalize(point)
    base = np.broadcast_to(point.reshape((k, 1, 1, 1)), (k,) + chart.resolution).copy()
    if kind == "constant":
        return MapField(chart, target, base)
    if kind == "wrap":
        if not target.is_sphere or target.n < 2:
            raise ConfigError("wrap initial map needs a sphere target of dimension >= 2")
        x, y, _ = chart.coords
        vals = np.zeros((k,) + chart.resolution)
        vals[0] = np.cos(x)
        vals[1] = np.sin(x) * np.cos(y)
        vals[2] = np.sin(x) * np.sin(y)
        return MapField(chart, target, vals)
    if kind == "random-smooth":
        rng = np.random.default_rng(seed)
        vals = base + amplitude * _low_frequency_field(chart, k, rng)
        return MapField(chart, target, target.normalize(vals))
    raise ConfigError(f"unknown initial map {kind!r}; choose from {', '.join(INITIAL_KINDS)}")


def flow_step(f: MapField, G: Potential, dt: float, energy: Optional[float] = None,
              tension=None):
    """One geodesic Euler step along the tension field.

    Returns ``(candidate, candidate_energy, accepted)``; acceptance means the
    energy did not increase.
    """
    if not dt > 0:
        raise ValidationError("step size must be positive")
    if energy is None:
        energy = total_energy(f, G)
    if tension is None:
        tension = tension_with_potential(f, G)
    cand = MapField(f.chart, f.target, f.target.exp_map(f.values, dt * tension.values, check=False))
    e_new = total_energy(cand, G)
    if not math.isfinite(e_new):
        raise NumericalBlowupError(f"energy became non-finite with dt={dt}")
    return cand, e_new, e_new <= energy


def _sup(tau) -> float:
    return float(np.max(np.sqrt(np.sum(tau.values**2, axis=0))))


def flow_until(f0: MapField, G: Potential, opts: FlowOptions,
               checkpoint: Optional[Callable[[int, MapField], None]] = None):
    """Iterate ``flow_step`` with backtracking until the tension is below tol.

    Returns ``(f, trace, status)`` with status one of ``converged``,
    ``max-steps``.  A non-finite energy raises NumericalBlowupError carrying
    the trace so far.  Every attempted step counts against ``max_steps``.
    """
    f = f0
    energy = total_energy(f, G)
    tau = tension_with_potential(f, G)
    sup = _sup(tau)
    dt = opts.dt
    trace = FlowTrace()
    trace.append(FlowRecord(0, energy, sup, 0.0))
    step = 0
    while sup > opts.tol:
        if step >= opts.max_steps:
            return f, trace, "max-steps"
        step += 1
        try:
            cand, e_new, ok = flow_step(f, G, dt, energy, tau)
        except NumericalBlowupError as exc:
            exc.trace = trace
            raise
        if ok or not opts.backtracking:
            f, energy = cand, e_new
            tau = tension_with_potential(f, G)
            sup = _sup(tau)
            if not math.isfinite(sup):
                raise NumericalBlowupError("tension became non-finite", trace)
            trace.append(FlowRecord(step, energy, sup, dt))
            if checkpoint is not None and opts.checkpoint_every and step % opts.checkpoint_every == 0:
                checkpoint(step, f)
        else:
            trace.append(FlowRecord(step, e_new, float("nan"), dt, accepted=False))
            dt *= opts.backtrack
    return f, trace, "converged"
