"""Grid-sampled maps, sections along them, and their frame derivatives."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import DomainChart
from .errors import ValidationError
from .target import Target

SECTION_TANGENT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MapField:
    """f: M -> N stored as ambient points, shape (ambient_dim, n1, n2, n3)."""

    chart: DomainChart
    target: Target
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.target.ambient_dim,) + self.chart.resolution:
            raise ValidationError(f"map values have shape {vals.shape}, expected "
                                  f"{(self.target.ambient_dim,) + self.chart.resolution}")
        self.target.check_point(vals)
        object.__setattr__(self, "values", vals)

    def section(self, values, check=True) -> "SectionField":
        return SectionField(self, np.asarray(values, dtype=float), check=check)

    def zero_section(self) -> "SectionField":
        return SectionField(self, np.zeros_like(self.values), check=False)

    def constraint_drift(self) -> float:
        if not self.target.is_sphere:
            return 0.0
        return float(np.max(np.abs(np.sqrt(np.sum(self.values**2, axis=0)) - 1.0)))


class SectionField:
    """Section of f^{-1}TN: ambient vectors tangent to the target at f(x)."""

    def __init__(self, base: MapField, values, check=True):
        values = np.asarray(values, dtype=float)
        if values.shape != base.values.shape:
            raise ValidationError(f"section shape {values.shape} does not match map shape {base.values.shape}")
        if check:
            base.target.check_tangent(base.values, values, "section")
        self.base = base
        self.values = values

    def __add__(self, other):
        return SectionField(self.base, self.values + other.values, check=False)

    def __sub__(self, other):
        return SectionField(self.base, self.values - other.values, check=False)

    def __neg__(self):
        return SectionField(self.base, -self.values, check=False)

    def __mul__(self, s):
        return SectionField(self.base, s * self.values, check=False)

    __rmul__ = __mul__


def coordinate_derivative(u: np.ndarray, axis: int, spacing: float, order: int = 4) -> np.ndarray:
    """Periodic central difference along ``axis``."""
    if order == 2:
        return (np.roll(u, -1, axis) - np.roll(u, 1, axis)) / (2.0 * spacing)
    if order == 4:
        p1 = np.roll(u, -1, axis)
        m1 = np.roll(u, 1, axis)
        p2 = np.roll(u, -2, axis)
        m2 = np.roll(u, 2, axis)
        return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * spacing)
    raise ValidationError(f"unsupported stencil order {order}")


def frame_derivative(chart: DomainChart, u, A: int) -> np.ndarray:
    """e_A(u) for a scalar field or a stack of fields (grid on the last three axes)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-3:] != chart.resolution:
        raise ValidationError(f"field grid {u.shape[-3:]} does not match chart {chart.resolution}")
    if not 0 <= A < chart.dim:
        raise ValidationError(f"frame index {A} out of range")
    out = np.zeros_like(u)
    for k in range(3):
        coeff = chart.frame[A, k]
        if not np.any(coeff):
            continue
        out += coeff * coordinate_derivative(u, u.ndim - 3 + k, chart.spacing[k], chart.order)
    return out


def frame_divergence_adjoint(chart: DomainChart, u, A: int) -> np.ndarray:
    """Transpose of ``frame_derivative`` under the plain grid sum.

    Central stencils are skew on a periodic grid, so the transpose is
    -sum_k D_k(e_A^k u).
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    for k in range(3):
        coeff = chart.frame[A, k]
        if not np.any(coeff):
            continue
        out -= coordinate_derivative(coeff * u, u.ndim - 3 + k, chart.spacing[k], chart.order)
    return out


def horizontal_differential(f: MapField) -> np.ndarray:
    """df(e_i) for i < m, projected tangent; shape (m, ambient_dim, n1, n2, n3)."""
    chart, t = f.chart, f.target
    out = np.empty((chart.m,) + f.values.shape)
    for i in range(chart.m):
        out[i] = t.project_tangent(f.values, frame_derivative(chart, f.values, i), check=False)
    return out


def pullback_covariant_derivative(f: MapField, V: SectionField, A: int) -> SectionField:
    """Pull-back Levi-Civita derivative along e_A (derivative, then projection)."""
    f.target.check_tangent(f.values, V.values, "section")
    d = frame_derivative(f.chart, V.values, A)
    return SectionField(f, f.target.project_tangent(f.values, d, check=False), check=False)


def apply_frame_vector(dfs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """df(X) for X = sum_i coeffs[i] e_i given the stack df(e_i)."""
    return np.einsum("i...,ia...->a...", coeffs, dfs)


# --- serialization -----------------------------------------------------------

def save_field(path, f: MapField) -> None:
    """Write a map field.

    ``.npy``  raw float64 array of shape (ambient_dim, n1, n2, n3), C order.
    otherwise CSV: two ``#`` metadata lines (JSON) then one row per grid point
    ``i,j,k,y0,...`` in lexicographic (i, j, k) order.
    """
    path = Path(path)
    meta = {"chart": f.chart.name, "resolution": list(f.chart.resolution),
            "periods": list(f.chart.periods), "target": f.target.kind, "n": f.target.n}
    tmp = path.with_name(path.name + ".tmp")
    if path.suffix == ".npy":
        with open(tmp, "wb") as fh:
            np.save(fh, f.values)
        path.with_name(path.name + ".json").write_text(json.dumps(meta))
    else:
        k = f.values.shape[0]
        idx = np.indices(f.chart.resolution).reshape(3, -1).T
        vals = f.values.reshape(k, -1).T
        with open(tmp, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta) + "\n")
            w = csv.writer(fh)
            w.writerow(["i", "j", "k"] + [f"y{c}" for c in range(k)])
            for ijk, y in zip(idx, vals):
                w.writerow([*ijk.tolist(), *(repr(float(v)) for v in y)])
    tmp.replace(path)


def load_field_values(path) -> tuple[dict, np.ndarray]:
    """Read a file written by :func:`save_field`; returns (metadata, values)."""
    path = Path(path)
    if path.suffix == ".npy":
        meta_path = path.with_name(path.name + ".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return meta, np.load(path)
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValidationError(f"{path}: missing metadata line")
        meta = json.loads(first[1:])
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    res = tuple(meta["resolution"])
    if body.shape[0] != int(np.prod(res)):
        raise ValidationError(f"{path}: expected {int(np.prod(res))} rows, got {body.shape[0]}")
    order = np.lexsort((body[:, 2], body[:, 1], body[:, 0]))
    vals = body[order, 3:].T.reshape((-1,) + res)
    return meta, vals
