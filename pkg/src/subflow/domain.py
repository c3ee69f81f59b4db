"""Periodic 3D grids carrying an adapted orthonormal frame.

Index conventions used throughout the package (0-based):

* ``frame[A, k]``      coordinate component k of frame vector e_A
* ``structure[A, B, C]`` = c^C_{AB}, with [e_A, e_B] = c^C_{AB} e_C
* ``gamma[A, B, C]``   = <nabla_{e_A} e_B, e_C>
* ``zeta[A]``          = sum over vertical alpha of gamma[alpha, alpha, A]

Every per-point array carries the grid as its last three axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError

CHART_NAMES = ("twisted-torus", "weighted-torus", "abelian-torus")
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class DomainChart:
    name: str
    resolution: tuple[int, int, int]
    periods: tuple[float, float, float]
    m: int
    d: int
    frame: np.ndarray
    structure: np.ndarray
    gamma: np.ndarray
    zeta: np.ndarray
    vol: np.ndarray
    order: int = 4
    coords: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.m + self.d

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.resolution

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(p / n for p, n in zip(self.periods, self.resolution))

    @property
    def h(self) -> float:
        """Largest grid spacing; the refinement parameter for convergence fits."""
        return max(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return integrate(self, np.ones(self.resolution))

    def with_order(self, order: int) -> "DomainChart":
        _check_order(order)
        return DomainChart(**{**self.__dict__, "order": order})


def _check_order(order):
    if order not in (2, 4):
        raise ValidationError(f"stencil order must be 2 or 4, got {order}")


def _check_resolution(resolution):
    res = tuple(int(n) for n in resolution)
    if len(res) != 3:
        raise ValidationError(f"resolution must have three entries, got {resolution!r}")
    for n in res:
        if n < 8 or n % 2:
            raise ValidationError(f"each resolution entry must be even and >= 8, got {res}")
    return res


def koszul_connection(structure: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Levi-Civita coefficients of an orthonormal frame from its structure functions.

    2 Gamma^C_{AB} = c^C_{AB} - c^A_{BC} + c^B_{CA}
    """
    c = np.asarray(structure, dtype=float)
    asym = c + np.swapaxes(c, 0, 1)
    if np.max(np.abs(asym), initial=0.0) > atol * max(1.0, np.max(np.abs(c), initial=0.0)):
        raise ValidationError("structure functions must be antisymmetric in the lower indices")
    # c^A_{BC} -> c[B, C, A];  c^B_{CA} -> c[C, A, B]
    c_bca = np.moveaxis(c, (0, 1, 2), (1, 2, 0))
    c_cab = np.moveaxis(c, (0, 1, 2), (2, 0, 1))
    return 0.5 * (c - c_bca + c_cab)


def _grid(resolution, periods):
    axes = [np.arange(n) * (p / n) for n, p in zip(resolution, periods)]
    return tuple(np.meshgrid(*axes, indexing="ij"))


def build_chart(name: str, resolution=(16, 16, 16), periods=(TWO_PI,) * 3, order: int = 4) -> DomainChart:
    """Construct one of the built-in sub-Riemannian 3-tori.

    twisted-torus   e1 = dx, e2 = dy + sin(x) dz, e3 = dz
    weighted-torus  as above but e3 = (1 + sin(x)/2) dz
    abelian-torus   coordinate frame (not bracket generating)

    In each case H = span{e1, e2} and the frame is declared orthonormal.
    """
    if name not in CHART_NAMES:
        raise ConfigError(f"unknown chart {name!r}; choose from {', '.join(CHART_NAMES)}")
    res = _check_resolution(resolution)
    _check_order(order)
    periods = tuple(float(p) for p in periods)
    if len(periods) != 3 or min(periods) <= 0:
        raise ValidationError(f"periods must be three positive numbers, got {periods}")

    x, y, z = _grid(res, periods)
    one = np.ones(res)
    frame = np.zeros((3, 3) + res)
    structure = np.zeros((3, 3, 3) + res)

    frame[0, 0] = one
    if name == "abelian-torus":
        frame[1, 1] = one
        frame[2, 2] = one
    else:
        frame[1, 1] = one
        frame[1, 2] = np.sin(x)
        if name == "twisted-torus":
            frame[2, 2] = one
            # [e1, e2] = cos(x) e3
            structure[0, 1, 2] = np.cos(x)
        else:
            w = 1.0 + 0.5 * np.sin(x)
            dw = 0.5 * np.cos(x)
            frame[2, 2] = w
            # [e1, e2] = cos(x) dz = (cos(x)/w) e3 ;  [e1, e3] = w' dz = (w'/w) e3
            structure[0, 1, 2] = np.cos(x) / w
            structure[0, 2, 2] = dw / w
    structure[1, 0] = -structure[0, 1]
    structure[2, 0] = -structure[0, 2]
    structure[2, 1] = -structure[1, 2]

    gamma = koszul_connection(structure)
    m, d = 2, 1
    zeta = np.zeros((3,) + res)
    for alpha in range(m, m + d):
        zeta[:m] += gamma[alpha, alpha, :m]

    det = np.linalg.det(np.moveaxis(frame, (0, 1), (-2, -1)))
    if np.min(np.abs(det)) <= 0:
        raise ValidationError("frame is singular somewhere on the grid")
    vol = 1.0 / np.abs(det)
    return DomainChart(name=name, resolution=res, periods=periods, m=m, d=d, frame=frame,
                       structure=structure, gamma=gamma, zeta=zeta, vol=vol, order=order,
                       coords=(x, y, z))


def integrate(chart: DomainChart, u) -> float:
    """Riemann sum of ``u`` against the volume density.

    ``math.fsum`` fixes the result independently of numpy's pairwise blocking.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != chart.resolution:
        raise ValidationError(f"field shape {u.shape} does not match grid {chart.resolution}")
    w = (u * chart.vol).ravel()
    try:
        return math.fsum(w) * chart.cell_volume
    except (OverflowError, ValueError):
        # overflowing or inf - inf sums: report a non-finite value instead
        with np.errstate(all="ignore"):
            total = float(np.sum(w))
        return total * chart.cell_volume if not np.isfinite(total) else math.inf
