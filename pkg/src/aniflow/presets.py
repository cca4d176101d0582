"""Initial curves, exact solutions and the manufactured convergence problems.

Every preset maps an array of ``rho`` in [0, 1] to points of shape (n, d)
through ``position(rho, t=0.0)``.  Presets that are exact solutions of a
flow also provide ``d_rho``, ``d_t`` and ``d_rho2``.  ``nodes(grid)`` gives
the initial polygon; for most presets that is nodal interpolation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .anisotropy import (Anisotropy, ConstantMobility, DiagonalQuadraticAnisotropy, IsotropicAnisotropy,
                         InversePhiMobility, Mobility)
from .errors import InvalidInput, InvalidTime
from .mesh import NodalField, PeriodicGrid, interpolate

TWO_PI = 2.0 * math.pi


def _rho(rho):
    return np.atleast_1d(np.asarray(rho, dtype=float))


class CurvePreset:
    kind = "abstract"
    dim = 0
    exact = False

    def position(self, rho, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, rho, t: float = 0.0) -> np.ndarray:
        return self.position(rho, t)

    def evaluate(self, rho: float, t: float = 0.0) -> np.ndarray:
        """Single point ``x(rho, t)`` as a d-vector."""
        return self.position(np.array([rho]), t)[0]

    def nodes(self, grid: PeriodicGrid) -> NodalField:
        return interpolate(grid, self.position)


class SelfSimilarSolution(CurvePreset):
    """Exact solution of the form ``y(rho, t) = scale(t) * shape(rho)``.

    Subclasses provide ``scale``, ``scale_dt`` and the rho-derivatives of
    the shape via ``shape(rho, order)`` for orders 0, 1, 2.
    """

    exact = True

    def scale(self, t: float) -> float:
        raise NotImplementedError

    def scale_dt(self, t: float) -> float:
        raise NotImplementedError

    def shape(self, rho, order: int = 0) -> np.ndarray:
        raise NotImplementedError

    def position(self, rho, t=0.0):
        return self.scale(t) * self.shape(_rho(rho), 0)

    def d_rho(self, rho, t=0.0):
        return self.scale(t) * self.shape(_rho(rho), 1)

    def d_rho2(self, rho, t=0.0):
        return self.scale(t) * self.shape(_rho(rho), 2)

    def d_t(self, rho, t=0.0):
        return self.scale_dt(t) * self.shape(_rho(rho), 0)


def _trig(rho, order):
    """``order``-th derivative of ``(cos 2 pi rho, sin 2 pi rho)``."""
    c, s = np.cos(TWO_PI * rho), np.sin(TWO_PI * rho)
    k = TWO_PI**order
    cc, ss = [(c, s), (-s, c), (-c, -s)][order]
    return k * cc, k * ss


@dataclass(frozen=True)
class Circle(SelfSimilarSolution):
    """Circle of radius ``r`` in the x1-x2 plane, shrinking as ``sqrt(r^2 - 2t)``.

    The shrinking circle solves the unforced isotropic flow with unit mobility
    in any dimension.
    """

    r: float = 1.0
    dim: int = 2
    kind = "circle"

    def __post_init__(self):
        if not self.r > 0 or self.dim < 2:
            raise InvalidInput("circle needs r > 0 and dim >= 2")

    def scale(self, t):
        s = self.r**2 - 2.0 * t
        if s <= 0:
            raise InvalidTime(f"circle of radius {self.r} has vanished by t={t}")
        return math.sqrt(s)

    def scale_dt(self, t):
        return -1.0 / self.scale(t)

    def shape(self, rho, order=0):
        c, s = _trig(_rho(rho), order)
        out = np.zeros((c.shape[0], self.dim))
        out[:, 0], out[:, 1] = c, s
        return out


@dataclass(frozen=True)
class SelfSimilarEllipse3D(SelfSimilarSolution):
    """``sqrt(1 - 2t) (cos(2 pi rho)/sqrt2, delta sin(2 pi rho), delta cos(2 pi rho)/sqrt2)``, t < 1/2."""

    delta: float = 0.5
    dim = 3
    kind = "ellipse_3d_selfsimilar"

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidInput("delta must be positive")

    def scale(self, t):
        if t >= 0.5:
            raise InvalidTime(f"the self-similar ellipse is defined for t < 1/2, got t={t}")
        return math.sqrt(1.0 - 2.0 * t)

    def scale_dt(self, t):
        return -1.0 / self.scale(t)

    def shape(self, rho, order=0):
        c, s = _trig(_rho(rho), order)
        r2 = math.sqrt(2.0)
        return np.stack([c / r2, self.delta * s, self.delta * c / r2], axis=1)


@dataclass(frozen=True)
class Ellipse2D(CurvePreset):
    """Ellipse with semi-axes ``a``, ``b`` parameterized proportionally to arclength."""

    a: float = 1.0
    b: float = 0.5
    table_size: int = 10_000
    dim = 2
    kind = "ellipse_2d"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0) or self.table_size < 10:
            raise InvalidInput("ellipse_2d needs positive semi-axes")

    @cached_property
    def _table(self):
        theta = np.linspace(0.0, TWO_PI, self.table_size + 1)
        # speed |d/dtheta (a cos, b sin)|, cumulative Simpson on each subinterval
        speed = lambda th: np.hypot(self.a * np.sin(th), self.b * np.cos(th))
        mid = 0.5 * (theta[1:] + theta[:-1])
        seg = (theta[1] - theta[0]) / 6.0 * (speed(theta[:-1]) + 4 * speed(mid) + speed(theta[1:]))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return s / s[-1], theta, s[-1]

    @property
    def perimeter(self) -> float:
        return self._table[2]

    def position(self, rho, t=0.0):
        frac, theta, _ = self._table
        th = np.interp(np.mod(_rho(rho), 1.0), frac, theta)
        return np.stack([self.a * np.cos(th), self.b * np.sin(th)], axis=1)


@dataclass(frozen=True)
class Trefoil(CurvePreset):
    dim = 3
    kind = "trefoil"

    def position(self, rho, t=0.0):
        r = _rho(rho)
        w = 2.0 + np.cos(3 * TWO_PI * r)
        return np.stack([w * np.cos(2 * TWO_PI * r), w * np.sin(2 * TWO_PI * r), np.sin(3 * TWO_PI * r)], axis=1)

    def d_rho(self, rho, t=0.0):
        r = _rho(rho)
        w = 2.0 + np.cos(3 * TWO_PI * r)
        dw = -3 * TWO_PI * np.sin(3 * TWO_PI * r)
        c, s = np.cos(2 * TWO_PI * r), np.sin(2 * TWO_PI * r)
        return np.stack([dw * c - 2 * TWO_PI * w * s, dw * s + 2 * TWO_PI * w * c,
                         3 * TWO_PI * np.cos(3 * TWO_PI * r)], axis=1)


@dataclass(frozen=True)
class InterlockedRings(CurvePreset):
    dim = 3
    kind = "interlocked_rings"

    def position(self, rho, t=0.0):
        r = _rho(rho)
        p = math.pi
        x = 10 * (np.cos(2 * p * r) + np.cos(6 * p * r)) + np.cos(4 * p * r) + np.cos(8 * p * r)
        y = 6 * np.sin(2 * p * r) + 10 * np.sin(6 * p * r)
        z = 4 * np.sin(6 * p * r) * np.sin(5 * p * r) + 4 * np.sin(8 * p * r) - 2 * np.sin(12 * p * r)
        return np.stack([x, y, z], axis=1) / 8.0

    def d_rho(self, rho, t=0.0):
        r = _rho(rho)
        p = math.pi
        x = -10 * (2 * p * np.sin(2 * p * r) + 6 * p * np.sin(6 * p * r)) - 4 * p * np.sin(4 * p * r) \
            - 8 * p * np.sin(8 * p * r)
        y = 12 * p * np.cos(2 * p * r) + 60 * p * np.cos(6 * p * r)
        z = 4 * (6 * p * np.cos(6 * p * r) * np.sin(5 * p * r) + 5 * p * np.sin(6 * p * r) * np.cos(5 * p * r)) \
            + 32 * p * np.cos(8 * p * r) - 24 * p * np.cos(12 * p * r)
        return np.stack([x, y, z], axis=1) / 8.0


HELIX_TURNS = 8


def _helix(s):
    return np.stack([np.sin(2 * HELIX_TURNS * math.pi * s), np.cos(2 * HELIX_TURNS * math.pi * s), s], axis=1)


_HELIX_CORNERS = np.array([[0.0, 1.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
HELIX_LENGTH = math.sqrt(1.0 + (2 * HELIX_TURNS * math.pi) ** 2)


def _segment(k, s):
    a, b = _HELIX_CORNERS[k], _HELIX_CORNERS[k + 1]
    return a[None, :] + s[:, None] * (b - a)[None, :]


def _helix_piece_counts(J):
    lengths = np.array([HELIX_LENGTH, 1.0, 1.0, 1.0])
    ideal = J * lengths / lengths.sum()
    counts = np.maximum(1, np.floor(ideal).astype(int))
    # hand the remaining nodes to the pieces with the largest rounding loss
    while counts.sum() < J:
        counts[np.argmax(ideal - counts)] += 1
    while counts.sum() > J:
        counts[np.argmax(counts - ideal)] -= 1
    return counts


def closed_helix_nodes(grid: PeriodicGrid) -> NodalField:
    """Helix closed through ``(0,0,1)`` and the origin, nodes split by arclength.

    Each piece (helix, then three unit segments) receives a node count
    proportional to its length and uniform parameter spacing within it.
    """
    J = grid.J
    if J < 32:
        raise InvalidInput(f"closed helix needs J >= 32, got {J}")
    counts = _helix_piece_counts(J)
    pts = [_helix(np.arange(counts[0]) / counts[0])]
    for k in range(3):
        pts.append(_segment(k, np.arange(counts[k + 1]) / counts[k + 1]))
    return NodalField(grid, np.vstack(pts))


@dataclass(frozen=True)
class ClosedHelix(CurvePreset):
    """The closed helix path; ``position`` uses the exact arclength split of the pieces."""

    dim = 3
    kind = "closed_helix"

    def position(self, rho, t=0.0):
        r = np.mod(_rho(rho), 1.0)
        lengths = np.array([HELIX_LENGTH, 1.0, 1.0, 1.0])
        edges = np.concatenate([[0.0], np.cumsum(lengths) / lengths.sum()])
        piece = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, 3)
        local = (r - edges[piece]) / (edges[piece + 1] - edges[piece])
        out = np.empty((r.shape[0], 3))
        m = piece == 0
        out[m] = _helix(local[m])
        for k in range(3):
            m = piece == k + 1
            out[m] = _segment(k, local[m])
        return out

    def nodes(self, grid):
        return closed_helix_nodes(grid)


@dataclass(frozen=True)
class ArchimedeanSpiral(CurvePreset):
    """Closed spiral band: an outer Archimedean arm, a cap, the inner arm back, a cap.

    The arm centre line is ``r = r_inner + (r_outer - r_inner) theta / (2 pi turns)``;
    the band has the given ``width``, which must be smaller than the spacing
    between neighbouring windings.
    """

    r_inner: float = 0.2
    r_outer: float = 1.0
    turns: float = 2.0
    width: float = 0.1
    resolution: int = 20_000
    dim = 2
    kind = "archimedean_spiral"

    def __post_init__(self):
        if not (0 < self.r_inner < self.r_outer and self.turns > 0 and self.width > 0):
            raise InvalidInput("spiral needs 0 < r_inner < r_outer, turns > 0 and width > 0")
        pitch = (self.r_outer - self.r_inner) / self.turns
        if self.width >= pitch or self.width >= 2 * self.r_inner:
            raise InvalidInput("spiral band is wider than the spacing between windings")

    @cached_property
    def _path(self):
        n = self.resolution
        theta = np.linspace(0.0, TWO_PI * self.turns, n)
        r = self.r_inner + (self.r_outer - self.r_inner) * theta / (TWO_PI * self.turns)
        c, s = np.cos(theta), np.sin(theta)
        outer = np.stack([(r + 0.5 * self.width) * c, (r + 0.5 * self.width) * s], axis=1)
        inner = np.stack([(r - 0.5 * self.width) * c, (r - 0.5 * self.width) * s], axis=1)[::-1]
        # rounded caps: half circles around the arm's end points

        def cap(th0, centre_r, sign):
            a = np.linspace(0.0, math.pi, 200)[1:-1]
            centre = centre_r * np.array([math.cos(th0), math.sin(th0)])
            radial = np.array([math.cos(th0), math.sin(th0)])
            tang = np.array([-math.sin(th0), math.cos(th0)])
            return centre + 0.5 * self.width * (np.cos(a)[:, None] * radial * sign
                                                + sign * np.sin(a)[:, None] * tang)
        end_cap = cap(theta[-1], r[-1], 1.0)
        start_cap = cap(theta[0], r[0], -1.0)
        return np.vstack([outer, end_cap, inner, start_cap])

    def position(self, rho, t=0.0):
        pts = self._path
        closed = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
        r = np.mod(_rho(rho), 1.0)
        return np.stack([np.interp(r, s, closed[:, i]) for i in range(2)], axis=1)


@dataclass(frozen=True)
class FromFile(CurvePreset):
    """Polygon read from a frame CSV (header ``rho,x1,..,xd``; last row repeats the first)."""

    path: str = ""
    kind = "from_file"

    @cached_property
    def field(self) -> NodalField:
        return read_frame(self.path)

    @property
    def dim(self):
        return self.field.d

    def position(self, rho, t=0.0):
        return self.field(_rho(rho))

    def nodes(self, grid):
        f = self.field
        if grid.J != f.J:
            raise InvalidInput(f"{self.path} has J={f.J} nodes but the grid has J={grid.J}")
        return NodalField(grid, f.values.copy())


def read_frame(path) -> NodalField:
    """Read a frame CSV back into a NodalField (bit-exact for files written by aniflow)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "rho" or len(rows[0]) < 3:
        raise InvalidInput(f"{path}: expected a header 'rho,x1,..,xd'")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    if data.shape[0] < 4:
        raise InvalidInput(f"{path}: need at least 3 nodes plus the closing row")
    vals = data[:-1, 1:]
    if not np.array_equal(data[-1, 1:], vals[0]):
        raise InvalidInput(f"{path}: last row must repeat the first node")
    return NodalField(PeriodicGrid(vals.shape[0]), vals)


def write_frame(path, x: NodalField) -> None:
    """Frame CSV with J + 1 rows and 17 significant digits."""
    J = x.J
    rho = np.arange(J + 1) / J
    vals = x.closed_values()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho"] + [f"x{i + 1}" for i in range(x.d)])
        for r, row in zip(rho, vals):
            w.writerow([format(r, ".17g")] + [format(v, ".17g") for v in row])


_CURVES = {
    "circle": Circle,
    "ellipse_3d_selfsimilar": SelfSimilarEllipse3D,
    "ellipse_2d": Ellipse2D,
    "trefoil": Trefoil,
    "interlocked_rings": InterlockedRings,
    "closed_helix": ClosedHelix,
    "archimedean_spiral": ArchimedeanSpiral,
    "from_file": FromFile,
}

CURVE_KINDS = tuple(_CURVES)


def make_curve(kind: str, **params) -> CurvePreset:
    if kind not in _CURVES:
        raise InvalidInput(f"unknown curve preset {kind!r}; expected one of {CURVE_KINDS}")
    try:
        return _CURVES[kind](**params)
    except TypeError as exc:
        raise InvalidInput(f"bad parameters for curve {kind!r}: {exc}") from exc


@dataclass(frozen=True)
class ManufacturedProblem:
    """An exact solution together with the anisotropy and mobility it is forced for."""

    name: str
    anisotropy: Anisotropy
    mobility: Mobility
    exact: CurvePreset


def ellipse3d_problem(delta: float = 0.5) -> ManufacturedProblem:
    """Self-similar ellipse with ``phi = sqrt(delta^2 p1^2 + p2^2 + p3^2)`` and ``m = 1/phi``."""
    a = DiagonalQuadraticAnisotropy((delta**2, 1.0, 1.0))
    return ManufacturedProblem("ellipse3d", a, InversePhiMobility(a), SelfSimilarEllipse3D(delta))


def circle_problem(dim: int = 2) -> ManufacturedProblem:
    """Isotropic shrinking unit circle with unit mobility; the forcing vanishes."""
    return ManufacturedProblem("circle", IsotropicAnisotropy(dim), ConstantMobility(), Circle(1.0, dim))


MANUFACTURED = {"ellipse3d": ellipse3d_problem, "circle": circle_problem}
