"""Uniform periodic grids on [0, 1] and continuous piecewise-linear vector fields.

Nodes are stored 0-indexed, ``q_j = j / J`` for ``j = 0..J-1``; node ``J`` is
identified with node 0.  Element ``j`` spans ``[q_{j-1 mod J}, q_j]``, so the
edge vector of element ``j`` is ``x_j - x_{j-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._kernels import error_sq
from .anisotropy import Anisotropy
from .errors import DegenerateVector, InvalidInput


@dataclass(frozen=True)
class PeriodicGrid:
    J: int

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 3:
            raise InvalidInput(f"a periodic grid needs J >= 3 elements, got {self.J}")
        object.__setattr__(self, "J", int(self.J))

    @property
    def h(self) -> float:
        return 1.0 / self.J

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.J) / self.J


@dataclass
class NodalField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.J:
            raise InvalidInput(f"expected values of shape ({self.grid.J}, d), got {v.shape}")
        self.values = v

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def J(self) -> int:
        return self.grid.J

    def copy(self) -> "NodalField":
        return NodalField(self.grid, self.values.copy())

    def edges(self) -> np.ndarray:
        """Edge vectors ``x_j - x_{j-1}`` for every element, shape (J, d)."""
        return self.values - np.roll(self.values, 1, axis=0)

    def derivative(self) -> np.ndarray:
        """Piecewise-constant ``x_rho`` per element."""
        return self.edges() * self.grid.J

    def edge_derivative(self, j: int) -> np.ndarray:
        x = self.values
        return (x[j % self.J] - x[(j - 1) % self.J]) * self.grid.J

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges(), axis=1)

    def __call__(self, rho):
        """Evaluate the piecewise-linear interpolant at ``rho`` (periodic)."""
        rho = np.asarray(rho, dtype=float)
        s = np.mod(rho, 1.0) * self.J
        i = np.minimum(np.floor(s).astype(int), self.J - 1)
        lam = (s - i)[..., None]
        x = self.values
        return (1 - lam) * x[i] + lam * x[(i + 1) % self.J]

    def closed_values(self) -> np.ndarray:
        """Nodal values with node 0 repeated at the end (J+1 rows)."""
        return np.vstack([self.values, self.values[:1]])


def interpolate(grid: PeriodicGrid, f) -> NodalField:
    """Nodal interpolant of a closed curve; ``f`` maps an array of rho to (n, d)."""
    vals = np.asarray(f(grid.nodes), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return NodalField(grid, vals)


def edge_derivative(x: NodalField, j: int) -> np.ndarray:
    return x.edge_derivative(j)


def _nondegenerate_derivative(x: NodalField) -> np.ndarray:
    P = x.derivative()
    if np.min(np.einsum("ni,ni->n", P, P)) == 0.0:
        raise DegenerateVector("curve has a collapsed edge")
    return P


def energy_phi(a: Anisotropy, x: NodalField) -> float:
    """``int phi(x_rho)``, exact since x_rho is constant per element."""
    return float(np.sum(a.phi(x.edges())))


def energy_Phi(a: Anisotropy, x: NodalField) -> float:
    """``int Phi(x_rho)`` with ``Phi = phi^2 / 2``."""
    return float(np.sum(a.Phi(_nondegenerate_derivative(x))) * x.grid.h)


def element_ratio(x: NodalField) -> float:
    lengths = x.edge_lengths()
    if lengths.min() == 0.0:
        raise DegenerateVector("curve has a collapsed edge")
    return float(lengths.max() / lengths.min())


@dataclass(frozen=True)
class GaussRule:
    """Gauss-Legendre points/weights mapped to [0, 1]."""

    n: int

    @cached_property
    def points(self) -> np.ndarray:
        x, _ = np.polynomial.legendre.leggauss(self.n)
        return 0.5 * (x + 1.0)

    @cached_property
    def weights(self) -> np.ndarray:
        _, w = np.polynomial.legendre.leggauss(self.n)
        return 0.5 * w


class ErrorEvaluator:
    """Precomputed quadrature for repeated L2/H1 error evaluation on one grid."""

    def __init__(self, grid: PeriodicGrid, quad_order: int = 4):
        self.grid = grid
        rule = GaussRule(quad_order)
        self.s = rule.points
        self.weights = rule.weights * grid.h
        # rho at every (element, point), element j spanning [q_{j-1}, q_j]
        left = (np.arange(grid.J) - 1) / grid.J
        self.rho = left[:, None] + grid.h * self.s[None, :]

    def __call__(self, x: NodalField, y_vals, dy_vals) -> dict:
        """Errors given exact values ``y_vals`` / ``dy_vals`` at :attr:`rho`."""
        out = np.empty(2)
        error_sq(x.values, self.s, np.ascontiguousarray(y_vals, dtype=float),
                 np.ascontiguousarray(dy_vals, dtype=float), self.weights, out)
        l2sq, h1semi = out
        return {"l2": float(np.sqrt(l2sq)), "h1": float(np.sqrt(l2sq + h1semi)), "h1_semi": float(np.sqrt(h1semi))}

    def exact(self, y, dy) -> tuple:
        flat = self.rho.ravel()
        shape = self.rho.shape + (-1,)
        return np.asarray(y(flat)).reshape(shape), np.asarray(dy(flat)).reshape(shape)


def error_norms(x: NodalField, y, dy, quad_order: int = 4) -> dict:
    """``||x - y||_0`` and the full ``||x - y||_1`` by per-element Gauss quadrature.

    ``y`` and ``dy`` map an array of rho to arrays of shape (n, d).  The
    returned dict also carries the H1 seminorm under ``"h1_semi"``.
    """
    ev = ErrorEvaluator(x.grid, quad_order)
    return ev(x, *ev.exact(y, dy))
