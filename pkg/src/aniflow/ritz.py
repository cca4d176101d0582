"""Elliptic (Ritz-type) projection ``Q_h`` of a smooth closed curve.

``Q_h y`` is the piecewise-linear field with

    int Phi''(y_rho) (Q_h y - y)_rho . eta_rho + int (Q_h y - y) . eta = 0

for every hat function ``eta``.  It is the initial value of the convergence
studies and converges one order faster in H1 relative to ``pi^h y``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .anisotropy import Anisotropy
from .assembly import CyclicBlockSystem
from .errors import InvalidInput
from .mesh import GaussRule, NodalField, PeriodicGrid
from .solver import solve_linear


@dataclass(frozen=True)
class RitzOptions:
    quad_points_per_element: int = 3

    def __post_init__(self):
        if int(self.quad_points_per_element) != self.quad_points_per_element or self.quad_points_per_element < 2:
            raise InvalidInput("quad_points_per_element must be an integer >= 2")


def ritz_system(a: Anisotropy, grid: PeriodicGrid, y: Callable, dy: Callable,
                opts: Optional[RitzOptions] = None) -> CyclicBlockSystem:
    """The cyclic block system whose solution is ``Q_h y``."""
    opts = opts or RitzOptions()
    J, h = grid.J, grid.h
    rule = GaussRule(opts.quad_points_per_element)
    s, w = rule.points, rule.weights
    rho = (np.arange(J)[:, None] - 1 + s[None, :]) * h  # element j spans [q_{j-1}, q_j]
    flat = rho.ravel()
    Y = np.asarray(y(flat), dtype=float)
    d = Y.shape[1]
    Y = Y.reshape(J, len(s), d)
    Yr = np.asarray(dy(flat), dtype=float).reshape(-1, d)
    A_q = a.d2Phi(Yr).reshape(J, len(s), d, d)

    # element integrals of Phi''(y_rho) and Phi''(y_rho) y_rho
    A = h * np.einsum("q,jqik->jik", w, A_q)
    B = h * np.einsum("q,jqik,jqk->ji", w, A_q, Yr.reshape(J, len(s), d))
    An = np.roll(A, -1, axis=0)
    eye = np.eye(d)[None]
    lower = -A / h**2 + h / 6.0 * eye
    upper = -An / h**2 + h / 6.0 * eye
    diag = (A + An) / h**2 + 2.0 * h / 3.0 * eye

    # int y . chi_j: chi_j rises on element j and falls on element j+1
    mass_left = h * np.einsum("q,jqi->ji", w * s, Y)
    mass_right = h * np.einsum("q,jqi->ji", w * (1.0 - s), Y)
    rhs = (B - np.roll(B, -1, axis=0)) / h + mass_left + np.roll(mass_right, -1, axis=0)
    return CyclicBlockSystem(lower, diag, upper, rhs)


def ritz_project(a: Anisotropy, grid: PeriodicGrid, y: Callable, dy: Callable,
                 opts: Optional[RitzOptions] = None) -> NodalField:
    """``Q_h y`` for a closed curve ``y`` with derivative ``dy`` (vectorised in rho).

    Raises DegenerateVector if ``dy`` vanishes at a quadrature point.
    """
    system = ritz_system(a, grid, y, dy, opts)
    return NodalField(grid, solve_linear(system))
