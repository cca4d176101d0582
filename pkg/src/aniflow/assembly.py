"""Residual and Jacobian of the fully discrete scheme (numpy reference path).

One step maps ``x_old`` to ``x_new`` solving, for every hat function,

    (1/dt) int H(x_old_rho) (x_new - x_old) . eta  +  int Phi'(x_new_rho) . eta_rho
        = int interp[f(t_old) . eta]

with H frozen per element at the old edge derivative.  The right-hand side
is present only for manufactured problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .anisotropy import Anisotropy, Mobility
from .errors import DegenerateVector, InvalidInput
from .flow_matrix import flow_matrices
from .mesh import NodalField, PeriodicGrid

MASS_TREATMENTS = ("consistent", "lumped")


@dataclass(frozen=True)
class ForcingTerm:
    """Right-hand side ``f(rho, t)``; ``f`` maps an array of rho and a time to (n, d).

    ``prepare``, if given, maps a fixed array of rho to a function of t only;
    :meth:`nodal` then caches it per grid so repeated steps skip the
    rho-dependent work.
    """

    f: Callable
    prepare: Optional[Callable] = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def nodal(self, grid: PeriodicGrid, t: float) -> np.ndarray:
        if self.prepare is None:
            return np.asarray(self.f(grid.nodes, t), dtype=float)
        g = self._cache.get(grid.J)
        if g is None:
            g = self._cache[grid.J] = self.prepare(grid.nodes)
        return g(t)


@dataclass(frozen=True)
class SchemeOptions:
    dt: float
    mass_treatment: str = "consistent"
    forcing: Optional[ForcingTerm] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInput(f"dt must be positive, got {self.dt}")
        if self.mass_treatment not in MASS_TREATMENTS:
            raise InvalidInput(f"mass_treatment must be one of {MASS_TREATMENTS}")

    @property
    def lumped(self) -> bool:
        return self.mass_treatment == "lumped"


@dataclass
class CyclicBlockSystem:
    """Periodic block-tridiagonal matrix; row j couples nodes j-1, j, j+1 (mod J)."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: Optional[np.ndarray] = None

    @property
    def J(self) -> int:
        return self.diag.shape[0]

    @property
    def d(self) -> int:
        return self.diag.shape[1]

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (np.einsum("jik,jk->ji", self.lower, np.roll(x, 1, axis=0))
                + np.einsum("jik,jk->ji", self.diag, x)
                + np.einsum("jik,jk->ji", self.upper, np.roll(x, -1, axis=0)))

    def to_dense(self) -> np.ndarray:
        J, d = self.J, self.d
        A = np.zeros((J * d, J * d))
        for j in range(J):
            r = slice(j * d, (j + 1) * d)
            for blk, off in ((self.lower[j], -1), (self.diag[j], 0), (self.upper[j], 1)):
                c = ((j + off) % J) * d
                A[r, c:c + d] += blk
        return A


def element_flow_matrices(a: Anisotropy, m: Mobility, x: NodalField) -> np.ndarray:
    return flow_matrices(a, m, x.derivative())


def mass_apply(H, v, h, lumped) -> np.ndarray:
    """Apply the H-weighted mass operator to nodal values ``v`` (J, d)."""
    Hn = np.roll(H, -1, axis=0)
    if lumped:
        return 0.5 * h * np.einsum("jik,jk->ji", H + Hn, v)
    vm = np.roll(v, 1, axis=0)
    vp = np.roll(v, -1, axis=0)
    return h / 6.0 * (np.einsum("jik,jk->ji", H, vm + 2 * v) + np.einsum("jik,jk->ji", Hn, 2 * v + vp))


def _check_edges(P):
    if np.min(np.linalg.norm(P, axis=1)) < 1e-10:
        raise DegenerateVector("an element of the iterate has collapsed")


def forcing_values(opts: SchemeOptions, grid: PeriodicGrid, t_new: float) -> np.ndarray | None:
    """Nodal forcing for the step ending at ``t_new``, evaluated at the old time level."""
    if opts.forcing is None:
        return None
    return opts.forcing.nodal(grid, t_new - opts.dt)


def residual(a: Anisotropy, m: Mobility, opts: SchemeOptions, x_old: NodalField,
             x_new: NodalField, t_new: float = 0.0, H=None) -> np.ndarray:
    """Nodal residual (J, d) of one step; zero exactly at the scheme's solution."""
    grid = x_old.grid
    h = grid.h
    if H is None:
        H = element_flow_matrices(a, m, x_old)
    dx = x_new.values - x_old.values
    P = x_new.derivative()
    _check_edges(P)
    G = a.dPhi(P)
    R = mass_apply(H, dx, h, opts.lumped) / opts.dt + G - np.roll(G, -1, axis=0)
    f = forcing_values(opts, grid, t_new)
    if f is not None:
        R -= h * f
    return R


def jacobian(a: Anisotropy, m: Mobility, opts: SchemeOptions, x_old: NodalField,
             x_new: NodalField, H=None) -> CyclicBlockSystem:
    """Exact derivative of :func:`residual` with respect to the nodal values of ``x_new``."""
    h = x_old.grid.h
    if H is None:
        H = element_flow_matrices(a, m, x_old)
    P = x_new.derivative()
    _check_edges(P)
    S = a.d2Phi(P) / h
    Sn = np.roll(S, -1, axis=0)
    Hn = np.roll(H, -1, axis=0)
    c = h / opts.dt
    if opts.lumped:
        lower = -S
        upper = -Sn
        diag = 0.5 * c * (H + Hn) + S + Sn
    else:
        lower = c / 6.0 * H - S
        upper = c / 6.0 * Hn - Sn
        diag = c / 3.0 * (H + Hn) + S + Sn
    return CyclicBlockSystem(lower, diag, upper)


def dissipation(H, dx, h, dt, lumped) -> float:
    """``(1/dt) int H(x_old_rho) dx . dx`` with the scheme's mass treatment."""
    return float(np.sum(mass_apply(H, dx, h, lumped) * dx) / dt)


def forcing_from_exact(a: Anisotropy, m: Mobility, y) -> ForcingTerm:
    """Forcing ``H(y_rho) y_t - Phi''(y_rho) y_rhorho`` making ``y`` an exact solution.

    ``y`` must provide vectorised ``d_rho``, ``d_t`` and ``d_rho2`` methods of
    ``(rho, t)``, as the exact-solution presets do.
    """
    for attr in ("d_rho", "d_t", "d_rho2"):
        if not hasattr(y, attr):
            raise InvalidInput(f"exact solution lacks {attr}()")

    def f(rho, t):
        yr = np.atleast_2d(y.d_rho(rho, t))
        H = flow_matrices(a, m, yr)
        return (np.einsum("nik,nk->ni", H, np.atleast_2d(y.d_t(rho, t)))
                - np.einsum("nik,nk->ni", a.d2Phi(yr), np.atleast_2d(y.d_rho2(rho, t))))

    if not all(hasattr(y, attr) for attr in ("shape", "scale", "scale_dt")):
        return ForcingTerm(f)

    def prepare(rho):
        # y = s(t) c(rho): H is 2-homogeneous and Phi'' 0-homogeneous, so
        # f = s^2 s' H(c') c - s Phi''(c') c''
        c0, c1, c2 = (np.atleast_2d(y.shape(rho, k)) for k in range(3))
        A = np.einsum("nik,nk->ni", flow_matrices(a, m, c1), c0)
        B = np.einsum("nik,nk->ni", a.d2Phi(c1), c2)

        def g(t):
            s = y.scale(t)
            return (s * s * y.scale_dt(t)) * A - s * B

        return g

    return ForcingTerm(f, prepare)
