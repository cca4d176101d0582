"""The matrices H(p) that turn anisotropic curve shortening into a parabolic system.

With ``t = p/|p|``, ``alpha = m(p) |p| phi(p)`` and
``w = (|p|/phi(p)) (Id - t t^T) phi'(p)`` the inverse has the simple form

    H^{-1} = (Id + t w^T - w t^T) / alpha

and ``H`` itself is available in closed form, so no matrix is ever inverted
numerically on the assembly path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anisotropy import Anisotropy, InversePhiMobility, Mobility, NormalDensityAnisotropy, _as_batch
from .errors import DimensionMismatch, EigenFailure


@dataclass(frozen=True)
class FlowMatrixParts:
    tangent_dir: np.ndarray
    w: np.ndarray
    alpha: float
    H: np.ndarray
    H_inv: np.ndarray

    @property
    def coercivity(self) -> float:
        """Lower bound ``alpha / (1 + |w|^2)`` for ``z . H z / |z|^2``."""
        return self.alpha / (1.0 + self.w @ self.w)


def flow_terms(a: Anisotropy, m: Mobility, P):
    """Batched ``(alpha, t, w)`` for edge vectors ``P`` of shape (n, d)."""
    f, g, _ = a.derivatives(P)
    norms = np.linalg.norm(P, axis=1)
    t = P / norms[:, None]
    # project phi' explicitly so w is orthogonal to t even if Euler's identity is inexact
    gt = np.einsum("ni,ni->n", g, t)
    w = (norms / f)[:, None] * (g - gt[:, None] * t)
    alpha = m._eval(P, norms) * norms * f
    return alpha, t, w


def h_from_terms(alpha, t, w):
    """Closed form of H for batched ``alpha`` (n,), ``t`` and ``w`` (n, d)."""
    d = t.shape[1]
    ww = np.einsum("ni,ni->n", w, w)
    num = np.einsum("ni,nj->nij", w, t - w) - np.einsum("ni,nj->nij", t, w + ww[:, None] * t)
    return alpha[:, None, None] * (np.eye(d)[None] + num / (1.0 + ww)[:, None, None])


def h_inv_from_terms(alpha, t, w):
    d = t.shape[1]
    skew = np.einsum("ni,nj->nij", t, w) - np.einsum("ni,nj->nij", w, t)
    return (np.eye(d)[None] + skew) / alpha[:, None, None]


def flow_matrices(a: Anisotropy, m: Mobility, P) -> np.ndarray:
    """H evaluated at every row of ``P``; shape (n, d, d)."""
    return h_from_terms(*flow_terms(a, m, np.asarray(P, dtype=float)))


def compute_parts(a: Anisotropy, m: Mobility, p) -> FlowMatrixParts:
    P, _ = _as_batch(p)
    alpha, t, w = flow_terms(a, m, P)
    return FlowMatrixParts(
        tangent_dir=t[0],
        w=w[0],
        alpha=float(alpha[0]),
        H=h_from_terms(alpha, t, w)[0],
        H_inv=h_inv_from_terms(alpha, t, w)[0],
    )


def symbol_eigenvalues(a: Anisotropy, m: Mobility, p) -> np.ndarray:
    """Eigenvalues of ``H^{-1}(p) Phi''(p)``, the principal symbol of the flow."""
    parts = compute_parts(a, m, p)
    try:
        return np.linalg.eigvals(parts.H_inv @ a.d2Phi(p))
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc


def check_parabolicity(a: Anisotropy, m: Mobility, p, tol: float = 1e-10) -> bool:
    """True iff every eigenvalue of ``H^{-1} Phi''`` has real part above ``tol``."""
    return bool(np.all(symbol_eigenvalues(a, m, p).real > tol))


def reduce_2d(gamma: Anisotropy, p) -> np.ndarray:
    """H(p) for ``phi(p) = gamma(p^perp)`` and mobility ``1/phi``, via :func:`compute_parts`."""
    if gamma.dim != 2 or np.shape(p) != (2,):
        raise DimensionMismatch("the planar reduction needs d = 2")
    a = NormalDensityAnisotropy(gamma)
    return compute_parts(a, InversePhiMobility(a), p).H


def reduce_2d_closed_form(gamma: Anisotropy, p) -> np.ndarray:
    """``gamma/|gamma'|^2 [[gamma, gamma'.p], [-gamma'.p, gamma]]`` at ``p^perp``."""
    if gamma.dim != 2 or np.shape(p) != (2,):
        raise DimensionMismatch("the planar reduction needs d = 2")
    p = np.asarray(p, dtype=float)
    pp = np.array([-p[1], p[0]])
    g = gamma.phi(pp)
    dg = gamma.dphi(pp)
    b = dg @ p
    return g / (dg @ dg) * np.array([[g, b], [-b, g]])
