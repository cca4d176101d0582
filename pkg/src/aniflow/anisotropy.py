"""Anisotropic energy densities, mobilities and the convex function Phi = phi^2/2.

Every density is 1-homogeneous and evaluated on tangent vectors ``p``.  All
evaluation methods accept a single vector of shape ``(d,)`` or a batch of
shape ``(n, d)`` and return arrays with the leading batch axis preserved.

Built-in densities carry a ``code`` and a flat ``params`` vector so the
compiled kernels in :mod:`aniflow._kernels` can evaluate them without Python
callbacks.  :class:`CustomAnisotropy` is supported everywhere except on the
compiled fast path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateVector, InvalidInput

EPS_DEG = 1e-14

# kernel codes; must match aniflow._kernels
ISOTROPIC, QUADRATIC, SIN2D, REG_L1 = 0, 1, 2, 3
MOB_ONE, MOB_INV_PHI = 0, 1


def _as_batch(p):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = p[None, :] if single else p
    if P.ndim != 2:
        raise InvalidInput(f"expected shape (d,) or (n, d), got {p.shape}")
    return P, single


def _check_nondegenerate(P):
    norms = np.sqrt(np.einsum("ni,ni->n", P, P))
    if P.shape[0] and norms.min() < EPS_DEG:
        raise DegenerateVector(
            f"vector norm {norms.min():.3e} below degeneracy threshold {EPS_DEG:g}"
        )
    return norms


class Anisotropy:
    """Base class: subclasses implement the batched ``_phi/_dphi/_d2phi``."""

    kind: str = "abstract"
    dim: int
    code: int = -1
    absolutely_homogeneous: bool = True

    @property
    def params(self) -> np.ndarray:
        return np.zeros(0)

    @property
    def compiled(self) -> bool:
        return self.code >= 0

    def _phi(self, P, norms):
        raise NotImplementedError

    def _dphi(self, P, norms):
        raise NotImplementedError

    def _d2phi(self, P, norms):
        raise NotImplementedError

    def _prepare(self, p):
        P, single = _as_batch(p)
        if P.shape[1] != self.dim:
            raise InvalidInput(f"{self.kind} anisotropy is {self.dim}-dimensional, got vectors of length {P.shape[1]}")
        return P, single

    def phi(self, p):
        P, single = self._prepare(p)
        out = self._phi(P, _check_nondegenerate(P))
        return out[0] if single else out

    def dphi(self, p):
        P, single = self._prepare(p)
        out = self._dphi(P, _check_nondegenerate(P))
        return out[0] if single else out

    def d2phi(self, p):
        P, single = self._prepare(p)
        out = self._d2phi(P, _check_nondegenerate(P))
        return out[0] if single else out

    def Phi(self, p):
        """``phi(p)**2 / 2``; defined (and zero) at the origin."""
        P, single = self._prepare(p)
        out = np.zeros(P.shape[0])
        nz = np.einsum("ni,ni->n", P, P) >= EPS_DEG**2
        if nz.any():
            Q = P[nz]
            out[nz] = 0.5 * self._phi(Q, np.linalg.norm(Q, axis=1)) ** 2
        return out[0] if single else out

    def dPhi(self, p):
        """``phi(p) * phi'(p)``; the gradient is continuous with value 0 at 0."""
        P, single = self._prepare(p)
        out = np.zeros_like(P)
        nz = np.einsum("ni,ni->n", P, P) >= EPS_DEG**2
        if nz.any():
            Q = P[nz]
            n = np.linalg.norm(Q, axis=1)
            out[nz] = self._phi(Q, n)[:, None] * self._dphi(Q, n)
        return out[0] if single else out

    def d2Phi(self, p):
        P, single = self._prepare(p)
        norms = _check_nondegenerate(P)
        f = self._phi(P, norms)
        g = self._dphi(P, norms)
        out = np.einsum("ni,nj->nij", g, g) + f[:, None, None] * self._d2phi(P, norms)
        return out[0] if single else out

    def derivatives(self, p):
        """Return ``(phi, phi', phi'')`` for a batch in one pass."""
        P, _ = self._prepare(p)
        norms = _check_nondegenerate(P)
        return self._phi(P, norms), self._dphi(P, norms), self._d2phi(P, norms)

    def to_spec(self) -> dict:
        raise NotImplementedError(f"{self.kind} cannot be serialized")


@dataclass(frozen=True)
class IsotropicAnisotropy(Anisotropy):
    dim: int = 2
    kind = "isotropic"
    code = ISOTROPIC

    def _phi(self, P, norms):
        return norms.copy()

    def _dphi(self, P, norms):
        return P / norms[:, None]

    def _d2phi(self, P, norms):
        T = P / norms[:, None]
        eye = np.eye(P.shape[1])
        return (eye[None] - np.einsum("ni,nj->nij", T, T)) / norms[:, None, None]

    def to_spec(self):
        return {"kind": self.kind, "dim": self.dim, "params": {}}


@dataclass(frozen=True)
class DiagonalQuadraticAnisotropy(Anisotropy):
    """``phi(p) = sqrt(sum_i c_i p_i^2)`` with positive ``coeffs`` c."""

    coeffs: tuple = (1.0, 1.0)
    kind = "diagonal_quadratic"
    code = QUADRATIC

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) < 2 or min(c) <= 0:
            raise InvalidInput(f"diagonal_quadratic needs >= 2 positive coefficients, got {c}")
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self):
        return len(self.coeffs)

    @property
    def params(self):
        return np.array(self.coeffs)

    def _phi(self, P, norms):
        return np.sqrt(P**2 @ np.array(self.coeffs))

    def _dphi(self, P, norms):
        AP = P * np.array(self.coeffs)
        return AP / self._phi(P, norms)[:, None]

    def _d2phi(self, P, norms):
        f = self._phi(P, norms)
        AP = P * np.array(self.coeffs)
        A = np.diag(self.coeffs)
        return (A[None] - np.einsum("ni,nj->nij", AP, AP) / (f**2)[:, None, None]) / f[:, None, None]

    def to_spec(self):
        return {"kind": self.kind, "params": {"coeffs": list(self.coeffs)}}


@dataclass(frozen=True)
class SinModulatedAnisotropy(Anisotropy):
    """Planar ``phi(p) = |p| (1 + delta sin(k theta(p)))``.

    Only positively homogeneous for odd ``k``.  Strictly convex iff
    ``|delta| < 1 / (k^2 - 1)``.
    """

    k: int = 3
    delta: float = 0.0
    dim = 2
    kind = "sin_modulated_2d"
    code = SIN2D

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInput(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "delta", float(self.delta))
        if abs(self.delta) >= 1:
            raise InvalidInput("|delta| must be < 1 for phi to stay positive")

    @property
    def absolutely_homogeneous(self):
        return self.k % 2 == 0 or self.delta == 0.0

    @property
    def params(self):
        return np.array([self.k, self.delta], dtype=float)

    def _angle_terms(self, P):
        theta = np.arctan2(P[:, 1], P[:, 0])
        s, c = np.sin(self.k * theta), np.cos(self.k * theta)
        g = 1.0 + self.delta * s
        dg = self.delta * self.k * c
        d2g = -self.delta * self.k**2 * s
        return g, dg, d2g

    def _phi(self, P, norms):
        g, _, _ = self._angle_terms(P)
        return norms * g

    def _dphi(self, P, norms):
        g, dg, _ = self._angle_terms(P)
        er = P / norms[:, None]
        et = np.stack([-er[:, 1], er[:, 0]], axis=1)
        return g[:, None] * er + dg[:, None] * et

    def _d2phi(self, P, norms):
        g, _, d2g = self._angle_terms(P)
        er = P / norms[:, None]
        et = np.stack([-er[:, 1], er[:, 0]], axis=1)
        return ((g + d2g) / norms)[:, None, None] * np.einsum("ni,nj->nij", et, et)

    def to_spec(self):
        return {"kind": self.kind, "params": {"k": self.k, "delta": self.delta}}


@dataclass(frozen=True)
class RegularizedL1Anisotropy(Anisotropy):
    """``phi(p) = sum_i sqrt((1 - delta^2) p_i^2 + delta^2 |p|^2)``."""

    delta: float = 0.01
    dim: int = 2
    kind = "regularized_l1"
    code = REG_L1

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise InvalidInput(f"regularized_l1 needs 0 < delta <= 1, got {self.delta}")
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def params(self):
        return np.array([self.delta])

    def _terms(self, P, norms):
        d2 = self.delta**2
        # s[n, i] = sqrt((1 - d2) p_i^2 + d2 |p|^2)
        return np.sqrt((1 - d2) * P**2 + d2 * (norms**2)[:, None])

    def _phi(self, P, norms):
        return self._terms(P, norms).sum(axis=1)

    def _dphi(self, P, norms):
        d2 = self.delta**2
        s = self._terms(P, norms)
        # grad of s_i = A_i p / s_i with A_i = (1-d2) e_i e_i^T + d2 Id
        return ((1 - d2) * P / s) + d2 * P * (1.0 / s).sum(axis=1)[:, None]

    def _d2phi(self, P, norms):
        d2 = self.delta**2
        n, d = P.shape
        s = self._terms(P, norms)
        out = np.zeros((n, d, d))
        eye = np.eye(d)
        for i in range(d):
            Ai = d2 * eye
            Ai[i, i] += 1 - d2
            APi = P @ Ai
            si = s[:, i]
            out += (Ai[None] - np.einsum("ni,nj->nij", APi, APi) / (si**2)[:, None, None]) / si[:, None, None]
        return out

    def to_spec(self):
        return {"kind": self.kind, "dim": self.dim, "params": {"delta": self.delta}}


@dataclass(frozen=True)
class CustomAnisotropy(Anisotropy):
    """User-supplied ``phi``, ``phi'`` and ``phi''`` acting on single vectors."""

    phi_fn: Callable = None
    dphi_fn: Callable = None
    d2phi_fn: Callable = None
    dim: int = 2
    homogeneous_abs: bool = True
    kind = "custom"

    def __post_init__(self):
        if not (callable(self.phi_fn) and callable(self.dphi_fn) and callable(self.d2phi_fn)):
            raise InvalidInput("custom anisotropy needs callables for phi, phi' and phi''")

    @property
    def absolutely_homogeneous(self):
        return self.homogeneous_abs

    def _phi(self, P, norms):
        return np.array([float(self.phi_fn(q)) for q in P])

    def _dphi(self, P, norms):
        return np.array([np.asarray(self.dphi_fn(q), dtype=float) for q in P]).reshape(P.shape)

    def _d2phi(self, P, norms):
        d = P.shape[1]
        return np.array([np.asarray(self.d2phi_fn(q), dtype=float) for q in P]).reshape(-1, d, d)


_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class NormalDensityAnisotropy(Anisotropy):
    """Planar tangent density built from a normal density: ``phi(p) = gamma(p^perp)``.

    ``p^perp = (-p_2, p_1)``.
    """

    gamma: Anisotropy = None
    dim = 2
    kind = "normal_density_2d"

    def __post_init__(self):
        if self.gamma is None or self.gamma.dim != 2:
            raise InvalidInput("normal density must be a 2-dimensional anisotropy")

    def _phi(self, P, norms):
        return self.gamma._phi(P @ _ROT.T, norms)

    def _dphi(self, P, norms):
        return self.gamma._dphi(P @ _ROT.T, norms) @ _ROT

    def _d2phi(self, P, norms):
        return _ROT.T[None] @ self.gamma._d2phi(P @ _ROT.T, norms) @ _ROT[None]


class Mobility:
    kind: str = "abstract"
    code: int = -1

    def _eval(self, P, norms):
        raise NotImplementedError

    def __call__(self, p):
        P, single = _as_batch(p)
        out = self._eval(P, _check_nondegenerate(P))
        return out[0] if single else out

    evaluate = __call__


@dataclass(frozen=True)
class ConstantMobility(Mobility):
    kind = "constant_one"
    code = MOB_ONE

    def _eval(self, P, norms):
        return np.ones(P.shape[0])

    def to_spec(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class InversePhiMobility(Mobility):
    """``m(p) = 1 / phi(p / |p|) = |p| / phi(p)``."""

    anisotropy: Anisotropy = field(default_factory=IsotropicAnisotropy)
    kind = "inverse_phi"
    code = MOB_INV_PHI

    def _eval(self, P, norms):
        return norms / self.anisotropy._phi(P, norms)

    def to_spec(self):
        return {"kind": self.kind}


def make_anisotropy(kind: str, dim: int | None = None, **params) -> Anisotropy:
    """Build a built-in anisotropy from its config name and parameters."""
    if kind == "isotropic":
        return IsotropicAnisotropy(dim=int(dim or 2))
    if kind == "diagonal_quadratic":
        coeffs = params.get("coeffs")
        if coeffs is None:
            raise InvalidInput("diagonal_quadratic requires 'coeffs'")
        if dim is not None and len(coeffs) != dim:
            raise InvalidInput(f"diagonal_quadratic has {len(coeffs)} coefficients but dim={dim}")
        return DiagonalQuadraticAnisotropy(coeffs=tuple(coeffs))
    if kind == "sin_modulated_2d":
        if dim not in (None, 2):
            raise InvalidInput("sin_modulated_2d is planar (dim=2)")
        return SinModulatedAnisotropy(k=params.get("k", 3), delta=params.get("delta", 0.0))
    if kind == "regularized_l1":
        return RegularizedL1Anisotropy(delta=params.get("delta", 0.01), dim=int(dim or 2))
    raise InvalidInput(f"unknown anisotropy kind {kind!r}")


def make_mobility(kind: str, anisotropy: Anisotropy) -> Mobility:
    if kind == "constant_one":
        return ConstantMobility()
    if kind == "inverse_phi":
        return InversePhiMobility(anisotropy)
    raise InvalidInput(f"unknown mobility kind {kind!r}")


@dataclass
class ValidationReport:
    homogeneity_ok: bool
    euler_ok: bool
    hessian_kernel_ok: bool
    strict_convexity_ok: bool
    max_homogeneity_error: float
    max_euler_error: float
    max_kernel_error: float
    min_convexity: float

    @property
    def ok(self) -> bool:
        return self.homogeneity_ok and self.euler_ok and self.hessian_kernel_ok and self.strict_convexity_ok

    def as_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def _random_unit(rng, n, d):
    p = rng.standard_normal((n, d))
    return p / np.linalg.norm(p, axis=1)[:, None]


def validate(a: Anisotropy, samples: int = 1000, seed: int = 0, tol: float = 1e-10) -> ValidationReport:
    """Monte-Carlo check of homogeneity, Euler/kernel identities and strict convexity.

    Homogeneity is checked for negative scalings only when the density claims
    absolute homogeneity.
    """
    if samples < 1:
        raise InvalidInput("samples must be >= 1")
    rng = np.random.default_rng(seed)
    d = a.dim
    P = _random_unit(rng, samples, d)
    lam = rng.uniform(0.1, 3.0, samples)
    if a.absolutely_homogeneous:
        lam *= rng.choice([-1.0, 1.0], samples)
    f, g, Hs = a.derivatives(P)
    f_scaled = a.phi(P * lam[:, None])
    hom_err = np.max(np.abs(f_scaled - np.abs(lam) * f) / (np.abs(lam) * f))
    euler_err = np.max(np.abs(np.einsum("ni,ni->n", g, P) - f) / f)
    scale = np.maximum(np.linalg.norm(Hs, axis=(1, 2)), 1.0)
    kernel_err = np.max(np.linalg.norm(np.einsum("nij,nj->ni", Hs, P), axis=1) / scale)

    Q = rng.standard_normal((samples, d))
    Q -= np.einsum("ni,ni->n", Q, P)[:, None] * P
    Q /= np.linalg.norm(Q, axis=1)[:, None]
    min_conv = float(np.min(np.einsum("ni,nij,nj->n", Q, Hs, Q)))
    return ValidationReport(
        homogeneity_ok=bool(hom_err <= tol),
        euler_ok=bool(euler_err <= tol),
        hessian_kernel_ok=bool(kernel_err <= tol),
        strict_convexity_ok=bool(min_conv > 0),
        max_homogeneity_error=float(hom_err),
        max_euler_error=float(euler_err),
        max_kernel_error=float(kernel_err),
        min_convexity=min_conv,
    )
