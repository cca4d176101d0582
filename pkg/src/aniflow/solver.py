"""Newton iteration per time step, periodic block solves and the time loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .anisotropy import Anisotropy, InversePhiMobility, Mobility
from .assembly import (CyclicBlockSystem, SchemeOptions, dissipation, element_flow_matrices,
                       forcing_values, jacobian, residual)
from .errors import AniflowError, DegenerateVector, InvalidInput, NewtonDiverged, SingularSystem
from .mesh import NodalField, energy_Phi

log = logging.getLogger(__name__)

BACKWARD_ERROR_TOL = K.BACKWARD_ERROR_TOL


@dataclass(frozen=True)
class NewtonOptions:
    """Stopping rules; ``tol_residual=None`` means ``1e-12 * sqrt(J)``."""

    tol_residual: Optional[float] = None
    max_iter: int = 20
    tol_step: float = 1e-12

    def __post_init__(self):
        if self.tol_residual is not None and not self.tol_residual > 0:
            raise InvalidInput("tol_residual must be positive")
        if not self.tol_step > 0:
            raise InvalidInput("tol_step must be positive")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")

    def residual_tol(self, J: int) -> float:
        return self.tol_residual if self.tol_residual is not None else 1e-12 * math.sqrt(J)


@dataclass
class StepReport:
    newton_iters: int
    final_residual: float
    energy_Phi_before: float
    energy_Phi_after: float
    dissipation: float

    @property
    def stability_gap(self) -> float:
        """``E_Phi(before) - E_Phi(after) - dissipation``; nonnegative for unforced steps."""
        return self.energy_Phi_before - self.energy_Phi_after - self.dissipation


def _sparse_solve(system: CyclicBlockSystem, rhs):
    A = sp.csc_matrix(system.to_dense())
    try:
        with np.errstate(all="ignore"):
            lu = spla.splu(A)
            x = lu.solve(rhs.ravel())
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    # a huge x can hide singularity behind a small normwise backward error
    piv = np.abs(lu.U.diagonal())
    if not piv.min() > K.PIVOT_TOL * piv.max():
        raise SingularSystem(f"sparse LU pivot ratio {piv.min() / piv.max():.3e} below {K.PIVOT_TOL:g}")
    return x.reshape(rhs.shape)


def solve_linear(system: CyclicBlockSystem, rhs=None) -> np.ndarray:
    """Direct solve of a periodic block-tridiagonal system.

    Uses bordered block elimination; when that hits a tiny pivot or leaves a
    normwise backward error above ``1e-12`` it retries with a pivoted sparse
    LU, and raises :class:`SingularSystem` if that fails as well.
    """
    b = np.ascontiguousarray(system.rhs if rhs is None else rhs, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    Lo, Di, Up = (np.ascontiguousarray(a, dtype=float) for a in (system.lower, system.diag, system.upper))
    x = np.empty_like(b)
    piv = K.cyclic_block_solve(Lo, Di, Up, b, x)
    if piv >= K.PIVOT_TOL and np.all(np.isfinite(x)) and K.backward_error(Lo, Di, Up, b, x) <= BACKWARD_ERROR_TOL:
        return x
    log.debug("block elimination inaccurate (min pivot %.3e), falling back to sparse LU", piv)
    x = _sparse_solve(system, b)
    if not np.all(np.isfinite(x)) or K.backward_error(Lo, Di, Up, b, x) > BACKWARD_ERROR_TOL:
        raise SingularSystem("periodic block system is singular to working precision")
    return x


def _uses_kernels(a: Anisotropy, m: Mobility) -> bool:
    if not a.compiled or m.code < 0:
        return False
    return not isinstance(m, InversePhiMobility) or m.anisotropy == a


_STATUS_ERRORS = {
    K.MAX_ITER: "Newton iteration hit max_iter",
    K.INCREASING: "Newton residual increased in two consecutive iterations",
}


def _solve_timestep_compiled(a, m, opts, newton, x_old, t_new):
    grid = x_old.grid
    f = forcing_values(opts, grid, t_new)
    force = np.zeros_like(x_old.values) if f is None else np.ascontiguousarray(f)
    X_new = np.empty_like(x_old.values)
    stats = np.zeros(6)
    K.newton_step(a.code, a.params, m.code, x_old.values, grid.h, opts.dt, opts.lumped, force,
                  newton.residual_tol(grid.J), newton.tol_step, newton.max_iter, X_new, stats)
    status, iters, rnorm = int(stats[0]), int(stats[1]), float(stats[2])
    if status == K.DEGENERATE:
        raise DegenerateVector("an element collapsed during the Newton iteration")
    if status == K.SINGULAR:
        log.debug("compiled block solve rejected a Newton system; retrying the step on the numpy path")
        return _solve_timestep_numpy(a, m, opts, newton, x_old, t_new)
    if status != K.OK:
        raise NewtonDiverged(f"{_STATUS_ERRORS[status]} (residual {rnorm:.3e})", iters, rnorm)
    report = StepReport(iters, rnorm, float(stats[4]), float(stats[5]), float(stats[3]))
    return NodalField(grid, X_new), report


def _solve_timestep_numpy(a, m, opts, newton, x_old, t_new):
    grid = x_old.grid
    tol = newton.residual_tol(grid.J)
    H = element_flow_matrices(a, m, x_old)
    x = x_old.copy()
    R = residual(a, m, opts, x_old, x, t_new, H=H)
    rnorm = float(np.linalg.norm(R))
    xnorm = float(np.linalg.norm(x_old.values))
    it = increases = 0
    while rnorm > tol:
        if it >= newton.max_iter:
            raise NewtonDiverged(f"Newton iteration hit max_iter (residual {rnorm:.3e})", it, rnorm)
        step = solve_linear(jacobian(a, m, opts, x_old, x, H=H), -R)
        x.values += step
        it += 1
        R = residual(a, m, opts, x_old, x, t_new, H=H)
        new_rnorm = float(np.linalg.norm(R))
        if new_rnorm <= tol or np.linalg.norm(step) <= newton.tol_step * (1 + xnorm):
            rnorm = new_rnorm
            break
        increases = increases + 1 if new_rnorm > rnorm else 0
        rnorm = new_rnorm
        if increases >= 2:
            raise NewtonDiverged(f"Newton residual increased in two consecutive iterations (residual {rnorm:.3e})",
                                 it, rnorm)
    dx = x.values - x_old.values
    report = StepReport(it, rnorm, energy_Phi(a, x_old), energy_Phi(a, x),
                        dissipation(H, dx, grid.h, opts.dt, opts.lumped))
    return x, report


def solve_timestep(a: Anisotropy, m: Mobility, opts: SchemeOptions, newton: NewtonOptions,
                   x_old: NodalField, t_new: float, compiled: Optional[bool] = None):
    """Advance one step; returns ``(x_new, StepReport)``.

    ``compiled=None`` picks the compiled kernels whenever the anisotropy and
    mobility are built-ins; ``False`` forces the numpy reference path.
    """
    use = _uses_kernels(a, m) if compiled is None else compiled
    if use and not _uses_kernels(a, m):
        raise InvalidInput("compiled path requires a built-in anisotropy and mobility")
    fn = _solve_timestep_compiled if use else _solve_timestep_numpy
    return fn(a, m, opts, newton, x_old, t_new)


def integrate(a: Anisotropy, m: Mobility, opts: SchemeOptions, newton: NewtonOptions,
              x0: NodalField, steps: int, t0: float = 0.0,
              compiled: Optional[bool] = None) -> Iterator[tuple]:
    """Yield ``(step, t, x, report)`` after each of ``steps`` time steps.

    Errors raised by a step get a ``step`` attribute and the step number
    prefixed to their message.
    """
    x = x0
    for k in range(1, steps + 1):
        t = t0 + k * opts.dt
        try:
            x, report = solve_timestep(a, m, opts, newton, x, t, compiled)
        except AniflowError as exc:
            exc.step = k
            if exc.args:
                exc.args = (f"step {k} (t={t:.6g}): {exc.args[0]}",) + exc.args[1:]
            raise
        yield k, t, x, report


def num_steps(T: float, dt: float) -> int:
    """``T / dt`` as an integer; raises unless T is a multiple of dt to 1e-9."""
    if T < 0 or not dt > 0:
        raise InvalidInput("need T >= 0 and dt > 0")
    M = round(T / dt)
    if abs(T / dt - M) > 1e-9:
        raise InvalidInput(f"T={T} is not an integer multiple of dt={dt}")
    return int(M)


@dataclass
class FlowResult:
    final: NodalField
    series: list
    frames: list = field(default_factory=list)


def run_flow(config, on_record: Optional[Callable] = None, on_frame: Optional[Callable] = None,
             keep_frames: bool = True) -> FlowResult:
    """Run a configured flow and collect one monitor record per time level.

    ``config`` is a :class:`aniflow.config.FlowConfig`.  Frames are emitted
    every ``config.frames_every`` steps (and at t = 0) to ``on_frame`` and,
    when ``keep_frames`` is set, kept in the result.
    """
    from .diagnostics import record_for

    setup = config.build()
    a, m, opts, newton, x0 = setup.anisotropy, setup.mobility, setup.scheme, setup.newton, setup.initial
    M = num_steps(config.T, config.dt)
    every = config.frames_every
    frames = []

    def emit(step, t, x):
        if every and step % every == 0:
            if on_frame is not None:
                on_frame(step, t, x)
            if keep_frames:
                frames.append((step, t, x.values.copy()))

    rec = record_for(a, x0, 0, 0.0, None, compiled=_uses_kernels(a, m))
    series = [rec]
    if on_record:
        on_record(rec)
    emit(0, 0.0, x0)
    x = x0
    for step, t, x, report in integrate(a, m, opts, newton, x0, M):
        rec = record_for(a, x, step, t, report, compiled=_uses_kernels(a, m))
        series.append(rec)
        if on_record:
            on_record(rec)
        emit(step, t, x)
    return FlowResult(final=x, series=series, frames=frames)
