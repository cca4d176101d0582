"""Monitors along a run, discrete curvature, error tables and convergence studies."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .anisotropy import Anisotropy
from .assembly import SchemeOptions, forcing_from_exact
from .errors import DegenerateVector, InvalidInput
from .mesh import ErrorEvaluator, NodalField, PeriodicGrid, element_ratio, energy_Phi, energy_phi
from .solver import NewtonOptions, StepReport, integrate

log = logging.getLogger(__name__)

DT_RULES = ("dt_eq_h", "dt_eq_h2")


@dataclass(frozen=True)
class TimeSeriesRecord:
    step: int
    t: float
    E_phi: float
    E_Phi: float
    ratio: float
    K_inf: float
    newton_iters: int
    residual: float

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls)]


def discrete_curvature(x: NodalField) -> NodalField:
    """Nodal curvature vectors from the mass-lumped curvature identity.

    ``kappa_j = 2 (tau_{j+1} - tau_j) / (|e_j| + |e_{j+1}|)`` with unit edge
    tangents ``tau`` and edge lengths ``|e|``.
    """
    E = x.edges()
    L = np.linalg.norm(E, axis=1)
    if L.min() == 0.0:
        raise DegenerateVector("curve has a collapsed edge")
    tau = E / L[:, None]
    tau_next = np.roll(tau, -1, axis=0)
    weight = L + np.roll(L, -1)
    return NodalField(x.grid, 2.0 * (tau_next - tau) / weight[:, None])


def k_infinity(x: NodalField) -> float:
    """Largest nodal curvature norm."""
    return float(np.max(np.linalg.norm(discrete_curvature(x).values, axis=1)))


def eoc(err_coarse: float, err_fine: float, h_coarse: float, h_fine: float) -> float:
    """Experimental order of convergence between two refinement levels."""
    if min(err_coarse, err_fine, h_coarse, h_fine) <= 0:
        raise InvalidInput("errors and mesh sizes must be positive")
    if not h_coarse > h_fine:
        raise InvalidInput("h_coarse must exceed h_fine")
    return math.log(err_coarse / err_fine) / math.log(h_coarse / h_fine)


def record_for(a: Anisotropy, x: NodalField, step: int, t: float,
               report: Optional[StepReport], compiled: bool = False) -> TimeSeriesRecord:
    """Monitor record at one time level; ``report`` is None for the initial curve."""
    iters = report.newton_iters if report is not None else 0
    res = report.final_residual if report is not None else 0.0
    if compiled:
        out = np.empty(4)
        if K.monitors(a.code, a.params, x.values, x.grid.h, out) != K.OK:
            raise DegenerateVector("curve has a collapsed edge")
        return TimeSeriesRecord(step, t, float(out[0]), float(out[1]), float(out[2]), float(out[3]), iters, res)
    return TimeSeriesRecord(step, t, energy_phi(a, x), energy_Phi(a, x), element_ratio(x), k_infinity(x),
                            iters, res)


@dataclass(frozen=True)
class ConvergenceRow:
    J: int
    l2_err: float
    l2_eoc: Optional[float]
    h1_err: float
    h1_eoc: Optional[float]
    steps: int = 0
    dt: float = 0.0


def _time_grid(J: int, dt_rule: str, T: float) -> tuple:
    h = 1.0 / J
    target = h if dt_rule == "dt_eq_h" else h * h
    # T need not be a multiple of h or h^2; round the step count up
    M = max(1, math.ceil(T / target - 1e-9))
    return M, T / M


def _run_level(problem, J: int, dt_rule: str, T: float, mass_treatment: str,
               newton: NewtonOptions, quad_order: int) -> tuple:
    from .ritz import ritz_project

    a, m, y = problem.anisotropy, problem.mobility, problem.exact
    grid = PeriodicGrid(J)
    M, dt = _time_grid(J, dt_rule, T)
    opts = SchemeOptions(dt, mass_treatment, forcing_from_exact(a, m, y))
    x0 = ritz_project(a, grid, lambda r: y.position(r, 0.0), lambda r: y.d_rho(r, 0.0))
    ev = ErrorEvaluator(grid, quad_order)
    flat = ev.rho.ravel()
    shape = ev.rho.shape + (-1,)
    if hasattr(y, "shape") and hasattr(y, "scale"):
        c0, c1 = (y.shape(flat, k).reshape(shape) for k in range(2))

        def errors(x, t):
            s = y.scale(t)
            return ev(x, s * c0, s * c1)
    else:
        def errors(x, t):
            return ev(x, y.position(flat, t).reshape(shape), y.d_rho(flat, t).reshape(shape))

    e = errors(x0, 0.0)
    l2, h1 = e["l2"], e["h1"]
    for _, t, x, _ in integrate(a, m, opts, newton, x0, M):
        e = errors(x, t)
        l2, h1 = max(l2, e["l2"]), max(h1, e["h1"])
    log.info("J=%d M=%d dt=%.3e: max L2 %.4e, max H1 %.4e", J, M, dt, l2, h1)
    return l2, h1, M, dt


def _worker_count(n_levels: int, workers: Optional[int]) -> int:
    if workers is None:
        env = os.environ.get("ANIFLOW_THREADS")
        workers = int(env) if env else 1
    return max(1, min(int(workers), n_levels))


def convergence_study(problem, J_list: Sequence[int], dt_rule: str = "dt_eq_h2", T: float = 0.45,
                      mass_treatment: str = "consistent", newton: Optional[NewtonOptions] = None,
                      quad_order: int = 4, workers: Optional[int] = None) -> list:
    """Errors and EOCs of the forced flow against an exact solution.

    ``problem`` is a :class:`aniflow.presets.ManufacturedProblem`.  Each level
    starts from the Ritz projection of the exact initial curve and records
    ``max_m ||y(t_m) - x^m||`` over all time levels including ``m = 0``.  The
    step count is ``ceil(T / h^k)`` so the final time is exactly ``T``.
    Levels run in ``workers`` processes (default: ``$ANIFLOW_THREADS`` or 1).
    """
    if dt_rule not in DT_RULES:
        raise InvalidInput(f"dt_rule must be one of {DT_RULES}")
    Js = [int(J) for J in J_list]
    if not Js or any(b <= a for a, b in zip(Js, Js[1:])):
        raise InvalidInput("J_list must be non-empty and strictly increasing")
    if not T > 0:
        raise InvalidInput("T must be positive")
    newton = newton or NewtonOptions()
    args = [(problem, J, dt_rule, T, mass_treatment, newton, quad_order) for J in Js]
    n = _worker_count(len(Js), workers)
    if n > 1:
        with ProcessPoolExecutor(n) as pool:
            results = list(pool.map(_run_level, *zip(*args)))
    else:
        results = [_run_level(*arg) for arg in args]

    rows = []
    for i, (J, (l2, h1, M, dt)) in enumerate(zip(Js, results)):
        l2_eoc = h1_eoc = None
        if i:
            prev = rows[-1]
            l2_eoc = eoc(prev.l2_err, l2, 1.0 / prev.J, 1.0 / J)
            h1_eoc = eoc(prev.h1_err, h1, 1.0 / prev.J, 1.0 / J)
        rows.append(ConvergenceRow(J, l2, l2_eoc, h1, h1_eoc, M, dt))
    return rows


def _fmt(v, spec):
    return "" if v is None else format(v, spec)


def convergence_csv(rows: Sequence[ConvergenceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["J", "l2_err", "l2_eoc", "h1_err", "h1_eoc", "steps", "dt"])
    for r in rows:
        w.writerow([r.J, _fmt(r.l2_err, ".17g"), _fmt(r.l2_eoc, ".17g"), _fmt(r.h1_err, ".17g"),
                    _fmt(r.h1_eoc, ".17g"), r.steps, _fmt(r.dt, ".17g")])
    return buf.getvalue()


def convergence_table(rows: Sequence[ConvergenceRow]) -> str:
    """Aligned plain-text table with columns J, L2 error, EOC, H1 error, EOC."""
    head = f"{'J':>6}  {'||X - x_h||_0':>13}  {'EOC':>5}  {'||X - x_h||_1':>13}  {'EOC':>5}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.J:>6}  {r.l2_err:>13.4e}  {_fmt(r.l2_eoc, '.2f'):>5}  "
                     f"{r.h1_err:>13.4e}  {_fmt(r.h1_eoc, '.2f'):>5}")
    return "\n".join(lines) + "\n"


def series_row(rec: TimeSeriesRecord) -> list:
    return [rec.step, *(format(v, ".17g") for v in astuple(rec)[1:6]), rec.newton_iters, format(rec.residual, ".17g")]
