"""Acceptance suite; each test prints one PASS/FAIL line."""
import math
from pathlib import Path

import numpy as np
import pytest

from aniflow.anisotropy import ConstantMobility, DiagonalQuadraticAnisotropy, IsotropicAnisotropy, SinModulatedAnisotropy
from aniflow.config import FlowConfig
from aniflow.diagnostics import convergence_study, discrete_curvature, record_for
from aniflow.errors import AniflowError
from aniflow.flow_matrix import (flow_matrices, flow_terms, h_inv_from_terms, reduce_2d,
                                 reduce_2d_closed_form)
from aniflow.mesh import NodalField, PeriodicGrid, error_norms
from aniflow.presets import Circle, ellipse3d_problem
from aniflow.ritz import ritz_project
from aniflow.solver import NewtonOptions, SchemeOptions, _uses_kernels, integrate, num_steps

from conftest import builtin_anisotropies, builtin_pairs, random_vectors
from oracles import dense_ritz, lumped_curvature

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SAMPLES = 10_000


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


# 1, 2: convergence orders of the manufactured ellipse

@pytest.mark.slow
@pytest.mark.parametrize("mass", ["consistent", "lumped"])
def test_1_convergence_dt_h2(mass, capsys):
    rows = convergence_study(ellipse3d_problem(0.5), [64, 128, 256, 512], "dt_eq_h2", T=0.45,
                             mass_treatment=mass)
    l2, h1 = rows[-1].l2_eoc, rows[-1].h1_eoc
    l2_ratio = [a.l2_err / b.l2_err for a, b in zip(rows, rows[1:])]
    h1_ratio = [a.h1_err / b.h1_err for a, b in zip(rows, rows[1:])]
    ok = 1.95 <= l2 <= 2.05 and 0.95 <= h1 <= 1.05
    ok &= all(3.6 <= r <= 4.4 for r in l2_ratio) and all(1.8 <= r <= 2.2 for r in h1_ratio)
    report(capsys, 1, ok, f"[{mass}] L2 EOC {l2:.3f}, H1 EOC {h1:.3f}, "
                          f"L2 ratios {np.round(l2_ratio, 2).tolist()}, H1 ratios {np.round(h1_ratio, 2).tolist()}")


@pytest.mark.parametrize("mass", ["consistent", "lumped"])
def test_2_convergence_dt_h(mass, capsys):
    rows = convergence_study(ellipse3d_problem(0.5), [64, 128, 256, 512, 1024], "dt_eq_h", T=0.45,
                             mass_treatment=mass)
    l2 = [r.l2_eoc for r in rows[1:]]
    h1 = [r.h1_eoc for r in rows[1:]]
    rising = all(b > a for a, b in zip(l2, l2[1:])) and all(b > a for a, b in zip(h1, h1[1:]))
    ok = rising and l2[-1] >= 0.90 and h1[-1] >= 0.90
    report(capsys, 2, ok, f"[{mass}] L2 EOCs {np.round(l2, 3).tolist()}, H1 EOCs {np.round(h1, 3).tolist()}")


# 3, 9: shipped preset runs, each computed once

PRESETS = sorted(p.stem for p in CONFIGS.glob("*.json")
                 if not p.stem.startswith("validate") and p.stem != "ellipse3d_manufactured")
_RUNS = {}


def preset_run(name):
    """Worst stability gap, energies and monitors of a shipped preset; stops at the first solver error."""
    if name not in _RUNS:
        config = FlowConfig.from_json(CONFIGS / f"{name}.json")
        setup = config.build()
        a, m = setup.anisotropy, setup.mobility
        compiled = _uses_kernels(a, m)
        M = config.steps
        recs = [record_for(a, setup.initial, 0, 0.0, None, compiled)]
        gaps = []
        error = None
        try:
            for step, t, x, rep in integrate(a, m, setup.scheme, setup.newton, setup.initial, M):
                gaps.append(rep.stability_gap)
                recs.append(record_for(a, x, step, t, rep, compiled))
        except AniflowError as exc:
            error = f"{type(exc).__name__}: {exc}"
        _RUNS[name] = dict(steps=M, records=recs, gaps=np.array(gaps), error=error)
    return _RUNS[name]


@pytest.mark.slow
@pytest.mark.parametrize("name", PRESETS)
def test_3_unconditional_stability(name, capsys):
    run = preset_run(name)
    E = np.array([r.E_phi for r in run["records"]])
    worst = run["gaps"].min()
    ok = worst >= -1e-10 and np.all(np.diff(E) <= 0)
    done = len(run["records"]) - 1
    status = "completed" if run["error"] is None else f"stopped early ({run['error']})"
    report(capsys, 3, ok, f"[{name}] {done}/{run['steps']} steps {status}; min gap {worst:.3e}, "
                          f"max E_phi increase {max(np.diff(E).max(), 0.0):.3e}")


@pytest.mark.slow
@pytest.mark.parametrize("name", ["trefoil_isotropic", "rings_isotropic", "helix_isotropic"])
def test_9_qualitative_benchmarks(name, capsys):
    run = preset_run(name)
    ratio = max(r.ratio for r in run["records"])
    ok = run["error"] is None and ratio < 50
    detail = f"[{name}] completed {run['error'] is None}, max ratio {ratio:.2f}"
    if name == "rings_isotropic":
        t = np.array([r.t for r in run["records"]])
        inv_k = 1.0 / np.array([r.K_inf for r in run["records"]])
        i = int(np.argmin(inv_k))
        # a dip well below both ends, while the loops pinch off
        dip = 0 < i < len(inv_k) - 1 and inv_k[i] < 0.5 * min(inv_k[0], inv_k[-1])
        ok &= dip and 0.3 <= t[i] <= 0.8
        detail += f", 1/K_inf minimum {inv_k[i]:.4f} at t = {t[i]:.4f}"
    report(capsys, 9, ok, detail)


# 4, 5: pointwise algebra

def test_4_matrix_suite(capsys, rng):
    worst = dict(inverse=0.0, coercivity=0.0, petrovsky=np.inf)
    for a, m in builtin_pairs():
        P = random_vectors(rng, SAMPLES, a.dim)
        alpha, t, w = flow_terms(a, m, P)
        H = flow_matrices(a, m, P)
        Hi = h_inv_from_terms(alpha, t, w)
        I = np.eye(a.dim)
        worst["inverse"] = max(worst["inverse"], np.abs(H @ Hi - I).max(), np.abs(Hi @ H - I).max())
        Z = rng.standard_normal((SAMPLES, a.dim))
        zz = np.einsum("ni,ni->n", Z, Z)
        zHz = np.einsum("ni,nij,nj->n", Z, H, Z)
        bound = alpha / (1 + np.einsum("ni,ni->n", w, w)) * zz
        worst["coercivity"] = max(worst["coercivity"], np.max((bound - zHz) / (alpha * zz)))
        eig = np.linalg.eigvals(Hi @ a.d2Phi(P))
        worst["petrovsky"] = min(worst["petrovsky"], eig.real.min())
    a = IsotropicAnisotropy(3)
    P = random_vectors(rng, SAMPLES, 3)
    pp = np.einsum("ni,ni->n", P, P)
    # exact up to roundoff in |p|^2
    iso = np.max(np.abs(flow_matrices(a, ConstantMobility(), P) - np.einsum("n,ij->nij", pp, np.eye(3)))
                 / pp[:, None, None])
    gamma = SinModulatedAnisotropy(3, 0.124)
    red = max(np.abs(reduce_2d(gamma, p) - reduce_2d_closed_form(gamma, p)).max()
              for p in random_vectors(rng, SAMPLES, 2))
    ok = (worst["inverse"] <= 1e-12 and worst["coercivity"] <= 1e-10 and worst["petrovsky"] > 0
          and iso <= 1e-14 and red <= 1e-10)
    report(capsys, 4, ok, f"|H H^-1 - I| {worst['inverse']:.2e}, coercivity violation {worst['coercivity']:.2e}, "
                          f"min Re eig {worst['petrovsky']:.3e}, isotropic {iso:.1e}, 2D reduction {red:.2e}")


def test_5_homogeneity_suite(capsys, rng):
    worst = dict(hom=0.0, euler=0.0, kernel=0.0, Phi2=0.0, fd=0.0)
    for a in builtin_anisotropies():
        P = random_vectors(rng, SAMPLES, a.dim)
        lam = rng.uniform(0.1, 5.0, SAMPLES)
        if a.absolutely_homogeneous:
            lam *= rng.choice([-1.0, 1.0], SAMPLES)
        f, g, Hs = a.derivatives(P)
        worst["hom"] = max(worst["hom"], np.max(np.abs(a.phi(P * lam[:, None]) - np.abs(lam) * f)
                                                / (np.abs(lam) * f)))
        worst["euler"] = max(worst["euler"], np.max(np.abs(np.einsum("ni,ni->n", g, P) - f) / f))
        worst["kernel"] = max(worst["kernel"], np.max(np.linalg.norm(np.einsum("nij,nj->ni", Hs, P), axis=1)
                                                      / (np.linalg.norm(Hs, axis=(1, 2)) * np.linalg.norm(P, axis=1))))
        D2 = a.d2Phi(P)
        dP = a.dPhi(P)
        worst["Phi2"] = max(worst["Phi2"], np.max(np.linalg.norm(np.einsum("nij,nj->ni", D2, P) - dP, axis=1)
                                                  / np.linalg.norm(dP, axis=1)))
        for p in P[:200]:
            eps = 1e-6 * np.linalg.norm(p)
            fd = np.column_stack([(a.dPhi(p + eps * e) - a.dPhi(p - eps * e)) / (2 * eps) for e in np.eye(a.dim)])
            exact = a.d2Phi(p)
            worst["fd"] = max(worst["fd"], np.abs(fd - exact).max() / max(1.0, np.abs(exact).max()))
    ok = max(worst["hom"], worst["euler"], worst["kernel"], worst["Phi2"]) <= 1e-10 and worst["fd"] <= 1e-6
    report(capsys, 5, ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


# 6, 7, 8: oracles

def test_6_ritz_orders(capsys):
    a = DiagonalQuadraticAnisotropy((0.25, 1.0))
    c = Circle(1.0, 2)
    errs = [error_norms(ritz_project(a, PeriodicGrid(J), c.position, c.d_rho), c.position, c.d_rho)
            for J in (64, 128, 256, 512)]
    l2 = [math.log2(e0["l2"] / e1["l2"]) for e0, e1 in zip(errs, errs[1:])]
    h1 = [math.log2(e0["h1_semi"] / e1["h1_semi"]) for e0, e1 in zip(errs, errs[1:])]
    grid = PeriodicGrid(8)
    dense = np.abs(ritz_project(a, grid, c.position, c.d_rho).values - dense_ritz(a, grid, c.position, c.d_rho, 3)).max()
    ok = all(1.9 <= e <= 2.1 for e in l2) and all(0.9 <= e <= 1.1 for e in h1) and dense <= 1e-12
    report(capsys, 6, ok, f"L2 EOCs {np.round(l2, 3).tolist()}, H1 EOCs {np.round(h1, 3).tolist()}, "
                          f"dense oracle {dense:.1e}")


def test_7_shrinking_circle(capsys):
    a = IsotropicAnisotropy(2)
    m = ConstantMobility()
    x = Circle(1.0, 2).nodes(PeriodicGrid(256))
    iters = set()
    for _, t, x, rep in integrate(a, m, SchemeOptions(1e-4), NewtonOptions(), x, num_steps(0.4, 1e-4)):
        iters.add(rep.newton_iters)
    r = np.linalg.norm(x.values, axis=1).mean()
    ok = abs(r - math.sqrt(0.2)) <= 1e-3 and iters == {1}
    report(capsys, 7, ok, f"radius {r:.6f} at t = {t:.4f} vs {math.sqrt(0.2):.6f}, Newton iterations {sorted(iters)}")


def test_8_discrete_curvature(capsys, rng):
    dev = {}
    for J in (3, 4, 64, 512):
        rho = np.arange(J) / J
        x = NodalField(PeriodicGrid(J), np.column_stack([np.cos(2 * np.pi * rho), np.sin(2 * np.pi * rho)]))
        dev[J] = np.abs(np.linalg.norm(discrete_curvature(x).values, axis=1) - 1).max()
    oracle = 0.0
    for J in range(3, 9):
        x = NodalField(PeriodicGrid(J), rng.standard_normal((J, 3)))
        oracle = max(oracle, np.abs(discrete_curvature(x).values - lumped_curvature(x)).max())
    ok = max(dev.values()) <= 1e-12 and oracle <= 1e-12
    report(capsys, 8, ok, f"max ||kappa| - 1| by J {{{', '.join(f'{J}: {v:.1e}' for J, v in dev.items())}}}, "
                          f"brute-force oracle {oracle:.1e}")
