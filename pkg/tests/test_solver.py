import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aniflow.anisotropy import (ConstantMobility, CustomAnisotropy, DiagonalQuadraticAnisotropy, IsotropicAnisotropy,
                                RegularizedL1Anisotropy)
from aniflow.assembly import CyclicBlockSystem, SchemeOptions, residual
from aniflow.errors import InvalidInput, NewtonDiverged, SingularSystem
from aniflow.mesh import NodalField, PeriodicGrid, energy_phi, interpolate
from aniflow.solver import NewtonOptions, integrate, num_steps, solve_linear, solve_timestep

from conftest import builtin_pairs, pair_id

PAIRS = builtin_pairs()


def wavy_curve(J, d):
    rho = np.arange(J) / J
    X = np.zeros((J, d))
    r = 1 + 0.2 * np.cos(6 * np.pi * rho)
    X[:, 0], X[:, 1] = r * np.cos(2 * np.pi * rho), r * np.sin(2 * np.pi * rho)
    if d > 2:
        X[:, 2] = 0.3 * np.sin(4 * np.pi * rho)
    return NodalField(PeriodicGrid(J), X)


@given(st.integers(3, 30), st.integers(1, 4), st.integers(0, 2**31))
def test_hypothesis_solve_matches_dense(J, d, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.standard_normal((2, J, d, d))
    di = rng.standard_normal((J, d, d)) + 8 * np.eye(d)
    sys = CyclicBlockSystem(lo, di, up, rng.standard_normal((J, d)))
    x = solve_linear(sys)
    np.testing.assert_allclose(x.ravel(), np.linalg.solve(sys.to_dense(), sys.rhs.ravel()), rtol=1e-9, atol=1e-10)


def test_solve_without_diagonal_dominance_falls_back(rng):
    # zero diagonal blocks make the unpivoted elimination fail at the first pivot
    J, d = 6, 2
    lo, up = rng.standard_normal((2, J, d, d))
    sys = CyclicBlockSystem(lo, np.zeros((J, d, d)), up, rng.standard_normal((J, d)))
    A = sys.to_dense()
    if abs(np.linalg.det(A)) < 1e-8:
        pytest.skip("random draw is singular")
    x = solve_linear(sys)
    np.testing.assert_allclose(A @ x.ravel(), sys.rhs.ravel(), atol=1e-10)


def test_singular_circulant_raises():
    J, d = 8, 2
    eye = np.broadcast_to(np.eye(d), (J, d, d)).copy()
    sys = CyclicBlockSystem(-eye, 2 * eye, -eye, np.ones((J, d)))
    with pytest.raises(SingularSystem):
        solve_linear(sys)


def test_newton_options_validation():
    with pytest.raises(InvalidInput):
        NewtonOptions(tol_residual=0.0)
    with pytest.raises(InvalidInput):
        NewtonOptions(max_iter=0)
    with pytest.raises(InvalidInput):
        NewtonOptions(tol_step=-1.0)
    assert NewtonOptions().residual_tol(100) == pytest.approx(1e-11)


def test_num_steps():
    assert num_steps(0.45, 1e-4) == 4500
    assert num_steps(0.0, 1e-3) == 0
    with pytest.raises(InvalidInput):
        num_steps(0.45, 0.2)


@pytest.mark.parametrize("mass", ["consistent", "lumped"])
@pytest.mark.parametrize("pair", PAIRS, ids=[pair_id(p) for p in PAIRS])
def test_compiled_and_numpy_steps_agree(pair, mass):
    a, m = pair
    x = wavy_curve(32, a.dim)
    # the nearly crystalline l1 density needs the small steps it is run with
    opts = SchemeOptions(1e-6 if a.kind == "regularized_l1" else 1e-3, mass)
    newton = NewtonOptions()
    for _ in range(3):
        xc, rc = solve_timestep(a, m, opts, newton, x, 0.0, compiled=True)
        xn, rn = solve_timestep(a, m, opts, newton, x, 0.0, compiled=False)
        np.testing.assert_allclose(xc.values, xn.values, rtol=0, atol=1e-11)
        assert rc.energy_Phi_after == pytest.approx(rn.energy_Phi_after, rel=1e-12)
        assert rc.dissipation == pytest.approx(rn.dissipation, rel=1e-8, abs=1e-12)
        assert rc.stability_gap >= -1e-10 and rn.stability_gap >= -1e-10
        # residual at roundoff level relative to the size of its two terms
        G = a.dPhi(xc.derivative())
        scale = 1.0 + 2.0 * np.linalg.norm(G)
        assert np.linalg.norm(residual(a, m, opts, x, xc)) <= newton.residual_tol(x.J) * scale
        x = xc


def test_compiled_path_rejects_custom():
    c = np.array([1.0, 1.0])
    a = CustomAnisotropy(lambda p: float(np.linalg.norm(p)), lambda p: p / np.linalg.norm(p),
                         lambda p: (np.eye(2) - np.outer(p, p) / (p @ p)) / np.linalg.norm(p))
    x = wavy_curve(16, 2)
    with pytest.raises(InvalidInput):
        solve_timestep(a, ConstantMobility(), SchemeOptions(1e-3), NewtonOptions(), x, 0.0, compiled=True)
    x1, rep = solve_timestep(a, ConstantMobility(), SchemeOptions(1e-3), NewtonOptions(), x, 0.0)
    x2, _ = solve_timestep(IsotropicAnisotropy(2), ConstantMobility(), SchemeOptions(1e-3), NewtonOptions(), x, 0.0)
    np.testing.assert_allclose(x1.values, x2.values, atol=1e-12)
    assert c.size == 2


def test_isotropic_step_is_one_newton_iteration():
    x = wavy_curve(64, 3)
    _, rep = solve_timestep(IsotropicAnisotropy(3), ConstantMobility(), SchemeOptions(1e-3), NewtonOptions(), x, 0.0)
    assert rep.newton_iters == 1


@pytest.mark.parametrize("compiled", [True, False])
def test_newton_failure_reports_step(compiled):
    a = RegularizedL1Anisotropy(0.01, 2)
    x = wavy_curve(64, 2)
    newton = NewtonOptions(max_iter=1)
    with pytest.raises(NewtonDiverged) as info:
        for _ in integrate(a, ConstantMobility(), SchemeOptions(1e-2), newton, x, 3, compiled=compiled):
            pass
    assert info.value.step == 1
    assert "step 1" in str(info.value)


def test_unconditional_stability_with_huge_steps():
    a = DiagonalQuadraticAnisotropy((1.0, 0.1))
    x = wavy_curve(64, 2)
    E = [energy_phi(a, x)]
    for _, _, x, rep in integrate(a, ConstantMobility(), SchemeOptions(0.02), NewtonOptions(), x, 5):
        assert rep.stability_gap >= -1e-10
        E.append(energy_phi(a, x))
    assert all(b <= a_ for a_, b in zip(E, E[1:]))


def test_integrate_times():
    x = interpolate(PeriodicGrid(32), lambda r: np.column_stack([np.cos(2 * np.pi * r), np.sin(2 * np.pi * r)]))
    ts = [t for _, t, _, _ in integrate(IsotropicAnisotropy(2), ConstantMobility(), SchemeOptions(0.01),
                                        NewtonOptions(), x, 4)]
    assert ts == pytest.approx([0.01, 0.02, 0.03, 0.04])
    assert math.isclose(ts[-1], 0.04)
