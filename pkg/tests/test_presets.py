import math

import numpy as np
import pytest
from scipy.integrate import quad

from aniflow.anisotropy import DiagonalQuadraticAnisotropy, InversePhiMobility
from aniflow.assembly import forcing_from_exact
from aniflow.errors import InvalidInput, InvalidTime
from aniflow.flow_matrix import flow_matrices
from aniflow.mesh import NodalField, PeriodicGrid, element_ratio
from aniflow.presets import (CURVE_KINDS, HELIX_LENGTH, ArchimedeanSpiral, Ellipse2D, SelfSimilarEllipse3D,
                             closed_helix_nodes, make_curve, read_frame, write_frame)


def fd(f, rho, eps=1e-6):
    return (f(rho + eps) - f(rho - eps)) / (2 * eps)


def test_selfsimilar_ellipse_values():
    d = 0.5
    y = SelfSimilarEllipse3D(d)
    np.testing.assert_allclose(y.evaluate(0.0), [1 / math.sqrt(2), 0.0, d / math.sqrt(2)], atol=1e-15)
    rho = np.linspace(0, 1, 9)
    np.testing.assert_allclose(y.position(rho, 0.45), math.sqrt(0.1) * y.position(rho, 0.0), rtol=1e-14)
    with pytest.raises(InvalidTime):
        y.position(rho, 0.5)


def test_selfsimilar_ellipse_derivatives():
    y = SelfSimilarEllipse3D(0.5)
    rho = np.linspace(0, 1, 13)
    t = 0.2
    np.testing.assert_allclose(y.d_rho(rho, t), fd(lambda r: y.position(r, t), rho), atol=1e-7)
    np.testing.assert_allclose(y.d_rho2(rho, t), fd(lambda r: y.d_rho(r, t), rho), atol=1e-6)
    np.testing.assert_allclose(y.d_t(rho, t), (y.position(rho, t + 1e-6) - y.position(rho, t - 1e-6)) / 2e-6,
                               atol=1e-7)


def test_trefoil_start_and_derivative():
    c = make_curve("trefoil")
    np.testing.assert_allclose(c.evaluate(0.0), [3.0, 0.0, 0.0], atol=1e-15)
    rho = np.linspace(0, 1, 11)
    np.testing.assert_allclose(c.d_rho(rho), fd(c.position, rho), rtol=1e-6, atol=1e-6)


def test_rings_derivative():
    c = make_curve("interlocked_rings")
    rho = np.linspace(0, 1, 11)
    np.testing.assert_allclose(c.d_rho(rho), fd(c.position, rho), rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("kind", [k for k in CURVE_KINDS if k != "from_file"])
def test_presets_are_closed_and_regular(kind):
    c = make_curve(kind)
    np.testing.assert_allclose(c.evaluate(1.0), c.evaluate(0.0), atol=1e-12)
    assert element_ratio(c.nodes(PeriodicGrid(512))) <= 10


def test_helix_nodes_on_path():
    x = closed_helix_nodes(PeriodicGrid(512))
    assert x.d == 3
    c = make_curve("closed_helix")
    np.testing.assert_allclose(x.values[0], c.evaluate(1.0), atol=1e-15)
    # every node sits either on the helix or on one of the three closing segments
    v = x.values
    on_helix = np.abs(v[:, 0] ** 2 + v[:, 1] ** 2 - 1) < 1e-12
    on_helix &= np.abs(np.sin(16 * np.pi * v[:, 2]) - v[:, 0]) < 1e-12
    on_segments = np.abs(v[:, 0]) < 1e-15
    on_segments &= (np.abs(v[:, 1]) < 1e-15) | (np.abs(v[:, 2] - 1) < 1e-15) | (np.abs(v[:, 2]) < 1e-15)
    assert np.all(on_helix | on_segments)
    with pytest.raises(InvalidInput):
        closed_helix_nodes(PeriodicGrid(16))


def test_helix_length_converges():
    target = HELIX_LENGTH + 3
    assert HELIX_LENGTH == pytest.approx(math.sqrt(1 + 256 * math.pi**2))
    errs = []
    for J in (512, 2048, 8192):
        x = closed_helix_nodes(PeriodicGrid(J))
        errs.append(target - x.edge_lengths().sum())
    assert all(e > 0 for e in errs)
    assert errs[2] < errs[1] < errs[0] and errs[2] < 1e-3


def test_ellipse_2d_equidistributed():
    e = Ellipse2D(1.0, 0.5)
    perim, _ = quad(lambda t: math.hypot(math.sin(t), 0.5 * math.cos(t)), 0, 2 * math.pi)
    assert e.perimeter == pytest.approx(perim, rel=1e-10)
    x = e.nodes(PeriodicGrid(512))
    L = x.edge_lengths()
    assert L.max() / L.min() < 1.001
    assert e.evaluate(0.0) == pytest.approx([1.0, 0.0])


def test_spiral_is_simple_band():
    s = ArchimedeanSpiral()
    x = s.nodes(PeriodicGrid(1024))
    assert x.d == 2
    assert element_ratio(x) < 1.5
    with pytest.raises(InvalidInput):
        ArchimedeanSpiral(width=0.5)


def test_unknown_preset_and_bad_params():
    with pytest.raises(InvalidInput):
        make_curve("cardioid")
    with pytest.raises(InvalidInput):
        make_curve("trefoil", radius=2)


def test_frame_round_trip_is_bit_exact(tmp_path, rng):
    x = NodalField(PeriodicGrid(17), rng.standard_normal((17, 3)) * 1e3)
    p = tmp_path / "frame.csv"
    write_frame(p, x)
    y = read_frame(p)
    assert np.array_equal(x.values, y.values)
    f = make_curve("from_file", path=str(p))
    assert np.array_equal(f.nodes(PeriodicGrid(17)).values, x.values)
    with pytest.raises(InvalidInput):
        f.nodes(PeriodicGrid(16))


def test_read_frame_rejects_open_polygon(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("rho,x1,x2\n0,0,0\n0.25,1,0\n0.5,1,1\n0.75,0,1\n1,0,0.5\n")
    with pytest.raises(InvalidInput):
        read_frame(p)


def test_forcing_consistency_of_ellipse_problem():
    """The continuous equation residual at sampled (rho, t) equals the forcing."""
    d = 0.5
    y = SelfSimilarEllipse3D(d)
    a = DiagonalQuadraticAnisotropy((d * d, 1.0, 1.0))
    f = forcing_from_exact(a, InversePhiMobility(a), y)
    rho = np.array([0.1, 0.37, 0.8])
    for t in (0.0, 0.2, 0.4):
        H = np.einsum("nij,nj->ni", flow_matrices(a, InversePhiMobility(a), y.d_rho(rho, t)), y.d_t(rho, t))
        div = fd(lambda r: a.dPhi(y.d_rho(r, t)), rho, 1e-5)
        np.testing.assert_allclose(f.f(rho, t), H - div, rtol=1e-8, atol=1e-7)
