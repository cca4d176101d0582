import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aniflow.anisotropy import (ConstantMobility, DiagonalQuadraticAnisotropy, InversePhiMobility,
                                IsotropicAnisotropy, RegularizedL1Anisotropy, SinModulatedAnisotropy)

settings.register_profile("aniflow", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("aniflow")


def builtin_anisotropies():
    return [
        IsotropicAnisotropy(2),
        IsotropicAnisotropy(3),
        DiagonalQuadraticAnisotropy((0.25, 1.0, 1.0)),
        DiagonalQuadraticAnisotropy((1.0, 0.01, 0.01)),
        DiagonalQuadraticAnisotropy((0.25, 1.0)),
        SinModulatedAnisotropy(3, 0.124),
        RegularizedL1Anisotropy(0.01, 2),
        RegularizedL1Anisotropy(0.01, 3),
    ]


def builtin_pairs():
    out = []
    for a in builtin_anisotropies():
        out.append((a, ConstantMobility()))
        out.append((a, InversePhiMobility(a)))
    return out


def pair_id(pair):
    a, m = pair
    return f"{a.kind}{a.dim}-{getattr(a, 'coeffs', getattr(a, 'delta', ''))}-{m.kind}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_vectors(rng, n, d, lo=0.5, hi=2.0):
    P = rng.standard_normal((n, d))
    P /= np.linalg.norm(P, axis=1)[:, None]
    return P * rng.uniform(lo, hi, n)[:, None]
