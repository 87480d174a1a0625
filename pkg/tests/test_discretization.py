import math

import numpy as np
import pytest

from conformal4 import discretization as dz
from conformal4 import manifolds as mf
from conformal4.errors import PreconditionError


def discs():
    return {
        "torus": dz.torus_grid(mf.catalog("t4"), (8, 6, 1, 1)),
        "circle": dz.circle_reduced(mf.catalog("s3xs1", L=7.0), 140),
        "polar": dz.polar_reduced(mf.catalog("s4"), 200),
    }


def smooth(d):
    if hasattr(d, "axes"):
        g = d.grid()
        return 1.0 + 0.2 * np.cos(2 * np.pi * g[0]) + 0.1 * np.sin(2 * np.pi * g[1])
    x = d.centers
    return 1.0 + 0.3 * np.cos(x) + 0.1 * np.sin(2 * x)


@pytest.mark.parametrize("name", ["torus", "circle", "polar"])
def test_constants_are_harmonic(name):
    d = discs()[name]
    assert np.max(np.abs(d.laplacian(d.constant(2.0)))) < 1e-10


@pytest.mark.parametrize("name", ["torus", "circle", "polar"])
def test_laplacian_is_self_adjoint_and_nonpositive(name):
    d = discs()[name]
    u = smooth(d)
    v = np.roll(u, 3) ** 2 if u.ndim == 1 else u**2
    lhs, rhs = d.inner(u, d.laplacian(v)), d.inner(d.laplacian(u), v)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
    assert d.dirichlet(u) > 0
    assert d.dirichlet(u) == pytest.approx(-d.inner(u, d.laplacian(u)), rel=1e-12)


@pytest.mark.parametrize("name", ["torus", "circle", "polar"])
def test_shifted_solve_inverts_the_operator(name):
    d = discs()[name]
    u = smooth(d)
    rhs = -6.0 * d.laplacian(u) + 7.0 * u
    assert np.max(np.abs(d.solve_shifted(rhs, 7.0) - u)) < 1e-10


def test_volumes():
    d = discs()
    assert d["torus"].volume == pytest.approx(1.0, rel=1e-14)
    assert d["circle"].volume == pytest.approx(2 * math.pi**2 * 7.0, rel=1e-13)
    assert d["polar"].volume == pytest.approx(8 * math.pi**2 / 3, rel=1e-12)


def test_polar_laplacian_eigenfunction_converges_at_second_order():
    # on the unit S^4, cos(psi) is an eigenfunction with eigenvalue -4
    errs = []
    for n in (100, 200, 400):
        d = dz.polar_reduced(mf.catalog("s4"), n)
        u = np.cos(d.centers)
        errs.append(np.max(np.abs(d.laplacian(u) + 4.0 * u)))
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)
    assert errs[2] < 1e-3


def test_catalog_sigma_on_grids():
    d = discs()
    assert np.all(d["torus"].sigma == 0.0)
    assert np.allclose(d["circle"].sigma, 6.0, atol=1e-10)
    assert np.allclose(d["polar"].sigma, 12.0, atol=1e-8)


@pytest.mark.parametrize("name", ["torus", "circle", "polar"])
def test_mirror_is_an_involution(name):
    d = discs()[name]
    u = smooth(d)
    assert np.array_equal(d.mirror(d.mirror(u)), u)


def test_unsupported_reduction():
    with pytest.raises(PreconditionError):
        dz.build_discretization(mf.catalog("cp2"))
