import math
from dataclasses import replace

import pytest

import oracles
from conformal4 import hyperdual as hd
from conformal4 import integration as itg
from conformal4 import manifolds as mf
from conformal4.errors import PreconditionError

PI2 = math.pi**2

EXPECTED = {
    # name: (chi, volume)
    "s4": (2.0, 8.0 * PI2 / 3.0),
    "t4": (0.0, 1.0),
    "s3xs1": (0.0, 2.0 * PI2 * 2.0 * math.pi),
    "cp2": (3.0, PI2 / 2.0),
    "cp2bar": (3.0, PI2 / 2.0),
    "s2xs2": (4.0, 16.0 * PI2),
}


def report(name, m=24, mode="full", **kw):
    spec = mf.catalog(name, **kw)
    return itg.functional_report(spec, itg.build_quadrature(spec, m), mode)


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_euler_characteristic_and_volume(name):
    chi, vol = EXPECTED[name]
    r = report(name)
    assert r.chi_estimate == pytest.approx(chi, abs=1e-6)
    assert r.volume == pytest.approx(vol, rel=1e-9)


def test_sphere_yamabe_quotient_is_aubin_constant():
    r = report("s4")
    assert r.yamabe_quotient == pytest.approx(oracles.AUBIN, rel=1e-9)
    assert r.generalized_quotient == pytest.approx(oracles.AUBIN, rel=1e-9)
    assert r.einstein


def test_lambda_max_integrals():
    assert report("cp2").lambda_sq_integral == pytest.approx(8.0 * PI2, rel=1e-9)
    assert report("s2xs2").lambda_sq_integral == pytest.approx(64.0 * PI2 / 9.0, rel=1e-9)
    assert report("s4").lambda_sq_integral == pytest.approx(0.0, abs=1e-12)


def test_gauss_bonnet_pieces_on_fubini_study():
    wp, wm, r2, ric = report("cp2").gb_pieces
    # |W+|^2 = 16 + 4 + 4 pointwise, R^2/24 = 24; both times pi^2/2
    assert wp == pytest.approx(12.0 * PI2, rel=1e-9)
    assert wm == pytest.approx(0.0, abs=1e-8)
    assert r2 == pytest.approx(12.0 * PI2, rel=1e-9)
    assert ric == pytest.approx(0.0, abs=1e-8)


def test_scaling_leaves_chi_and_quotients_fixed():
    a, b = report("cp2"), report("cp2", scale=2.5)
    assert b.volume == pytest.approx(a.volume * 2.5**4, rel=1e-9)
    assert b.chi_estimate == pytest.approx(a.chi_estimate, abs=1e-8)
    assert b.yamabe_quotient == pytest.approx(a.yamabe_quotient, rel=1e-9)


def _conformal_s2xs2(eps):
    base = mf.catalog("s2xs2")
    # heights on each sphere are smooth global functions
    factor = lambda x: hd.exp(eps * hd.cos(x[0]) * (1.0 + 0.5 * hd.cos(x[2])))
    chart = replace(mf.conformal_chart(base.charts[0], factor), cyclic=base.charts[0].cyclic)
    return replace(base, kind="custom-chart", charts=(chart,), label="conformal-s2xs2")


def test_weyl_energy_is_conformally_invariant():
    ref = report("s2xs2", m=32)
    spec = _conformal_s2xs2(0.3)
    r = itg.functional_report(spec, itg.build_quadrature(spec, 32))
    assert r.volume != pytest.approx(ref.volume, rel=1e-3)
    assert r.gb_pieces[0] == pytest.approx(ref.gb_pieces[0], rel=1e-7)
    assert r.gb_pieces[1] == pytest.approx(ref.gb_pieces[1], rel=1e-7)
    assert r.chi_estimate == pytest.approx(4.0, abs=1e-6)


def test_integral_pinching_condition():
    cp2 = itg.theorem14_condition(mf.catalog("cp2"), report=report("cp2"))
    assert cp2.verdict == "equality"
    assert cp2.lhs == pytest.approx(8.0 * PI2, rel=1e-9)
    assert cp2.rhs == pytest.approx(8.0 * PI2, rel=1e-9)
    s4 = itg.theorem14_condition(mf.catalog("s4"), report=report("s4"))
    assert s4.verdict == "strict"
    # the product of two unit spheres also sits exactly on the boundary
    s2 = itg.theorem14_condition(mf.catalog("s2xs2"), report=report("s2xs2"))
    assert s2.verdict == "equality"
    with pytest.raises(PreconditionError):
        itg.theorem14_condition(mf.catalog("s3xs1"), report=report("s3xs1"))


def test_convergence_metadata_and_resolution_floor():
    spec = mf.catalog("s4")
    rep = itg.report_with_convergence(spec, 16)
    assert rep.metadata["convergence"]["chi_change"] < 1e-6
    with pytest.raises(PreconditionError):
        itg.build_quadrature(spec, 3)
