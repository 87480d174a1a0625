import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conformal4 import geometry as geo
from conformal4 import manifolds as mf
from conformal4.errors import DomainError, MetricDegeneracyError

SPECS = ["s4", "cp2", "s2xs2", "s3xs1"]


def pts(spec, n, seed=1):
    return spec.charts[spec.pointwise_chart].sample(n, np.random.default_rng(seed), margin=0.05)


def riem_norm2(c):
    gi = c.g_inv
    up = np.einsum("...ap,...bq,...cr,...ds,...pqrs->...abcd", gi, gi, gi, gi, c.riem)
    return np.einsum("...abcd,...abcd->...", c.riem, up)


@pytest.mark.parametrize("name", SPECS)
@pytest.mark.parametrize("h,order,tol", [(1e-4, 2, 1e-5), (1e-3, 4, 1e-6)])
def test_jet_curvature_matches_finite_differences(name, h, order, tol):
    spec = mf.catalog(name)
    dom = spec.charts[spec.pointwise_chart]
    metric = lambda y: dom.metric_values(y)
    for x in pts(spec, 4):
        c = geo.curvature_at(spec, x)
        _, ric_fd, R_fd = oracles.fd_curvature(metric, x, h, order)
        scale = max(1.0, abs(R_fd))
        assert abs(float(c.R) - R_fd) <= tol * scale
        mixed = np.linalg.inv(dom.metric_values(x)) @ ric_fd
        assert np.max(np.abs(c.g_inv @ c.ric - mixed)) <= tol * scale
        assert float(riem_norm2(c)) == pytest.approx(oracles.fd_riemann_norm2(metric, x, h, order), rel=tol, abs=tol)


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_round_sphere_is_constant_curvature(r):
    spec = mf.round_sphere_4(r)
    c = geo.curvature_at(spec, pts(spec, 50))
    assert np.allclose(c.R, 12.0 / r**2, rtol=1e-10)
    assert np.max(np.abs(c.ric0)) < 1e-9 / r**2
    # |Rm|^2 of constant curvature K = 1/r^2 in dimension 4 is 2 * n(n-1) K^2 = 24 K^2
    assert np.allclose(riem_norm2(c), 24.0 / r**4, rtol=1e-9)


def test_flat_torus_is_flat():
    spec = mf.catalog("t4")
    c = geo.curvature_at(spec, pts(spec, 20))
    assert np.max(np.abs(c.riem)) == 0.0


def test_product_s3xs1_ricci():
    spec = mf.catalog("s3xs1")
    c = geo.curvature_at(spec, pts(spec, 30))
    assert np.allclose(c.R, 6.0, atol=1e-10)
    eig = np.sort(np.linalg.eigvals(np.einsum("...ij,...jk->...ik", c.g_inv, c.ric)).real, axis=-1)
    assert np.allclose(eig, [0.0, 2.0, 2.0, 2.0], atol=1e-10)


@given(scale=st.floats(0.3, 4.0))
def test_curvature_scales_inversely_with_the_metric(scale):
    # c^2 g: R -> R / c^2, |Rm|^2 -> |Rm|^2 / c^4
    base, big = mf.catalog("cp2"), mf.catalog("cp2", scale=scale)
    x = pts(base, 3)
    c0, c1 = geo.curvature_at(base, x), geo.curvature_at(big, x)
    assert np.allclose(c1.R, c0.R / scale**2, rtol=1e-9)
    assert np.allclose(riem_norm2(c1), riem_norm2(c0) / scale**4, rtol=1e-8)


@pytest.mark.parametrize("name", SPECS)
def test_bianchi_identity(name):
    spec = mf.catalog(name)
    c = geo.curvature_at(spec, pts(spec, 10))
    scale = np.max(np.abs(c.riem))
    for k in range(10):
        assert geo.bianchi_defect(c.riem[k]) < 1e-9 * max(1.0, scale)


@pytest.mark.parametrize("order", oracles.all_permutations4()[::5])
def test_frame_is_orthonormal_and_oriented(order):
    spec = mf.catalog("cp2")
    c = geo.curvature_at(spec, pts(spec, 5), order=order)
    gram = np.einsum("...ai,...ij,...bj->...ab", c.frame, c.g, c.frame)
    assert np.allclose(gram, np.eye(4), atol=1e-12)
    assert np.all(np.linalg.det(c.frame) > 0)


def test_points_outside_the_chart_are_rejected():
    spec = mf.catalog("s4")
    with pytest.raises(DomainError):
        geo.evaluate_jet(spec, 1, np.array([-1.0, 0.5, 0.5, 0.5]))


def test_degenerate_metric_is_rejected():
    with pytest.raises(MetricDegeneracyError):
        geo.check_metric(np.diag([1.0, 1.0, 0.0, 1.0]))
