import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from conformal4 import decomposition as dec
from conformal4 import geometry as geo
from conformal4 import manifolds as mf


def blocks(name, n=40, seed=2, order=(0, 1, 2, 3), **kw):
    spec = mf.catalog(name, **kw)
    x = spec.charts[spec.pointwise_chart].sample(n, np.random.default_rng(seed), margin=0.05)
    return dec.decompose(geo.curvature_at(spec, x, order=order))


def test_fubini_study_weyl_spectrum():
    b = blocks("cp2")
    assert np.allclose(b.R, 24.0, atol=1e-9)
    assert np.allclose(b.wplus_eigs, [4.0, -2.0, -2.0], atol=1e-8)
    assert np.allclose(b.wminus_eigs, 0.0, atol=1e-8)
    assert np.allclose(b.sigma, 0.0, atol=1e-8)
    assert np.allclose(b.sigma_plus, 0.0, atol=1e-8)


def test_reversed_fubini_study_has_positive_sigma_plus():
    b = blocks("cp2bar")
    assert np.allclose(b.sigma_plus, 24.0, atol=1e-8)
    assert np.allclose(b.sigma, 0.0, atol=1e-8)


def test_s2xs2_weyl_spectrum():
    b = blocks("s2xs2")
    for eig in (b.wplus_eigs, b.wminus_eigs):
        assert np.allclose(eig, [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0], atol=1e-10)
    assert np.allclose(b.sigma, 0.0, atol=1e-10)


@pytest.mark.parametrize("name", ["s4", "t4", "s3xs1"])
def test_conformally_flat_catalog_has_no_weyl(name):
    b = blocks(name)
    assert np.max(np.abs(b.wplus_eigs)) < 1e-9
    assert np.max(np.abs(b.wminus_eigs)) < 1e-9
    assert np.allclose(b.sigma, b.R, atol=1e-9)


@pytest.mark.parametrize("name", ["cp2", "s2xs2", "s3xs1"])
def test_orientation_reversal_swaps_the_weyl_halves(name):
    spec = mf.catalog(name)
    x = spec.charts[0].sample(20, np.random.default_rng(5), margin=0.05)
    b0 = dec.decompose(geo.curvature_at(spec, x))
    b1 = dec.decompose(geo.curvature_at(spec.reversed(), x))
    assert np.allclose(b0.wplus_eigs, b1.wminus_eigs, atol=1e-12)
    assert np.allclose(b0.wminus_eigs, b1.wplus_eigs, atol=1e-12)
    assert np.allclose(b0.sigma, b1.sigma, atol=1e-12)


@pytest.mark.parametrize("order", oracles.all_permutations4())
def test_invariants_do_not_depend_on_the_frame(order):
    ref = blocks("cp2", n=8)
    b = blocks("cp2", n=8, order=order)
    assert np.allclose(b.wplus_eigs, ref.wplus_eigs, atol=1e-9)
    assert np.allclose(b.wminus_eigs, ref.wminus_eigs, atol=1e-9)


def test_two_form_bases_diagonalize_the_hodge_star():
    star = oracles.hodge_star_matrix()
    assert np.allclose(star @ star, np.eye(6))
    bp, bm = dec.two_form_bases(np.eye(4))
    assert np.allclose(star @ bp, bp)
    assert np.allclose(star @ bm, -bm)
    assert np.allclose(np.hstack([bp, bm]).T @ np.hstack([bp, bm]), np.eye(6))
    # an odd frame, or the opposite orientation, exchanges the families
    odd = np.diag([1.0, 1.0, 1.0, -1.0])
    for frame, orient in ((odd, 1), (np.eye(4), -1)):
        bp2, bm2 = dec.two_form_bases(frame, orient)
        assert np.allclose(bp2, bm) and np.allclose(bm2, bp)


def test_off_diagonal_block_is_traceless_ricci():
    for name in ("s3xs1", "cp2", "s2xs2"):
        spec = mf.catalog(name)
        x = spec.charts[0].sample(10, np.random.default_rng(3), margin=0.05)
        c = geo.curvature_at(spec, x)
        b = dec.decompose(c)
        assert np.allclose(np.sum(b.B**2, axis=(-1, -2)), c.ric0_norm2 / 4.0, atol=1e-9)


@given(m=hnp.arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3)))
def test_pinching_inequality_for_trace_free_matrices(m):
    m = 0.5 * (m + m.T)
    m = m - np.trace(m) / 3.0 * np.eye(3)
    lam = np.linalg.eigvalsh(m)
    assert np.sum(lam**2) >= 1.5 * lam[-1] ** 2 - 1e-9 * max(1.0, np.sum(lam**2))


def test_pinching_inequality_on_a_large_batch():
    lam = np.linalg.eigvalsh(oracles.trace_free_sym(np.random.default_rng(0), 100_000))
    violations = np.sum(np.sum(lam**2, axis=-1) < 1.5 * lam[:, -1] ** 2 * (1 - 1e-12))
    assert violations == 0


@pytest.mark.parametrize(
    "name,verdict,margin",
    [
        ("s4", dec.POSITIVE, 2.0),
        ("s3xs1", dec.POSITIVE, 1.0),
        ("cp2", dec.DEGENERATE, 0.0),
        ("s2xs2", dec.DEGENERATE, 0.0),
        ("t4", dec.DEGENERATE, 0.0),
    ],
)
def test_pic_verdicts(name, verdict, margin):
    b = blocks(name)
    v, m = dec.pic_verdict(b)
    assert v == verdict
    assert m == pytest.approx(margin, abs=1e-8)
    assert np.allclose(b.pic_margin, b.sigma / 6.0, atol=1e-10)


def test_indefinite_verdict_on_a_synthetic_block():
    b = blocks("s4", n=1)
    shifted = dec.CurvatureBlocks(**{**b.__dict__, "pic_margin": np.array([-1.0])})
    assert dec.pic_verdict(shifted)[0] == dec.INDEFINITE


def test_p_operator_and_modes():
    b = blocks("cp2", n=3)
    P = b.P(+1)
    assert np.allclose(np.linalg.eigvalsh(P), [0.0, 6.0, 6.0], atol=1e-8)
    with pytest.raises(ValueError):
        b.modified_scalar("other")


@pytest.mark.parametrize("name", ["s4", "cp2", "s2xs2", "s3xs1"])
def test_margin_agrees_with_raw_block_eigenvalues(name):
    b = blocks(name, n=50)
    ea, ec = np.linalg.eigvalsh(b.A), np.linalg.eigvalsh(b.C)
    raw = np.minimum(ea[..., 0] + ea[..., 1], ec[..., 0] + ec[..., 1])
    assert np.all(np.abs(raw - b.pic_margin) <= b.trace_defect + 1e-12 * np.maximum(1.0, np.abs(b.R)))
    assert np.max(b.trace_defect) < 1e-9
