"""End-to-end acceptance checks; each test records one verdict line printed in the run summary."""

import math
import time

import numpy as np
import pytest

import oracles
from conftest import record
from conformal4 import cli
from conformal4 import decomposition as dec
from conformal4 import discretization as dz
from conformal4 import geometry as geo
from conformal4 import gluing as gl
from conformal4 import hyperdual as hd
from conformal4 import integration as itg
from conformal4 import manifolds as mf
from conformal4 import yamabe as ym

# tolerances pinned by the acceptance contract
CHI_TOL = 1e-6
CHI_M = 48
CHI_SECONDS = 60.0
SIGMA_TOL = 1e-8
SIGMA_POINTS = 1000
MARGIN_TOL = 1e-10
ESR_SAMPLES = 100_000
COVARIANCE_RTOL = 1e-6
EQUALITY_RTOL = 1e-6
MU_FLAT_TOL = 1e-8
AUBIN_SLACK = 1e-3
RESIDUAL_TOL = 1e-7
SOLVE_SECONDS = 30.0
EXPONENT_TARGET, EXPONENT_TOL = 2.0, 0.2
NECKS = (5.0, 10.0, 20.0, 40.0)
CIRCLES = (1.0, 5.0, 20.0, 80.0)


@pytest.mark.parametrize("name,chi", [("s4", 2), ("t4", 0), ("s3xs1", 0), ("cp2-fs", 3), ("s2xs2", 4)])
def test_criterion_1_gauss_bonnet_chern(name, chi):
    spec = mf.catalog(name)
    t0 = time.perf_counter()
    rep = itg.functional_report(spec, itg.build_quadrature(spec, CHI_M))
    dt = time.perf_counter() - t0
    err = abs(rep.chi_estimate - chi)
    ok = record("1", err < CHI_TOL and dt < CHI_SECONDS, f"{name}: chi={rep.chi_estimate:.12f} (|err|={err:.1e}) in {dt:.2f}s")
    assert ok


@pytest.mark.parametrize("name,sigma", [("cp2-fs", 0.0), ("s4", 12.0), ("s3xs1", 6.0), ("t4", 0.0)])
def test_criterion_2_pointwise_sigma(name, sigma):
    spec = mf.catalog(name)
    x = spec.charts[spec.pointwise_chart].sample(SIGMA_POINTS, np.random.default_rng(2024))
    b = dec.decompose(geo.curvature_at(spec, x))
    err = float(np.max(np.abs(b.sigma - sigma)))
    merr = float(np.max(np.abs(b.pic_margin - b.sigma / 6.0)))
    ok = record("2", err < SIGMA_TOL and merr < MARGIN_TOL, f"{name}: max|sigma-{sigma:g}|={err:.1e}, max|margin-sigma/6|={merr:.1e}")
    assert ok


def test_criterion_3_eigenvalue_pinching():
    lam = np.linalg.eigvalsh(oracles.trace_free_sym(np.random.default_rng(7), ESR_SAMPLES))
    violations = int(np.sum(np.sum(lam**2, axis=-1) < 1.5 * lam[:, -1] ** 2))
    ok = record("3", violations == 0, f"{ESR_SAMPLES} trace-free matrices, {violations} violations")
    assert ok


def _covariance_error(shape, stride):
    spec = mf.catalog("t4")
    d = dz.torus_grid(spec, shape)
    g = d.grid()
    u = 1.0 + 0.1 * np.cos(2.0 * math.pi * g[0])
    fast = ym.sigma_transform(d, u).ravel()[::stride]
    chart = mf.conformal_chart(spec.charts[0], lambda x: 1.0 + 0.1 * hd.cos(2.0 * math.pi * x[0]))
    hat = mf.ManifoldSpec("custom-chart", {}, 1, (chart,))
    pts = np.stack([a.ravel() for a in g], axis=-1)[::stride]
    direct = dz.sigma_at_points(hat, 0, pts)
    # sigma of u^2 g changes sign with cos(2 pi x0), so errors are measured against the field's size
    return float(np.max(np.abs(fast - direct)) / np.max(np.abs(direct)))


def test_criterion_4_conformal_covariance():
    reduced = _covariance_error((32, 1, 1, 1), 1)
    spot = _covariance_error((16, 16, 16, 16), 131)
    ok = record("4", reduced < COVARIANCE_RTOL and spot < COVARIANCE_RTOL, f"relative error 1-D grid {reduced:.1e}, 16^4 spot check {spot:.1e}")
    assert ok


def test_criterion_5_equality_case():
    spec = mf.catalog("cp2-fs")
    rep = itg.functional_report(spec, itg.build_quadrature(spec, CHI_M))
    target = 8.0 * math.pi**2
    g1 = abs(rep.lambda_sq_integral - target) / target
    g2 = abs(rep.yamabe_quotient**2 / 36.0 - target) / target
    cond = itg.theorem14_condition(spec, report=rep)
    ok = record("5", g1 < EQUALITY_RTOL and g2 < EQUALITY_RTOL and cond.verdict == "equality",
                f"int lambda_max^2 / 8pi^2 - 1 = {g1:.1e}, Y^2/36 / 8pi^2 - 1 = {g2:.1e}")
    assert ok


@pytest.fixture(scope="module")
def circle_runs():
    out = {}
    for L in CIRCLES:
        d = dz.build_discretization(mf.catalog("s3xs1", L=L))
        t0 = time.perf_counter()
        cont = ym.continuation_to_critical(d)
        out[L] = (cont, time.perf_counter() - t0)
    return out


def test_criterion_6_subcritical_solver(circle_runs):
    d = dz.torus_grid(mf.catalog("t4"), (16, 16, 16, 16))
    t0 = time.perf_counter()
    flat = ym.continuation_to_critical(d)
    flat_t = time.perf_counter() - t0
    u = flat.solves[-1].minimizer.values
    flat_ok = abs(flat.estimate) <= MU_FLAT_TOL and np.ptp(u) <= 1e-8 * np.max(u) and flat.converged
    mus = [circle_runs[L][0].estimate for L in CIRCLES]
    res = max(sv.residual for L in CIRCLES for sv in circle_runs[L][0].solves)
    slowest = max(max(circle_runs[L][1] for L in CIRCLES), flat_t)
    inc = all(b > a for a, b in zip(mus, mus[1:]))
    bound = all(m <= oracles.AUBIN + AUBIN_SLACK for m in mus)
    ok = record("6", flat_ok and inc and bound and res < RESIDUAL_TOL and slowest < SOLVE_SECONDS,
                f"T4 mu={flat.estimate:.1e}; S3xS1 mu={[round(m, 9) for m in mus]} (bound {oracles.AUBIN:.6f}); "
                f"max residual {res:.1e}; slowest run {slowest:.2f}s")
    assert ok


def test_criterion_7_positive_estimates_realized(circle_runs):
    runs = {f"s3xs1 L={L:g}": circle_runs[L][0] for L in CIRCLES}
    runs["s4"] = ym.continuation_to_critical(dz.build_discretization(mf.catalog("s4")))
    positive = {k: c for k, c in runs.items() if c.estimate is not None and c.estimate > 0}
    mins = {k: c.min_sigma_transform for k, c in positive.items()}
    ok = record("7", len(positive) == len(runs) and all(v > 0 for v in mins.values()),
                "min transformed sigma: " + ", ".join(f"{k}={v:.4f}" for k, v in mins.items()))
    assert ok


def test_criterion_8_gluing_suite():
    sphere = gl.round_s4_profile()
    deltas = (0.2, 0.1, 0.05)
    exponent = gl.fit_power(deltas, [gl.flatten_near_point(sphere, dl).defect for dl in deltas])
    piece = gl.make_piece(sphere, 0.5)
    rep = gl.verify_connected_sum(piece, piece, NECKS)
    prods = [r["slice_energy"] * r["l"] for r in rep.rows]
    bounded = all(p <= rep.slice_constant for p in prods) and math.isfinite(rep.slice_constant)
    decay = rep.gap_decreasing and rep.gap_constant > 0 and all(r["gap"] <= rep.gap_constant / r["l"] * (1 + 1e-12) for r in rep.rows)
    ok = record("8", abs(exponent - EXPONENT_TARGET) <= EXPONENT_TOL and bounded and decay,
                f"defect exponent {exponent:.4f}; slice*l max {rep.slice_constant:.3e}; "
                "gaps " + ", ".join(f"{r['gap']:.3e}" for r in rep.rows) + f"; fitted C {rep.gap_constant:.3e}")
    assert ok


RECIPES = [
    {"command": "gbchern", "manifold": "cp2-fs", "resolution": 24},
    {"command": "decompose", "manifold": "s2xs2", "format": "csv"},
    {"command": "yamabe", "manifold": "s3xs1", "config": {"params": {"L": 20.0}}},
    {"command": "glue", "format": "csv", "config": {"l_schedule": [5, 10]}},
    {"command": "catalog"},
]


def test_criterion_9_determinism():
    same = []
    for r in RECIPES:
        a = cli.run(dict(r))[1]
        b = cli.run(dict(r))[1]
        same.append(a == b)
    ok = record("9", all(same), f"{sum(same)}/{len(same)} recipes byte-identical across repeated runs")
    assert ok
