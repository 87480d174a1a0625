"""Quadrature over catalog charts and the integral invariants built on it."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import decomposition as dec
from . import geometry as geo
from .errors import PreconditionError

# chart faces are pulled in by this much; every catalog integrand is bounded there
EDGE_SHRINK = 1e-6


@dataclass(frozen=True)
class QuadratureRule:
    chart: int
    nodes: np.ndarray  # (N, 4)
    weights: np.ndarray  # (N,), include sqrt(det g) and the partition factor
    m: int
    collapsed: tuple  # axes integrated exactly because the metric ignores them

    @property
    def node_count(self):
        return int(self.weights.shape[0])


def _axis_rule(lo, hi, m, periodic, collapsed):
    if collapsed:
        return np.array([0.5 * (lo + hi)]), np.array([hi - lo])
    if periodic:
        h = (hi - lo) / m
        return lo + h * np.arange(m), np.full(m, h)
    a, b = lo + EDGE_SHRINK, hi - EDGE_SHRINK
    t, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


def build_quadrature(spec, m, chart=None, collapse_cyclic=True):
    """Tensor-product rule on a chart box: Gauss-Legendre on intervals, trapezoid on periodic axes.

    Axes the metric does not depend on are integrated with a single node
    (exact, since every integrand built from the metric is constant along them).
    """
    if m < 4:
        raise PreconditionError("quadrature resolution must be at least 4")
    chart = spec.quadrature_chart if chart is None else chart
    dom = spec.charts[chart]
    collapsed = tuple(bool(c and collapse_cyclic) for c in dom.cyclic)
    axes = [
        _axis_rule(lo, hi, m, per, col)
        for (lo, hi), per, col in zip(dom.bounds, dom.periodic, collapsed)
    ]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    g = dom.metric_values(nodes)
    geo.check_metric(g, where=f"quadrature chart {dom.name}")
    w = w * np.sqrt(np.linalg.det(g))
    if dom.weight is not None:
        w = w * np.asarray(dom.weight(nodes), dtype=float)
    return QuadratureRule(chart, nodes, w, int(m), collapsed)


def pointwise_fields(spec, rule, sigma_mode="full", chunk=20000):
    """Curvature integrands at every node of ``rule`` (dict of 1-D arrays)."""
    names = ("R", "wplus2", "wminus2", "ric0_2", "lmax_plus", "lmax_minus", "f", "pic_margin")
    out = {k: [] for k in names}
    n = rule.node_count
    for start in range(0, n, chunk):
        x = rule.nodes[start : start + chunk]
        try:
            curv = geo.curvature(geo.evaluate_jet(spec, rule.chart, x), orientation=spec.orientation)
            b = dec.decompose(curv, sym_tol=None)
        except Exception as exc:
            exc.args = (f"{exc} [nodes {start}..{start + len(x) - 1}, first {x[0].tolist()}]",)
            raise
        out["R"].append(b.R)
        out["wplus2"].append(b.wplus_norm2)
        out["wminus2"].append(b.wminus_norm2)
        out["ric0_2"].append(curv.ric0_norm2)
        out["lmax_plus"].append(b.lambda_max_plus)
        out["lmax_minus"].append(b.lambda_max_minus)
        out["f"].append(b.R - b.modified_scalar(sigma_mode))
        out["pic_margin"].append(b.pic_margin)
    return {k: np.concatenate(v) for k, v in out.items()}


def integrate(rule, values):
    """Deterministic, correctly rounded sum of weights * values."""
    return math.fsum((rule.weights * np.asarray(values, dtype=float)).tolist())


@dataclass
class FunctionalReport:
    volume: float
    total_scalar: float
    yamabe_quotient: float
    f_total: float
    generalized_quotient: float
    gb_pieces: tuple  # (int |W+|^2, int |W-|^2, int R^2/24, int |Ric0|^2/2)
    chi_estimate: float
    lambda_sq_integral: float
    sigma_mode: str = "full"
    einstein: bool = False
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["gb_pieces"] = list(self.gb_pieces)
        return d


def einstein_probe(spec, chart, n=64, seed=0, rtol=1e-8):
    """Is Ric trace-free part zero and R constant?  Checked at seeded points well inside the chart.

    Quadrature nodes crowd the chart faces, where coordinate formulas
    cancel badly, so they are not used for this pointwise test.
    """
    dom = spec.charts[chart]
    x = dom.sample(n, np.random.default_rng(seed), margin=0.05)
    c = geo.curvature(geo.evaluate_jet(spec, chart, x), orientation=spec.orientation)
    scale = max(1.0, float(np.max(np.abs(c.R))))
    ric0 = float(np.sqrt(np.max(np.abs(c.ric0_norm2))))
    spread = float(np.ptp(c.R))
    ok = ric0 <= rtol * scale and spread <= rtol * scale
    return bool(ok), {"points": n, "seed": seed, "ric0_max": ric0, "scalar_spread": spread}


def functional_report(spec, rule, sigma_mode="full"):
    """Volume, Yamabe-type quotients and the Gauss-Bonnet-Chern pieces in one sweep."""
    p = pointwise_fields(spec, rule, sigma_mode)
    vol = integrate(rule, np.ones(rule.node_count))
    tot_R = integrate(rule, p["R"])
    f_tot = integrate(rule, p["f"])
    pieces = (
        integrate(rule, p["wplus2"]),
        integrate(rule, p["wminus2"]),
        integrate(rule, p["R"] ** 2 / 24.0),
        integrate(rule, p["ric0_2"] / 2.0),
    )
    chi = (pieces[0] + pieces[1] + pieces[2] - pieces[3]) / (8.0 * math.pi**2)
    lam = integrate(rule, np.maximum(p["lmax_plus"], p["lmax_minus"]) ** 2)
    R = p["R"]
    einstein, probe = einstein_probe(spec, rule.chart)
    root_v = math.sqrt(vol)
    return FunctionalReport(
        volume=vol,
        total_scalar=tot_R,
        yamabe_quotient=tot_R / root_v,
        f_total=f_tot,
        generalized_quotient=(tot_R - f_tot) / root_v,
        gb_pieces=pieces,
        chi_estimate=chi,
        lambda_sq_integral=lam,
        sigma_mode=sigma_mode,
        einstein=bool(einstein),
        metadata={
            "m": rule.m,
            "node_count": rule.node_count,
            "chart": spec.charts[rule.chart].name,
            "collapsed_axes": [i for i, c in enumerate(rule.collapsed) if c],
            "sigma_min": float(np.min(R - p["f"])),
            "sigma_max": float(np.max(R - p["f"])),
            "pic_margin_min": float(np.min(p["pic_margin"])),
            "einstein_probe": probe,
        },
    )


def report_with_convergence(spec, m, sigma_mode="full"):
    """:func:`functional_report` at ``m`` plus the change against ``m // 2`` as a convergence estimate."""
    rep = functional_report(spec, build_quadrature(spec, m), sigma_mode)
    coarse = functional_report(spec, build_quadrature(spec, max(4, m // 2)), sigma_mode)
    rep.metadata["convergence"] = {
        "coarse_m": max(4, m // 2),
        "chi_change": abs(rep.chi_estimate - coarse.chi_estimate),
        "volume_change": abs(rep.volume - coarse.volume),
    }
    return rep


@dataclass(frozen=True)
class Theorem14Condition:
    lhs: float
    rhs: float
    Y: float
    Y_source: str
    verdict: str  # strict | equality | violated
    degenerate: bool  # Y <= 0, so the pinching statement is vacuous

    def to_dict(self):
        return asdict(self)


def theorem14_condition(spec, rule=None, Y=None, report=None, rtol=1e-6):
    """Compare int max(lambda_max(W+), lambda_max(W-))^2 with Y^2/36.

    Without an explicit ``Y`` the metric's own Yamabe quotient is used, which
    is only legitimate for Einstein metrics (they are Yamabe minimizers).
    """
    if report is None:
        if rule is None:
            raise PreconditionError("need a quadrature rule or a precomputed report")
        report = functional_report(spec, rule)
    if Y is None:
        if not report.einstein:
            raise PreconditionError(
                "metric is not Einstein: supply a Yamabe estimate (e.g. from the subcritical solver)"
            )
        Y, source = report.yamabe_quotient, "einstein-metric quotient"
    else:
        Y, source = float(Y), "supplied"
    lhs = report.lambda_sq_integral
    rhs = Y * Y / 36.0
    scale = max(abs(lhs), abs(rhs))
    if abs(lhs - rhs) <= rtol * scale or scale == 0.0:
        verdict = "equality"
    elif lhs < rhs:
        verdict = "strict"
    else:
        verdict = "violated"
    return Theorem14Condition(lhs, rhs, Y, source, verdict, bool(Y <= 0.0))
