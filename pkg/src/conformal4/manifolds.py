"""Catalog of explicit 4-manifold metrics and custom-chart ingestion.

Every metric is presented on coordinate boxes.  A chart's metric
function takes the four coordinates (floats, arrays or jets) and returns a
4x4 nested list of coefficients; zero entries may be plain ``0``.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import hyperdual as hd
from .errors import ParseError, PreconditionError
from .expr import Expression

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ChartDomain:
    bounds: tuple  # four (lo, hi) pairs
    metric: object  # callable(list of 4 coordinates) -> 4x4 nested list
    periodic: tuple = (False, False, False, False)
    # axes the coefficients do not depend on; quadrature collapses them
    cyclic: tuple = (False, False, False, False)
    weight: object = None  # partition-of-unity factor; None means 1
    name: str = ""

    @property
    def lo(self):
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def hi(self):
        return np.array([b[1] for b in self.bounds], dtype=float)

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, x):
        """Mask of points inside the box (open on non-periodic axes)."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.lo, self.hi
        per = np.array(self.periodic)
        inside_open = (x > lo) & (x < hi)
        inside_closed = (x >= lo) & (x <= hi)
        return np.all(np.where(per, inside_closed, inside_open), axis=-1)

    def sample(self, n, rng, margin=1e-3):
        """Uniform random points in the box, kept ``margin`` (relative) away from its faces."""
        lo, hi = self.lo, self.hi
        pad = margin * (hi - lo)
        return rng.uniform(lo + pad, hi - pad, size=(n, 4))

    def metric_values(self, x):
        """Plain coefficient matrices at points ``x`` (shape ``batch + (4,)``)."""
        x = np.asarray(x, dtype=float)
        coords = [x[..., k] for k in range(4)]
        entries = self.metric(coords)
        g = np.zeros(x.shape[:-1] + (4, 4))
        for i in range(4):
            for j in range(4):
                g[..., i, j] = hd.value(entries[i][j])
        return g


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str
    params: dict = field(default_factory=dict)
    orientation: int = 1
    charts: tuple = ()
    quadrature_chart: int = 0
    # chart used for pointwise sampling (curvature, pic)
    pointwise_chart: int = 0
    label: str = ""

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise PreconditionError(f"orientation must be +1 or -1, got {self.orientation!r}")
        if not self.charts:
            raise PreconditionError("a manifold needs at least one chart")

    def reversed(self):
        return replace(self, orientation=-self.orientation)

    def with_orientation(self, orientation):
        return replace(self, orientation=int(orientation))

    @property
    def name(self):
        return self.label or self.kind

    def describe(self):
        return {
            "kind": self.kind,
            "label": self.name,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "orientation": self.orientation,
        }


def _diag(*entries):
    g = [[0, 0, 0, 0] for _ in range(4)]
    for i, e in enumerate(entries):
        g[i][i] = e
    return g


# ---------------------------------------------------------------- catalog


def round_sphere_4(r=1.0, orientation=1):
    """Round S^4 of radius ``r`` (scalar curvature 12/r^2).

    Chart 0 is stereographic.  Chart 1 writes the sphere as a suspension of
    a Hopf-coordinate S^3, ``(psi, eta, xi1, xi2)``::

        g = r^2 (dpsi^2 + sin^2 psi (deta^2 + sin^2 eta dxi1^2 + cos^2 eta dxi2^2))

    and is the one used for quadrature.
    """
    r = float(r)
    if r <= 0:
        raise PreconditionError("radius must be positive")

    def stereo(x):
        rho2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]
        c = 4.0 * r * r / ((1.0 + rho2) * (1.0 + rho2))
        return _diag(c, c, c, c)

    def polar(x):
        s = hd.sin(x[0])
        se, ce = hd.sin(x[1]), hd.cos(x[1])
        a = r * r * s * s
        return _diag(r * r, a, a * se * se, a * ce * ce)

    charts = (
        ChartDomain(((-2.0, 2.0),) * 4, stereo, name="stereographic"),
        ChartDomain(
            ((0.0, math.pi), (0.0, 0.5 * math.pi), (0.0, TWO_PI), (0.0, TWO_PI)),
            polar,
            periodic=(False, False, True, True),
            cyclic=(False, False, True, True),
            name="suspended-hopf",
        ),
    )
    return ManifoldSpec(
        "round-sphere-4", {"r": r}, orientation, charts, quadrature_chart=1, pointwise_chart=0, label="S4"
    )


def flat_torus_4(periods=(1.0, 1.0, 1.0, 1.0), orientation=1):
    periods = tuple(float(p) for p in periods)
    if len(periods) != 4 or min(periods) <= 0:
        raise PreconditionError("flat torus needs four positive periods")

    def flat(x):
        return _diag(1.0, 1.0, 1.0, 1.0)

    chart = ChartDomain(
        tuple((0.0, p) for p in periods), flat, periodic=(True,) * 4, cyclic=(True,) * 4, name="box"
    )
    return ManifoldSpec("flat-torus-4", {"periods": list(periods)}, orientation, (chart,), label="T4")


def product_s3xs1(r=1.0, L=TWO_PI, orientation=1):
    """Round S^3(r) x circle of length ``L`` in Hopf coordinates ``(eta, xi1, xi2, theta)``."""
    r, L = float(r), float(L)
    if r <= 0 or L <= 0:
        raise PreconditionError("radius and circle length must be positive")

    def hopf(x):
        s, c = hd.sin(x[0]), hd.cos(x[0])
        return _diag(r * r, r * r * s * s, r * r * c * c, 1.0)

    chart = ChartDomain(
        ((0.0, 0.5 * math.pi), (0.0, TWO_PI), (0.0, TWO_PI), (0.0, L)),
        hopf,
        periodic=(False, True, True, True),
        cyclic=(False, True, True, True),
        name="hopf",
    )
    return ManifoldSpec("product-S3xS1", {"r": r, "L": L}, orientation, (chart,), label="S3xS1")


def fubini_study_cp2(scale=1.0, orientation=1):
    """Fubini-Study metric on CP^2, holomorphic sectional curvature 4/scale^2 (R = 24/scale^2).

    Cohomogeneity-one chart ``(r, theta, psi, phi)``::

        g = dr^2 + sin^2 r / 4 (dtheta^2 + sin^2 theta dphi^2)
                 + sin^2 r cos^2 r / 4 (dpsi + cos theta dphi)^2

    with ``r`` in (0, pi/2), ``theta`` in (0, pi), ``psi`` in [0, 4pi), ``phi`` in [0, 2pi).
    This coordinate order is the complex orientation, in which the
    self-dual Weyl spectrum is (R/6, -R/12, -R/12).
    """
    c2 = float(scale) ** 2
    if c2 <= 0:
        raise PreconditionError("scale must be positive")

    def fs(x):
        sr, cr = hd.sin(x[0]), hd.cos(x[0])
        st, ct = hd.sin(x[1]), hd.cos(x[1])
        a = 0.25 * c2 * sr * sr
        b = a * cr * cr
        g = _diag(c2, a, b, a * st * st + b * ct * ct)
        g[2][3] = g[3][2] = b * ct
        return g

    chart = ChartDomain(
        ((0.0, 0.5 * math.pi), (0.0, math.pi), (0.0, 2.0 * TWO_PI), (0.0, TWO_PI)),
        fs,
        periodic=(False, False, True, True),
        cyclic=(False, False, True, True),
        name="cohomogeneity-one",
    )
    label = "CP2" if orientation == 1 else "CP2bar"
    return ManifoldSpec("fubini-study-CP2", {"scale": float(scale)}, orientation, (chart,), label=label)


def product_s2xs2(r1=1.0, r2=1.0, orientation=1):
    r1, r2 = float(r1), float(r2)
    if r1 <= 0 or r2 <= 0:
        raise PreconditionError("radii must be positive")

    def prod(x):
        s1, s2 = hd.sin(x[0]), hd.sin(x[2])
        return _diag(r1 * r1, r1 * r1 * s1 * s1, r2 * r2, r2 * r2 * s2 * s2)

    chart = ChartDomain(
        ((0.0, math.pi), (0.0, TWO_PI), (0.0, math.pi), (0.0, TWO_PI)),
        prod,
        periodic=(False, True, False, True),
        cyclic=(False, True, False, True),
        name="spherical",
    )
    return ManifoldSpec("product-S2xS2", {"r1": r1, "r2": r2}, orientation, (chart,), label="S2xS2")


CATALOG = {
    "round-sphere-4": round_sphere_4,
    "flat-torus-4": flat_torus_4,
    "product-S3xS1": product_s3xs1,
    "fubini-study-CP2": fubini_study_cp2,
    "product-S2xS2": product_s2xs2,
}

ALIASES = {
    "s4": ("round-sphere-4", {}),
    "t4": ("flat-torus-4", {}),
    "s3xs1": ("product-S3xS1", {}),
    "cp2": ("fubini-study-CP2", {}),
    "cp2-fs": ("fubini-study-CP2", {}),
    "cp2bar": ("fubini-study-CP2", {"orientation": -1}),
    "cp2-fs-reversed": ("fubini-study-CP2", {"orientation": -1}),
    "s2xs2": ("product-S2xS2", {}),
}


def catalog(name, **params):
    """Look up a catalog manifold by kind or short alias."""
    key = name if name in CATALOG else name.lower()
    if key in ALIASES:
        kind, preset = ALIASES[key]
        params = {**preset, **params}
    elif key in CATALOG:
        kind = key
    else:
        known = sorted(set(CATALOG) | set(ALIASES))
        raise PreconditionError(f"unknown manifold {name!r}; known: {', '.join(known)}")
    return CATALOG[kind](**params)


# ---------------------------------------------------------- custom charts


def _parse_metric_block(block, params, where):
    if not isinstance(block, list) or len(block) != 4 or any(not isinstance(r, list) or len(r) != 4 for r in block):
        raise ParseError(f"{where}: metric must be a 4x4 array of expressions")
    exprs = [[None] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(4):
            src = block[i][j]
            if src is None:
                src = "0"
            if isinstance(src, (int, float)) and not isinstance(src, bool):
                src = repr(float(src))
            if not isinstance(src, str):
                raise ParseError(f"{where}: metric[{i}][{j}] must be a string or number")
            try:
                exprs[i][j] = Expression(src, params)
            except ParseError as exc:
                raise ParseError(
                    f"{where}: metric[{i}][{j}]: {exc}", position=exc.position, source=src
                ) from None
    return exprs


def _expr_chart(exprs, bounds, periodic, name):
    def metric(x):
        return [[exprs[i][j](x) for j in range(4)] for i in range(4)]

    used = set()
    for row in exprs:
        for e in row:
            used |= e.coordinates
    cyclic = tuple(k not in used for k in range(4))
    return ChartDomain(tuple(bounds), metric, periodic=tuple(periodic), cyclic=cyclic, name=name)


def spec_from_dict(doc):
    """Build a custom-chart :class:`ManifoldSpec` from a parsed JSON document.

    Schema::

        {"kind": "custom-chart", "orientation": 1, "params": {"a": 0.1},
         "charts": [{"name": "...", "bounds": [[lo, hi] x4],
                     "periodic": [bool x4], "metric": [[expr x4] x4]}]}

    A catalog reference ``{"kind": "product-S3xS1", "params": {...}}`` is
    also accepted.
    """
    if not isinstance(doc, dict):
        raise ParseError("manifold document must be a JSON object")
    kind = doc.get("kind", "custom-chart")
    params = doc.get("params", {}) or {}
    orientation = doc.get("orientation", 1)
    if orientation in ("+", "-"):
        orientation = 1 if orientation == "+" else -1
    if kind != "custom-chart":
        try:
            return catalog(kind, orientation=int(orientation), **params)
        except TypeError as exc:
            raise ParseError(f"bad parameters for {kind}: {exc}") from None
    charts_doc = doc.get("charts")
    if not isinstance(charts_doc, list) or not charts_doc:
        raise ParseError("custom-chart needs a non-empty 'charts' list")
    charts = []
    for idx, c in enumerate(charts_doc):
        where = f"charts[{idx}]"
        try:
            bounds = [(float(lo), float(hi)) for lo, hi in c["bounds"]]
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"{where}: 'bounds' must be four [lo, hi] pairs") from None
        if len(bounds) != 4 or any(hi <= lo for lo, hi in bounds):
            raise ParseError(f"{where}: 'bounds' must be four non-empty intervals")
        periodic = c.get("periodic", [False] * 4)
        if len(periodic) != 4:
            raise ParseError(f"{where}: 'periodic' must have four entries")
        exprs = _parse_metric_block(c.get("metric"), params, where)
        charts.append(_expr_chart(exprs, bounds, [bool(p) for p in periodic], c.get("name", f"chart{idx}")))
    return ManifoldSpec(
        "custom-chart",
        {k: params[k] for k in sorted(params)},
        int(orientation),
        tuple(charts),
        quadrature_chart=int(doc.get("quadrature_chart", 0)),
        pointwise_chart=int(doc.get("pointwise_chart", 0)),
        label=doc.get("label", "custom"),
    )


def load_spec(path):
    """Read a manifold JSON file (see :func:`spec_from_dict`)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read manifold file {str(path)!r}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path.name}: {exc.msg}", position=exc.pos) from None
    return spec_from_dict(doc)


def resolve(ref, **params):
    """Catalog name/alias or path to a JSON manifold document."""
    if isinstance(ref, ManifoldSpec):
        return ref
    key = str(ref)
    if key in CATALOG or key.lower() in ALIASES:
        return catalog(key, **params)
    if key.endswith(".json") or "/" in key or Path(key).exists():
        return load_spec(key)
    return catalog(key, **params)


def conformal_chart(chart, factor, name=None):
    """Chart for ``factor(x)**2 * g`` where ``factor`` is jet-capable and positive."""

    def metric(x):
        u = factor(x)
        u2 = u * u
        base = chart.metric(x)
        return [[u2 * base[i][j] for j in range(4)] for i in range(4)]

    return replace(chart, metric=metric, cyclic=(False,) * 4, name=name or f"conformal({chart.name})")


def warped_chart(a, b, x_bounds, name="warped"):
    """Chart ``(x, eta, xi1, xi2)`` for ``a(x)^2 dx^2 + b(x)^2 g_{S^3}`` with Hopf coordinates on S^3.

    ``a`` and ``b`` must accept jets.
    """

    def metric(x):
        aa, bb = a(x[0]), b(x[0])
        b2 = bb * bb
        s, c = hd.sin(x[1]), hd.cos(x[1])
        return _diag(aa * aa, b2, b2 * s * s, b2 * c * c)

    return ChartDomain(
        (tuple(x_bounds), (0.0, 0.5 * math.pi), (0.0, TWO_PI), (0.0, TWO_PI)),
        metric,
        periodic=(False, False, True, True),
        cyclic=(False, False, True, True),
        name=name,
    )
