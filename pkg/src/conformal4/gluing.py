"""Connected sums of rotationally symmetric 4-manifolds along a long cylinder.

Everything is one-dimensional.  A piece is an SO(4)-symmetric metric
``dr^2 + phi(r)^2 g_{S^3}`` around a point ``P`` (``r`` = distance to P).
The construction:

1. flatten near ``P``: ``phi'^2 = r^2 + xi(r/delta) (phi^2 - r^2)``, so the
   metric is Euclidean for ``r <= delta/2`` and unchanged for ``r >= delta``;
2. multiply by ``Omega^2`` with ``Omega = r^-(1 - xi(2r/delta))``, which turns
   ``r <= delta/4`` into the half cylinder ``dt^2 + g_{S^3}`` (``t = -log r``)
   and leaves ``r >= delta/2`` alone;
3. cut both half cylinders and join the caps by a neck ``[0, l] x S^3``.

Profiles are written as ``a(x)^2 dx^2 + b(x)^2 g_{S^3}`` on a single
coordinate ``x`` running from the far end of piece 1, through the neck,
to the far end of piece 2.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sint

from . import discretization as dz
from . import hyperdual as hd
from . import yamabe as ym
from .errors import ConsistencyError, PreconditionError

S3_AREA = 2.0 * math.pi**2
CYLINDER_READINGS = {
    "implemented": "Omega^2 g with Omega = r^-(1 - xi(2r/delta)): cylinder for r <= delta/4, unchanged for r >= delta/2",
    "literal": "exp(-xi(2r/delta) log r^2) g: unchanged for r <= delta/4, r^-2 g for r >= delta/2 (cylinder at the wrong end)",
}
GLUE_COLUMNS = ("l", "mu", "slice_energy", "gap", "t_l", "union_quotient", "residual")


# ------------------------------------------------------------------ cutoff


@dataclass(frozen=True)
class CutoffProfile:
    """Quintic smoothstep: 0 for ``y <= lo``, 1 for ``y >= hi``, C^2 in between."""

    lo: float = 0.5
    hi: float = 1.0

    def __call__(self, y):
        z = (y - self.lo) / (self.hi - self.lo)
        zv = hd.value(z)
        poly = z * z * z * (10.0 - 15.0 * z + 6.0 * z * z)
        inner = hd.where(zv <= 0.0, 0.0, poly) if isinstance(z, hd.Jet) else np.where(zv <= 0.0, 0.0, poly)
        return hd.where(zv >= 1.0, 1.0, inner) if isinstance(z, hd.Jet) else np.where(zv >= 1.0, 1.0, inner)

    def derivatives(self, y):
        """(xi, xi', xi'') at points ``y`` from exact jets."""
        j = self(hd.Jet.variables(np.asarray(y, dtype=float)[..., None])[0])
        return j.v, j.d[..., 0], j.h[..., 0, 0]


XI = CutoffProfile()


# ----------------------------------------------------------------- profiles


@dataclass(frozen=True)
class RadialProfile:
    """``dr^2 + phi(r)^2 g_{S^3}`` for ``0 < r < r_max``; ``phi`` accepts jets."""

    phi: object
    r_max: float
    name: str = "profile"
    params: dict = field(default_factory=dict)

    def phi2(self, r):
        p = self.phi(r)
        return p * p


def round_s4_profile(radius=1.0):
    R = float(radius)
    if R <= 0:
        raise PreconditionError("radius must be positive")
    return RadialProfile(lambda r: R * hd.sin(r / R), math.pi * R, "round-sphere-4", {"radius": R})


def flat_profile(r_max=1.0):
    return RadialProfile(lambda r: r, float(r_max), "flat-ball", {"r_max": float(r_max)})


def sectional_curvatures(phi2, r):
    """(K_radial, K_tangential) of ``dr^2 + phi^2 g_{S^3}`` given ``phi^2`` as a jet-capable function."""
    j = hd.sqrt(phi2(hd.Jet.variables(np.asarray(r, dtype=float)[..., None])[0]))
    p, dp, ddp = j.v, j.d[..., 0], j.h[..., 0, 0]
    return -ddp / p, (1.0 - dp * dp) / (p * p)


@dataclass(frozen=True)
class FlattenedProfile:
    base: RadialProfile
    delta: float

    @property
    def r_max(self):
        return self.base.r_max

    def phi2(self, r):
        """Metric coefficient r^2 + xi(r/delta) (phi^2 - r^2)."""
        return r * r + XI(r / self.delta) * (self.base.phi2(r) - r * r)

    def phi(self, r):
        return hd.sqrt(self.phi2(r))


@dataclass
class FlattenReport:
    profile: FlattenedProfile
    delta: float
    defect: float  # sup over 0 < r <= delta of |g' - g_euclid| / g_euclid (tangential coefficient)
    defect_constant: float  # defect / delta^2
    curvature_sup: float  # sup over delta/2 <= r <= delta of max(|K_rad|, |K_tan|)

    def summary(self):
        return {
            "delta": self.delta,
            "defect": self.defect,
            "defect_constant": self.defect_constant,
            "curvature_sup": self.curvature_sup,
        }


def flatten_near_point(profile, delta, samples=4001):
    """Replace the metric by the Euclidean one on ``r <= delta/2``, interpolating with ``xi`` up to ``r = delta``."""
    delta = float(delta)
    if not 0.0 < delta < 0.5 * profile.r_max:
        raise PreconditionError(f"delta = {delta} must lie in (0, {0.5 * profile.r_max}) for {profile.name}")
    flat = FlattenedProfile(profile, delta)
    r = np.linspace(delta / samples, delta, samples)
    defect = float(np.max(np.abs(flat.phi2(r) - r * r) / (r * r)))
    ra = np.linspace(0.5 * delta, delta, samples)
    kr, kt = sectional_curvatures(flat.phi2, ra)
    curv = float(max(np.max(np.abs(kr)), np.max(np.abs(kt))))
    return FlattenReport(flat, delta, defect, defect / delta**2, curv)


def fit_power(xs, ys):
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# ------------------------------------------------------------- cylinder end


@dataclass(frozen=True)
class CappedPiece:
    """A flattened piece conformally opened into a half cylinder, in ``t = -log r``.

    The piece proper is ``t_min <= t <= t_c`` with ``t_c = log(4/delta)``;
    beyond ``t_c`` the metric is exactly ``dt^2 + g_{S^3}``.
    """

    flat: FlattenedProfile

    @property
    def delta(self):
        return self.flat.delta

    @property
    def t_c(self):
        return math.log(4.0 / self.delta)

    @property
    def t_min(self):
        return -math.log(self.flat.r_max)

    def omega(self, r):
        """Conformal factor (square root of the metric multiplier) as a function of r."""
        return hd.exp(-(1.0 - XI(2.0 * r / self.delta)) * hd.log(r))

    def raw_ab(self, t):
        """(a, b) from the closed-form expressions, without snapping the cylinder to 1."""
        r = hd.exp(-t)
        xi = XI(2.0 * r / self.delta)
        return hd.exp(-xi * t), hd.exp((1.0 - xi) * t) * self.flat.phi(r)

    def a(self, t):
        a, _ = self.raw_ab(t)
        return hd.where(hd.value(t) >= self.t_c, 1.0, a) if isinstance(t, hd.Jet) else np.where(np.asarray(t) >= self.t_c, 1.0, a)

    def b(self, t):
        _, b = self.raw_ab(t)
        return hd.where(hd.value(t) >= self.t_c, 1.0, b) if isinstance(t, hd.Jet) else np.where(np.asarray(t) >= self.t_c, 1.0, b)

    def volume(self):
        """Volume of the piece up to the start of its cylinder (adaptive quadrature)."""
        f = lambda t: float(hd.value(self.a(t))) * float(hd.value(self.b(t))) ** 3
        brk = [self.t_c - math.log(2.0), self.t_c - math.log(4.0)]
        v, _ = sint.quad(f, self.t_min, self.t_c, points=brk, epsabs=1e-13, epsrel=1e-12, limit=400)
        return S3_AREA * v


def cylinder_rescale(flat, delta=None):
    """Open the flattened ball into a half cylinder (see :class:`CappedPiece`)."""
    if delta is not None and abs(float(delta) - flat.delta) > 0:
        raise PreconditionError("cylinder radius parameter must match the flattening delta")
    return CappedPiece(flat)


def make_piece(profile, delta):
    return cylinder_rescale(flatten_near_point(profile, delta).profile)


def warped_scalar_curvature(a, b, x):
    """R of ``a^2 dx^2 + b^2 g_{S^3}``: 6[(1 - (Db)^2)/b^2 - D^2 b / b] with D = a^-1 d/dx."""
    X = hd.Jet.variables(np.asarray(x, dtype=float)[..., None])[0]
    A, B = a(X), b(X)
    av, ad = A.v, A.d[..., 0]
    bv, bd, bdd = B.v, B.d[..., 0], B.h[..., 0, 0]
    Db = bd / av
    DDb = (bdd / av - bd * ad / av**2) / av
    return 6.0 * ((1.0 - Db * Db) / bv**2 - DDb / bv)


# ------------------------------------------------------------------- glue


@dataclass(frozen=True)
class GluedManifold:
    piece1: CappedPiece
    piece2: CappedPiece
    l: float

    @property
    def x0(self):
        return self.piece1.t_min

    @property
    def x1(self):  # start of neck
        return self.piece1.t_c

    @property
    def x2(self):  # end of neck
        return self.piece1.t_c + self.l

    @property
    def x3(self):
        return self.x2 + (self.piece2.t_c - self.piece2.t_min)

    def _t2(self, x):
        return self.piece2.t_c + self.x2 - x

    def _piecewise(self, x, f1, f2):
        xv = hd.value(x)
        one = 1.0
        if isinstance(x, hd.Jet):
            left = f1(x)
            right = f2(self._t2(x))
            mid = hd.where(xv <= self.x2, one, right)
            return hd.where(xv <= self.x1, left, mid)
        xv = np.asarray(x, dtype=float)
        return np.where(xv <= self.x1, f1(xv), np.where(xv <= self.x2, one, f2(self._t2(xv))))

    def a(self, x):
        return self._piecewise(x, self.piece1.a, self.piece2.a)

    def b(self, x):
        return self._piecewise(x, self.piece1.b, self.piece2.b)

    def junction_jumps(self):
        """Max jump of (a, b) across both junctions using the unsnapped formulas on the cap side."""
        jumps = []
        for piece in (self.piece1, self.piece2):
            a, b = piece.raw_ab(np.array(piece.t_c))
            jumps.append(max(abs(float(a) - 1.0), abs(float(b) - 1.0)))
        return max(jumps)

    def volume(self):
        return self.piece1.volume() + self.piece2.volume() + S3_AREA * self.l

    def faces(self, h=0.05):
        """Cell faces aligned with both junctions; piece 2's grid mirrors piece 1's construction."""
        n1 = max(8, math.ceil((self.x1 - self.x0) / h))
        nn = max(2, math.ceil(self.l / h))
        n2 = max(8, math.ceil((self.x3 - self.x2) / h))
        f1 = np.linspace(self.x0, self.x1, n1 + 1)
        fn = np.linspace(self.x1, self.x2, nn + 1)
        f2 = self.x2 + (self.piece2.t_c - self.piece2.t_min) - np.linspace(
            self.piece2.t_c - self.piece2.t_min, 0.0, n2 + 1
        )
        return np.concatenate([f1, fn[1:], f2[1:]])

    def discretize(self, h=0.05, sigma_mode="full"):
        faces = self.faces(h)
        return dz.warped_reduced(
            "glued-warped-1d",
            self.a,
            self.b,
            faces,
            sigma_mode=sigma_mode,
            meta={"l": self.l, "neck": [self.x1, self.x2], "h": h},
        )

    def describe(self):
        return {
            "l": self.l,
            "delta": [self.piece1.delta, self.piece2.delta],
            "pieces": [self.piece1.flat.base.name, self.piece2.flat.base.name],
            "x_range": [self.x0, self.x3],
            "neck": [self.x1, self.x2],
            "cylinder_factor_readings": dict(CYLINDER_READINGS),
        }


def glue(piece1, piece2, l):
    """Join two capped pieces by the neck ``[0, l] x S^3``."""
    l = float(l)
    if not l > 0.0 or not math.isfinite(l):
        raise PreconditionError(f"neck length must be positive, got {l}")
    return GluedManifold(piece1, piece2, l)


# ------------------------------------------------------------------ slices


@dataclass
class SliceResult:
    t_l: float  # position in the neck, 0 <= t_l <= l
    energy: float  # 2 pi^2 (u'^2 + u^2) at t_l
    index: int
    mean_energy: float  # (1/l) * trapezoid integral of the slice energy over the neck
    value: float
    slope: float


def best_slice(t, u, du):
    """Neck slice minimizing ``2 pi^2 (u'^2 + u^2)``, with the mean-value bound checked.

    ``t`` are slice positions in the neck (first 0, last l); ``u`` and ``du``
    the function and its t-derivative there.
    """
    t, u, du = (np.asarray(v, dtype=float) for v in (t, u, du))
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise PreconditionError("slice positions must be increasing with at least two entries")
    e = S3_AREA * (du * du + u * u)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    length = t[-1] - t[0]
    mean = math.fsum((w * e).tolist()) / length
    k = int(np.argmin(e))
    if not e[k] <= mean * (1.0 + 1e-15):
        raise ConsistencyError("mean-value slice bound violated")
    return SliceResult(float(t[k] - t[0]), float(e[k]), k, mean, float(u[k]), float(du[k]))


def neck_slices(glued, disc, u):
    """Slice data at the neck faces of a glued discretization: (t, u, u')."""
    u = np.asarray(u, dtype=float)
    vals, slopes = disc.face_values(u)
    xf = disc.faces[1:-1]
    sel = (xf >= glued.x1 - 1e-12) & (xf <= glued.x2 + 1e-12)
    return xf[sel] - glued.x1, vals[sel], slopes[sel], np.nonzero(sel)[0]


# --------------------------------------------------------------- transplant


@dataclass
class Transplant:
    """Test function on the disjoint union of the two completed pieces.

    ``u`` restricted to either side of the cut, continued on each side's
    half cylinder by ``c (1 - tau)`` for ``0 <= tau <= 1`` and by 0 after.
    """

    cut_face: int  # index into the interior faces of the grid
    c: float
    left: np.ndarray  # cell values on piece 1's side
    right: np.ndarray
    tail_gradient: float  # 2 pi^2 c^2 per tail
    tail_mass: float  # 2 pi^2 c^2 / 3 per tail
    tail_lp: float  # 2 pi^2 c^s / (s + 1) per tail
    dropped_flux_energy: float  # 6 * flux * jump^2 across the cut (no longer part of either side)

    def union_energy(self, disc, s):
        E = ym.energy(disc, np.concatenate([self.left, self.right]))
        return E - self.dropped_flux_energy + 2.0 * (6.0 * self.tail_gradient + 6.0 * self.tail_mass)

    def union_lp(self, disc, s):
        return ym.lp_mass(disc, np.concatenate([self.left, self.right]), s) + 2.0 * self.tail_lp


def transplant(disc, u, slice_face, s, c=None):
    """Cut ``u`` at an interior face and attach the linear unit-length tails on both sides."""
    u = np.asarray(u, dtype=float)
    vals, _ = disc.face_values(u)
    j = int(slice_face)
    c = float(vals[j]) if c is None else float(c)
    left, right = u[: j + 1].copy(), u[j + 1 :].copy()
    dropped = 6.0 * float(disc.flux[j]) * float(u[j + 1] - u[j]) ** 2
    return Transplant(
        cut_face=j,
        c=c,
        left=left,
        right=right,
        tail_gradient=S3_AREA * c * c,
        tail_mass=S3_AREA * c * c / 3.0,
        tail_lp=S3_AREA * abs(c) ** s / (s + 1.0),
        dropped_flux_energy=dropped,
    )


def tail_energies_by_quadrature(c, n=64):
    """Gradient and mass energy of ``c (1 - tau)`` on ``[0, 1] x S^3`` by Gauss-Legendre (oracle)."""
    x, w = np.polynomial.legendre.leggauss(n)
    tau, w = 0.5 * (x + 1.0), 0.5 * w
    return S3_AREA * float(np.sum(w * c * c)), S3_AREA * float(np.sum(w * (c * (1.0 - tau)) ** 2))


def union_gap(disc, u, tp, s):
    """F_s(U_l on the union) - F_s(u on M_l), evaluated without cancellation."""
    E = ym.energy(disc, u)
    D = ym.lp_mass(disc, u, s)
    dE = -tp.dropped_flux_energy + 2.0 * (6.0 * tp.tail_gradient + 6.0 * tp.tail_mass)
    dD = 2.0 * tp.tail_lp
    mu = E / D ** (2.0 / s)
    return mu * math.expm1(math.log1p(dE / E) - (2.0 / s) * math.log1p(dD / D)), (E + dE) / (D + dD) ** (2.0 / s)


# --------------------------------------------------------- the experiment


@dataclass
class ConnectedSumReport:
    rows: list
    gap_constant: float  # max over l of gap * l
    slice_constant: float  # max over l of slice energy * l
    gap_decreasing: bool
    gap_positive: bool
    norm_inflation: list  # int U^s - 1 per l
    norm_constant: float  # max over l of (int U^s - 1) * l^2
    metadata: dict

    def summary(self):
        return {
            "rows": self.rows,
            "gap_constant": self.gap_constant,
            "slice_constant": self.slice_constant,
            "gap_decreasing": self.gap_decreasing,
            "gap_positive": self.gap_positive,
            "norm_inflation": self.norm_inflation,
            "norm_constant": self.norm_constant,
            "metadata": self.metadata,
        }

    def csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(GLUE_COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(r[k])) for k in GLUE_COLUMNS])
        return buf.getvalue()


def neck_decay_init(glued, disc, symmetric=False):
    """Starting guess decaying like ``e^-t`` into the neck: out of cap 1, or out of both caps."""
    x = disc.centers
    d1 = np.clip(x - glued.x1, 0.0, None)
    if not symmetric:
        return np.exp(-d1)
    d2 = np.clip(glued.x2 - x, 0.0, None)
    return np.exp(-d1) + np.exp(-d2)


def solve_on_glued(glued, s=3.9, tol=1e-9, h=0.05, symmetric=False, max_iter=4000):
    disc = glued.discretize(h)
    init = neck_decay_init(glued, disc, symmetric)
    sv = ym.minimize_subcritical(disc, s, init=init, tol=tol, max_iter=max_iter, symmetric=symmetric)
    return disc, sv


def verify_connected_sum(piece1, piece2, l_schedule=(5.0, 10.0, 20.0, 40.0), epsilon=1e-9, s=3.9, h=0.05, symmetric=False):
    """For each neck length: minimize on M_l, cut at the best slice, transplant, report the gap."""
    rows, infl = [], []
    for l in l_schedule:
        g = glue(piece1, piece2, l)
        disc, sv = solve_on_glued(g, s=s, tol=epsilon, h=h, symmetric=symmetric)
        u = sv.minimizer.values
        t, vals, slopes, faces = neck_slices(g, disc, u)
        sl = best_slice(t, vals, slopes)
        tp = transplant(disc, u, faces[sl.index], s)
        gap, quotient = union_gap(disc, u, tp, s)
        lp = tp.union_lp(disc, s)
        infl.append(lp - 1.0)
        rows.append(
            {
                "l": float(l),
                "mu": sv.mu_s,
                "slice_energy": sl.energy,
                "mean_slice_energy": sl.mean_energy,
                "gap": gap,
                "t_l": sl.t_l,
                "union_quotient": quotient,
                "union_lp": lp,
                "residual": sv.residual,
                "converged": sv.converged,
                "cells": disc.size,
            }
        )
    gaps = [r["gap"] for r in rows]
    return ConnectedSumReport(
        rows=rows,
        gap_constant=max(gp * r["l"] for gp, r in zip(gaps, rows)),
        slice_constant=max(r["slice_energy"] * r["l"] for r in rows),
        gap_decreasing=all(b < a for a, b in zip(gaps, gaps[1:])),
        gap_positive=all(gp > 0 for gp in gaps),
        norm_inflation=infl,
        norm_constant=max(x * r["l"] ** 2 for x, r in zip(infl, rows)),
        metadata={
            "s": s,
            "epsilon": epsilon,
            "h": h,
            "symmetric": symmetric,
            "delta": [piece1.delta, piece2.delta],
            "cylinder_factor_readings": dict(CYLINDER_READINGS),
            "slice_rule": "global minimizer over neck faces",
        },
    )
