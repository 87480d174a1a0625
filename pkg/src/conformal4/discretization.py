"""Grids on which conformal factors live.

Two families are provided:

* :class:`PeriodicSpectral` -- Fourier differentiation on a periodic box,
  used for the flat 4-torus (full 4-D grid, size-1 axes allowed).
* :class:`RadialFiniteVolume` -- cell-centred finite volumes for functions
  of ``x`` alone on a warped product ``a(x)^2 dx^2 + b(x)^2 g_{S^3}``.
  Used for the polar reduction of the round S^4, for glued manifolds and
  (periodic variant) for circle-symmetric functions on S^3(r) x S^1_L.

Every discretization exposes the same small interface: node ``measure``,
node values of the modified scalar curvature ``sigma``, ``laplacian``,
``dirichlet`` (the discrete ``int |grad u|^2``), ``solve_shifted`` for the
preconditioner ``-6 Laplacian + c`` and ``laplacian_matrix`` (a sparse
matrix for local stencils, ``None`` for spectral grids).
"""

import math

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import decomposition as dec
from . import geometry as geo
from . import hyperdual as hd
from . import manifolds as mf
from .errors import PreconditionError

S3_AREA = 2.0 * math.pi**2


def sigma_at_points(spec, chart, points, sigma_mode="full"):
    """Modified scalar curvature R - f(W) at chart points via the curvature pipeline."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], 20000):
        x = points[start : start + 20000]
        curv = geo.curvature(geo.evaluate_jet(spec, chart, x), orientation=spec.orientation)
        out[start : start + len(x)] = dec.decompose(curv, sym_tol=None).modified_scalar(sigma_mode)
    return out


class Discretization:
    kind = "abstract"
    sigma_mode = "full"

    @property
    def size(self):
        return int(self.measure.size)

    @property
    def volume(self):
        return math.fsum(self.measure.ravel().tolist())

    def integrate(self, values):
        values = np.broadcast_to(np.asarray(values, dtype=float), self.measure.shape)
        return math.fsum((self.measure * values).ravel().tolist())

    def inner(self, u, v):
        return self.integrate(np.asarray(u) * np.asarray(v))

    def constant(self, value=1.0):
        return np.full(self.measure.shape, float(value))

    def mirror(self, u):
        raise PreconditionError(f"{self.kind} grids have no mirror symmetry")

    def describe(self):
        return {"kind": self.kind, "shape": list(self.measure.shape), "volume": self.volume}


class PeriodicSpectral(Discretization):
    """Uniform periodic grid with spectral Laplacian.

    ``lengths`` are the periods of the grid axes; ``density`` multiplies the
    flat cell volume (e.g. ``2 pi^2 r^3`` for the S^3 factor).
    """

    def __init__(self, kind, lengths, shape, sigma, density=1.0, origin=None, sigma_mode="full"):
        self.kind = kind
        self.lengths = tuple(float(x) for x in lengths)
        self.shape = tuple(int(n) for n in shape)
        if len(self.lengths) != len(self.shape) or any(n < 1 for n in self.shape):
            raise PreconditionError("grid lengths and shape must match and be positive")
        origin = np.zeros(len(self.shape)) if origin is None else np.asarray(origin, dtype=float)
        self.axes = [origin[k] + self.lengths[k] / n * np.arange(n) for k, n in enumerate(self.shape)]
        cell = float(np.prod([Lk / n for Lk, n in zip(self.lengths, self.shape)]))
        self.measure = np.full(self.shape, cell * float(density))
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), self.shape).copy()
        self.sigma_mode = sigma_mode
        k2 = np.zeros(self.shape[:-1] + (self.shape[-1] // 2 + 1,))
        for ax, (Lk, n) in enumerate(zip(self.lengths, self.shape)):
            freq = np.fft.rfftfreq(n, Lk / n) if ax == len(self.shape) - 1 else np.fft.fftfreq(n, Lk / n)
            shp = [1] * len(self.shape)
            shp[ax] = freq.size
            k2 = k2 + (2.0 * math.pi * freq.reshape(shp)) ** 2
        self._k2 = k2

    def grid(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def laplacian(self, u):
        u = np.asarray(u, dtype=float).reshape(self.shape)
        return np.fft.irfftn(-self._k2 * np.fft.rfftn(u), s=self.shape, axes=range(4))

    def dirichlet(self, u):
        return -self.inner(u, self.laplacian(u))

    def solve_shifted(self, r, c):
        r = np.asarray(r, dtype=float).reshape(self.shape)
        return np.fft.irfftn(np.fft.rfftn(r) / (6.0 * self._k2 + c), s=self.shape, axes=range(4))

    def laplacian_matrix(self):
        # dense and global: no use for the local-ratio Newton polish
        return None

    def mirror(self, u):
        u = np.asarray(u).reshape(self.shape)
        idx = [(-np.arange(n)) % n for n in self.shape]
        return u[np.ix_(*idx)]

    def describe(self):
        d = super().describe()
        d["lengths"] = list(self.lengths)
        return d


class RadialFiniteVolume(Discretization):
    """Cell-centred finite volumes for functions of ``x`` on ``a^2 dx^2 + b^2 g_{S^3}``.

    ``faces`` are the cell boundaries; ``a`` and ``b`` are jet-capable
    profile functions.  The stiffness uses the face coefficient
    ``2 pi^2 b^3 / a`` and the mass uses a 4-point Gauss rule of
    ``2 pi^2 a b^3`` per cell, so the operator is self-adjoint for the node
    measure and annihilates constants exactly.  With ``periodic=True`` the
    last cell couples to the first through the face at ``faces[-1]``.
    The three-point stencil only mixes neighbouring cells, so values many
    orders of magnitude below the maximum keep their relative accuracy.
    """

    def __init__(self, kind, faces, a, b, sigma, sigma_mode="full", meta=None, periodic=False):
        faces = np.asarray(faces, dtype=float)
        if faces.ndim != 1 or faces.size < 3 or np.any(np.diff(faces) <= 0):
            raise PreconditionError("faces must be a strictly increasing array with at least 3 entries")
        self.kind = kind
        self.periodic = bool(periodic)
        self.faces = faces
        self.centers = 0.5 * (faces[1:] + faces[:-1])
        self.shape = (self.centers.size,)
        self.a, self.b = a, b
        t, w = np.polynomial.legendre.leggauss(4)
        half = 0.5 * np.diff(faces)
        xq = self.centers[:, None] + half[:, None] * t[None, :]
        aq, bq = hd.value(a(xq)), hd.value(b(xq))
        self.measure = S3_AREA * np.sum(w[None, :] * half[:, None] * aq * bq**3, axis=1)
        xf, gaps = faces[1:-1], np.diff(self.centers)
        if self.periodic:
            xf = np.append(xf, faces[-1])
            gaps = np.append(gaps, (faces[-1] - self.centers[-1]) + (self.centers[0] - faces[0]))
        fa = np.broadcast_to(hd.value(a(xf)), xf.shape)
        fb = np.broadcast_to(hd.value(b(xf)), xf.shape)
        # flux[k] couples cell k to cell k+1 (mod n when periodic)
        self.flux = S3_AREA * fb**3 / fa / gaps
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), self.shape).copy()
        self.sigma_mode = sigma_mode
        self.meta = dict(meta or {})
        n = self.size
        lo = np.arange(self.flux.size)
        hi = (lo + 1) % n
        rows = np.concatenate([lo, hi, lo, hi])
        cols = np.concatenate([lo, hi, hi, lo])
        vals = np.concatenate([self.flux, self.flux, -self.flux, -self.flux])
        self.stiffness = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self._lo, self._hi = lo, hi
        self._factor = {}

    def _diff(self, u):
        return u[self._hi] - u[self._lo]

    def stiffness_apply(self, u):
        u = np.asarray(u, dtype=float)
        q = self.flux * self._diff(u)
        out = np.zeros_like(u)
        np.add.at(out, self._lo, -q)
        np.add.at(out, self._hi, q)
        return out

    def laplacian(self, u):
        return -self.stiffness_apply(u) / self.measure

    def dirichlet(self, u):
        u = np.asarray(u, dtype=float)
        return math.fsum((self.flux * self._diff(u) ** 2).tolist())

    def solve_shifted(self, r, c):
        key = float(c)
        if key not in self._factor:
            A = (6.0 * self.stiffness + sparse.diags(c * self.measure)).tocsc()
            self._factor[key] = spla.splu(A)
        return self._factor[key].solve(self.measure * np.asarray(r, dtype=float))

    def laplacian_matrix(self):
        return (sparse.diags(-1.0 / self.measure) @ self.stiffness).tocsr()

    def mirror(self, u):
        if self.periodic:
            return np.roll(np.asarray(u)[::-1], 1)
        if not np.allclose(self.faces - self.faces[0], (self.faces[-1] - self.faces[::-1]), rtol=0, atol=1e-12):
            raise PreconditionError("grid is not mirror symmetric")
        return np.asarray(u)[::-1]

    def face_values(self, u):
        """Values and x-derivatives at interior faces (linear interpolation between cell centres)."""
        u = np.asarray(u, dtype=float)
        xc = self.centers
        lam = (self.faces[1:-1] - xc[:-1]) / np.diff(xc)
        return u[:-1] + lam * np.diff(u), np.diff(u) / np.diff(xc)

    def describe(self):
        d = super().describe()
        d.update({"x_range": [float(self.faces[0]), float(self.faces[-1])], "periodic": self.periodic, **self.meta})
        return d


# ----------------------------------------------------------------- builders


def torus_grid(spec, shape, sigma_mode="full"):
    """Full periodic grid on a flat torus; size-1 axes reduce to functions constant along them."""
    if spec.kind != "flat-torus-4" and spec.kind != "custom-chart":
        raise PreconditionError(f"torus grid needs a flat torus, got {spec.kind}")
    dom = spec.charts[0]
    if not all(dom.periodic):
        raise PreconditionError("torus grid needs a chart periodic in all four axes")
    shape = tuple(int(n) for n in shape)
    if len(shape) != 4:
        raise PreconditionError("torus grid shape must have four entries")
    lengths = dom.hi - dom.lo
    disc = PeriodicSpectral("torus-grid-4d", lengths, shape, 0.0, origin=dom.lo, sigma_mode=sigma_mode)
    pts = np.stack([g.ravel() for g in disc.grid()], axis=-1)
    disc.sigma = sigma_at_points(spec, 0, pts, sigma_mode).reshape(shape)
    return disc


def circle_reduced(spec, n, sigma_mode="full"):
    """Functions of the circle coordinate on S^3(r) x S^1_L (periodic three-point stencil)."""
    if spec.kind != "product-S3xS1":
        raise PreconditionError(f"circle reduction needs product-S3xS1, got {spec.kind}")
    r, L = spec.params["r"], spec.params["L"]
    faces = np.linspace(0.0, L, int(n) + 1)
    th = 0.5 * (faces[1:] + faces[:-1])
    pts = np.stack([np.full_like(th, 0.25 * math.pi), np.zeros_like(th), np.zeros_like(th), th], axis=-1)
    sigma = sigma_at_points(spec, 0, pts, sigma_mode)
    return RadialFiniteVolume(
        "circle-reduced-S3xS1",
        faces,
        lambda x: 1.0 + 0.0 * x,
        lambda x: r + 0.0 * x,
        sigma,
        sigma_mode=sigma_mode,
        meta={"r": r, "L": L},
        periodic=True,
    )


def warped_reduced(kind, a, b, faces, sigma_mode="full", orientation=1, meta=None, sigma=None):
    """Radial finite volumes on ``a^2 dx^2 + b^2 g_{S^3}``; sigma from the curvature pipeline unless given."""
    faces = np.asarray(faces, dtype=float)
    if sigma is None:
        chart = mf.warped_chart(a, b, (faces[0], faces[-1]), name=kind)
        spec = mf.ManifoldSpec("custom-chart", {}, orientation, (chart,), label=kind)
        xc = 0.5 * (faces[1:] + faces[:-1])
        pts = np.stack([xc, np.full_like(xc, 0.25 * math.pi), np.zeros_like(xc), np.zeros_like(xc)], axis=-1)
        sigma = sigma_at_points(spec, 0, pts, sigma_mode)
    return RadialFiniteVolume(kind, faces, a, b, sigma, sigma_mode=sigma_mode, meta=meta)


def polar_reduced(spec, n, sigma_mode="full"):
    """Functions of the polar angle on the round S^4(r): ``r^2 (dpsi^2 + sin^2 psi g_{S^3})``."""
    if spec.kind != "round-sphere-4":
        raise PreconditionError(f"polar reduction needs round-sphere-4, got {spec.kind}")
    r = spec.params["r"]
    faces = np.linspace(0.0, math.pi, int(n) + 1)
    xc = 0.5 * (faces[1:] + faces[:-1])
    pts = np.stack([xc, np.full_like(xc, 0.25 * math.pi), np.zeros_like(xc), np.zeros_like(xc)], axis=-1)
    sigma = sigma_at_points(spec, 1, pts, sigma_mode)
    return RadialFiniteVolume(
        "polar-reduced-S4",
        faces,
        lambda x: r + 0.0 * x,
        lambda x: r * hd.sin(x),
        sigma,
        sigma_mode=sigma_mode,
        meta={"r": r},
    )


def build_discretization(spec, resolution=None, sigma_mode="full"):
    """Default reduction for a catalog manifold."""
    if spec.kind == "flat-torus-4":
        n = int(resolution or 16)
        return torus_grid(spec, (n, n, n, n), sigma_mode)
    if spec.kind == "product-S3xS1":
        n = int(resolution or max(64, math.ceil(20 * spec.params["L"])))
        return circle_reduced(spec, n, sigma_mode)
    if spec.kind == "round-sphere-4":
        return polar_reduced(spec, int(resolution or 400), sigma_mode)
    raise PreconditionError(
        f"no symmetric reduction for {spec.kind}; supported: flat-torus-4, product-S3xS1, round-sphere-4"
    )
