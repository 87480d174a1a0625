"""Pointwise Riemannian geometry from exact metric jets.

All functions accept a single point or a batch of points; batch axes lead
and tensor axes trail.  Index conventions::

    dg[..., i, j, k]      = d_k g_ij
    ddg[..., i, j, k, l]  = d_k d_l g_ij
    gamma[..., k, i, j]   = Gamma^k_ij
    riem[..., i, j, k, l] = Rm(d_i, d_j, d_k, d_l), positive sectional curvature
                            on the round sphere: K(X, Y) = Rm(X, Y, X, Y) / |X ^ Y|^2
    ric[..., j, l]        = g^{ik} riem[..., i, j, k, l]
"""

from dataclasses import dataclass

import numpy as np

from . import hyperdual as hd
from .errors import DomainError, MetricDegeneracyError


@dataclass(frozen=True)
class MetricJet:
    x: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    g_inv: np.ndarray

    @property
    def batch_shape(self):
        return self.g.shape[:-2]


@dataclass(frozen=True)
class CurvaturePoint:
    riem: np.ndarray
    ric: np.ndarray
    R: np.ndarray
    ric0: np.ndarray  # trace-free Ricci, covariant
    frame: np.ndarray  # rows are orthonormal frame vectors in coordinate components
    g: np.ndarray
    g_inv: np.ndarray
    orientation: int = 1

    @property
    def ric0_norm2(self):
        """|Ric0|^2 = Ric0_ij Ric0^ij."""
        up = np.einsum("...ia,...ab,...bj->...ij", self.g_inv, self.ric0, self.g_inv)
        return np.einsum("...ij,...ij->...", up, self.ric0)

    def frame_tensor(self):
        """Components R_abcd of the curvature tensor in the orthonormal frame."""
        e = self.frame
        t = np.einsum("...ijkl,...dl->...ijkd", self.riem, e)
        t = np.einsum("...ijkd,...ck->...ijcd", t, e)
        t = np.einsum("...ijcd,...bj->...ibcd", t, e)
        return np.einsum("...ibcd,...ai->...abcd", t, e)


def _assemble(entries, batch, nvars=4):
    g = np.zeros(batch + (4, 4))
    dg = np.zeros(batch + (4, 4, nvars))
    ddg = np.zeros(batch + (4, 4, nvars, nvars))
    for i in range(4):
        for j in range(4):
            e = entries[i][j]
            if isinstance(e, hd.Jet):
                g[..., i, j] = e.v
                dg[..., i, j, :] = e.d
                ddg[..., i, j, :, :] = e.h
            else:
                g[..., i, j] = e
    return g, dg, ddg


def check_metric(g, where="metric"):
    """Raise if ``g`` is not symmetric positive-definite at every batch point."""
    asym = np.max(np.abs(g - np.swapaxes(g, -1, -2)), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
    if asym > 1e-14 * scale:
        raise MetricDegeneracyError(f"{where}: coefficient matrix not symmetric (defect {asym:.3e})")
    if not np.all(np.isfinite(g)):
        raise MetricDegeneracyError(f"{where}: non-finite coefficients")
    lam = np.linalg.eigvalsh(g)
    if np.any(lam[..., 0] <= 0):
        bad = np.argwhere(np.atleast_1d(lam[..., 0] <= 0))
        raise MetricDegeneracyError(f"{where}: metric not positive-definite (first bad index {bad[0].tolist()})")


def evaluate_jet(spec, chart, x):
    """Exact second-order jet of the chart's metric at ``x`` (shape ``(4,)`` or ``(N, 4)``)."""
    dom = spec.charts[chart]
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise DomainError("points must have four coordinates")
    inside = dom.contains(x)
    if not np.all(inside):
        bad = np.atleast_2d(x)[~np.atleast_1d(inside)][0]
        raise DomainError(f"point {bad.tolist()} outside chart {dom.name or chart} box {list(dom.bounds)}")
    coords = hd.Jet.variables(x)
    entries = dom.metric(coords)
    g, dg, ddg = _assemble(entries, x.shape[:-1])
    check_metric(g, where=f"chart {dom.name or chart}")
    # symmetrize away roundoff from formulas that build g_ij and g_ji separately
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    return MetricJet(x, g, dg, ddg, np.linalg.inv(g))


def christoffel(jet):
    """Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)."""
    dg = jet.dg
    first = 0.5 * (
        np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg) - np.einsum("...ijl->...lij", dg)
    )
    return np.einsum("...kl,...lij->...kij", jet.g_inv, first)


def gram_schmidt(g, order=(0, 1, 2, 3), orientation=1):
    """Orthonormal frame (rows) from the coordinate basis taken in ``order``.

    The last vector is flipped when needed so the frame is positively
    oriented for ``orientation`` relative to the coordinate orientation.
    """
    batch = g.shape[:-2]
    frame = np.zeros(batch + (4, 4))
    for a, idx in enumerate(order):
        v = np.zeros(batch + (4,))
        v[..., idx] = 1.0
        for b in range(a):
            proj = np.einsum("...i,...ij,...j->...", v, g, frame[..., b, :])
            v = v - proj[..., None] * frame[..., b, :]
        norm = np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))
        frame[..., a, :] = v / norm[..., None]
    sign = np.sign(np.linalg.det(frame)) * orientation
    frame[..., 3, :] *= sign[..., None]
    return frame


def curvature(jet, orientation=1, order=(0, 1, 2, 3)):
    """Riemann, Ricci and scalar curvature plus an oriented orthonormal frame."""
    g, ginv, ddg = jet.g, jet.g_inv, jet.ddg
    gam = christoffel(jet)
    # second-derivative part: 1/2 (g_il,jk + g_jk,il - g_ik,jl - g_jl,ik)
    second = 0.5 * (
        np.einsum("...iljk->...ijkl", ddg)
        + np.einsum("...jkil->...ijkl", ddg)
        - np.einsum("...ikjl->...ijkl", ddg)
        - np.einsum("...jlik->...ijkl", ddg)
    )
    gam_low = np.einsum("...mn,...nil->...mil", g, gam)  # g_mn Gamma^n_il
    quad = np.einsum("...mjk,...mil->...ijkl", gam, gam_low) - np.einsum("...mjl,...mik->...ijkl", gam, gam_low)
    riem = second + quad
    ric = np.einsum("...ik,...ijkl->...jl", ginv, riem)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    R = np.einsum("...jl,...jl->...", ginv, ric)
    ric0 = ric - 0.25 * R[..., None, None] * g
    frame = gram_schmidt(g, order=order, orientation=orientation)
    return CurvaturePoint(riem, ric, R, ric0, frame, g, ginv, orientation)


def curvature_at(spec, x, chart=None, order=(0, 1, 2, 3)):
    """Convenience: jet + curvature at points of a manifold's pointwise chart."""
    chart = spec.pointwise_chart if chart is None else chart
    return curvature(evaluate_jet(spec, chart, x), orientation=spec.orientation, order=order)


def bianchi_defect(riem):
    """Max |R_ijkl + R_iklj + R_iljk| over components."""
    b = riem + np.einsum("...iklj->...ijkl", riem) + np.einsum("...iljk->...ijkl", riem)
    return np.max(np.abs(b), axis=(-4, -3, -2, -1))
