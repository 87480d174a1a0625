"""Self-dual / anti-self-dual splitting of the curvature operator.

The curvature operator is written in the orthonormal basis
``{e_a ^ e_b}`` of 2-forms (pair order 01, 02, 03, 23, 31, 12), normalized
so the round unit sphere has the identity operator.  Projecting on

    w(+/-)_1 = (e01 +/- e23)/sqrt2,  w(+/-)_2 = (e02 +/- e31)/sqrt2,  w(+/-)_3 = (e03 +/- e12)/sqrt2

gives the blocks A = R/12 + W+, B, C = R/12 + W-.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError

PAIRS = ((0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2))
_S = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class CurvatureBlocks:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    wplus_eigs: np.ndarray  # descending
    wminus_eigs: np.ndarray
    R: np.ndarray
    lambda_max_plus: np.ndarray
    lambda_max_minus: np.ndarray
    sigma: np.ndarray
    sigma_plus: np.ndarray
    pic_margin: np.ndarray
    trace_defect: np.ndarray = None  # max |tr A - R/4|, |tr C - R/4|: a roundoff diagnostic

    @property
    def wplus_norm2(self):
        """|W+|^2 as the sum of squared eigenvalues of the 3x3 block."""
        return np.sum(self.wplus_eigs**2, axis=-1)

    @property
    def wminus_norm2(self):
        return np.sum(self.wminus_eigs**2, axis=-1)

    @property
    def sigma_minus(self):
        return self.R - 6.0 * self.lambda_max_minus

    def P(self, sign=1):
        """P(+/-) = R/6 I - W(+/-) on the (anti-)self-dual 2-forms."""
        X = self.A if sign > 0 else self.C
        W = X - (np.trace(X, axis1=-2, axis2=-1) / 3.0)[..., None, None] * np.eye(3)
        return (self.R / 6.0)[..., None, None] * np.eye(3) - W

    def modified_scalar(self, mode="full"):
        """R - f(W) for f = 6 max lambda_max(W+/-) ("full") or 6 lambda_max(W+) ("plus")."""
        if mode == "full":
            return self.sigma
        if mode == "plus":
            return self.sigma_plus
        raise ValueError(f"unknown sigma mode {mode!r}")


def two_form_bases(frame, orientation=1):
    """Columns of the self-dual and anti-self-dual bases as 6-vectors in the e_a ^ e_b basis.

    The frame's own handedness is read off ``det(frame)``; if it disagrees
    with ``orientation`` the two families swap roles.
    Returns arrays of shape ``batch + (6, 3)``.
    """
    frame = np.asarray(frame, dtype=float)
    plus = np.zeros((6, 3))
    minus = np.zeros((6, 3))
    for i in range(3):
        plus[i, i] = plus[i + 3, i] = _S
        minus[i, i] = _S
        minus[i + 3, i] = -_S
    handed = np.sign(np.linalg.det(frame)) * orientation
    batch = frame.shape[:-2]
    pos = (handed > 0)[..., None, None]
    bp = np.where(pos, np.broadcast_to(plus, batch + (6, 3)), np.broadcast_to(minus, batch + (6, 3)))
    bm = np.where(pos, np.broadcast_to(minus, batch + (6, 3)), np.broadcast_to(plus, batch + (6, 3)))
    return bp, bm


def curvature_operator(curv):
    """6x6 matrix Rm(e_a ^ e_b, e_c ^ e_d) = R_abcd in the pair basis."""
    T = curv.frame_tensor()
    batch = T.shape[:-4]
    M = np.empty(batch + (6, 6))
    for p, (a, b) in enumerate(PAIRS):
        for q, (c, d) in enumerate(PAIRS):
            M[..., p, q] = T[..., a, b, c, d]
    return M


def decompose(curv, orientation=None, sym_tol=1e-10):
    """Split the curvature operator at each point into the A, B, C blocks and derived invariants.

    ``sym_tol=None`` skips the block-symmetry consistency check (used by
    quadrature sweeps, whose nodes approach coordinate singularities where
    the coordinate curvature formula loses digits).
    """
    orientation = curv.orientation if orientation is None else orientation
    M = curvature_operator(curv)
    bp, bm = two_form_bases(curv.frame, orientation)
    A = np.einsum("...pi,...pq,...qj->...ij", bp, M, bp)
    B = np.einsum("...pi,...pq,...qj->...ij", bp, M, bm)
    C = np.einsum("...pi,...pq,...qj->...ij", bm, M, bm)
    R = np.asarray(curv.R, dtype=float)
    scale = np.maximum(1.0, np.abs(R))
    for name, X in (("A", A), ("C", C)):
        defect = np.max(np.abs(X - np.swapaxes(X, -1, -2)), axis=(-2, -1))
        if sym_tol is not None and np.any(defect > sym_tol * scale):
            raise ConsistencyError(f"block {name} not symmetric (defect {float(np.max(defect)):.3e})")
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    # W+/- are the trace-free parts; tr A = tr C = R/4 holds only up to roundoff
    eye = np.eye(3)
    trA, trC = np.trace(A, axis1=-2, axis2=-1), np.trace(C, axis1=-2, axis2=-1)
    wp = np.linalg.eigvalsh(A - (trA / 3.0)[..., None, None] * eye)[..., ::-1]
    wm = np.linalg.eigvalsh(C - (trC / 3.0)[..., None, None] * eye)[..., ::-1]
    lp, lm = wp[..., 0], wm[..., 0]
    # two smallest eigenvalues of R/12 + W, summed
    margin = np.minimum(R / 6.0 + wp[..., 1] + wp[..., 2], R / 6.0 + wm[..., 1] + wm[..., 2])
    trace_defect = np.maximum(np.abs(trA - R / 4.0), np.abs(trC - R / 4.0))
    return CurvatureBlocks(
        A=A,
        B=B,
        C=C,
        wplus_eigs=wp,
        wminus_eigs=wm,
        R=R,
        lambda_max_plus=lp,
        lambda_max_minus=lm,
        sigma=R - 6.0 * np.maximum(lp, lm),
        sigma_plus=R - 6.0 * lp,
        pic_margin=margin,
        trace_defect=trace_defect,
    )


POSITIVE = "positive"
DEGENERATE = "nonnegative-degenerate"
INDEFINITE = "indefinite"


def pic_verdict(blocks):
    """Classify isotropic curvature from the worst point of ``blocks``.

    Returns ``(verdict, margin)``; the tolerance is 1e-8 max(1, |R|).
    """
    margin = np.atleast_1d(blocks.pic_margin)
    R = np.atleast_1d(blocks.R)
    tol = 1e-8 * np.maximum(1.0, np.abs(R))
    i = int(np.argmin(margin - tol))
    m = float(margin[i])
    if np.all(margin > tol):
        return POSITIVE, float(np.min(margin))
    if np.all(margin >= -tol):
        return DEGENERATE, m
    return INDEFINITE, float(np.min(margin))
