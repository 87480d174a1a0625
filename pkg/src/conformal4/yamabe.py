"""Conformal rescaling and the subcritical Yamabe-type minimization.

Conventions (dimension 4): a conformal factor ``u > 0`` gives
``g_hat = u^2 g``, the conformal Laplacian is ``L u = -6 Lap u + sigma u``
with ``sigma = R - f(W)``, and

    F_s(u) = (int sigma u^2 + 6 |grad u|^2) / (int |u|^s)^(2/s),   2 < s <= 4.

Minimizers with ``int u^s = 1`` solve ``L u = mu_s u^(s-1)``.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import DomainError, PreconditionError

DEFAULT_SCHEDULE = (3.0, 3.5, 3.8, 3.9, 3.95, 3.99)
HISTORY_COLUMNS = ("step", "s", "F_s", "residual", "max_u", "phase")
BLOWUP_GROWTH = 1e3
BLOWUP_SHRINK = 10.0
SPHERICAL_THRESHOLD = "conformal class near spherical threshold"


def _values(u):
    return np.asarray(u.values if isinstance(u, ConformalFactor) else u, dtype=float)


@dataclass(frozen=True, eq=False)
class ConformalFactor:
    """Positive nodal values of ``u``; the rescaled metric is ``u^2 g``."""

    values: np.ndarray
    exponent: str = "g_hat = u^2 g (u^(4/(n-2)) with n = 4)"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise DomainError("conformal factor has non-finite values")
        if np.any(v <= 0):
            raise DomainError(f"conformal factor must be positive (min {float(v.min()):.3e})")
        object.__setattr__(self, "values", v)

    @property
    def max(self):
        return float(np.max(self.values))

    @property
    def min(self):
        return float(np.min(self.values))


@dataclass
class SubcriticalSolve:
    s: float
    mu_s: float
    minimizer: ConformalFactor
    residual: float
    iterations: int
    converged: bool
    blowup_flag: bool
    norm_defect: float  # | int u^s - 1 |
    history: list = field(default_factory=list)
    message: str = ""

    def summary(self):
        return {
            "s": self.s,
            "mu_s": self.mu_s,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "blowup_flag": self.blowup_flag,
            "norm_defect": self.norm_defect,
            "max_u": self.minimizer.max,
            "min_u": self.minimizer.min,
            "message": self.message,
        }


def _check_s(s, upper_open=False):
    s = float(s)
    if not (2.0 < s < 4.0 or (s == 4.0 and not upper_open)):
        rng = "(2, 4)" if upper_open else "(2, 4]"
        raise PreconditionError(f"exponent s = {s} outside {rng}")
    return s


def conformal_operator(disc, u):
    """L u = -6 Lap u + sigma u."""
    u = _values(u).reshape(disc.shape)
    return -6.0 * disc.laplacian(u) + disc.sigma * u


def energy(disc, u):
    """int sigma u^2 + 6 |grad u|^2."""
    u = _values(u).reshape(disc.shape)
    return disc.integrate(disc.sigma * u * u) + 6.0 * disc.dirichlet(u)


def lp_mass(disc, u, s):
    return disc.integrate(np.abs(_values(u).reshape(disc.shape)) ** s)


def functional_Fs(u, s, disc):
    """The subcritical quotient F_s(u) on ``disc``."""
    s = _check_s(s)
    D = lp_mass(disc, u, s)
    if D <= 0.0:
        raise DomainError("F_s undefined for u = 0")
    return energy(disc, u) / D ** (2.0 / s)


def sigma_transform(disc, u, node=None):
    """Modified scalar curvature of ``u^2 g``: u^-3 (-6 Lap u + sigma u); all nodes or one node index."""
    u = ConformalFactor(_values(u).reshape(disc.shape)).values
    out = conformal_operator(disc, u) / u**3
    return out if node is None else float(out[node])


def certified_sigma_transform(disc, u, s, max_steps=40):
    """Transformed modified scalar curvature of a minimizer, resolved in extended precision.

    Far from a concentrated minimizer ``u`` can be 1e-17 of its maximum,
    and there ``u^-1 L u = mu u^(s-2)`` is a tiny difference of O(1) terms, so
    ``u^-3 L u`` evaluated in double precision is noise.  This routine
    re-solves the rescaled equation ``L v = v^(s-1)`` (``v = mu^(1/(s-2)) u``,
    needs ``mu > 0``) in the log variable with mpmath, using enough digits
    to resolve the smallest values, then evaluates ``u^-3 L u`` node by node.
    Only three-point (finite-volume) grids are supported; on periodic grids
    ``u`` must be mirror symmetric about cell 0, which pins the translation
    mode.  Returns ``(values, info)``.
    """
    import mpmath

    if not hasattr(disc, "flux"):
        raise PreconditionError("extended-precision check needs a three-point 1-D grid")
    u = ConformalFactor(_values(u).reshape(disc.shape)).values
    s = _check_s(s, upper_open=True)
    mu = functional_Fs(u, s, disc) * lp_mass(disc, u, s) ** (2.0 / s - 1.0)
    if not mu > 0:
        raise PreconditionError("extended-precision check needs a positive minimum")
    n = disc.size
    periodic = disc.periodic
    if periodic:
        if np.max(np.abs(u - disc.mirror(u))) > 1e-12 * np.max(u):
            raise PreconditionError("periodic grids need a factor mirror symmetric about cell 0")
        rep = np.minimum(np.arange(n), (n - np.arange(n)) % n)
    else:
        rep = np.arange(n)
    m = n // 2 + 1 if periodic else n
    digits = 30 + int(math.ceil(2.0 * math.log10(np.max(u) / np.min(u))))
    ctx = mpmath.mp.clone()
    ctx.dps = digits
    mpf, exp = ctx.mpf, ctx.exp
    sig = [mpf(float(x)) for x in disc.sigma[:m]]
    mea = [mpf(float(x)) for x in disc.measure[:m]]
    flux = [mpf(float(x)) for x in disc.flux]
    p = mpf(s) - 2
    W = [ctx.log(mpf(float(x))) + ctx.log(mpf(float(mu))) / p for x in u[:m]]
    # neighbours (reduced index, flux) of each reduced node
    nbrs = []
    for j in range(m):
        lst = []
        for off, face in ((-1, j - 1), (1, j)):
            i = j + off
            if periodic:
                lst.append((int(rep[i % n]), flux[face % n]))
            elif 0 <= i < n:
                lst.append((i, flux[face]))
        nbrs.append(lst)

    def ratio_terms(W):
        out = []
        for j in range(m):
            c = 6 / mea[j]
            out.append([(k, c * f * exp(W[k] - W[j])) for k, f in nbrs[j]])
        return out

    def defect(W, terms):
        return [sig[j] + sum(6 / mea[j] * f for _, f in nbrs[j]) - sum(t for _, t in terms[j]) - exp(p * W[j]) for j in range(m)]

    terms = ratio_terms(W)
    H = defect(W, terms)
    hmax = max(abs(h) for h in H)
    target = ctx.mpf(10) ** (-(digits - 12))
    steps = 0
    while hmax > target and steps < max_steps:
        lo = [mpf(0)] * m
        up = [mpf(0)] * m
        di = [mpf(0)] * m
        for j in range(m):
            for k, t in terms[j]:
                di[j] += t
                if k == j - 1:
                    lo[j] -= t
                elif k == j + 1:
                    up[j] -= t
                else:
                    di[j] -= t
            di[j] -= p * exp(p * W[j])
        # Thomas algorithm
        cp, dp = [mpf(0)] * m, [mpf(0)] * m
        cp[0], dp[0] = up[0] / di[0], -H[0] / di[0]
        for j in range(1, m):
            den = di[j] - lo[j] * cp[j - 1]
            cp[j] = up[j] / den
            dp[j] = (-H[j] - lo[j] * dp[j - 1]) / den
        dx = [mpf(0)] * m
        dx[-1] = dp[-1]
        for j in range(m - 2, -1, -1):
            dx[j] = dp[j] - cp[j] * dx[j + 1]
        W = [W[j] + dx[j] for j in range(m)]
        terms = ratio_terms(W)
        H = defect(W, terms)
        new = max(abs(h) for h in H)
        steps += 1
        if not new < hmax:
            hmax = new
            break
        hmax = new
    V = [exp(w) for w in W]
    full_mea = [mpf(float(x)) for x in disc.measure]
    norm_s = ctx.fsum(full_mea[i] * V[rep[i]] ** s for i in range(n)) ** (1 / mpf(s))
    # u^-3 L u = |v|_s^2 v^-2 (v^-1 L v) with v^-1 L v = H + v^(s-2)
    vals = [norm_s**2 / V[j] ** 2 * (H[j] + exp(p * W[j])) for j in range(m)]
    out = np.array([float(vals[rep[i]]) for i in range(n)])
    info = {
        "digits": digits,
        "newton_steps": steps,
        "log_residual": float(hmax),
        "mu": float(norm_s ** (s - 2)),
        "max_relative_change": float(max(abs(V[rep[i]] / norm_s / mpf(float(u[i])) - 1) for i in range(n))),
    }
    return out, info


def half_max_radius(disc, u):
    """Concentration scale: (volume of {u >= max u / 2})^(1/4)."""
    u = _values(u).reshape(disc.shape)
    return disc.integrate(u >= 0.5 * u.max()) ** 0.25


def default_init(disc):
    """Positive starting guess that is not a critical point by symmetry."""
    if hasattr(disc, "axes"):
        ax = next((k for k, n in enumerate(disc.shape) if n > 1), 0)
        x = disc.grid()[ax]
        L = disc.lengths[ax]
        return 1.0 + 0.3 * np.cos(2.0 * math.pi * (x - disc.axes[ax][0]) / L)
    x = disc.centers
    if disc.periodic:
        return 1.0 + 0.3 * np.cos(2.0 * math.pi * (x - x[0]) / (disc.faces[-1] - disc.faces[0]))
    mid, half = 0.5 * (x[0] + x[-1]), 0.5 * (x[-1] - x[0])
    return 1.0 + 0.3 * (mid - x) / half


class _Problem:
    def __init__(self, disc, s, symmetric):
        self.disc, self.s, self.symmetric = disc, s, symmetric
        self.c = max(float(np.max(disc.sigma)), 1.0)

    def sym(self, v):
        return 0.5 * (v + self.disc.mirror(v)) if self.symmetric else v

    def normalize(self, v):
        return v / lp_mass(self.disc, v, self.s) ** (1.0 / self.s)

    def evaluate(self, u):
        """(F, gradient, Lu) at normalized u."""
        d, s = self.disc, self.s
        Lu = conformal_operator(d, u)
        N = d.inner(u, Lu)
        G = 2.0 * (Lu - N * u ** (s - 1.0))
        return N, G, Lu

    def residual(self, u, Lu, mu):
        return float(np.max(np.abs(Lu - mu * u ** (self.s - 1.0))) / np.max(np.abs(u)))

    def pnorm2(self, v):
        return 6.0 * self.disc.dirichlet(v) + self.c * self.disc.inner(v, v)


def _log_residual(prob, w, mu, lap):
    """Per-node relative defect u^-1 L u - mu u^(s-2) with u = exp(w), evaluated from neighbour ratios."""
    d, s = prob.disc, prob.s
    coo = lap.tocoo()
    ratio = np.exp(w[coo.col] - w[coo.row])
    lu_over_u = d.sigma.ravel() - 6.0 * np.bincount(coo.row, coo.data * ratio, minlength=w.size)
    return lu_over_u - mu * np.exp((s - 2.0) * w), coo, ratio


def _newton_polish(prob, u, mu, res, max_steps=20):
    """Bordered Newton on ``(u^-1 L u - mu u^(s-2), int u^s - 1)`` in the variable ``w = log u``.

    Writing the equation per node relative to the local value keeps
    exponentially small tails accurate, which plain residual minimization
    cannot do.  Needs a sparse Laplacian; returns ``(u, mu, res, steps)``.
    """
    d, s = prob.disc, prob.s
    lap = d.laplacian_matrix()
    if lap is None or not sparse.issparse(lap):
        return u, mu, res, []
    n = d.size
    m = d.measure.ravel()
    w = np.log(u.ravel())
    H, coo, ratio = _log_residual(prob, w, mu, lap)
    hres = float(np.max(np.abs(H))) / max(abs(mu), 1.0)
    steps = []
    for _ in range(max_steps):
        off = coo.row != coo.col
        vals = -6.0 * coo.data[off] * ratio[off]
        diag = -np.bincount(coo.row[off], vals, minlength=n) - (s - 2.0) * mu * np.exp((s - 2.0) * w)
        A = sparse.csr_matrix((vals, (coo.row[off], coo.col[off])), shape=(n, n)) + sparse.diags(diag)
        col = sparse.csr_matrix(-np.exp((s - 2.0) * w)[:, None])
        row = sparse.csr_matrix((s * m * np.exp(s * w))[None, :])
        J = sparse.bmat([[A, col], [row, None]], format="csc")
        rhs = -np.concatenate([H, [math.fsum((m * np.exp(s * w)).tolist()) - 1.0]])
        delta = spla.spsolve(J, rhs)
        if not np.all(np.isfinite(delta)):
            break
        w_new = w + delta[:n]
        if prob.symmetric:
            w_new = 0.5 * (w_new + d.mirror(w_new))
        v = prob.normalize(np.exp(w_new).reshape(d.shape))
        w_new = np.log(v.ravel())
        F, _, Lv = prob.evaluate(v)
        H_new, coo, ratio_new = _log_residual(prob, w_new, F, lap)
        h_new = float(np.max(np.abs(H_new))) / max(abs(F), 1.0)
        if not h_new < hres:
            break
        w, H, ratio, hres = w_new, H_new, ratio_new, h_new
        u, mu = v, F
        res = prob.residual(v, Lv, F)
        steps.append((F, res, float(np.max(v))))
        if hres < 1e-14:
            break
    return u, mu, res, steps


def _auto_symmetric(disc, symmetric):
    # a bump on a periodic 1-D grid can slide freely; pin it by mirror symmetry about cell 0
    if symmetric is None:
        return bool(getattr(disc, "periodic", False))
    return bool(symmetric)


def minimize_subcritical(disc, s, init=None, tol=1e-9, max_iter=4000, polish=True, symmetric=None, step0=0):
    """Minimize F_s over positive u on ``disc`` by preconditioned projected gradient descent.

    Each iteration takes a step along ``-(-6 Lap + c)^-1 grad F_s`` with a
    Barzilai-Borwein length, halves it until the trial stays positive and
    satisfies the Armijo condition, then rescales to ``int u^s = 1``.  The
    run stops when the Euler-Lagrange residual
    ``max|L u - mu u^(s-1)| / max|u|`` drops below ``tol``.  If the descent
    stalls first and the grid is small enough, a few bordered Newton steps
    finish the job (recorded with phase ``"newton"``).  A run that misses
    ``tol`` returns with ``converged=False`` rather than raising.

    ``symmetric=True`` restricts the search to mirror-symmetric functions;
    the default turns it on only for periodic 1-D grids, where it removes
    the translation zero mode without excluding the one-bump minimizer.
    """
    s = _check_s(s, upper_open=True)
    symmetric = _auto_symmetric(disc, symmetric)
    d = disc
    u0 = default_init(d) if init is None else _values(init)
    u0 = ConformalFactor(np.asarray(u0, dtype=float).reshape(d.shape)).values
    prob = _Problem(d, s, symmetric)
    u = prob.sym(prob.normalize(u0))
    init_max, init_radius = float(u.max()), half_max_radius(d, u)
    F, G, Lu = prob.evaluate(u)
    res = prob.residual(u, Lu, F)
    history = [(step0, s, F, res, float(u.max()), "descent")]
    alpha, it, stalled = 0.5, 0, False
    while res >= tol and it < max_iter:
        it += 1
        direction = -prob.sym(d.solve_shifted(G, prob.c))
        slope = d.inner(G, direction)
        if not slope < 0:
            stalled = True
            break
        a = min(max(alpha, 1e-8), 1e4)
        accepted = False
        for _ in range(60):
            v = u + a * direction
            if np.all(v > 0):
                v = prob.sym(prob.normalize(v))
                Fv, Gv, Lv = prob.evaluate(v)
                if Fv <= F + 1e-4 * a * slope:
                    accepted = True
                    break
            a *= 0.5
        if not accepted:
            stalled = True
            break
        sk, yk = v - u, Gv - G
        sy = d.inner(sk, yk)
        alpha = prob.pnorm2(sk) / sy if sy > 0 else 2.0 * a
        u, F, G, Lu = v, Fv, Gv, Lv
        res = prob.residual(u, Lu, F)
        history.append((step0 + it, s, F, res, float(u.max()), "descent"))
    if polish:
        u, F, res, steps = _newton_polish(prob, u, F, res)
        for k, (Fk, rk, mk) in enumerate(steps, 1):
            history.append((step0 + it + k, s, Fk, rk, mk, "newton"))
        it += len(steps)
    converged = res < tol
    blowup = bool(float(u.max()) > BLOWUP_GROWTH * init_max and half_max_radius(d, u) * BLOWUP_SHRINK <= init_radius)
    msg = "converged" if converged else ("descent stalled" if stalled else "iteration limit reached")
    return SubcriticalSolve(
        s=s,
        mu_s=float(F),
        minimizer=ConformalFactor(u),
        residual=float(res),
        iterations=it,
        converged=bool(converged),
        blowup_flag=blowup,
        norm_defect=abs(lp_mass(d, u, s) - 1.0),
        history=history,
        message=msg,
    )


@dataclass
class ContinuationResult:
    schedule: tuple
    solves: list
    estimate: object  # float, or None when the run is flagged near the spherical threshold
    status: str
    blowup_flag: bool
    converged: bool
    critical_quotient: float  # F_4 of the last minimizer
    mu_monotone: bool  # mu_s non-decreasing along the schedule
    min_sigma_transform: float
    half_max_radii: list
    sigma_transform_method: str = "double"

    def summary(self):
        return {
            "schedule": list(self.schedule),
            "estimate": self.estimate,
            "status": self.status,
            "blowup_flag": self.blowup_flag,
            "converged": self.converged,
            "critical_quotient": self.critical_quotient,
            "mu_monotone": self.mu_monotone,
            "min_sigma_transform": self.min_sigma_transform,
            "sigma_transform_method": self.sigma_transform_method,
            "half_max_radii": self.half_max_radii,
            "steps": [sv.summary() for sv in self.solves],
        }

    @property
    def history(self):
        rows = []
        for sv in self.solves:
            rows.extend(sv.history)
        return rows


def min_transformed_sigma(disc, solve):
    """min over nodes of u^-3 L u for a solve's minimizer, with the evaluation route used.

    Three-point grids with a positive minimum go through
    :func:`certified_sigma_transform`; other grids are evaluated directly.
    """
    if hasattr(disc, "flux") and solve.mu_s > 0:
        try:
            vals, info = certified_sigma_transform(disc, solve.minimizer, solve.s)
            return float(np.min(vals)), f"extended precision ({info['digits']} digits)"
        except PreconditionError:
            pass
    return float(np.min(sigma_transform(disc, solve.minimizer))), "double"


def check_schedule(schedule):
    sched = tuple(float(x) for x in schedule)
    if not sched:
        raise PreconditionError("empty s-schedule")
    if any(not 2.0 < x < 4.0 for x in sched):
        raise PreconditionError(f"s-schedule entries must lie in (2, 4): {list(sched)}")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise PreconditionError("s-schedule must be strictly increasing")
    if sched[-1] < 3.95:
        raise PreconditionError("last s-schedule entry must be at least 3.95")
    return sched


def continuation_to_critical(disc, schedule=DEFAULT_SCHEDULE, init=None, tol=1e-9, max_iter=4000, polish=True, symmetric=None):
    """Warm-started solves along ``schedule`` toward s = 4.

    The estimate is ``mu_s`` at the last exponent.  When the maximum of the
    minimizer grows past 1e3 times its first value while the half-max radius
    shrinks tenfold, no estimate is reported and the status says the class
    sits near the spherical threshold.
    """
    sched = check_schedule(schedule)
    u = default_init(disc) if init is None else _values(init)
    solves, radii = [], []
    first_max = first_radius = None
    step = 0
    blow = False
    for s in sched:
        sv = minimize_subcritical(disc, s, u, tol=tol, max_iter=max_iter, polish=polish, symmetric=symmetric, step0=step)
        step = sv.history[-1][0] + 1
        solves.append(sv)
        u = sv.minimizer.values
        r = half_max_radius(disc, u)
        radii.append(r)
        if first_max is None:
            first_max, first_radius = float(u.max()), r
        elif float(u.max()) > BLOWUP_GROWTH * first_max and r * BLOWUP_SHRINK <= first_radius:
            blow = True
        blow = blow or sv.blowup_flag
    last = solves[-1]
    converged = all(sv.converged for sv in solves)
    mus = [sv.mu_s for sv in solves]
    scale = max(1.0, max(abs(m) for m in mus))
    monotone = all(b >= a - 1e-12 * scale for a, b in zip(mus, mus[1:]))
    if blow:
        estimate, status = None, SPHERICAL_THRESHOLD
    elif converged:
        estimate, status = last.mu_s, "converged"
    else:
        estimate, status = last.mu_s, "not converged"
    st, method = min_transformed_sigma(disc, last)
    return ContinuationResult(
        schedule=sched,
        solves=solves,
        estimate=estimate,
        status=status,
        blowup_flag=blow,
        converged=converged,
        critical_quotient=functional_Fs(last.minimizer, 4.0, disc),
        mu_monotone=monotone,
        min_sigma_transform=st,
        half_max_radii=radii,
        sigma_transform_method=method,
    )


def history_csv(rows):
    """Convergence history as CSV text with the fixed column set."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for step, s, F, res, umax, phase in rows:
        w.writerow([int(step), repr(float(s)), repr(float(F)), repr(float(res)), repr(float(umax)), phase])
    return buf.getvalue()
