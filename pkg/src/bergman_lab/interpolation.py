"""Interpolation by Neumann inversion of ``T U-hat`` and the Schur-test verifier.

Given targets ``lambda`` on a separated set, ``mu`` solves ``T U-hat mu = lambda``
and ``f = U-hat mu`` interpolates: ``f(a_m) (1-|a_m|^2)^((alpha+n)/p) = lambda_m``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DomainError, NonContractiveError, ResolutionError
from .kernels import ZonalHarmonicKernel
from .operators import CoefSeq, lp_norm, norm_rule, synth_Uhat, t_uhat_matrix
from .quadrature import MAX_RULE_NODES, build_ball_rule, default_sphere_order, peak_orders

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
STALL_LIMIT = 3
#: Fewest rule nodes required near the excluded pseudo-ball's boundary.
MIN_TRANSITION_NODES = 50
TRANSITION_WIDTH = 0.05


@dataclass
class InterpolationReport:
    mu: CoefSeq
    residuals: list
    ratios: list
    converged: bool
    interpolation_residual: float
    lam_sup: float

    @property
    def iterations(self):
        return len(self.residuals) - 1

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual", "ratio"])
        ratios = [float("nan")] + list(self.ratios)
        for j, (v, q) in enumerate(zip(self.residuals, ratios)):
            w.writerow([j, f"{v:.17g}", f"{q:.17g}"])
        return buf.getvalue()


def interpolation_residual(f, ss, lam, sp):
    """``max_m |f(a_m) w_m^((alpha+n)/p) - lambda_m|`` by direct evaluation of ``f``."""
    vals = f(ss.points) * ss.weights() ** sp.sample_exponent
    return float(np.max(np.abs(vals - lam.values))) if len(lam) else 0.0


def solve_interpolation(lam, ss, sp, backend, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, matrix=None):
    """Neumann iteration ``mu <- mu + (lambda - T U-hat mu)``; returns ``(f, report)``.

    Stops when ``max |lambda - T U-hat mu| <= tol * max |lambda|``.
    """
    if len(lam) != len(ss):
        raise DomainError("target sequence and separated set differ in length")
    M = t_uhat_matrix(ss, sp, backend) if matrix is None else matrix
    target = lam.values
    scale = float(np.max(np.abs(target))) if target.size else 0.0
    mu = np.zeros_like(target)
    if scale == 0.0:
        f = synth_Uhat(CoefSeq(mu, sp.p), ss, sp, backend)
        return f, InterpolationReport(CoefSeq(mu, sp.p), [0.0], [], True, 0.0, 0.0)
    res = target.copy()
    residuals = [float(np.max(np.abs(res)))]
    ratios = []
    stalls = 0
    converged = False
    for _ in range(max_iter):
        mu = mu + res
        res = target - M @ mu
        residuals.append(float(np.max(np.abs(res))))
        q = residuals[-1] / residuals[-2] if residuals[-2] > 0 else 0.0
        ratios.append(q)
        if residuals[-1] <= tol * scale:
            converged = True
            break
        stalls = stalls + 1 if q >= 1.0 else 0
        if stalls >= STALL_LIMIT:
            est = tu_minus_identity_norm(M, sp.p)
            raise NonContractiveError(
                f"interpolation residual ratio {q:.4f} >= 1 for {STALL_LIMIT} iterations; "
                f"measured ||T U-hat - I|| = {est:.4f}", est)
    f = synth_Uhat(CoefSeq(mu, sp.p), ss, sp, backend)
    err = interpolation_residual(f, ss, lam, sp)
    return f, InterpolationReport(CoefSeq(mu, sp.p), residuals, ratios, converged, err, scale)


def tu_minus_identity_norm(M, p, rng=None, random_count=32):
    """``max ||(T U-hat - I) v||_p / ||v||_p`` over unit coordinates and random ``v``."""
    D = np.asarray(M) - np.eye(M.shape[0])
    # unit coordinate sequences: column norms
    worst = float(np.max(np.sum(np.abs(D) ** p, axis=0) ** (1.0 / p))) if D.size else 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    for _ in range(random_count):
        v = rng.standard_normal(D.shape[0])
        worst = max(worst, float(np.sum(np.abs(D @ v) ** p) ** (1.0 / p) / np.sum(np.abs(v) ** p) ** (1.0 / p)))
    return worst


def contraction_frontier(r_values, sp, backend, R_max=0.9, seed=0):
    """``||T U-hat - I||`` on truncated lattices for each separation ``r``.

    Returns ``(rows, frontier)`` with rows ``(r, points, norm)`` and
    ``frontier`` the smallest tested ``r`` from which every larger tested
    separation is contractive (``None`` if the largest one is not).  Finite
    sets need not be monotone in ``r``, so single contractive values below
    a failure do not count.
    """
    from .lattice import greedy_lattice

    rows = []
    for r in sorted(r_values):
        ss = greedy_lattice(sp.n, r, R_max, seed=seed)
        rows.append((float(r), len(ss), tu_minus_identity_norm(t_uhat_matrix(ss, sp, backend), sp.p)))
    frontier = None
    for r, _, est in reversed(rows):
        if est >= 1.0:
            break
        frontier = r
    return rows, frontier


def function_norm(f, sp, rule=None):
    """``||f||`` in ``B^p_alpha``; exact coefficient sum for zonal atoms with ``p = 2``."""
    if isinstance(f.backend, ZonalHarmonicKernel) and sp.p == 2 and rule is None:
        series = f.as_series()
        from .quadrature import beta_moment

        moments = [beta_moment(2, sp.alpha, k) for k in range(series.coeffs.size)]
        return math.sqrt(series.l2_norm_sq(moments))
    if rule is None:
        rule = norm_rule(sp.n, sp.alpha)
    return lp_norm(f, sp.p, rule)


# ---------------------------------------------------------------------------
# Schur test


def matrix_A(ss, sp):
    """``A_mk = w_m^((alpha+n)/p) w_k^(s+n-(alpha+n)/p) / [a_m, a_k]^(s+n)``, zero diagonal."""
    a = ss.points
    w = ss.weights()
    e = sp.sample_exponent
    b = geo.bracket(a[:, None, :], a[None, :, :])
    with np.errstate(divide="ignore"):
        A = (w[:, None] ** e) * (w[None, :] ** (sp.s + sp.n - e)) / b ** (sp.s + sp.n)
    np.fill_diagonal(A, 0.0)
    return A


@dataclass
class SchurReport:
    gamma_weights: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    C1: float
    C2: float
    r: float
    path: str
    bound: float
    kernel_constant: float
    measured: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "gamma", "row_sum", "col_sum"])
        for m, (g, rs, cs) in enumerate(zip(self.gamma_weights, self.row_sums, self.col_sums)):
            w.writerow([m, f"{g:.17g}", f"{rs:.17g}", f"{cs:.17g}"])
        return buf.getvalue()


def schur_verify(ss, sp, backend=None):
    """Schur sums of ``A`` with weights ``gamma_m = w_m^((n-1)/(p p'))``.

    ``C1 = max_m sum_k A_mk gamma_k^p' / gamma_m^p'`` and
    ``C2 = max_k sum_m A_mk gamma_m^p / gamma_k^p`` bound
    ``||A|| <= C1^(1/p') C2^(1/p)``.  For ``p <= 1`` the direct bound
    ``max_k (sum_m A_mk^p)^(1/p)`` is used (``path = "direct"``).  With a
    backend, ``|T U-hat - I| <= C A`` entrywise fixes an empirical ``C`` and the
    measured ``||T U-hat - I||`` is reported against ``C`` times the bound.
    """
    A = matrix_A(ss, sp)
    p, n = sp.p, sp.n
    w = ss.weights()
    if p > 1:
        pc = p / (p - 1.0)
        gamma = w ** ((n - 1.0) / (p * pc))
        rows = (A @ gamma**pc) / gamma**pc
        cols = (gamma**p @ A) / gamma**p
        C1 = float(rows.max()) if rows.size else 0.0
        C2 = float(cols.max()) if cols.size else 0.0
        bound = C1 ** (1.0 / pc) * C2 ** (1.0 / p)
        path = "schur"
    else:
        gamma = np.ones_like(w)
        rows = np.sum(A**p, axis=1)
        cols = np.sum(A**p, axis=0)
        C1 = float(rows.max()) if rows.size else 0.0
        C2 = float(cols.max()) if cols.size else 0.0
        bound = C2 ** (1.0 / p)
        path = "direct"
    const = math.nan
    measured = math.nan
    if backend is not None:
        M = t_uhat_matrix(ss, sp, backend)
        D = np.abs(M - np.eye(len(ss)))
        off = A > 0
        const = float(np.max(D[off] / A[off])) if np.any(off) else 0.0
        measured = tu_minus_identity_norm(M, p)
    return SchurReport(gamma, rows, cols, C1, C2, ss.r, path, bound, const, measured)


def separated_series(ss, m, b, c):
    """``w_m^c sum_{k != m} w_k^b / [a_m, a_k]^(b+c)``."""
    if b <= ss.n - 1 or c <= 0:
        raise DomainError(f"need b > n-1 and c > 0 (b={b}, c={c})")
    a = ss.points
    w = ss.weights()
    others = np.arange(len(ss)) != m
    br = geo.bracket(a[m][None, :], a[others])
    return float(w[m] ** c * np.sum(w[others] ** b / br ** (b + c)))


def tail_integral(n, b, c, a, r, rule=None):
    """``w_a^c int_{rho(y, a) >= r} (1-|y|^2)^b / [a, y]^(n+b+c) d nu(y)``.

    The excluded pseudo-ball is an indicator on a ball rule with weight
    exponent ``b``; the call is refused when fewer than ``MIN_TRANSITION_NODES``
    nodes lie within ``TRANSITION_WIDTH`` of its boundary in ``rho``.
    """
    if b <= -1 or c <= 0:
        raise DomainError(f"need b > -1 and c > 0 (b={b}, c={c})")
    if not 0.0 <= r < 1.0:
        raise DomainError(f"radius r={r} must lie in [0, 1)")
    a = geo.as_points(a)
    if rule is None:
        nr, ns = peak_orders(n, float(np.sqrt(geo.norm_sq(a))), tol=1e-10)
        sphere = max(default_sphere_order(n), ns) if n == 2 else default_sphere_order(n)
        if max(200, nr) * sphere > MAX_RULE_NODES:
            raise ResolutionError(f"tail integral at |a|={np.sqrt(geo.norm_sq(a)):.6g} needs more than "
                                  f"{MAX_RULE_NODES} nodes")
        rule = build_ball_rule(n, b, max(200, nr), sphere)
    elif abs(rule.alpha - b) > 1e-12:
        raise DomainError("tail integral needs a rule whose weight exponent equals b")
    total = 0.0
    transition = 0
    wa = float(geo.one_minus_norm_sq(a))
    for pts, wts in rule.chunks(1 << 17):
        d = geo.rho(pts, np.broadcast_to(a, pts.shape))
        keep = d >= r
        transition += int(np.count_nonzero(np.abs(d - r) < TRANSITION_WIDTH))
        br = geo.bracket(pts[keep], np.broadcast_to(a, pts[keep].shape))
        total += float(np.sum(wts[keep] * br ** (-(n + b + c))))
    if r > 0 and transition < MIN_TRANSITION_NODES:
        raise ResolutionError(f"only {transition} quadrature nodes resolve the excluded pseudo-ball boundary")
    return wa**c * total


def tail_integral_mobius(n, b, c, a, r, radial_order=200, sphere_order=None):
    """Same quantity after ``y = phi_a(z)``: ``int_{|z| >= r} (1-|z|^2)^b [a, z]^(c-b-n) d nu(z)``.

    The integrand is smooth on the annulus, so this serves as an oracle.
    """
    from .quadrature import _gauss_jacobi, zonal_rule

    a = geo.as_points(a)
    t = float(np.sqrt(geo.norm_sq(a)))
    # u = |z|^2 on [r^2, 1] with weight u^(n/2-1) (1-u)^b
    x, w = _gauss_jacobi(int(radial_order), float(b), 0.0)
    lo = r * r
    u = lo + (1.0 - lo) * 0.5 * (1.0 + x)
    w = w * (0.5 * (1.0 - lo)) ** (b + 1.0) * u ** (0.5 * n - 1.0) * 0.5 * n
    rad = np.sqrt(u)
    _, ns = peak_orders(n, t, tol=1e-10)
    zr = zonal_rule(n, max(sphere_order or 0, ns))
    br2 = np.maximum(1.0 - 2.0 * t * rad[:, None] * zr.nodes[None, :] + (t * rad[:, None]) ** 2, 0.0)
    return float(np.sum(w * ((br2 ** (0.5 * (c - b - n))) @ zr.weights)))
