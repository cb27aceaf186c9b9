"""Atomic decomposition ``f = U lambda`` by Neumann inversion of ``U T-hat``.

Iteration: ``e_0 = f``, ``lambda += T-hat e_j``, ``e_{j+1} = e_j - U T-hat e_j``.
Since ``e_j = f - U lambda_j`` at every step, residuals are kept as ``f``
minus an exact atom combination (a single harmonic series for the zonal
backend).

Residual norms are measured on ``|x| <= norm_radius`` (default 0.8).  A
finite lattice in ``|x| <= R_max`` cannot synthesize the part of ``f`` near
the sphere, so the full-ball residual stalls at the truncation level while
the compact-region residual keeps contracting.  ``norm_radius = 1`` selects
the full ball.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import DomainError, NonContractiveError
from .kernels import ZonalHarmonicKernel, int_power
from .operators import (
    AtomCombination,
    CoefSeq,
    as_series,
    evaluate,
    lp_norm,
    norm_rule,
)
from .quadrature import beta_moment, build_ball_rule, radial_rule, region_rule

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
DEFAULT_NORM_RADIUS = 0.8
#: Consecutive non-decreasing steps that abort the iteration.
STALL_LIMIT = 3


def probe_grid(radius=0.8, rings=41, count=128):
    """Polar grid on ``|x| <= radius`` (n = 2) used for reconstruction errors."""
    r = np.linspace(0.0, radius, rings)
    t = 2.0 * np.pi * np.arange(count) / count
    pts = np.stack([np.outer(r, np.cos(t)), np.outer(r, np.sin(t))], axis=-1)
    return pts.reshape(-1, 2)


def compact_probes(n, radius=0.8, count=4000, seed=7):
    if n == 2:
        return probe_grid(radius)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.random(count)[:, None] ** (1.0 / n)


def residual_rule(n, alpha, norm_radius, degree=0, radial_order=200, sphere_order=None):
    """Rule for residual norms: compact region for ``norm_radius < 1``, else the full ball."""
    if norm_radius >= 1.0:
        return norm_rule(n, alpha, degree, radial_order, sphere_order)
    if n == 2:
        sphere_order = max(sphere_order or 512, 2 * degree + 2)
    return region_rule(n, alpha, norm_radius, max(radial_order, degree // 2 + 2), sphere_order)


@dataclass(frozen=True)
class _Residual:
    """``f - sum coeffs[m] K(., centers[m])`` for backends without a series form."""

    f: object
    backend: object
    coeffs: np.ndarray
    centers: np.ndarray

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        flat = points.reshape(-1, points.shape[-1])
        out = evaluate(self.f, flat) - self.backend.atom_sum(self.coeffs, self.centers, flat)
        return out.reshape(shape)


@dataclass
class DecompositionReport:
    lam: CoefSeq
    residual_norms: list
    contraction_estimates: list
    reconstruction_error: float
    f_norm: float
    f_ball_norm: float
    converged: bool
    tol: float
    norm_radius: float
    atom_coeffs: np.ndarray = field(repr=False, default=None)

    @property
    def iterations(self):
        return len(self.residual_norms) - 1

    @property
    def mean_ratio(self):
        return float(np.mean(self.contraction_estimates)) if self.contraction_estimates else 0.0

    @property
    def strictly_decreasing(self):
        return bool(np.all(np.diff(self.residual_norms) < 0))

    def relative_residuals(self):
        if self.f_norm == 0:
            return [0.0 for _ in self.residual_norms]
        return [v / self.f_norm for v in self.residual_norms]

    def iteration_rows(self):
        rel = self.relative_residuals()
        ratios = [float("nan")] + list(self.contraction_estimates)
        return [(j, self.residual_norms[j], rel[j], ratios[j]) for j in range(len(rel))]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual_norm", "relative_residual", "ratio"])
        for j, v, rel, q in self.iteration_rows():
            w.writerow([j, f"{v:.17g}", f"{rel:.17g}", f"{q:.17g}"])
        return buf.getvalue()


def _check_regime(sp, backend, experimental):
    sp.require_condition()
    if abs(backend.s - sp.s) > 1e-12 or backend.n != sp.n:
        raise DomainError(f"backend order s={backend.s}, n={backend.n} does not match the space")
    if not isinstance(backend, ZonalHarmonicKernel) and not experimental:
        raise DomainError("decomposition needs the reproducing zonal backend (n = 2); "
                          "other backends run only in experimental mode")


def _neumann(f, ss, masses, sp, backend, sample_scale, atom_scale, tol, max_iter, norm_radius,
             rule=None, probes=None, experimental=False):
    """Shared engine: coefficients ``mu`` with atoms ``mu_m atom_scale_m K(., a_m)``.

    ``sample_scale`` turns point values into ``mu``; ``U T-hat`` is the same
    for every pair whose product of scales equals the plain one.
    """
    _check_regime(sp, backend, experimental)
    if abs(masses.s - sp.s) > 1e-12:
        raise DomainError("cell masses were computed for a different s")
    a = ss.points
    p = sp.p
    series_f = as_series(f) if isinstance(backend, ZonalHarmonicKernel) else None
    degree = series_f.degree if series_f is not None else 0
    if series_f is not None:
        degree = max(degree, backend.K_trunc)
    if rule is None:
        rule = residual_rule(sp.n, sp.alpha, norm_radius, degree)
    probes = compact_probes(sp.n, min(norm_radius, 0.8)) if probes is None else probes

    f_norm = lp_norm(f, p, rule)
    f_ball_norm = lp_norm(f, p, norm_rule(sp.n, sp.alpha, series_f.degree if series_f is not None else 0))
    mu = np.zeros(len(ss))
    coeffs = np.zeros(len(ss))
    if f_norm == 0.0:
        return DecompositionReport(CoefSeq(mu, p), [0.0], [], 0.0, 0.0, f_ball_norm, True, tol,
                                   norm_radius, coeffs)

    # quasi-norm accounting for p < 1: ratios of ||e||^p
    power = min(p, 1.0)
    e = series_f if series_f is not None else f
    norms = [f_norm]
    ratios = []
    stalls = 0
    converged = False
    for _ in range(max_iter):
        step = evaluate(e, a) * sample_scale
        mu = mu + step
        c = step * atom_scale
        coeffs = coeffs + c
        if series_f is not None:
            e = e - backend.atom_series(c, a)
        else:
            e = _Residual(f, backend, coeffs, a)
        norms.append(lp_norm(e, p, rule))
        q = (norms[-1] / norms[-2]) ** power if norms[-2] > 0 else 0.0
        ratios.append(q)
        if norms[-1] <= tol * f_norm:
            converged = True
            break
        stalls = stalls + 1 if q >= 1.0 else 0
        if stalls >= STALL_LIMIT:
            raise NonContractiveError(
                f"residual ratio {q:.4f} >= 1 for {STALL_LIMIT} consecutive iterations "
                f"(lattice r={ss.r}); the separation is too coarse", q)

    synth = AtomCombination(backend, coeffs, a.copy())
    recon = synth.as_series()(probes) if series_f is not None else synth(probes)
    err = float(np.max(np.abs(evaluate(f, probes) - recon)))
    return DecompositionReport(CoefSeq(mu, p), norms, ratios, err, f_norm, f_ball_norm, converged,
                               tol, norm_radius, coeffs)


def _plain_scales(ss, masses, sp):
    w = ss.weights()
    return w ** (sp.sample_exponent - (sp.s + sp.n)) * masses.masses, w ** sp.atom_exponent


def decompose(f, ss, masses, sp, backend, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
              norm_radius=DEFAULT_NORM_RADIUS, rule=None, probes=None, experimental=False):
    """Coefficients ``lambda`` with ``f ~ U lambda`` on the lattice ``ss``.

    ``masses`` are the cell masses for ``nu_s``.  Stops when the residual
    norm on ``|x| <= norm_radius`` falls to ``tol`` times that of ``f``.
    """
    sample, atom = _plain_scales(ss, masses, sp)
    return _neumann(f, ss, masses, sp, backend, sample, atom, tol, max_iter, norm_radius,
                    rule, probes, experimental)


def atom_norms(backend, points, p, alpha):
    """``||K(., a_m)||`` in ``L^p(nu_alpha)`` for every ``a_m``.

    For the zonal backend and ``p = 2`` this is the exact coefficient sum
    ``a_0^2 m_0 + (1/2) sum a_k^2 |a|^(2k) m_k``; otherwise the kernel's
    rotation invariance reduces each norm to an axis integral per radius.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rad = np.sqrt(geo.norm_sq(points))
    if isinstance(backend, ZonalHarmonicKernel) and p == 2:
        K = backend.coeffs.size - 1
        rr = radial_rule(2, alpha, K // 2 + 2)
        k = np.arange(K + 1)
        with np.errstate(divide="ignore"):
            logu = np.log(rr.nodes**2)
        moments = np.exp(k[:, None] * logu[None, :]) @ rr.weights
        c2 = backend.coeffs**2 * moments * np.where(k == 0, 1.0, 0.5)
        with np.errstate(divide="ignore"):
            logr2 = np.log(rad**2)
        pw = np.exp(np.where(k[None, :] == 0, 0.0, k[None, :] * logr2[:, None]))
        return np.sqrt(pw @ c2)
    uniq, inv = np.unique(np.round(rad, 15), return_inverse=True)
    vals = np.array([int_power(backend, p, alpha, float(t)) ** (1.0 / p) for t in uniq])
    return vals[inv]


def decompose_normalized(f, ss, masses, sp, backend, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                         norm_radius=DEFAULT_NORM_RADIUS, rule=None, probes=None,
                         experimental=False, norms=None):
    """Same engine with atoms ``K(., a_m) / ||K(., a_m)||``.

    The sampling is rescaled by ``||K(., a_m)|| w_m^(s+n-(alpha+n)/p)`` so the
    composition ``U T-hat`` is unchanged; the returned ``lam`` holds the
    coefficients of the normalized atoms.
    """
    sample, atom = _plain_scales(ss, masses, sp)
    if norms is None:
        norms = atom_norms(backend, ss.points, sp.p, sp.alpha)
    return _neumann(f, ss, masses, sp, backend, sample * atom * norms, 1.0 / norms, tol, max_iter,
                    norm_radius, rule, probes, experimental)


def verify_norm_equivalence(reports):
    """``(c_low, c_high)`` bounding ``||lambda||_p / ||f||`` over converged reports."""
    reports = list(reports)
    if len(reports) < 5:
        raise DomainError("norm equivalence needs at least 5 decompositions")
    ratios = []
    for rep in reports:
        if not rep.converged:
            raise NonContractiveError("a decomposition in the family did not converge",
                                      rep.contraction_estimates[-1] if rep.contraction_estimates else math.nan)
        if rep.f_ball_norm == 0:
            raise DomainError("the zero function is excluded from the norm-equivalence family")
        ratios.append(rep.lam.norm() / rep.f_ball_norm)
    return float(min(ratios)), float(max(ratios))


def discretization_contraction(ss, cells, masses, sp, backend, functions, rule=None):
    """``max ||D f|| / ||f||`` over ``functions`` (zonal backend, p = 2 full-ball norms).

    ``D f = sum_{owned nodes y} w_y f(y) K(., y) - sum_m f(a_m) nu_s(E_m) K(., a_m)``
    is the Riemann-sum error of ``U T-hat`` against ``P_s`` restricted to the
    covered region, so truncation of the lattice does not enter.  Its size
    tracks how fine the cells are.
    """
    if not isinstance(backend, ZonalHarmonicKernel):
        raise DomainError("the discretization contraction is computed for the zonal backend")
    if rule is None:
        rule = build_ball_rule(ss.n, sp.s)
    owners = np.concatenate([cells.owner(pts) for pts, _ in rule.chunks()])
    ok = owners >= 0
    nodes, weights = rule.points[ok], rule.weights[ok]
    k = np.arange(backend.K_trunc + 1)
    moments = np.array([beta_moment(2, sp.alpha, int(j)) for j in k])
    worst = 0.0
    for f in functions:
        exact = backend.atom_series(evaluate(f, nodes) * weights, nodes)
        discrete = backend.atom_series(evaluate(f, ss.points) * masses.masses, ss.points)
        series = as_series(f)
        if series is None:
            raise DomainError("discretization contraction needs harmonic-series test functions")
        fn = series.l2_norm_sq(moments)
        worst = max(worst, math.sqrt((exact - discrete).l2_norm_sq(moments) / fn))
    return worst


def atom_tail_profile(report, backend, ss, radii, probes):
    """Sup on ``probes`` of the atoms with ``|a_m| > t`` for each ``t`` in ``radii``."""
    rad = np.sqrt(geo.norm_sq(ss.points))
    out = []
    for t in radii:
        sel = rad > t
        if not np.any(sel):
            out.append(0.0)
            continue
        comb = AtomCombination(backend, report.atom_coeffs[sel], ss.points[sel])
        vals = comb.as_series()(probes) if isinstance(backend, ZonalHarmonicKernel) else comb(probes)
        out.append(float(np.max(np.abs(vals))))
    return out


def empirical_r0(results):
    """Smallest tested ``r`` whose decomposition failed to contract, or ``None``.

    ``results`` maps ``r`` to ``True`` (converged) or ``False``.
    """
    failed = sorted(r for r, ok in results.items() if not ok)
    return failed[0] if failed else None

