"""Sampling (T, T-hat), synthesis (U, U-hat) and the integral operators Q_s, P_s.

Weights use ``w_m = 1 - |a_m|^2``:

* ``T f = {f(a_m) w_m^((alpha+n)/p)}``
* ``U lambda = sum lambda_m w_m^(s+n-(alpha+n)/p) K(., a_m)``
* ``T-hat f = {f(a_m) w_m^((alpha+n)/p-(s+n)) nu_s(E_m)}``
* ``U-hat lambda = sum lambda_m w_m^(-(alpha+n)/p) K(., a_m) / K(a_m, a_m)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DomainError, PartitionQualityError, ResolutionError
from .harmonic import HarmonicSeries
from .kernels import PowerKernel, ZonalHarmonicKernel
from .quadrature import build_ball_rule, default_sphere_order

#: Largest tolerated fraction of rule nodes inside ``|y| <= R_max`` left without a cell.
UNCOVERED_LIMIT = 0.01


@dataclass(frozen=True)
class SpaceParams:
    p: float
    alpha: float
    s: float
    n: int = 2

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError(f"exponent p={self.p} must be positive")
        if self.alpha <= -1:
            raise DomainError(f"weight alpha={self.alpha} must exceed -1")
        if self.s <= -1:
            raise DomainError(f"kernel order s={self.s} must exceed -1")
        if self.n < 2:
            raise DomainError("dimension n must be at least 2")

    @property
    def condition_holds(self):
        """``alpha+1 < p(s+1)`` for ``p >= 1``; ``alpha+n < p(s+n)`` for ``p < 1``."""
        if self.p >= 1:
            return self.alpha + 1 < self.p * (self.s + 1)
        return self.alpha + self.n < self.p * (self.s + self.n)

    def require_condition(self):
        if not self.condition_holds:
            rule = "alpha+1 < p(s+1)" if self.p >= 1 else "alpha+n < p(s+n)"
            raise DomainError(f"kernel order too small: synthesis needs {rule} "
                              f"(p={self.p}, alpha={self.alpha}, s={self.s}, n={self.n})")

    @property
    def sample_exponent(self):
        return (self.alpha + self.n) / self.p

    @property
    def atom_exponent(self):
        return self.s + self.n - self.sample_exponent

    @property
    def conjugate(self):
        return np.inf if self.p == 1 else (self.p / (self.p - 1.0) if self.p > 1 else np.nan)


@dataclass(frozen=True)
class CoefSeq:
    values: np.ndarray
    p: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))

    def __len__(self):
        return self.values.size

    def pth_power(self):
        return float(np.sum(np.abs(self.values) ** self.p))

    def norm(self):
        """``(sum |lambda_m|^p)^(1/p)``, a quasi-norm for ``p < 1``."""
        return self.pth_power() ** (1.0 / self.p)

    def __add__(self, other):
        return CoefSeq(self.values + other.values, self.p)

    def __sub__(self, other):
        return CoefSeq(self.values - other.values, self.p)

    def scaled(self, factor):
        return CoefSeq(self.values * factor, self.p)


# ---------------------------------------------------------------------------
# field functions


@dataclass(frozen=True)
class AtomCombination:
    """``sum coeffs[m] K(., centers[m])`` stored exactly."""

    backend: object
    coeffs: np.ndarray
    centers: np.ndarray

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        return self.backend.atom_sum(self.coeffs, self.centers, points.reshape(-1, points.shape[-1])).reshape(shape)

    def as_series(self):
        if not isinstance(self.backend, ZonalHarmonicKernel):
            raise DomainError("only zonal atom combinations collapse to a harmonic series")
        return self.backend.atom_series(self.coeffs, self.centers)


@dataclass(frozen=True)
class TableFunction:
    """Values known only on a fixed list of points."""

    points: np.ndarray
    values: np.ndarray

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        if points.shape == self.points.shape and np.array_equal(points, self.points):
            return self.values
        raise DomainError("a table function can only be evaluated at its own points")


@dataclass(frozen=True)
class CallableField:
    fn: object
    name: str = "callable"

    def __call__(self, points):
        return np.asarray(self.fn(np.asarray(points, dtype=float)), dtype=float)


def as_series(f):
    if isinstance(f, HarmonicSeries):
        return f
    if isinstance(f, AtomCombination):
        return f.as_series()
    return None


def evaluate(f, points):
    return np.asarray(f(np.asarray(points, dtype=float)), dtype=float)


def evaluate_on_rule(f, rule, chunk=1 << 17):
    """Values at the rule's nodes (radial-major order)."""
    series = as_series(f)
    if series is not None and rule.n == 2 and rule.sphere.nodes.shape[0] == rule.sphere.order:
        return series.on_polar_grid(rule.radial.nodes, rule.sphere.order).ravel()
    return np.concatenate([evaluate(f, pts) for pts, _ in rule.chunks(chunk)])


def lp_norm(f, p, rule):
    """``(int |f|^p d nu_alpha)^(1/p)`` with the rule's weight."""
    vals = evaluate_on_rule(f, rule)
    if not np.all(np.isfinite(vals)):
        raise DomainError("function is not finite at some quadrature node")
    return float(np.sum(rule.weights * np.abs(vals) ** p)) ** (1.0 / p)


def norm_rule(n, alpha, degree=0, radial_order=200, sphere_order=None):
    """Ball rule exact for ``|f|^2`` when ``f`` is a harmonic polynomial of ``degree``."""
    sphere = default_sphere_order(n) if sphere_order is None else sphere_order
    return build_ball_rule(n, alpha, max(radial_order, degree // 2 + 2), max(sphere, 2 * degree + 2))


# ---------------------------------------------------------------------------
# sampling and synthesis


def _weights(ss):
    return geo.one_minus_norm_sq(ss.points)


def _check_backend(backend, sp):
    if abs(backend.s - sp.s) > 1e-12 or backend.n != sp.n:
        raise DomainError(f"backend order s={backend.s}, n={backend.n} does not match the space (s={sp.s}, n={sp.n})")


def sample_T(f, ss, sp):
    return CoefSeq(evaluate(f, ss.points) * _weights(ss) ** sp.sample_exponent, sp.p)


def synth_U(lam, ss, sp, backend):
    sp.require_condition()
    _check_backend(backend, sp)
    coeffs = lam.values * _weights(ss) ** sp.atom_exponent
    return AtomCombination(backend, coeffs, ss.points.copy())


def synth_Uhat(lam, ss, sp, backend):
    sp.require_condition()
    _check_backend(backend, sp)
    coeffs = lam.values * _weights(ss) ** (-sp.sample_exponent) / backend.diagonal(ss.points)
    return AtomCombination(backend, coeffs, ss.points.copy())


@dataclass(frozen=True)
class CellMasses:
    """``nu_s(E_m)`` by node ownership under a rule with weight exponent ``s``."""

    masses: np.ndarray
    uncovered_mass: float
    uncovered_fraction: float
    s: float


def cell_masses(cells, s, radial_order=200, sphere_order=None, rule=None):
    """Cell masses for ``nu_s``; raises when more than 1% of nodes inside R_max are unowned."""
    if rule is None:
        rule = build_ball_rule(cells.set.n, s, radial_order, sphere_order)
    elif abs(rule.alpha - s) > 1e-12:
        raise DomainError("cell masses need a rule whose weight exponent equals s")
    masses, unc, frac = cells.masses(rule)
    if frac > UNCOVERED_LIMIT:
        raise PartitionQualityError(f"{100 * frac:.2f}% of quadrature nodes inside R_max are uncovered")
    return CellMasses(masses, unc, frac, float(s))


def sample_That(f, ss, masses, sp):
    if abs(masses.s - sp.s) > 1e-12:
        raise DomainError("cell masses were computed for a different s")
    w = _weights(ss)
    return CoefSeq(evaluate(f, ss.points) * w ** (sp.sample_exponent - (sp.s + sp.n)) * masses.masses, sp.p)


# ---------------------------------------------------------------------------
# integral operators


def _integral_operator(f, kernel_fn, rule, points, check, rel_change=1e-4):
    points = np.atleast_2d(np.asarray(points, dtype=float))

    def apply(r):
        out = np.zeros(points.shape[0])
        for nodes, w in r.chunks(1 << 15):
            fw = evaluate(f, nodes) * w
            out += kernel_fn(points[:, None, :], nodes[None, :, :]) @ fw
        return out

    vals = apply(rule)
    if check:
        fine = build_ball_rule(rule.n, rule.alpha, 2 * rule.radial.order, 2 * rule.sphere.order)
        ref = apply(fine)
        change = np.max(np.abs(ref - vals)) / max(np.max(np.abs(ref)), 1e-300)
        if change > rel_change:
            raise ResolutionError(f"integral operator not converged: relative change {change:.2e} on doubling")
        vals = ref
    return TableFunction(points, vals)


def apply_Qs(f, s, rule, points, check=False):
    """``Q_s f(x) = int f(y) [x, y]^-(s+n) d nu_s(y)`` at ``points``."""
    if s <= -1:
        raise DomainError(f"s={s} must exceed -1")
    if abs(rule.alpha - s) > 1e-12:
        raise DomainError("Q_s needs a rule with weight exponent s")
    kern = PowerKernel(s, rule.n)
    return _integral_operator(f, kern.eval, rule, points, check)


def apply_Ps(f, backend, rule, points, check=False):
    """``P_s f(x) = int f(y) K(x, y) d nu_s(y)`` with a reproducing backend."""
    if abs(rule.alpha - backend.s) > 1e-12:
        raise DomainError("P_s needs a rule with weight exponent s")
    return _integral_operator(f, backend.eval, rule, points, check)


def op_contraction(apply_op, test_set, norm_fn):
    """``max ||apply_op(v)|| / ||v||`` over a finite test family."""
    test_set = list(test_set)
    if not test_set:
        raise DomainError("contraction estimate needs a nonempty test family")
    worst = 0.0
    for v in test_set:
        nv = norm_fn(v)
        if nv > 0:
            worst = max(worst, norm_fn(apply_op(v)) / nv)
    return worst


def t_uhat_matrix(ss, sp, backend):
    """Matrix of ``T U-hat``: entry ``(m, k)`` is ``w_m^e w_k^-e K(a_m, a_k) / K(a_k, a_k)``."""
    sp.require_condition()
    _check_backend(backend, sp)
    a = ss.points
    w = _weights(ss)
    e = sp.sample_exponent
    K = backend.eval(a[:, None, :], a[None, :, :])
    return (w[:, None] ** e) * K * (w[None, :] ** (-e)) / backend.diagonal(a)[None, :]
