"""Kernel backends standing in for the reproducing kernel ``R_s(x, y)``.

* ``PowerKernel``: ``[x, y]^-(s+n)``, the majorant used by the estimates.
* ``ZonalHarmonicKernel``: the exact reproducing kernel of the weighted
  harmonic Bergman space for ``n = 2``, as a truncated zonal series whose
  per-degree coefficients are derived by radial quadrature.

Both kernels are invariant under rotations applied to both arguments, so
integrals of ``K(x, .)`` only depend on ``|x|`` and are computed with ``x`` on
the ``e_1`` axis (``axis_eval``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln

from . import geometry as geo
from .errors import DomainError, TruncationWarning
from .fitting import fit_exponent
from .harmonic import HarmonicSeries, horner, to_complex
from .quadrature import axis_integral, radial_rule

LOG_SPACE_THRESHOLD = 1e-3
DEFAULT_K_TRUNC = 256
MAX_K_TRUNC = 40_000
TAIL_WARNING = 1e-10


class KernelBackend:
    """Interface: ``eval``, ``grad1``, ``diagonal``, ``axis_eval``, ``atom_sum``."""

    kind = "abstract"
    s: float
    n: int

    def eval(self, x, y):
        raise NotImplementedError

    def grad1(self, x, y):
        raise NotImplementedError

    def diagonal(self, x):
        raise NotImplementedError

    def axis_eval(self, t, r, c):
        """``K(t e_1, y)`` for ``|y| = r`` and ``cos angle(y, e_1) = c`` (broadcasting)."""
        raise NotImplementedError

    def atom_sum(self, weights, centers, points, chunk=1 << 22):
        """``sum_m weights[m] K(points, centers[m])``."""
        points = geo.as_points(points).reshape(-1, self.n)
        centers = geo.as_points(centers).reshape(-1, self.n)
        weights = np.asarray(weights, dtype=float)
        out = np.zeros(points.shape[0])
        rows = max(1, chunk // max(centers.shape[0], 1))
        for i in range(0, points.shape[0], rows):
            block = self.eval(points[i : i + rows, None, :], centers[None, :, :])
            out[i : i + rows] = block @ weights
        return out


@dataclass(frozen=True)
class PowerKernel(KernelBackend):
    s: float
    n: int = 2
    kind = "power"

    def __post_init__(self):
        if self.s <= -1:
            raise DomainError(f"kernel order s={self.s} must exceed -1")
        if self.n < 2:
            raise DomainError("dimension n must be at least 2")

    @property
    def exponent(self):
        return self.s + self.n

    def _power(self, b):
        b = np.asarray(b, dtype=float)
        small = b < LOG_SPACE_THRESHOLD
        with np.errstate(divide="ignore"):
            logs = -self.exponent * np.log(np.where(small, b, 1.0))
        return np.where(small, np.exp(logs), b ** (-self.exponent) if b.ndim else float(b) ** -self.exponent)

    def eval(self, x, y):
        return self._power(geo.bracket(x, y))

    def grad1(self, x, y):
        x, y = geo.as_points(x), geo.as_points(y)
        b2 = geo.bracket_sq(x, y)
        k = self.exponent
        return (k * b2 ** (-(k + 2) / 2))[..., None] * (y - geo.norm_sq(y)[..., None] * x)

    def diagonal(self, x):
        return geo.one_minus_norm_sq(x) ** (-self.exponent)

    def axis_eval(self, t, r, c):
        b2 = np.maximum(1.0 - 2.0 * t * r * c + (t * r) ** 2, 0.0)
        return b2 ** (-0.5 * self.exponent)


def _zonal_coefficients(alpha, degree):
    """``eps_k / int |x|^(2k) d nu_alpha`` for ``k = 0..degree`` (n = 2).

    The moments come from a Gauss-Jacobi rule exact for ``u^k``, ``k <= degree``.
    """
    rule = radial_rule(2, alpha, degree // 2 + 2)
    u = rule.nodes**2
    k = np.arange(degree + 1)
    with np.errstate(divide="ignore"):
        logu = np.log(u)
    moments = np.exp(k[:, None] * logu[None, :]) @ rule.weights
    eps = np.where(k == 0, 1.0, 2.0)
    return eps / moments


def required_degree(alpha, product, rel=1e-15, kmax=MAX_K_TRUNC):
    """Smallest truncation whose tail at ``|x||y| = product`` is below ``rel`` of the majorant.

    Uses the Beta closed form for sizing only; kernel values use derived coefficients.
    """
    if product <= 0.0:
        return 1
    if product >= 1.0:
        raise DomainError("zonal series diverges for |x||y| >= 1")
    k = np.arange(kmax + 1, dtype=float)
    logt = -betaln(k + 1.0, alpha + 1.0) + k * math.log(product) + np.where(k == 0, 0.0, math.log(2.0))
    terms = np.exp(logt - logt.max())
    tail = np.cumsum(terms[::-1])[::-1]
    ok = np.flatnonzero(tail / tail[0] < rel)
    if ok.size == 0:
        raise DomainError(f"|x||y| = {product} needs more than {kmax} zonal terms")
    return int(max(ok[0], 1))


@dataclass(frozen=True)
class ZonalHarmonicKernel(KernelBackend):
    """Reproducing kernel of the weighted harmonic Bergman space on the disc.

    ``eval(x, y) = Re sum_k a_k (z conj(w))^k`` with ``a_k = eps_k / m_k``,
    ``eps_0 = 1``, ``eps_k = 2`` and ``m_k = int |x|^(2k) d nu_alpha``.
    """

    alpha: float
    n: int = 2
    K_trunc: int = DEFAULT_K_TRUNC
    coeffs: np.ndarray = field(init=False, repr=False, compare=False)
    kind = "zonal"

    def __post_init__(self):
        if self.n != 2:
            raise DomainError("the zonal backend is implemented for n = 2 only")
        if self.alpha <= -1:
            raise DomainError(f"weight alpha={self.alpha} must exceed -1")
        if not 1 <= self.K_trunc <= MAX_K_TRUNC:
            raise DomainError(f"K_trunc must lie in [1, {MAX_K_TRUNC}]")
        object.__setattr__(self, "coeffs", _zonal_coefficients(self.alpha, int(self.K_trunc)))

    @classmethod
    def for_product(cls, alpha, product, rel=1e-15):
        """Kernel truncated so the tail is negligible for ``|x||y| <= product``."""
        return cls(alpha=alpha, K_trunc=max(DEFAULT_K_TRUNC, required_degree(alpha, product, rel)))

    @property
    def s(self):
        return self.alpha

    def _check_tail(self, q):
        qmax = float(np.max(np.abs(q))) if np.size(q) else 0.0
        if qmax == 0.0:
            return
        k = np.arange(self.coeffs.size)
        terms = self.coeffs * np.exp(k * math.log(qmax))
        if terms[-1] > TAIL_WARNING * terms.sum():
            warnings.warn(
                f"zonal series truncated at K={self.K_trunc} is not converged at |x||y|={qmax:.6f}",
                TruncationWarning, stacklevel=3,
            )

    def _series(self, q):
        self._check_tail(q)
        return horner(self.coeffs, q)

    def eval(self, x, y):
        q = to_complex(x) * np.conj(to_complex(y))
        return self._series(q).real

    def grad1(self, x, y):
        z, w = to_complex(x), to_complex(y)
        q = z * np.conj(w)
        self._check_tail(q)
        k = np.arange(1, self.coeffs.size)
        d = np.conj(w) * horner(k * self.coeffs[1:], q)
        return np.stack([d.real, -d.imag], axis=-1)

    def diagonal(self, x):
        return self._series(geo.norm_sq(x) + 0j).real

    def axis_eval(self, t, r, c):
        c = np.clip(c, -1.0, 1.0)
        q = t * r * (c - 1j * np.sqrt(1.0 - c * c))
        return self._series(q).real

    def atom_series(self, weights, centers, chunk=256, check_radius=None):
        """``sum_m weights[m] K(., centers[m])`` as one harmonic series.

        The truncation check runs only when ``check_radius`` (the largest
        ``|x|`` the series will be evaluated at) is given.
        """
        w = np.conj(to_complex(centers)).reshape(-1)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        k = np.arange(self.coeffs.size)
        b = np.zeros(self.coeffs.size, dtype=complex)
        mod = np.abs(w)
        with np.errstate(divide="ignore"):
            logm = np.log(mod)
        for i in range(0, w.size, chunk):
            lm = logm[i : i + chunk, None]
            with np.errstate(invalid="ignore"):
                mags = np.exp(np.where(k[None, :] == 0, 0.0, k[None, :] * lm))
            powers = mags * np.exp(1j * k[None, :] * np.angle(w[i : i + chunk, None]))
            b += weights[i : i + chunk] @ powers
        if w.size and check_radius is not None:
            self._check_tail(np.array([mod.max() * check_radius]))
        return HarmonicSeries(self.coeffs * b)

    def atom_sum(self, weights, centers, points, chunk=None):
        points = np.asarray(points, dtype=float)
        reach = float(np.sqrt(geo.norm_sq(points).max())) if points.size else 0.0
        return self.atom_series(weights, centers, check_radius=reach)(points)


# ---------------------------------------------------------------------------
# estimate verifiers


@dataclass(frozen=True)
class KernelBoundRow:
    radius: float
    c_eval: float
    c_grad: float


@dataclass(frozen=True)
class KernelBoundReport:
    rows: list
    c_emp: float
    c_grad: float
    spread: float  # max relative deviation of the per-stratum constants from their mean

    @property
    def stable(self):
        return np.isfinite(self.c_emp) and self.spread <= 0.10


def sample_pairs(n, radius, count, rng):
    """Pairs with ``|x| = radius`` and ``y`` drawn from three strata.

    A third of the ``y`` are pseudo-hyperbolically close to ``x``, a third lie
    near the sphere and a third are spread over the ball.
    """
    xd = rng.standard_normal((count, n))
    x = radius * xd / np.linalg.norm(xd, axis=1, keepdims=True)
    third = count // 3
    near = np.empty((third, n))
    for i in range(third):
        a = x[i]
        v = rng.standard_normal(n)
        v *= rng.uniform(0.0, 0.5) / np.linalg.norm(v)
        near[i] = geo.mobius(a, v)
    bd = rng.standard_normal((third, n))
    bd /= np.linalg.norm(bd, axis=1, keepdims=True)
    bd *= (1.0 - 10.0 ** -rng.uniform(1.0, 3.0, third))[:, None]
    # put half of the boundary points on the ray through x, where the kernel peaks
    ray = x[third : third + third // 2] / radius
    bd[: ray.shape[0]] = ray * np.linalg.norm(bd[: ray.shape[0]], axis=1, keepdims=True)
    rest = geo.random_ball_points(rng, count - 2 * third, n)
    return x, np.concatenate([near, bd, rest])


def verify_kernel_upper(backend, radii=(0.5, 0.9, 0.99), count=3000, seed=0):
    """Empirical ``max |K(x,y)| [x,y]^(s+n)`` and ``max |grad_x K| [x,y]^(s+n+1)`` per ``|x|`` stratum."""
    rng = np.random.default_rng(seed)
    k = backend.s + backend.n
    rows = []
    for radius in radii:
        x, y = sample_pairs(backend.n, radius, count, rng)
        b = geo.bracket(x, y)
        c_eval = float(np.max(np.abs(backend.eval(x, y)) * b**k))
        g = np.linalg.norm(backend.grad1(x, y), axis=-1)
        c_grad = float(np.max(g * b ** (k + 1)))
        rows.append(KernelBoundRow(float(radius), c_eval, c_grad))
    consts = np.array([r.c_eval for r in rows])
    spread = float(np.max(np.abs(consts - consts.mean())) / consts.mean())
    return KernelBoundReport(rows, float(consts.max()), max(r.c_grad for r in rows), spread)


@dataclass(frozen=True)
class SlopeReport:
    radii: np.ndarray
    values: np.ndarray
    slope: float
    predicted: float
    const_ratio: float  # max/min of values * (1-|x|^2)^-predicted over the sweep

    @property
    def error(self):
        return abs(self.slope - self.predicted)


def _slope_report(radii, values, predicted):
    radii = np.asarray(radii, float)
    values = np.asarray(values, float)
    t = (1.0 - radii) * (1.0 + radii)
    fit = fit_exponent(t, values)
    consts = values * t ** (-predicted)
    return SlopeReport(radii, values, fit.slope, predicted, float(consts.max() / consts.min()))


def verify_diagonal(backend, radii):
    """Fit the diagonal's growth; the prediction is ``-(s+n)``."""
    radii = np.asarray(radii, float)
    pts = np.zeros((radii.size, backend.n))
    pts[:, 0] = radii
    return _slope_report(radii, backend.diagonal(pts), -(backend.s + backend.n))


def _check_int_power(backend, p, alpha):
    excess = p * (backend.s + backend.n) - (alpha + backend.n)
    if excess <= 0:
        raise DomainError(
            f"the integral-power estimate needs p(s+n) > alpha+n; got p(s+n)-(alpha+n) = {excess}"
        )
    return excess


def int_power(backend, p, alpha, radius, check=True):
    """``int |K(x, y)|^p d nu_alpha(y)`` at ``|x| = radius``."""
    return axis_integral(lambda r, c: np.abs(backend.axis_eval(radius, r, c)) ** p,
                         backend.n, alpha, radius, check=check)


def verify_int_power(backend, p, alpha, radii, check=True):
    """Fit the growth of ``int |K(x,.)|^p d nu_alpha``; prediction ``-(p(s+n) - (alpha+n))``."""
    excess = _check_int_power(backend, p, alpha)
    vals = [int_power(backend, p, alpha, float(t), check) for t in radii]
    return _slope_report(radii, vals, -excess)


def kernel_norm(backend, a, p, alpha, rule=None):
    """``||K(., a)||`` in ``L^p(nu_alpha)`` (a quasi-norm for ``p < 1``).

    Without a ``rule`` the rotation invariance of the kernel is used to put
    ``a`` on the axis, where peak-adapted quadrature applies.
    """
    _check_int_power(backend, p, alpha)
    a = geo.as_points(a)
    if rule is not None:
        from .quadrature import integrate_ball

        val = integrate_ball(lambda y: np.abs(backend.eval(y, a[None, :])) ** p, rule)
    else:
        val = int_power(backend, p, alpha, float(np.sqrt(geo.norm_sq(a))))
    return val ** (1.0 / p)


def verify_h_harmonic(backend, probes, y, h=None):
    """Max over probes of ``|Delta_h K(., y)(x)| / |K(x, y)|`` by finite differences."""
    y = geo.as_points(y)
    worst = 0.0
    for x in geo.as_points(probes).reshape(-1, backend.n):
        step = h if h is not None else 1e-3 * (1.0 - float(np.sqrt(geo.norm_sq(x))))
        f = lambda pts: backend.eval(pts, np.broadcast_to(y, pts.shape))
        lap = geo.laplacian_h(f, x, step)
        worst = max(worst, abs(lap) / abs(float(f(x[None, :])[0])))
    return worst
