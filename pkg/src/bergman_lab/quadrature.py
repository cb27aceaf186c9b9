"""Quadrature on the unit ball and sphere for the weighted measures ``nu_alpha``.

``nu`` is Lebesgue measure normalized so ``nu(B) = 1`` and
``d nu_alpha = (1-|x|^2)^alpha d nu``.  In polar form with ``u = r^2``::

    int_B f d nu_alpha = (n/2) int_0^1 u^(n/2-1) (1-u)^alpha int_S f(sqrt(u) z) d sigma(z) du

The radial factor is integrated with Gauss-Jacobi nodes in ``u`` so the weight
``(1-u)^alpha`` never gets sampled.  The sphere factor is an equispaced circle
for ``n = 2`` and a recursive product (Gauss-Gegenbauer polar nodes times a
rule on the next lower sphere) for ``n >= 3``; the polar axis is ``e_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betaln, roots_jacobi

from .errors import DomainError, ResolutionError

DEFAULT_RADIAL_ORDER = 200
DEFAULT_SPHERE_ORDER = {2: 512, 3: 48}
#: Largest tensor rule the adaptive builders will produce.
MAX_RULE_NODES = 40_000_000


def default_sphere_order(n):
    return DEFAULT_SPHERE_ORDER.get(n, 16)


def ball_mass(n, alpha):
    """Closed form ``nu_alpha(B) = (n/2) B(n/2, alpha+1)``."""
    return 0.5 * n * math.exp(betaln(0.5 * n, alpha + 1.0))


def beta_moment(n, alpha, k):
    """Closed form ``int |x|^(2k) d nu_alpha = (n/2) B(n/2 + k, alpha + 1)``."""
    return 0.5 * n * math.exp(betaln(0.5 * n + k, alpha + 1.0))


@lru_cache(maxsize=64)
def _gauss_jacobi(order, a, b):
    t, w = roots_jacobi(order, a, b)
    return t, w


@dataclass(frozen=True)
class RadialRule:
    """Nodes ``r_i`` and weights with ``sum w_i g(r_i) = (n/2) int_0^1 u^(n/2-1)(1-u)^alpha g(sqrt u) du``."""

    nodes: np.ndarray
    weights: np.ndarray
    alpha: float
    n: int
    order: int


@dataclass(frozen=True)
class SphereRule:
    """Nodes on the unit sphere with weights summing to 1 (``sigma(S) = 1``).

    Exact for spherical polynomials of degree ``< order``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    n: int
    order: int


@dataclass(frozen=True)
class ZonalRule:
    """1-D rule for ``int_S g(<z, e_1>) d sigma(z)`` (``nodes`` are values of ``z_1``)."""

    nodes: np.ndarray
    weights: np.ndarray
    n: int
    order: int


def radial_rule(n, alpha, order=DEFAULT_RADIAL_ORDER):
    if alpha <= -1:
        raise DomainError(f"weight exponent alpha={alpha} must exceed -1")
    if n < 2:
        raise DomainError("dimension n must be at least 2")
    if order < 1:
        raise DomainError("radial order must be positive")
    # u = (1 + t)/2, weight (1-t)^alpha (1+t)^(n/2-1)
    t, w = _gauss_jacobi(int(order), float(alpha), 0.5 * n - 1.0)
    u = 0.5 * (1.0 + t)
    scale = 0.5 * n * 2.0 ** (-(0.5 * n - 1.0) - alpha - 1.0)
    idx = np.argsort(u)
    return RadialRule(nodes=np.sqrt(u[idx]), weights=scale * w[idx], alpha=float(alpha), n=n, order=int(order))


def _circle(order):
    theta = 2.0 * np.pi * np.arange(order) / order
    return np.column_stack([np.cos(theta), np.sin(theta)]), np.full(order, 1.0 / order)


def sphere_rule(n, order=None):
    """Product rule on ``S^(n-1)`` exact through degree ``order - 1``.

    ``n >= 4`` works but is experimental (the node count grows like
    ``order^(n-1)``).
    """
    if n < 2:
        raise DomainError("dimension n must be at least 2")
    order = default_sphere_order(n) if order is None else int(order)
    if order < 2:
        raise DomainError("sphere order must be at least 2")
    if n == 2:
        nodes, weights = _circle(order)
        return SphereRule(nodes=nodes, weights=weights, n=2, order=order)
    polar = zonal_rule(n, order)
    sub = sphere_rule(n - 1, order)
    t = polar.nodes[:, None]
    s = np.sqrt(np.maximum(1.0 - t * t, 0.0))
    nodes = np.concatenate(
        [np.broadcast_to(t[:, :, None], (t.shape[0], sub.nodes.shape[0], 1)),
         s[:, :, None] * sub.nodes[None, :, :]], axis=2
    ).reshape(-1, n)
    weights = (polar.weights[:, None] * sub.weights[None, :]).ravel()
    return SphereRule(nodes=nodes, weights=weights, n=n, order=order)


def zonal_rule(n, order=None):
    """Rule for functions on the sphere that depend on ``z_1`` only.

    For ``n = 2`` this is the equispaced circle with ``order`` points folded
    onto ``[0, pi]``; for ``n >= 3`` it is Gauss-Gegenbauer in ``t = z_1``
    with weight ``(1-t^2)^((n-3)/2)``.
    """
    order = default_sphere_order(n) if order is None else int(order)
    if n == 2:
        half = order // 2
        theta = 2.0 * np.pi * np.arange(half + 1) / order
        w = np.full(half + 1, 2.0 / order)
        w[0] = 1.0 / order
        if order % 2 == 0:
            w[-1] = 1.0 / order
        return ZonalRule(nodes=np.cos(theta), weights=w, n=2, order=order)
    lam = 0.5 * (n - 3)
    npol = (order + 1) // 2
    t, w = _gauss_jacobi(int(npol), lam, lam)
    return ZonalRule(nodes=t, weights=w / w.sum(), n=n, order=order)


@dataclass(frozen=True)
class BallRule:
    """Tensor rule for ``int_B f d nu_alpha``; nodes are radial-major."""

    radial: RadialRule
    sphere: SphereRule

    @property
    def n(self):
        return self.radial.n

    @property
    def alpha(self):
        return self.radial.alpha

    @property
    def size(self):
        return self.radial.nodes.size * self.sphere.weights.size

    @property
    def normalization(self):
        """``nu_alpha(B)``; equals 1 when ``alpha = 0``."""
        return float(self.weights.sum())

    @property
    def points(self):
        return (self.radial.nodes[:, None, None] * self.sphere.nodes[None, :, :]).reshape(-1, self.n)

    @property
    def weights(self):
        return (self.radial.weights[:, None] * self.sphere.weights[None, :]).ravel()

    def chunks(self, size=1 << 17):
        """Yield ``(points, weights)`` blocks of whole radial shells."""
        ns = self.sphere.weights.size
        shells = max(1, size // ns)
        for start in range(0, self.radial.nodes.size, shells):
            r = self.radial.nodes[start : start + shells]
            wr = self.radial.weights[start : start + shells]
            pts = (r[:, None, None] * self.sphere.nodes[None, :, :]).reshape(-1, self.n)
            w = (wr[:, None] * self.sphere.weights[None, :]).ravel()
            yield pts, w


def build_ball_rule(n, alpha, radial_order=DEFAULT_RADIAL_ORDER, sphere_order=None):
    if alpha <= -1:
        raise DomainError(f"weight exponent alpha={alpha} must exceed -1")
    return BallRule(radial=radial_rule(n, alpha, radial_order), sphere=sphere_rule(n, sphere_order))


def _checked(values, points):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"integrand is not finite at node {np.array2string(points[i], precision=17)}")
    return values


def integrate_ball(f, rule, chunk=1 << 17):
    """``sum w_i f(x_i)``; ``f`` maps an ``(m, n)`` array of points to ``m`` values."""
    total = 0.0
    for pts, w in rule.chunks(chunk):
        total += float(np.sum(w * _checked(f(pts), pts)))
    return total


def integrate_sphere(g, rule):
    pts = rule.nodes
    return float(np.sum(rule.weights * _checked(g(pts), pts)))


# ---------------------------------------------------------------------------
# axis-symmetric integrals


def integrate_axis_zonal(g, radial, zonal, chunk=1 << 21):
    """``int_B g(|y|, cos angle(y, e_1)) d nu_alpha(y)`` on a radial x zonal grid.

    ``g(r, c)`` receives broadcastable arrays ``r[:, None]`` and ``c[None, :]``.
    """
    rows = max(1, chunk // zonal.nodes.size)
    total = 0.0
    for start in range(0, radial.nodes.size, rows):
        r = radial.nodes[start : start + rows, None]
        vals = np.asarray(g(r, zonal.nodes[None, :]), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DomainError("axis-zonal integrand is not finite on the grid")
        total += float(np.sum(radial.weights[start : start + rows] * (vals @ zonal.weights)))
    return total


def peak_orders(n, xnorm, tol=1e-13, radial_base=64, sphere_base=64):
    """Orders resolving kernels that peak like ``[x, y]^-k`` for ``|x| = xnorm``.

    The radial integrand has a singularity at ``u = 1/|x|^2`` and the angular
    one at distance ~``1 - |x|`` from the real axis; the orders follow the
    Bernstein-ellipse / trapezoid convergence rates of those singularities.
    Raises ``ResolutionError`` when either exceeds ``MAX_RULE_NODES``.
    """
    xnorm = float(min(max(xnorm, 0.0), 1.0 - 1e-12))
    delta = max(1.0 - xnorm * xnorm, 1e-12)
    log_tol = math.log(1.0 / tol)
    radial = max(radial_base, math.ceil(log_tol / (2.0 * math.sqrt(delta))))
    if n == 2:
        angular = max(sphere_base, math.ceil(log_tol / max(-math.log(max(xnorm, 1e-300)), 1e-12)))
    else:
        angular = max(sphere_base, math.ceil(log_tol / max(1.0 - xnorm, 1e-12)))
    if max(radial, angular) > MAX_RULE_NODES:
        raise ResolutionError(f"resolving |x|={xnorm} needs order {max(radial, angular)}, "
                              f"over the cap of {MAX_RULE_NODES}")
    return radial, angular


def axis_integral(g, n, alpha, xnorm, tol=1e-13, check=True, rel_change=1e-4):
    """Axis-zonal integral with peak-adapted orders and an order-doubling check.

    Orders keep doubling until two successive values agree to ``rel_change``
    (relative); ``ResolutionError`` is raised when that would exceed the node cap.
    """
    nr, ns = peak_orders(n, xnorm, tol)
    if nr * ns > MAX_RULE_NODES:
        raise ResolutionError(f"quadrature at |x|={xnorm} needs {nr} x {ns} nodes, over the cap")
    value = integrate_axis_zonal(g, radial_rule(n, alpha, nr), zonal_rule(n, ns))
    if not check:
        return value
    while True:
        fine_zonal = zonal_rule(n, 2 * ns)
        if 2 * nr * fine_zonal.nodes.size > MAX_RULE_NODES:
            raise ResolutionError(
                f"quadrature at |x|={xnorm} not converged within {MAX_RULE_NODES} nodes")
        fine = integrate_axis_zonal(g, radial_rule(n, alpha, 2 * nr), fine_zonal)
        change = abs(fine - value) / max(abs(fine), 1e-300)
        if change <= rel_change:
            return fine
        nr, ns, value = 2 * nr, 2 * ns, fine


def tau_ball_volume(n, t, order=400):
    """Invariant volume ``tau(B_t) = int_{|x|<t} (1-|x|^2)^-n d nu``.

    With ``u = t^2 v`` this is ``(n/2) t^n int_0^1 v^(n/2-1) (1 - t^2 v)^-n dv``,
    done with Gauss-Jacobi nodes for the ``v^(n/2-1)`` factor.
    """
    if not 0.0 <= t < 1.0:
        raise DomainError(f"radius t={t} must lie in [0, 1)")
    if t == 0.0:
        return 0.0
    s, w = _gauss_jacobi(int(order), 0.0, 0.5 * n - 1.0)
    v = 0.5 * (1.0 + s)
    w = w * 2.0 ** (-(0.5 * n - 1.0) - 1.0)
    return float(0.5 * n * t**n * np.sum(w * (1.0 - t * t * v) ** (-n)))


# ---------------------------------------------------------------------------
# the sphere/ball integrals I_c and J_{b,c}


def sphere_power_integral(n, c, t, check=True, rel_change=1e-4):
    """``I_c(x) = int_S |x - z|^-(n-1+c) d sigma(z)`` at ``x = t e_1``."""
    g = lambda z: np.maximum(1.0 - 2.0 * t * z + t * t, 0.0) ** (-0.5 * (n - 1 + c))
    _, ns = peak_orders(n, t)
    coarse = zonal_rule(n, ns)
    value = float(np.sum(coarse.weights * g(coarse.nodes)))
    if check:
        fine = zonal_rule(n, 2 * ns)
        refined = float(np.sum(fine.weights * g(fine.nodes)))
        change = abs(refined - value) / abs(refined)
        if change > rel_change:
            raise ResolutionError(f"I_c not converged at |x|={t}: relative change {change:.2e}")
        value = refined
    return value


def ball_power_integral(n, b, c, t, check=True):
    """``J_{b,c}(x) = int_B (1-|y|^2)^b / [x, y]^(n+b+c) d nu(y)`` at ``x = t e_1``."""
    k = 0.5 * (n + b + c)
    g = lambda r, z: np.maximum(1.0 - 2.0 * t * r * z + (t * r) ** 2, 0.0) ** (-k)
    return axis_integral(g, n, b, t, check=check)


def envelope(c, t):
    """Predicted growth of ``I_c`` and ``J_{b,c}`` at ``|x| = t``."""
    d = (1.0 - t) * (1.0 + t)
    if c > 0:
        return d ** (-c)
    if c == 0:
        return np.log(1.0 / d)
    return np.ones_like(np.asarray(d, dtype=float))


@dataclass(frozen=True)
class IJReport:
    n: int
    b: float
    c: float
    radii: np.ndarray
    I: np.ndarray
    J: np.ndarray
    envelope: np.ndarray
    regime: str
    I_slope: float
    J_slope: float
    I_ratio: float  # max/min of I / envelope-like normalizer over the sweep
    J_ratio: float
    tolerance: float

    @property
    def passed(self):
        if self.regime == "power":
            return abs(self.I_slope + self.c) <= self.tolerance and abs(self.J_slope + self.c) <= self.tolerance
        if self.regime == "log":
            return (abs(self.I_slope) <= self.tolerance and abs(self.J_slope) <= self.tolerance
                    and self.I_ratio < 10.0 and self.J_ratio < 10.0)
        return self.I_ratio < 10.0 and self.J_ratio < 10.0


def verify_I_J(n, b, c, x_radii, check=True, tolerance=0.05):
    """Tabulate ``I_c`` and ``J_{b,c}`` along ``x = t e_1`` and compare with the envelope.

    ``c > 0``: fitted log-log slopes against ``1-|x|^2`` must be ``-c``.
    ``c = 0``: the values over ``1 + log 1/(1-|x|^2)`` stay within a factor 10
    and the fitted power exponent is ``0``.  ``c < 0``: max/min over the sweep
    stays below 10.
    """
    from .fitting import fit_exponent

    if b <= -1:
        raise DomainError(f"b={b} must exceed -1")
    radii = np.asarray(x_radii, dtype=float)
    I = np.array([sphere_power_integral(n, c, float(t), check) for t in radii])
    J = np.array([ball_power_integral(n, b, c, float(t), check) for t in radii])
    d = (1.0 - radii) * (1.0 + radii)
    env = envelope(c, radii)
    if c > 0:
        regime = "power"
        norm = env
    elif c == 0:
        regime = "log"
        norm = 1.0 + np.log(1.0 / d)
    else:
        regime = "bounded"
        norm = np.ones_like(d)
    ratio = lambda v: float(np.max(v / norm) / np.min(v / norm))
    slope = lambda v: fit_exponent(d, v).slope if radii.size >= 2 else float("nan")
    return IJReport(n, b, c, radii, I, J, env, regime, slope(I), slope(J), ratio(I), ratio(J), tolerance)


def region_rule(n, alpha, R, radial_order=DEFAULT_RADIAL_ORDER, sphere_order=None):
    """Rule for ``int_{|x| <= R} f d nu_alpha`` with ``R < 1``.

    Gauss-Jacobi in ``u = r^2`` on ``[0, R^2]`` carries ``u^(n/2-1)``; the
    factor ``(1-u)^alpha`` is smooth there and multiplies the weights.
    """
    if not 0.0 < R < 1.0:
        raise DomainError(f"region radius {R} must lie in (0, 1)")
    if alpha <= -1:
        raise DomainError(f"weight exponent alpha={alpha} must exceed -1")
    t, w = _gauss_jacobi(int(radial_order), 0.0, 0.5 * n - 1.0)
    v = 0.5 * (1.0 + t)
    u = R * R * v
    weights = 0.5 * n * R**n * w * 2.0 ** (-(0.5 * n - 1.0) - 1.0) * (1.0 - u) ** alpha
    idx = np.argsort(u)
    radial = RadialRule(nodes=np.sqrt(u[idx]), weights=weights[idx], alpha=float(alpha), n=n,
                        order=int(radial_order))
    return BallRule(radial=radial, sphere=sphere_rule(n, sphere_order))


# ---------------------------------------------------------------------------
# rule cache


def save_rule(path, rule):
    """Store a ball rule: radial rows ``(r, w, 0...)`` then sphere rows ``(z, w)``."""
    from .framing import write_frame

    n = rule.n
    radial = np.zeros((rule.radial.nodes.size, n + 1))
    radial[:, 0] = rule.radial.nodes
    radial[:, 1] = rule.radial.weights
    sphere = np.column_stack([rule.sphere.nodes, rule.sphere.weights])
    header = {"kind": "ball-rule", "n": n, "alpha": float(rule.alpha),
              "radial_order": rule.radial.order, "sphere_order": rule.sphere.order,
              "radial_count": radial.shape[0]}
    write_frame(path, header, np.vstack([radial, sphere]))


def load_rule(path):
    from .errors import FramingError
    from .framing import read_frame

    header, rows = read_frame(path)
    if header.get("kind") != "ball-rule":
        raise FramingError(f"expected a ball-rule cache, found kind={header.get('kind')!r}")
    try:
        n, k = int(header["n"]), int(header["radial_count"])
        alpha = float(header["alpha"])
        ro, so = int(header["radial_order"]), int(header["sphere_order"])
    except (KeyError, ValueError) as exc:
        raise FramingError(f"rule header incomplete: {exc}") from exc
    if rows.shape[1] != n + 1 or rows.shape[0] < k:
        raise FramingError("rule rows do not match the header")
    radial = RadialRule(nodes=rows[:k, 0].copy(), weights=rows[:k, 1].copy(), alpha=alpha, n=n, order=ro)
    sphere = SphereRule(nodes=rows[k:, :n].copy(), weights=rows[k:, n].copy(), n=n, order=so)
    return BallRule(radial=radial, sphere=sphere)
