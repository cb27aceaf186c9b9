"""Hyperbolic-ball geometry: bracket, Moebius involutions, pseudo-hyperbolic metric.

All functions broadcast over leading axes; the last axis holds the ``n``
coordinates of a point.  Points are plain float arrays, there is no point
class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InternalInconsistencyError

#: Radicands above this negative value are treated as rounding and clamped to 0.
RADICAND_CLAMP = -1e-12
#: Default one-sided slack for sampled inequality checks.
INEQUALITY_SLACK = 1e-9
MIN_FD_STEP = 1e-8


def as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise DomainError("a point needs at least one coordinate axis")
    return x


def norm_sq(x):
    x = as_points(x)
    return np.einsum("...i,...i->...", x, x)


def one_minus_norm_sq(x):
    """``1 - |x|^2`` evaluated as ``(1-|x|)(1+|x|)``."""
    r = np.sqrt(norm_sq(x))
    return (1.0 - r) * (1.0 + r)


def _check_dims(x, y):
    if x.shape[-1] != y.shape[-1]:
        raise DomainError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")


def _check_interior(x, name="x"):
    if np.any(norm_sq(x) >= 1.0):
        raise DomainError(f"{name} must lie in the open unit ball")


def _wedge_sq(x, y):
    # |x|^2 |y|^2 - <x,y>^2 as a sum of squares (Lagrange identity)
    n = x.shape[-1]
    out = np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
    for i in range(n):
        for j in range(i + 1, n):
            out = out + (x[..., i] * y[..., j] - x[..., j] * y[..., i]) ** 2
    return out


def bracket_sq(x, y):
    x, y = as_points(x), as_points(y)
    _check_dims(x, y)
    if np.any(norm_sq(x) > 1.0 + 1e-12) or np.any(norm_sq(y) > 1.0 + 1e-12):
        raise DomainError("bracket needs |x| <= 1 and |y| <= 1")
    # 1 - 2<x,y> + |x|^2|y|^2 rearranged as (1 - <x,y>)^2 + (|x|^2|y|^2 - <x,y>^2)
    ip = np.einsum("...i,...i->...", x, y)
    rad = (1.0 - ip) ** 2 + _wedge_sq(x, y)
    if np.any(rad < RADICAND_CLAMP):
        raise InternalInconsistencyError(f"negative bracket radicand {np.min(rad):.3e}")
    return np.maximum(rad, 0.0)


def bracket(x, y):
    """``[x, y] = sqrt(1 - 2<x,y> + |x|^2 |y|^2)`` for points of the closed ball."""
    return np.sqrt(bracket_sq(x, y))


def _mobius(a, x, bracket_fn):
    a, x = as_points(a), as_points(x)
    d = x - a
    dd = np.einsum("...i,...i->...", d, d)[..., None]
    oma = one_minus_norm_sq(a)[..., None]
    return (a * dd + oma * (a - x)) / (bracket_fn(x, a)[..., None] ** 2)


def mobius(a, x):
    """The involution ``phi_a`` of the ball exchanging ``a`` and ``0``."""
    a, x = as_points(a), as_points(x)
    _check_dims(a, x)
    _check_interior(a, "a")
    _check_interior(x, "x")
    return _mobius(a, x, bracket)


def _rho(a, b, bracket_fn):
    a, b = as_points(a), as_points(b)
    return np.sqrt(norm_sq(a - b)) / bracket_fn(a, b)


def rho(a, b):
    """Pseudo-hyperbolic distance ``|a - b| / [a, b]``."""
    a, b = as_points(a), as_points(b)
    _check_dims(a, b)
    _check_interior(a, "a")
    _check_interior(b, "b")
    return _rho(a, b, bracket)


@dataclass(frozen=True)
class EuclideanBall:
    center: np.ndarray
    radius: float

    def contains(self, x):
        x = as_points(x)
        return norm_sq(x - self.center) < self.radius**2


def pseudo_ball(a, r):
    """The pseudo-hyperbolic ball ``E_r(a)`` as a Euclidean ball."""
    a = as_points(a)
    if a.ndim != 1:
        raise DomainError("pseudo_ball takes a single center")
    _check_interior(a, "a")
    if not 0.0 < r < 1.0:
        raise DomainError(f"radius r={r} must lie in (0, 1)")
    a2 = float(norm_sq(a))
    denom = 1.0 - a2 * r * r
    center = (1.0 - r * r) * a / denom
    radius = float(one_minus_norm_sq(a)) * r / denom
    return EuclideanBall(center=center, radius=radius)


def jacobian_magnitude(a, x):
    """``|J_phi_a(x)| = (1-|phi_a(x)|^2)^n / (1-|x|^2)^n``."""
    a, x = as_points(a), as_points(x)
    _check_dims(a, x)
    _check_interior(a, "a")
    _check_interior(x, "x")
    n = x.shape[-1]
    # 1-|phi_a(x)|^2 = (1-|a|^2)(1-|x|^2)/[x,a]^2, so the ratio collapses
    return (one_minus_norm_sq(a) / bracket_sq(x, a)) ** n


def _fd_step(a, h):
    if h is None:
        h = 1e-5 * (1.0 - float(np.sqrt(norm_sq(a))))
    if h < MIN_FD_STEP:
        raise DomainError(f"finite-difference step {h:.3e} underflows (min {MIN_FD_STEP:.0e})")
    if np.sqrt(norm_sq(a)) + h >= 1.0:
        raise DomainError("finite-difference stencil leaves the ball")
    return h


def euclidean_gradient(f, a, h=None):
    a = as_points(a)
    h = _fd_step(a, h)
    n = a.shape[-1]
    eye = np.eye(n) * h
    stencil = np.concatenate([a + eye, a - eye])
    vals = np.asarray(f(stencil), dtype=float)
    return (vals[:n] - vals[n:]) / (2.0 * h)


def hyperbolic_gradient(f, a, h=None):
    """``(1-|a|^2) grad f(a)`` with central differences.

    ``f`` maps an ``(m, n)`` array of points to ``m`` values.
    """
    a = as_points(a)
    return float(one_minus_norm_sq(a)) * euclidean_gradient(f, a, h)


def laplacian_h(f, a, h=None):
    """Hyperbolic Laplacian from finite differences.

    Uses ``(1-|a|^2)^2 lap f(a) + 2(n-2)(1-|a|^2)<a, grad f(a)>``.
    """
    a = as_points(a)
    h = _fd_step(a, h)
    n = a.shape[-1]
    eye = np.eye(n) * h
    stencil = np.concatenate([a[None, :], a + eye, a - eye])
    vals = np.asarray(f(stencil), dtype=float)
    center, plus, minus = vals[0], vals[1 : n + 1], vals[n + 1 :]
    lap = np.sum(plus - 2.0 * center + minus) / (h * h)
    grad = (plus - minus) / (2.0 * h)
    w = float(one_minus_norm_sq(a))
    return w * w * lap + 2.0 * (n - 2) * w * float(a @ grad)


# ---------------------------------------------------------------------------
# sampled identity / inequality suite


def random_ball_points(rng, count, n, boundary_fraction=0.5, depth=3.0):
    """Random points of the ball, part of them pushed toward the sphere.

    A ``boundary_fraction`` of the radii is drawn as ``1 - 10**-U(0, depth)``.
    """
    direction = rng.standard_normal((count, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.random(count) ** (1.0 / n)
    deep = rng.random(count) < boundary_fraction
    radius[deep] = 1.0 - 10.0 ** (-rng.uniform(0.0, depth, deep.sum()))
    return direction * radius[:, None]


def _violation(value, lower=None, upper=None, slack=INEQUALITY_SLACK):
    worst = np.zeros_like(value)
    if lower is not None:
        worst = np.maximum(worst, lower - value - slack * np.maximum(1.0, np.abs(lower)))
    if upper is not None:
        worst = np.maximum(worst, value - upper - slack * np.maximum(1.0, np.abs(upper)))
    return worst


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def geometry_suite(n=2, count=10_000, seed=0, slack=INEQUALITY_SLACK, bracket_fn=None):
    """Sampled checks of the bracket/Moebius identities and inequalities.

    Returns a list of ``(name, kind, worst, tolerance)`` rows where ``kind`` is
    ``"identity"`` (``worst`` = max error) or ``"inequality"`` (``worst`` = max
    violation beyond the slack; a row passes when it is 0).
    ``bracket_fn`` swaps in another bracket, used for negative controls.
    """
    br = bracket if bracket_fn is None else bracket_fn
    rng = np.random.default_rng(seed)
    x, y, a, c = (random_ball_points(rng, count, n) for _ in range(4))
    rows = []

    # [x,y]^2 = |x-y|^2 + (1-|x|^2)(1-|y|^2)
    rhs = norm_sq(x - y) + one_minus_norm_sq(x) * one_minus_norm_sq(y)
    rows.append(("bracket_square_identity", "identity", float(np.max(_rel(br(x, y) ** 2, rhs))), 1e-10))
    rows.append(("bracket_symmetry", "identity", float(np.max(_rel(br(x, y), br(y, x)))), 1e-12))

    phi = _mobius(a, x, br)
    lhs = one_minus_norm_sq(phi)
    rhs = one_minus_norm_sq(a) * one_minus_norm_sq(x) / br(x, a) ** 2
    # both sides lie in [0, 1]; relative error is meaningless once 1-|phi|^2 ~ eps
    rows.append(("mobius_identity", "identity", float(np.max(np.abs(lhs - rhs))), 1e-10))

    lhs = br(phi, a) * br(x, a)
    rows.append(("bracket_of_mobius", "identity", float(np.max(_rel(lhs, one_minus_norm_sq(a)))), 1e-10))

    back = _mobius(a, phi, br)
    rows.append(("mobius_involution", "identity", float(np.max(np.linalg.norm(back - x, axis=1))), 1e-10))

    r_ab = _rho(a, y, br)
    r_img = _rho(_mobius(c, a, br), _mobius(c, y, br), br)
    rows.append(("rho_mobius_invariance", "identity", float(np.max(np.abs(r_img - r_ab))), 1e-10))
    rows.append(("rho_is_mobius_norm", "identity",
                 float(np.max(np.abs(np.sqrt(norm_sq(_mobius(a, y, br))) - r_ab))), 1e-10))

    nx, ny = np.sqrt(norm_sq(x)), np.sqrt(norm_sq(y))
    bxy = br(x, y)
    rows.append(("bracket_bounds", "inequality",
                 float(np.max(_violation(bxy, 1.0 - nx * ny, 1.0 + nx * ny, slack))), 0.0))

    rax, rbx, rab = _rho(a, x, br), _rho(y, x, br), _rho(a, y, br)
    lower = np.abs(rax - rbx) / (1.0 - rax * rbx)
    upper = (rax + rbx) / (1.0 + rax * rbx)
    rows.append(("strong_triangle", "inequality", float(np.max(_violation(rab, lower, upper, slack))), 0.0))

    rxy = _rho(x, y, br)
    val = one_minus_norm_sq(x) / bxy
    rows.append(("ratio_bracket_bound", "inequality",
                 float(np.max(_violation(val, 1.0 - rxy, 1.0 + rxy, slack))), 0.0))

    lo, hi = (1.0 - rxy) / (1.0 + rxy), (1.0 + rxy) / (1.0 - rxy)
    val = one_minus_norm_sq(x) / one_minus_norm_sq(y)
    rows.append(("ratio_square_bound", "inequality", float(np.max(_violation(val, lo, hi, slack))), 0.0))

    val = br(x, a) / br(y, a)
    rows.append(("ratio_of_brackets_bound", "inequality", float(np.max(_violation(val, lo, hi, slack))), 0.0))
    return rows


def suite_passed(rows):
    return all(worst <= tol for _, _, worst, tol in rows)
