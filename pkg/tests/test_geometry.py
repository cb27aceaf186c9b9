import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bergman_lab import geometry as geo
from bergman_lab.errors import DomainError, InternalInconsistencyError
from bergman_lab.quadrature import build_ball_rule, integrate_ball


def ball_point(n=2, max_norm=0.99):
    coords = st.lists(st.floats(-1, 1, allow_nan=False), min_size=n, max_size=n)
    radius = st.floats(0, max_norm)

    def make(args):
        c, r = args
        v = np.array(c)
        norm = np.linalg.norm(v)
        return np.zeros(n) if norm < 1e-6 else v / norm * r

    return st.tuples(coords, radius).map(make)


def test_bracket_examples():
    assert geo.bracket(np.zeros(2), np.array([0.3, -0.7])) == pytest.approx(1.0)
    x = np.array([0.5, 0.0])
    assert geo.bracket(x, x) == pytest.approx(0.75)
    assert geo.bracket(np.array([0.6, 0.0]), np.array([0.0, 0.8])) == pytest.approx(np.sqrt(1.2304), rel=1e-12)


def test_bracket_dimension_mismatch():
    with pytest.raises(DomainError):
        geo.bracket(np.zeros(2), np.zeros(3))


def test_bracket_clamps_tiny_negative_and_rejects_large(monkeypatch):
    e = np.array([1.0, 0.0])
    assert geo.bracket(e, e) == 0.0
    with pytest.raises(DomainError):
        geo.bracket(np.array([2.0, 0.0]), np.array([0.5, 0.0]))
    x = np.array([0.5, 0.0])
    monkeypatch.setattr(geo, "_wedge_sq", lambda a, b: np.full(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]), -0.5625 - 0.5e-12))
    assert geo.bracket(x, x) == 0.0
    monkeypatch.setattr(geo, "_wedge_sq", lambda a, b: np.full(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]), -0.6))
    with pytest.raises(InternalInconsistencyError):
        geo.bracket(x, x)


@given(ball_point(), ball_point())
def test_bracket_square_identity(x, y):
    lhs = geo.bracket(x, y) ** 2
    rhs = geo.norm_sq(x - y) + geo.one_minus_norm_sq(x) * geo.one_minus_norm_sq(y)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    b = geo.bracket(x, y)
    assert 1 - nx * ny - 1e-12 <= b <= 1 + nx * ny + 1e-12


def test_mobius_examples():
    a = np.array([0.3, -0.2])
    assert np.allclose(geo.mobius(a, np.zeros(2)), a)
    assert np.allclose(geo.mobius(a, a), 0.0, atol=1e-15)
    phi = geo.mobius(np.array([0.5, 0.0]), np.array([-0.5, 0.0]))
    assert 1 - geo.norm_sq(phi) == pytest.approx(0.36)
    assert np.linalg.norm(phi) == pytest.approx(0.8)


def test_mobius_domain_error():
    with pytest.raises(DomainError):
        geo.mobius(np.array([1.0, 0.0]), np.zeros(2))
    with pytest.raises(DomainError):
        geo.mobius(np.zeros(2), np.array([0.0, 1.2]))


@given(ball_point(), ball_point())
def test_mobius_involution_and_lemma(a, x):
    phi = geo.mobius(a, x)
    assert np.allclose(geo.mobius(a, phi), x, atol=1e-9)
    lhs = geo.bracket(phi, a) * geo.bracket(x, a)
    assert lhs == pytest.approx(geo.one_minus_norm_sq(a), rel=1e-9)


def test_rho_examples():
    a = np.array([0.4, 0.1])
    assert geo.rho(a, a) == 0.0
    assert geo.rho(a, np.zeros(2)) == pytest.approx(np.linalg.norm(a))
    assert geo.rho(np.array([0.5, 0.0]), np.array([-0.5, 0.0])) == pytest.approx(0.8)


@given(ball_point(3, 0.95), ball_point(3, 0.95), ball_point(3, 0.95))
def test_rho_mobius_invariance(a, b, c):
    lhs = geo.rho(geo.mobius(c, a), geo.mobius(c, b))
    assert lhs == pytest.approx(geo.rho(a, b), abs=1e-10)
    assert geo.rho(a, b) == pytest.approx(np.linalg.norm(geo.mobius(a, b)), abs=1e-10)


def test_pseudo_ball_examples(rng):
    ball = geo.pseudo_ball(np.zeros(2), 0.3)
    assert np.allclose(ball.center, 0.0) and ball.radius == pytest.approx(0.3)
    ball = geo.pseudo_ball(np.array([0.5, 0.0]), 0.5)
    assert np.allclose(ball.center, [0.4, 0.0]) and ball.radius == pytest.approx(0.4)
    with pytest.raises(DomainError):
        geo.pseudo_ball(np.zeros(2), 1.0)
    a = np.array([0.6, 0.3])
    ball = geo.pseudo_ball(a, 0.4)
    x = geo.random_ball_points(rng, 1000, 2)
    inside = np.linalg.norm(x - ball.center, axis=1) < ball.radius
    assert np.array_equal(inside, geo.rho(x, np.broadcast_to(a, x.shape)) < 0.4)


def test_jacobian_examples():
    x = np.array([[0.1, 0.7], [-0.4, 0.2]])
    assert np.allclose(geo.jacobian_magnitude(np.zeros(2), x), 1.0)
    assert geo.jacobian_magnitude(np.array([0.5, 0.0]), np.zeros(2)) == pytest.approx(0.5625)


def test_jacobian_change_of_variables():
    rule = build_ball_rule(2, 0.0, 200, 256)
    a = np.array([0.5, 0.2])

    def f(x):
        return 1.0 + x[:, 0] ** 2 + 0.5 * x[:, 1]

    lhs = integrate_ball(lambda x: f(geo.mobius(np.broadcast_to(a, x.shape), x))
                         * geo.jacobian_magnitude(np.broadcast_to(a, x.shape), x), rule)
    assert lhs == pytest.approx(integrate_ball(f, rule), rel=1e-8)


def test_hyperbolic_gradient_examples():
    a = np.array([0.5, 0.0])
    assert np.allclose(geo.hyperbolic_gradient(lambda x: np.full(len(x), 3.0), a), 0.0, atol=1e-8)
    assert np.allclose(geo.hyperbolic_gradient(lambda x: x[:, 0], a), [0.75, 0.0], atol=1e-8)
    with pytest.raises(DomainError):
        geo.hyperbolic_gradient(lambda x: x[:, 0], a, h=1e-9)


def test_hyperbolic_gradient_invariance():
    # for linear f, |grad^h (f o phi_a)(0)| = |grad f(a)| (1-|a|^2)
    a = np.array([0.3, -0.5])
    v = np.array([0.7, 0.2])

    def f(x):
        return x @ v

    def g(x):
        return f(geo.mobius(np.broadcast_to(a, x.shape), x))

    lhs = np.linalg.norm(geo.hyperbolic_gradient(g, np.zeros(2)))
    assert lhs == pytest.approx(np.linalg.norm(v) * geo.one_minus_norm_sq(a), rel=1e-6)


def test_laplacian_examples():
    assert geo.laplacian_h(lambda x: x[:, 0], np.array([0.3, 0.4])) == pytest.approx(0.0, abs=1e-5)
    assert geo.laplacian_h(lambda x: x[:, 0], np.array([0.5, 0.0, 0.0])) == pytest.approx(0.75, rel=1e-5)
    assert geo.laplacian_h(lambda x: np.sum(x**2, axis=1), np.zeros(2)) == pytest.approx(4.0, rel=1e-5)


@pytest.mark.parametrize("n", [2, 3])
def test_geometry_suite_passes(n):
    rows = geo.geometry_suite(n, 10_000, seed=1)
    assert geo.suite_passed(rows), [r for r in rows if r[2] > r[3]]


def test_geometry_suite_detects_corrupted_bracket():
    def bad(x, y):
        return geo.bracket(x, y) * 1.01

    rows = geo.geometry_suite(2, 2000, seed=0, bracket_fn=bad)
    failed = {name for name, _, worst, tol in rows if worst > tol}
    assert "bracket_square_identity" in failed
    assert not geo.suite_passed(rows)
