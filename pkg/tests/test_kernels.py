import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bergman_lab import geometry as geo
from bergman_lab.errors import DomainError, TruncationWarning
from bergman_lab.fitting import boundary_radii
from bergman_lab.harmonic import HarmonicSeries, monomial
from bergman_lab.kernels import (
    PowerKernel,
    ZonalHarmonicKernel,
    int_power,
    kernel_norm,
    verify_diagonal,
    verify_h_harmonic,
    verify_int_power,
    verify_kernel_upper,
)
from bergman_lab.quadrature import build_ball_rule, integrate_ball


@pytest.fixture(scope="module")
def zonal0():
    return ZonalHarmonicKernel(0.0)


def test_power_kernel_examples():
    k = PowerKernel(1.0, 2)
    assert k.eval(np.zeros(2), np.zeros(2)) == pytest.approx(1.0)
    x = np.array([np.sqrt(0.75), 0.0])
    assert k.eval(x, x) == pytest.approx(64.0, rel=1e-12)
    assert k.diagonal(x) == pytest.approx(64.0, rel=1e-12)
    with pytest.raises(DomainError):
        PowerKernel(-1.0)


def test_power_kernel_log_space_near_boundary():
    k = PowerKernel(10.0, 2)
    x = np.array([1 - 1e-5, 0.0])
    b = geo.bracket(x, x)
    assert b < 1e-3
    assert k.eval(x, x) == pytest.approx(np.exp(-12.0 * np.log(b)), rel=1e-12)


@given(st.integers(0, 2**31))
def test_power_kernel_symmetry_and_bounds(seed):
    rng = np.random.default_rng(seed)
    for n in (2, 3):
        k = PowerKernel(1.5, n)
        x, y = geo.random_ball_points(rng, 50, n), geo.random_ball_points(rng, 50, n)
        assert np.allclose(k.eval(x, y), k.eval(y, x), rtol=1e-10)
        nxy = np.sqrt(geo.norm_sq(x) * geo.norm_sq(y))
        v = k.eval(x, y)
        e = 1.5 + n
        assert np.all(v >= (1 + nxy) ** -e * (1 - 1e-10))
        assert np.all(v <= (1 - nxy) ** -e * (1 + 1e-10))


def test_power_kernel_gradient(rng):
    k = PowerKernel(1.0, 3)
    x, y = geo.random_ball_points(rng, 5, 3, 0.0) * 0.8, geo.random_ball_points(rng, 5, 3, 0.0)
    h = 1e-6
    fd = np.stack([(k.eval(x + h * e, y) - k.eval(x - h * e, y)) / (2 * h) for e in np.eye(3)], axis=-1)
    assert np.allclose(k.grad1(x, y), fd, rtol=1e-6, atol=1e-8)


def test_zonal_constant_examples(rng):
    y = geo.random_ball_points(rng, 20, 2)
    assert np.allclose(ZonalHarmonicKernel(0.0).eval(np.zeros((20, 2)), y), 1.0)
    assert np.allclose(ZonalHarmonicKernel(1.0).eval(np.zeros((20, 2)), y), 2.0)


def test_zonal_symmetry_and_diagonal(zonal0, rng):
    x, y = geo.random_ball_points(rng, 100, 2, 0.0) * 0.9, geo.random_ball_points(rng, 100, 2, 0.0) * 0.9
    assert np.allclose(zonal0.eval(x, y), zonal0.eval(y, x), rtol=1e-10)
    assert np.allclose(zonal0.diagonal(x), zonal0.eval(x, x), rtol=1e-12)
    assert np.all(zonal0.diagonal(x) > 0)


def test_zonal_matches_closed_form_unweighted(zonal0, rng):
    # closed form for alpha = 0: 2 Re (1 - z conj(w))^-2 - 1
    x, y = geo.random_ball_points(rng, 50, 2, 0.0) * 0.9, geo.random_ball_points(rng, 50, 2, 0.0) * 0.9
    q = (x[:, 0] + 1j * x[:, 1]) * (y[:, 0] - 1j * y[:, 1])
    exact = 2 * np.real(1 / (1 - q) ** 2) - 1
    assert np.allclose(zonal0.eval(x, y), exact, rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
def test_zonal_reproducing_property(alpha):
    kern = ZonalHarmonicKernel(alpha)
    rule = build_ball_rule(2, alpha, 200, 512)
    probes = np.array([[0.5, 0.0], [0.9, 0.0], [-0.3, 0.6], [0.0, 0.0]])
    polys = [monomial(k, c) for k in range(7) for c in (1.0, 1j)]
    for f in polys:
        for x in probes:
            val = integrate_ball(lambda y: f(y) * kern.eval(np.broadcast_to(x, y.shape), y), rule)
            assert val == pytest.approx(float(f(x[None])[0]), abs=1e-8)


def test_zonal_truncation_warning():
    kern = ZonalHarmonicKernel(0.0, K_trunc=20)
    x = np.array([[0.95, 0.0]])
    with pytest.warns(TruncationWarning):
        kern.eval(x, x)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kern.eval(x * 0.1, x * 0.1)


def test_zonal_for_product_sizes_truncation():
    kern = ZonalHarmonicKernel.for_product(1.0, 0.99**2)
    x = np.array([[0.99, 0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kern.diagonal(x)


def test_zonal_gradient(zonal0, rng):
    x, y = geo.random_ball_points(rng, 5, 2, 0.0) * 0.7, geo.random_ball_points(rng, 5, 2, 0.0) * 0.7
    h = 1e-6
    fd = np.stack([(zonal0.eval(x + h * e, y) - zonal0.eval(x - h * e, y)) / (2 * h) for e in np.eye(2)], axis=-1)
    assert np.allclose(zonal0.grad1(x, y), fd, rtol=1e-6, atol=1e-6)


def test_atom_series_matches_atom_evaluation(zonal0, rng):
    centers = geo.random_ball_points(rng, 30, 2, 0.0) * 0.8
    weights = rng.standard_normal(30)
    pts = geo.random_ball_points(rng, 40, 2, 0.0) * 0.8
    direct = np.array([np.sum(weights * zonal0.eval(np.broadcast_to(p, centers.shape), centers)) for p in pts])
    series = zonal0.atom_series(weights, centers)
    assert isinstance(series, HarmonicSeries)
    assert np.allclose(series(pts), direct, rtol=1e-10)
    assert np.allclose(zonal0.atom_sum(weights, centers, pts), direct, rtol=1e-10)


def test_kernel_upper_examples():
    rep = verify_kernel_upper(PowerKernel(1.0, 2))
    assert rep.c_emp == pytest.approx(1.0, rel=1e-12)
    assert rep.stable
    # gradient constant for the power form is at most 2 (s+n)
    assert rep.c_grad <= 2 * 3.0 + 1e-9
    rep = verify_kernel_upper(ZonalHarmonicKernel.for_product(0.0, 0.99))
    assert np.isfinite(rep.c_emp) and rep.spread <= 0.10


def test_diagonal_slopes():
    radii = boundary_radii(0.9, 0.99)
    rep = verify_diagonal(PowerKernel(1.0, 2), radii)
    assert rep.slope == pytest.approx(-3.0, abs=1e-12)
    for alpha in (0.0, 1.0):
        rep = verify_diagonal(ZonalHarmonicKernel.for_product(alpha, 0.99**2), radii)
        assert abs(rep.slope + (alpha + 2)) <= 0.1
        assert rep.const_ratio < 10


def test_int_power_examples():
    assert 0 < int_power(PowerKernel(1.0, 2), 1.0, 0.0, 0.0) < np.inf
    rep = verify_int_power(PowerKernel(1.0, 2), 2.0, 0.0, boundary_radii())
    assert abs(rep.slope + 4.0) <= 0.05
    with pytest.raises(DomainError):
        verify_int_power(PowerKernel(0.0, 2), 1.0, 0.0, boundary_radii())


def test_int_power_zonal_reproduces_diagonal():
    # p = 2: int |K(x, .)|^2 d nu_alpha = K(x, x) by the reproducing property
    for alpha in (0.0, 1.0):
        kern = ZonalHarmonicKernel.for_product(alpha, 0.9)
        x = np.array([0.9, 0.0])
        assert int_power(kern, 2.0, alpha, 0.9) == pytest.approx(float(kern.diagonal(x)), rel=1e-10)


def test_int_power_zonal_slope():
    kern = ZonalHarmonicKernel.for_product(0.0, 0.99)
    rep = verify_int_power(kern, 2.0, 0.0, boundary_radii(0.9, 0.99, 8))
    assert abs(rep.slope + 2.0) <= 0.1


def test_kernel_norm_examples():
    assert kernel_norm(PowerKernel(1.0, 2), np.zeros(2), 2.0, 0.0) == pytest.approx(1.0, rel=1e-12)
    radii = boundary_radii()
    norms = [kernel_norm(PowerKernel(1.0, 2), np.array([t, 0.0]), 2.0, 0.0) for t in radii]
    assert np.all(np.diff(norms) > 0)
    t = 1 - radii**2
    slope = np.polyfit(np.log(t), np.log(norms), 1)[0]
    assert abs(slope - ((0 + 2) / 2 - 3)) <= 0.05
    rule = build_ball_rule(2, 0.0, 200, 512)
    a = np.array([0.3, 0.4])
    assert kernel_norm(PowerKernel(1.0, 2), a, 2.0, 0.0, rule) == pytest.approx(
        kernel_norm(PowerKernel(1.0, 2), a, 2.0, 0.0), rel=1e-8)


def test_h_harmonic_residuals():
    kern = ZonalHarmonicKernel(0.0)
    y = np.array([0.3, 0.0])
    assert verify_h_harmonic(kern, np.array([[0.2, 0.1]]), y) <= 1e-4
    assert verify_h_harmonic(PowerKernel(1.0, 2), np.array([[0.2, 0.1]]), y) > 1e-2
    assert abs(geo.laplacian_h(lambda x: np.ones(len(x)), np.array([0.2, 0.1]))) <= 1e-12
