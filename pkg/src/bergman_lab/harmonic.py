"""Harmonic series in the plane: ``f(z) = Re sum_k b_k z^k`` on the unit disc.

For ``n = 2`` every harmonic function on the disc is the real part of a power
series, so finite sums of zonal kernel atoms and harmonic polynomials share
this representation.  Points are ``(m, 2)`` arrays read as ``z = x_1 + i x_2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def to_complex(points):
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != 2:
        raise DomainError("harmonic series are defined for n = 2 only")
    return points[..., 0] + 1j * points[..., 1]


def horner(coeffs, z):
    """``sum_k coeffs[k] z^k`` for complex ``z`` of any shape."""
    z = np.asarray(z)
    acc = np.full(z.shape, coeffs[-1], dtype=complex)
    for c in coeffs[-2::-1]:
        acc = acc * z + c
    return acc


def polar_powers(radii, degree):
    """Matrix ``radii[i] ** k`` for ``k = 0..degree`` without ``0 ** 0`` surprises."""
    radii = np.asarray(radii, dtype=float)
    k = np.arange(degree + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(radii)[:, None]
        return np.exp(np.where(k[None, :] == 0, 0.0, k[None, :] * logr))


@dataclass(frozen=True)
class HarmonicSeries:
    """``Re sum_k coeffs[k] z^k``; the imaginary part of ``coeffs[0]`` is ignored."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        c[0] = c[0].real
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return self.coeffs.size - 1

    def __call__(self, points):
        return horner(self.coeffs, to_complex(points)).real

    def gradient(self, points):
        k = np.arange(1, self.coeffs.size)
        if k.size == 0:
            return np.zeros(np.shape(points), dtype=float)
        d = horner(k * self.coeffs[1:], to_complex(points))
        return np.stack([d.real, -d.imag], axis=-1)

    def on_polar_grid(self, radii, count):
        """Values at ``radii[i] * (cos t_j, sin t_j)``, ``t_j = 2 pi j / count``.

        The coefficients are folded modulo ``count`` and summed with one FFT per
        radius, which is exact for the equispaced angles.
        """
        a = polar_powers(radii, self.degree) * self.coeffs[None, :]
        folded = np.zeros((a.shape[0], count), dtype=complex)
        idx = np.arange(self.degree + 1) % count
        for j in range(0, self.degree + 1, count):
            block = a[:, j : j + count]
            folded[:, idx[j : j + count]] += block
        return (np.fft.ifft(folded, axis=1) * count).real

    def __add__(self, other):
        a, b = self.coeffs, other.coeffs
        out = np.zeros(max(a.size, b.size), dtype=complex)
        out[: a.size] += a
        out[: b.size] += b
        return HarmonicSeries(out)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, factor):
        return HarmonicSeries(self.coeffs * factor)

    def l2_norm_sq(self, moments):
        """``int f^2 d mu`` from radial moments ``moments[k] = int |x|^(2k) d mu``.

        Degree ``k >= 1`` terms average ``|b_k|^2 r^(2k) / 2`` over each circle.
        """
        b = self.coeffs
        m = np.asarray(moments, dtype=float)[: b.size]
        if m.size < b.size:
            raise DomainError("not enough radial moments for this degree")
        return float(b[0].real ** 2 * m[0] + 0.5 * np.sum(np.abs(b[1:]) ** 2 * m[1:]))


def monomial(degree, coefficient=1.0):
    """``Re(coefficient * z^degree)``; e.g. ``monomial(2)`` is ``x_1^2 - x_2^2``."""
    c = np.zeros(degree + 1, dtype=complex)
    c[degree] = coefficient
    return HarmonicSeries(c)
