"""Analytic test fields and images.

Fields follow the package frame (``x`` = column, ``y`` = row downward,
``phi = atan2(y, x)``).  Images are generated as ``cos(Re G(z))`` with
``G`` analytic in ``z = x + i y``; their squared gradient is then
``sin^2(Re G) * conj(G'(z))^2``, so the orientation field of the image is
``conj(G')^2`` up to a nonnegative factor.  Half-integer powers use the
branch ``phi in [0, 2 pi)`` (cut along +x); ``cos`` is even and both
terms flip sign together across the cut, so the blend image stays
continuous there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import ParameterError
from .field import ComplexField, Image


def centered_grid(size: int):
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"size must be odd and positive, got {size}")
    h = size // 2
    ax = np.arange(-h, h + 1, dtype=np.float64)
    return ax[None, :] + 0 * ax[:, None], ax[:, None] + 0 * ax[None, :]


def _polar(x, y):
    r = np.hypot(x, y)
    phi = np.mod(np.arctan2(y, x), 2 * np.pi)
    return r, phi


@dataclass(frozen=True)
class BlendParams:
    """Core/delta blend: ``w1`` weighs the parabolic, ``w2`` the delta term."""

    w1: float
    w2: float
    size: int = 257
    r0: float = 64.0
    omega0: float = 2 * math.pi / 8

    @classmethod
    def balanced(cls, omega0: float = 2 * math.pi / 8, r0: float = 64.0, size: int = 257):
        """Equal local frequency ``omega0`` of both terms on the ring ``|z| = r0``."""
        return cls(omega0 * math.sqrt(r0), omega0 / math.sqrt(r0), size, r0, omega0)


def blend_terms(p: BlendParams, x, y):
    """The three terms of the blend field at coordinates ``(x, y)``."""
    r, phi = _polar(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        core = p.w1**2 * np.exp(-0.5j * np.pi) * np.exp(1j * phi) / r
    core = np.where(r > 0, core, 0)
    const = np.full(np.shape(r), 2 * p.w1 * p.w2, dtype=np.complex128)
    delta = p.w2**2 * np.exp(0.5j * np.pi) * r * np.exp(-1j * phi)
    return core, const, delta


def blend_field_at(p: BlendParams, x, y):
    core, const, delta = blend_terms(p, x, y)
    out = core + const + delta
    return np.where(np.hypot(x, y) > 0, out, 0)


def synth_blend_field(p: BlendParams) -> ComplexField:
    x, y = centered_grid(p.size)
    return ComplexField(blend_field_at(p, x, y), "raw")


def blend_image_at(p: BlendParams, x, y):
    r, phi = _polar(x, y)
    sq = np.sqrt(r) * np.exp(0.5j * phi)
    g = p.w1 * np.exp(0.25j * np.pi) * 2 * sq + p.w2 * np.exp(-0.25j * np.pi) * (2.0 / 3.0) * r * np.exp(1j * phi) * sq
    return np.cos(g.real)


def synth_blend_image(p: BlendParams) -> Image:
    """Image whose orientation field is the blend field.

    The conjugated coefficients (relative to the y-up textbook form)
    compensate for rows increasing downward.
    """
    x, y = centered_grid(p.size)
    return Image(blend_image_at(p, x, y))


@dataclass(frozen=True)
class FamilyPattern:
    """Member ``theta`` of symmetry family ``n``.

    ``omega`` is the local spatial frequency (rad/px) of the image at
    radius ``r_ref``.
    """

    n: int
    theta: float = 0.0
    omega: float = 2 * math.pi / 8
    r_ref: float = 32.0


def family_field_at(fp: FamilyPattern, x, y):
    r, phi = _polar(x, y)
    out = np.exp(1j * (2 * fp.theta - fp.n * phi))
    return np.where(r > 0, out, 0)


def synth_family_field(fp: FamilyPattern, size: int) -> ComplexField:
    """Unit-magnitude field ``exp(i (2 theta - n phi))`` (0 at the centre).

    It projects onto index ``n`` with ``angle(c_n) = 2 theta``.
    """
    x, y = centered_grid(size)
    return ComplexField(family_field_at(fp, x, y), "normalized")


def family_potential(fp: FamilyPattern, x, y):
    """Analytic ``G`` with ``conj(G')^2`` proportional to the family field."""
    r, phi = _polar(x, y)
    rho = r / fp.r_ref
    # G' = omega exp(-i theta) (z / r_ref)^{n/2}
    a = fp.n / 2.0 + 1.0
    scale = fp.omega * np.exp(-1j * fp.theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fp.n == -2:
            g = scale * fp.r_ref * (np.log(np.where(r > 0, rho, 1.0)) + 1j * phi)
        else:
            g = scale * fp.r_ref / a * rho**a * np.exp(1j * a * phi)
    return np.where(r > 0, g, 0)


def synth_family_image(fp: FamilyPattern, size: int, phase: float = 0.0) -> Image:
    x, y = centered_grid(size)
    return Image(np.cos(family_potential(fp, x, y).real + phase))


def rotate_coordinates(x, y, angle: float):
    """Coordinates of the pre-image of ``(x, y)`` under a rotation by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    return c * x + s * y, -s * x + c * y


def _resample(data, angle):
    h, w = data.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx, sy = rotate_coordinates(xx - cx, yy - cy, angle)
    coords = np.array([sy + cy, sx + cx])
    return map_coordinates(data, coords, order=3, mode="constant", cval=0.0, prefilter=True)


def rotate_image(image: Image, angle: float) -> Image:
    """Rotate about the image centre by ``angle`` (bicubic, zero outside)."""
    if angle == 0:
        return image
    return Image(_resample(image.data, angle))


def rotate_field(field: ComplexField, angle: float) -> ComplexField:
    """Orientation field of the image rotated by ``angle``.

    The grid is resampled (bicubic on real and imaginary parts) and the
    double-angle samples are turned by ``2 angle``.  Normalized fields are
    clipped back to unit magnitude.
    """
    if angle == 0:
        return field
    d = field.data
    out = (_resample(d.real, angle) + 1j * _resample(d.imag, angle)) * np.exp(2j * angle)
    if field.kind == "normalized":
        m = np.abs(out)
        out = np.where(m > 1, out / np.where(m > 0, m, 1), out)
    return ComplexField(out, field.kind)


def perturb(field: ComplexField, noise_level: float, rotation: float = 0.0, seed=None) -> ComplexField:
    """Rotate (see :func:`rotate_field`) then add Gaussian angular noise.

    Every sample is multiplied by ``exp(i eps)``, ``eps ~ N(0, noise_level^2)``,
    drawn from ``numpy.random.default_rng(seed)``.
    """
    if noise_level < 0:
        raise ParameterError(f"noise_level must be nonnegative, got {noise_level}")
    out = rotate_field(field, rotation)
    if noise_level == 0:
        return out
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, noise_level, size=out.shape)
    return ComplexField(out.data * np.exp(1j * eps), out.kind)


def unit_normalize(data) -> ComplexField:
    """Scale each sample to unit magnitude (zeros stay zero)."""
    d = np.asarray(data, dtype=np.complex128)
    m = np.abs(d)
    return ComplexField(np.where(m > 0, d / np.where(m > 0, m, 1), 0), "normalized")


def random_neighbourhood(rng, size: int, n_terms: int = 3, n_max: int = 3, r_ref: float = 45.0):
    """Random unit-magnitude field mixing a few symmetry families.

    Each term is ``a_j (r / r_ref)^{p_j} exp(-i n_j phi)`` with random
    complex ``a_j`` and mild radial power ``p_j``; the sum is reduced to
    its argument.  Returns ``(field, params)``.
    """
    x, y = centered_grid(size)
    r, phi = _polar(x, y)
    rho = np.where(r > 0, r / r_ref, 1.0)
    ns = rng.choice(np.arange(-n_max, n_max + 1), size=n_terms, replace=False)
    amps = rng.uniform(0.3, 1.0, size=n_terms) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=n_terms))
    powers = rng.uniform(-1.0, 1.0, size=n_terms)
    acc = np.zeros_like(r, dtype=np.complex128)
    for n, a, p in zip(ns, amps, powers):
        acc += a * rho**p * np.exp(-1j * n * phi)
    acc[r == 0] = 0
    params = {
        "n": [int(v) for v in ns],
        "amp_re": [float(v.real) for v in amps],
        "amp_im": [float(v.imag) for v in amps],
        "power": [float(v) for v in powers],
        "r_ref": r_ref,
    }
    return unit_normalize(acc), params
