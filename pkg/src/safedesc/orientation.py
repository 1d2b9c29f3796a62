"""Dense orientation fields with quality from the linear symmetry tensor.

The image is differentiated with the first symmetry derivative of a
Gaussian, squared pixelwise (ILST), then averaged with a Gaussian (LST).
``i20`` carries the double-angle orientation, ``i11`` the contrast, and
their ratio is a normalized orientation field whose magnitude is the
reliability of the local linear-symmetry fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ComplexField, Image, convolve, make_symmetry_filter
from .errors import ParameterError

DEFAULT_SIGMA_IN2 = 1.0
DEFAULT_SIGMA_OUT2 = 25.0
CONTRAST_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class OrientationField:
    i20: ComplexField
    i11: np.ndarray
    i20_normalized: ComplexField


def compute_ilst(image: Image, sigma_in2: float = DEFAULT_SIGMA_IN2, boundary: str = "zero") -> ComplexField:
    """Squared complex gradient ``(Gamma^{1, sigma_in2} * f)^2``."""
    if not sigma_in2 > 0:
        raise ParameterError(f"sigma_in2 must be positive, got {sigma_in2}")
    grad = convolve(image, make_symmetry_filter(1, sigma_in2), boundary=boundary)
    return ComplexField(grad.data**2, "raw")


def compute_lst(
    ilst: ComplexField,
    sigma_out2: float = DEFAULT_SIGMA_OUT2,
    contrast_floor: float = CONTRAST_FLOOR,
    boundary: str = "zero",
) -> OrientationField:
    """Gaussian-average the ILST and normalize by the averaged magnitude.

    Pixels whose contrast is below ``contrast_floor * max(i11)`` get a
    normalized value of 0 (no reliable orientation).
    """
    if not sigma_out2 > 0:
        raise ParameterError(f"sigma_out2 must be positive, got {sigma_out2}")
    g = make_symmetry_filter(0, sigma_out2)
    i20 = convolve(ilst, g, boundary=boundary).data
    i11 = convolve(np.abs(ilst.data), g, boundary=boundary).data.real
    # FFT round-off can push the nonnegative average slightly below zero
    i11 = np.maximum(i11, 0.0)
    # keep |i20| <= i11 exactly despite round-off in the two filterings
    mag = np.abs(i20)
    over = mag > i11
    i20 = np.where(over, i20 / np.where(mag > 0, mag, 1) * i11, i20)

    peak = float(i11.max()) if i11.size else 0.0
    floor = contrast_floor * peak
    valid = (i11 > floor) & (i11 > 0)
    norm = np.zeros_like(i20)
    np.divide(i20, i11, out=norm, where=valid)
    m = np.abs(norm)
    norm = np.where(m > 1.0, norm / np.where(m > 0, m, 1), norm)
    i11.setflags(write=False)
    return OrientationField(
        i20=ComplexField(i20, "raw"),
        i11=i11,
        i20_normalized=ComplexField(norm, "normalized"),
    )


def orientation_field(
    image: Image,
    sigma_in2: float = DEFAULT_SIGMA_IN2,
    sigma_out2: float = DEFAULT_SIGMA_OUT2,
    boundary: str = "zero",
) -> OrientationField:
    """Single-pass ILST followed by LST.

    Iterative refinement (orientation and frequency improving one another)
    is left to the caller: re-enter with an enhanced image.
    """
    return compute_lst(compute_ilst(image, sigma_in2, boundary), sigma_out2, boundary=boundary)
