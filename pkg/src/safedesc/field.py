"""Complex fields, symmetry-derivative filters, convolution, rendering and I/O.

Coordinates: arrays are row-major with the origin at the top-left pixel.
``x`` is the column index, ``y`` the row index (increasing downward), and
angles are ``atan2(y, x)``.  Every module uses this frame, so an angle that
is counterclockwise in the math convention appears clockwise on screen.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import FormatError, ParameterError

EPS_NUM = 1e-9
KINDS = ("raw", "normalized")

_MAGIC = b"CFLD"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIB3x")
_MAX_SAMPLES = 1 << 31


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Image:
    """Real-valued grayscale image, ``data[y, x]``."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ParameterError(f"image must be a non-empty 2D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("image samples must be finite")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Dense complex map: argument is a model parameter, magnitude a quality.

    ``kind="normalized"`` promises ``|sample| <= 1`` (up to ``EPS_NUM``).
    """

    data: np.ndarray
    kind: str = "raw"

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ParameterError(f"field must be a non-empty 2D array, got shape {a.shape}")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown field kind {self.kind!r}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("field samples must be finite")
        if self.kind == "normalized" and a.size and np.abs(a).max() > 1 + EPS_NUM:
            raise ParameterError(f"normalized field has magnitude {np.abs(a).max():.6g} > 1")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class SymmetryFilter:
    """Sampled symmetry derivative of a Gaussian, unit discrete L2 norm."""

    n: int
    sigma2: float
    truncation_radius: int
    kernel: np.ndarray


def polar_grid(halfwidth: int, dx: float = 0.0, dy: float = 0.0):
    """Radius and angle of the square grid ``[-h, h]^2`` about ``(dx, dy)``."""
    ax = np.arange(-halfwidth, halfwidth + 1, dtype=np.float64)
    x = ax[None, :] - dx
    y = ax[:, None] - dy
    return np.hypot(x, y), np.arctan2(y, x)


def make_symmetry_filter(n: int, sigma2: float, truncation_factor: float = 4.0) -> SymmetryFilter:
    """Sample ``r^|n| exp(-r^2 / 2 sigma2) exp(i n phi)`` and renormalize.

    The half-width is ``ceil(truncation_factor * sigma)``; the L2 norm is
    made exactly 1 after truncation.  ``n == 0`` gives a real Gaussian.
    """
    if not sigma2 > 0:
        raise ParameterError(f"sigma2 must be positive, got {sigma2}")
    if not truncation_factor > 0:
        raise ParameterError(f"truncation_factor must be positive, got {truncation_factor}")
    n = int(n)
    half = int(math.ceil(truncation_factor * math.sqrt(sigma2)))
    r, phi = polar_grid(half)
    mag = np.exp(-(r**2) / (2.0 * sigma2))
    if n != 0:
        mag = mag * r ** abs(n)
        kernel = mag * np.exp(1j * n * phi)
    else:
        kernel = mag.astype(np.complex128)
    kernel /= np.sqrt(np.sum(np.abs(kernel) ** 2))
    return SymmetryFilter(n=n, sigma2=float(sigma2), truncation_radius=half, kernel=_frozen(kernel))


def convolve(field, filt, boundary: str = "zero") -> ComplexField:
    """Linear convolution restricted to the input extent (same-size output).

    ``filt`` may be a :class:`SymmetryFilter` or a bare 2D kernel with odd
    sides.  ``boundary`` is ``"zero"`` or ``"reflect"`` (mirror without
    repeating the edge sample).
    """
    data = field.data if isinstance(field, (Image, ComplexField)) else np.asarray(field)
    kernel = filt.kernel if isinstance(filt, SymmetryFilter) else np.asarray(filt)
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ParameterError(f"kernel sides must be odd, got {kernel.shape}")
    if kh > data.shape[0] or kw > data.shape[1]:
        raise ParameterError(f"kernel {kernel.shape} does not fit in field {data.shape}")
    if boundary == "zero":
        out = fftconvolve(data, kernel, mode="same")
    elif boundary == "reflect":
        py, px = kh // 2, kw // 2
        padded = np.pad(data, ((py, py), (px, px)), mode="reflect")
        out = fftconvolve(padded, kernel, mode="valid")
    else:
        raise ParameterError(f"unknown boundary mode {boundary!r}")
    return ComplexField(np.asarray(out, dtype=np.complex128), "raw")


def convolve_direct(data, kernel) -> np.ndarray:
    """Zero-boundary same-size convolution by explicit summation (slow oracle)."""
    data = np.asarray(data, dtype=np.complex128)
    kernel = np.asarray(kernel, dtype=np.complex128)
    H, W = data.shape
    kh, kw = kernel.shape
    cy, cx = kh // 2, kw // 2
    out = np.zeros((H, W), dtype=np.complex128)
    for y in range(H):
        for x in range(W):
            acc = 0j
            for j in range(kh):
                for i in range(kw):
                    yy, xx = y - (j - cy), x - (i - cx)
                    if 0 <= yy < H and 0 <= xx < W:
                        acc += kernel[j, i] * data[yy, xx]
            out[y, x] = acc
    return out


def hsv_render(field, magnitude_ceiling: float = 1.0) -> np.ndarray:
    """8-bit RGB image: hue from the argument, value from the magnitude."""
    from matplotlib.colors import hsv_to_rgb

    if not magnitude_ceiling > 0:
        raise ParameterError("magnitude_ceiling must be positive")
    z = field.data if isinstance(field, ComplexField) else np.asarray(field, dtype=np.complex128)
    bad = ~np.isfinite(z)
    z = np.where(bad, 0, z)
    hue = np.mod(np.angle(z) / (2 * np.pi), 1.0)
    hue[hue >= 1.0] = 0.0
    val = np.minimum(np.abs(z) / magnitude_ceiling, 1.0)
    hsv = np.stack([hue, np.ones_like(hue), val], axis=-1)
    rgb = np.round(hsv_to_rgb(hsv) * 255.0).astype(np.uint8)
    rgb[bad] = 0
    return rgb


def write_png(rgb, path) -> None:
    from PIL import Image as PILImage

    PILImage.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)


def read_image(path) -> Image:
    """Load a grayscale PNG/PGM (colour inputs are converted to luminance)."""
    from PIL import Image as PILImage

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such image: {p}")
    with PILImage.open(p) as im:
        if im.mode not in ("L", "I", "I;16", "F"):
            im = im.convert("L")
        a = np.asarray(im, dtype=np.float64)
    return Image(a)


def write_image(image, path) -> None:
    """Write an image as 8-bit grayscale, linearly rescaled to [0, 255]."""
    from PIL import Image as PILImage

    a = image.data if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros_like(a) if hi <= lo else (a - lo) / (hi - lo)
    PILImage.fromarray(np.round(scaled * 255).astype(np.uint8)).save(path)


def write_field(field: ComplexField, path) -> None:
    h, w = field.shape
    head = _HEADER.pack(_MAGIC, _VERSION, w, h, KINDS.index(field.kind))
    payload = np.ascontiguousarray(field.data, dtype="<c16").tobytes()
    Path(path).write_bytes(head + payload)


def read_field(path) -> ComplexField:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, w, h, kind = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if kind >= len(KINDS):
        raise FormatError(f"{path}: unknown kind byte {kind}")
    if w < 1 or h < 1 or w * h > _MAX_SAMPLES:
        raise FormatError(f"{path}: bad dimensions {w}x{h}")
    expected = w * h * 16
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header {w}x{h} needs {expected} (truncated or padded)"
        )
    data = np.frombuffer(payload, dtype="<c16").reshape(h, w)
    return ComplexField(data.astype(np.complex128), KINDS[kind])
