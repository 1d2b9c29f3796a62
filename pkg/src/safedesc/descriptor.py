"""SAFE descriptors: projections of a complex field on torus harmonics.

For torus ``k`` and symmetry index ``n``::

    c_kn = sum |psi_k|^2 exp(+i n phi) F        e_k = sum |psi_k|^2 |F|

with ``(r, phi)`` polar about the keypoint and ``sum |psi_k|^2 = 1``.
A field ``exp(-i n0 phi)`` therefore lands on ``n = n0`` (the basis is
``exp(-i n phi)``).  ``SAFE_kn = c_kn / e_k`` and ``|SAFE_kn| <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import NoReliableAngle, ParameterError
from .field import ComplexField
from .torus import TorusBank

E_FLOOR = 1e-12
DEFAULT_N_RANGE = (-4, 4)


@dataclass(frozen=True)
class SymmetryIndexRange:
    n_min: int = DEFAULT_N_RANGE[0]
    n_max: int = DEFAULT_N_RANGE[1]

    def __post_init__(self):
        if self.n_min > self.n_max:
            raise ParameterError(f"n_min {self.n_min} > n_max {self.n_max}")

    @property
    def values(self) -> tuple:
        return tuple(range(self.n_min, self.n_max + 1))

    def __len__(self):
        return self.n_max - self.n_min + 1


def _as_range(n_range) -> SymmetryIndexRange:
    if n_range is None:
        return SymmetryIndexRange()
    if isinstance(n_range, SymmetryIndexRange):
        return n_range
    lo, hi = n_range
    return SymmetryIndexRange(int(lo), int(hi))


def _safe_ratio(c, e):
    ok = e > E_FLOOR
    den = np.where(ok, e, 1.0)[:, None]
    return np.where(ok[:, None], c / den, 0).astype(np.complex128)


@dataclass(frozen=True, eq=False)
class SafeDescriptor:
    """``K x N`` projection matrix ``c``, energies ``e`` and ``safe = c / e``."""

    c: np.ndarray
    e: np.ndarray
    n_values: tuple
    torus_indices: tuple
    center: tuple = (0.0, 0.0)
    coverage: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    safe: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.c, dtype=np.complex128)
        e = np.array(self.e, dtype=np.float64)
        if c.ndim != 2 or c.shape != (len(e), len(self.n_values)):
            raise ParameterError(f"c has shape {c.shape}, expected ({len(e)}, {len(self.n_values)})")
        if len(self.torus_indices) != len(e):
            raise ParameterError("torus_indices and e disagree in length")
        for a in (c, e):
            a.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "torus_indices", tuple(int(k) for k in self.torus_indices))
        s = _safe_ratio(c, e)
        s.setflags(write=False)
        object.__setattr__(self, "safe", s)

    @property
    def K(self) -> int:
        return len(self.e)

    @property
    def N(self) -> int:
        return len(self.n_values)

    def column(self, n: int) -> int:
        return self.n_values.index(n)

    def row(self, k: int) -> int:
        return self.torus_indices.index(k)

    def with_center(self, center) -> "SafeDescriptor":
        return SafeDescriptor(self.c, self.e, self.n_values, self.torus_indices, tuple(center), self.coverage, dict(self.meta))


def _center_xy(center):
    if hasattr(center, "x") and hasattr(center, "y"):
        return float(center.x), float(center.y)
    x, y = center
    return float(x), float(y)


def project(
    field: ComplexField,
    bank: TorusBank,
    center,
    n_range=None,
    tori: Sequence[int] | None = None,
    mode: str = "masked",
):
    """Projection coefficients ``c`` (K x N) and energies ``e`` at ``center``.

    ``center`` is ``(x, y)`` in pixels (subpixel allowed; the torus is
    evaluated at real-valued offsets, the field is never interpolated).
    In ``"masked"`` mode torus samples outside the field contribute
    nothing, lowering ``e``; ``"strict"`` raises instead.  Returns
    ``(c, e, coverage)`` where ``coverage[k]`` is the in-bounds weight.
    """
    if mode not in ("masked", "strict"):
        raise ParameterError(f"unknown projection mode {mode!r}")
    nr = _as_range(n_range)
    tori = tuple(range(bank.K)) if tori is None else tuple(int(k) for k in tori)
    for k in tori:
        if not 0 <= k < bank.K:
            raise ParameterError(f"torus index {k} outside bank of {bank.K}")
    x, y = _center_xy(center)
    ix, iy = int(round(x)), int(round(y))
    dx, dy = x - ix, y - iy
    F = field.data
    H, W = F.shape
    nvals = np.array(nr.values, dtype=np.float64)

    c = np.zeros((len(tori), len(nvals)), dtype=np.complex128)
    e = np.zeros(len(tori))
    cov = np.zeros(len(tori))
    for row, k in enumerate(tori):
        w, phi = bank.weights(k, dx, dy)
        s = bank.support[k]
        y0, y1 = iy - s, iy + s + 1
        x0, x1 = ix - s, ix + s + 1
        cy0, cy1 = max(y0, 0), min(y1, H)
        cx0, cx1 = max(x0, 0), min(x1, W)
        if mode == "strict" and (cy0 != y0 or cy1 != y1 or cx0 != x0 or cx1 != x1):
            # only complain when non-negligible weight falls outside
            inside = np.zeros_like(w, dtype=bool)
            if cy1 > cy0 and cx1 > cx0:
                inside[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0] = True
            lost = float(w[~inside].sum())
            if lost > 1e-9:
                raise ParameterError(f"torus {k} at ({x:.2f}, {y:.2f}) exceeds the field (lost weight {lost:.3g})")
        if cy1 <= cy0 or cx1 <= cx0:
            continue
        wl = w[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]
        pl = phi[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]
        Fl = F[cy0:cy1, cx0:cx1]
        cov[row] = wl.sum()
        e[row] = np.sum(wl * np.abs(Fl))
        wf = (wl * Fl).ravel()
        basis = np.exp(1j * np.outer(nvals, pl.ravel()))
        c[row] = basis @ wf
    return c, e, cov


def extract(
    field: ComplexField,
    bank: TorusBank,
    keypoint,
    n_range=None,
    tori: Sequence[int] | None = None,
    mode: str = "masked",
) -> SafeDescriptor:
    """SAFE descriptor of the neighbourhood of ``keypoint``."""
    nr = _as_range(n_range)
    tori = tuple(range(bank.K)) if tori is None else tuple(int(k) for k in tori)
    c, e, cov = project(field, bank, keypoint, nr, tori, mode)
    meta = {"bank": bank.spec.as_dict()}
    if hasattr(keypoint, "id"):
        meta["id"] = keypoint.id
    if getattr(keypoint, "direction", None) is not None:
        meta["direction"] = float(keypoint.direction)
    return SafeDescriptor(c, e, nr.values, tori, _center_xy(keypoint), cov, meta)


def rotate_descriptor(d: SafeDescriptor, phi: float) -> SafeDescriptor:
    """Steer ``d`` as if the image had been rotated by ``phi``.

    Component ``n`` is multiplied by ``exp(i (n + 2) phi)``; ``e`` is
    unchanged, so ``n = -2`` never moves.
    """
    factor = np.exp(1j * (np.array(d.n_values) + 2) * phi)
    # n = -2 must stay bit-identical
    factor[np.array(d.n_values) == -2] = 1.0
    return SafeDescriptor(d.c * factor[None, :], d.e, d.n_values, d.torus_indices, d.center, d.coverage, dict(d.meta))


def intrinsic_angle(d: SafeDescriptor, k: int, floor: float = 0.1):
    """Parabola direction ``angle(SAFE_{k,-1})`` and its confidence.

    Raises :class:`NoReliableAngle` when ``|SAFE_{k,-1}|`` is below ``floor``.
    """
    if -1 not in d.n_values:
        raise ParameterError("descriptor has no n = -1 component")
    z = d.safe[d.row(k), d.column(-1)]
    conf = float(abs(z))
    if conf < floor:
        raise NoReliableAngle(conf, floor)
    return float(np.angle(z)), conf


def synthesize_ring(coeffs, n_values, phi_samples: int):
    """Evaluate ``sum_n c_n exp(-i n phi)`` on ``phi_samples`` uniform angles.

    Returns ``(phi, signal)``.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    n = np.asarray(n_values)
    if coeffs.shape != n.shape:
        raise ParameterError("coefficient row and n_values disagree")
    need = 2 * (int(n.max()) - int(n.min())) + 1
    if phi_samples < need:
        raise ParameterError(f"need at least {need} angular samples, got {phi_samples}")
    phi = 2 * np.pi * np.arange(phi_samples) / phi_samples
    return phi, np.exp(-1j * np.outer(phi, n)) @ coeffs


def dense_safe_map(field: ComplexField, bank: TorusBank, k: int, n: int) -> ComplexField:
    """``SAFE_kn`` evaluated with the keypoint at every pixel.

    Cross-correlates the field with ``|psi_k|^2 exp(i n phi)`` and ``|F|``
    with ``|psi_k|^2`` (zero outside the field, as in masked extraction).
    """
    if not 0 <= k < bank.K:
        raise ParameterError(f"torus index {k} outside bank of {bank.K}")
    w, phi = bank.weights(k)
    kern = w * np.exp(1j * n * phi)
    F = field.data
    c = fftconvolve(F, kern[::-1, ::-1], mode="same")
    e = fftconvolve(np.abs(F), w[::-1, ::-1], mode="same").real
    out = np.where(e > E_FLOOR, c / np.where(e > E_FLOOR, e, 1.0), 0)
    m = np.abs(out)
    out = np.where(m > 1.0, out / np.where(m > 0, m, 1.0), out)
    return ComplexField(out, "normalized")


def dense_energy_map(field: ComplexField, bank: TorusBank, k: int) -> np.ndarray:
    w, _ = bank.weights(k)
    return fftconvolve(np.abs(field.data), w[::-1, ::-1], mode="same").real


def keypoint_in_bounds(center, width: int, height: int) -> bool:
    x, y = _center_xy(center)
    return 0 <= x <= width - 1 and 0 <= y <= height - 1 and math.isfinite(x) and math.isfinite(y)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def format_descriptor(d: SafeDescriptor) -> str:
    """Text block: header, ``e_k`` line, then one line of ``re,im`` pairs of ``c_k`` per torus."""
    head = f"SAFE v1 K={d.K} N={d.n_values[0]}..{d.n_values[-1]}"
    if d.n_values != tuple(range(d.n_values[0], d.n_values[-1] + 1)):
        raise ParameterError("only contiguous symmetry ranges can be written")
    head += " tori=" + ",".join(str(k) for k in d.torus_indices)
    head += f" center={_fmt(d.center[0])},{_fmt(d.center[1])}"
    if "direction" in d.meta:
        head += f" direction={_fmt(d.meta['direction'])}"
    lines = [head, " ".join(_fmt(v) for v in d.e)]
    for row in d.c:
        lines.append(" ".join(f"{_fmt(z.real)},{_fmt(z.imag)}" for z in row))
    return "\n".join(lines) + "\n"


def _parse_block(lines, where):
    from .errors import FormatError

    head = lines[0].split()
    if len(head) < 4 or head[0] != "SAFE" or head[1] != "v1":
        raise FormatError(f"{where}: expected 'SAFE v1 K=<k> N=<nmin>..<nmax>' header")
    opts = {}
    for tok in head[2:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"{where}: bad header token {tok!r}")
        opts[key] = val
    try:
        K = int(opts["K"])
        lo, hi = (int(v) for v in opts["N"].split(".."))
        tori = tuple(int(v) for v in opts["tori"].split(",")) if "tori" in opts else tuple(range(K))
        center = tuple(float(v) for v in opts["center"].split(",")) if "center" in opts else (0.0, 0.0)
        direction = float(opts["direction"]) if "direction" in opts else None
    except (KeyError, ValueError):
        raise FormatError(f"{where}: malformed header {lines[0]!r}") from None
    if len(lines) != K + 2:
        raise FormatError(f"{where}: expected {K + 2} lines, got {len(lines)}")
    N = hi - lo + 1
    try:
        e = np.array([float(v) for v in lines[1].split()])
        c = np.array(
            [[complex(float(p.split(",")[0]), float(p.split(",")[1])) for p in ln.split()] for ln in lines[2:]]
        )
    except (ValueError, IndexError):
        raise FormatError(f"{where}: malformed numeric data") from None
    if e.shape != (K,) or c.shape != (K, N) or len(tori) != K:
        raise FormatError(f"{where}: dimensions do not match header K={K} N={N}")
    meta = {} if direction is None else {"direction": direction}
    return SafeDescriptor(c, e, tuple(range(lo, hi + 1)), tori, center, None, meta)


def write_descriptors(items, path) -> None:
    """Write ``(id, descriptor)`` pairs, each block introduced by ``#<id>``."""
    with open(path, "w") as fh:
        for kid, d in items:
            fh.write(f"#{kid}\n")
            fh.write(format_descriptor(d))


def read_descriptors(path) -> list:
    """Inverse of :func:`write_descriptors`; returns ``(id, descriptor)`` pairs."""
    from .errors import FormatError

    with open(path) as fh:
        raw = fh.read().splitlines()
    blocks = []
    cur_id, cur, start = None, [], 0
    for lineno, line in enumerate(raw, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if cur_id is not None or cur:
                blocks.append((cur_id, cur, start))
            cur_id, cur, start = s[1:].strip(), [], lineno
        else:
            if not cur and cur_id is None:
                cur_id, start = "", lineno
            cur.append(s)
    if cur_id is not None or cur:
        blocks.append((cur_id, cur, start))
    out = []
    for kid, lines, start in blocks:
        if not lines:
            raise FormatError(f"{path}:{start}: empty descriptor block {kid!r}")
        d = _parse_block(lines, f"{path}:{start}")
        if kid:
            d.meta["id"] = kid
        out.append((kid, d))
    return out
