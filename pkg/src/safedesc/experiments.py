"""Self-contained numerical experiments on analytic patterns."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descriptor import extract, project, rotate_descriptor, synthesize_ring
from .field import ComplexField, Image
from .grid import Keypoint
from .matcher import match
from .orientation import orientation_field
from .synthesis import (
    BlendParams,
    blend_field_at,
    blend_image_at,
    centered_grid,
    family_potential,
    FamilyPattern,
    perturb,
    random_neighbourhood,
    rotate_coordinates,
)
from .torus import TorusSpec, build_bank, default_spec, outer_usable_tori
from .evaluation import CmcInput, ScoreSet, compute_cmc, compute_eer

# reference magnitudes for n = -1, 0, 1 on 7 tori, innermost first
FIG5_TABLE = np.array(
    [
        [1.23, 1.23, 0.31],
        [0.98, 1.23, 0.39],
        [0.78, 1.23, 0.49],
        [0.62, 1.23, 0.62],
        [0.49, 1.23, 0.78],
        [0.39, 1.23, 0.98],
        [0.31, 1.23, 1.24],
    ]
)
FIG5_PHASES = np.array([-math.pi / 2, 0.0, math.pi / 2])
FIG5_N = (-1, 0, 1)


def fig5_spec() -> TorusSpec:
    """Seven tori, one octave per three taps, middle peak at 64."""
    return TorusSpec.from_attenuation(32.0, 2.0 ** (1.0 / 3.0), 7, 0.01)


@dataclass
class Fig5Result:
    size: int
    n_values: tuple
    c: np.ndarray
    e: np.ndarray
    coverage: np.ndarray
    truth: np.ndarray

    def mid(self) -> np.ndarray:
        cols = [self.n_values.index(n) for n in FIG5_N]
        return self.c[:, cols]

    def leakage(self) -> float:
        cols = [i for i, n in enumerate(self.n_values) if abs(n) >= 2]
        return float(np.abs(self.c[:, cols]).max())

    def table_rows(self):
        mid = self.mid()
        err = np.abs(mid - self.truth)
        for k in range(mid.shape[0]):
            yield [(abs(z), float(np.mod(np.angle(z), 2 * np.pi))) for z in mid[k]], err[k]

    def format_table(self) -> str:
        out = [f"# canvas {self.size}x{self.size}, max |c| for |n|>=2: {self.leakage():.4f}"]
        out.append("k  " + "  ".join(f"{'n=' + str(n):>13s}" for n in FIG5_N) + "   " + "  ".join(f"eps{n:+d}" for n in FIG5_N))
        for k, (pairs, err) in enumerate(self.table_rows()):
            cells = "  ".join(f"({m:.2f} {a:.2f})".rjust(13) for m, a in pairs)
            out.append(f"{k}  {cells}   " + "  ".join(f"{v:.3f}" for v in err))
        return "\n".join(out)


def fig5_full_support_size(spec: TorusSpec | None = None) -> int:
    """Smallest odd canvas holding the full window of the outermost torus."""
    bank = build_bank(spec or fig5_spec())
    return 2 * max(bank.support) + 1


def fig5_experiment(size: int = 257, n_range=(-4, 4)) -> Fig5Result:
    """Project the balanced core/delta blend field on the seven-torus blend bank.

    ``truth`` holds the three analytic terms evaluated at each peak radius.
    """
    p = BlendParams.balanced(size=size)
    spec = fig5_spec()
    bank = build_bank(spec)
    x, y = centered_grid(size)
    field = ComplexField(blend_field_at(p, x, y), "raw")
    h = size // 2
    c, e, cov = project(field, bank, (h, h), n_range)
    r = spec.radii
    truth = np.stack(
        [p.w1**2 / r * np.exp(-0.5j * np.pi), np.full(r.shape, 2 * p.w1 * p.w2 + 0j), p.w2**2 * r * np.exp(0.5j * np.pi)],
        axis=1,
    )
    return Fig5Result(size, tuple(range(n_range[0], n_range[1] + 1)), c, e, cov, truth)


def half_plane_mask(x, y, angle: float = 0.7, offset: float = 0.0):
    """1 where ``(x, y) . (cos a, sin a) >= offset``, else 0."""
    return ((x * math.cos(angle) + y * math.sin(angle)) >= offset).astype(np.float64)


def ring_reconstruction_errors(
    m_values=(1, 2, 3, 4, 5, 6),
    size: int = 257,
    k: int = 3,
    samples: int = 720,
    mask_angle: float = 0.7,
    mask_offset: float = 0.0,
):
    """RMS error of the synthesized ring against the masked analytic ring.

    The blend field is multiplied by a half-plane mask, projected on torus
    ``k`` of the seven-torus blend bank with ``n in [-m, m]`` and the ring synthesized
    from ``c_k``.  The reference is the masked field evaluated at radius
    ``r_k`` on the same angular samples.
    """
    p = BlendParams.balanced(size=size)
    spec = fig5_spec()
    bank = build_bank(spec)
    x, y = centered_grid(size)
    mask = half_plane_mask(x, y, mask_angle, mask_offset)
    field = ComplexField(blend_field_at(p, x, y) * mask, "raw")
    h = size // 2
    rk = spec.radii[k]
    phi = 2 * np.pi * np.arange(samples) / samples
    rx, ry = rk * np.cos(phi), rk * np.sin(phi)
    ref = blend_field_at(p, rx, ry) * half_plane_mask(rx, ry, mask_angle, mask_offset)
    errs = []
    for m in m_values:
        c, _, _ = project(field, bank, (h, h), (-m, m), (k,))
        _, sig = synthesize_ring(c[0], tuple(range(-m, m + 1)), samples)
        errs.append(float(np.sqrt(np.mean(np.abs(sig - ref) ** 2))))
    return errs


def spiral_theta(theta: float, omega: float, r_ref: float) -> float:
    """Nearest angle to ``theta`` for which the ``n = -2`` image is continuous.

    The log potential gains ``2 pi omega r_ref sin(theta)`` around the
    centre, so ``omega r_ref sin(theta)`` must be an integer.
    """
    a = omega * r_ref
    m = round(a * math.sin(theta))
    return math.asin(max(-1.0, min(1.0, m / a)))


def steering_patterns():
    """Analytic potentials for band-limited test images."""
    return [
        ("parabolic", [FamilyPattern(-1, 0.3, 2 * math.pi / 8, 40.0)]),
        ("triangular", [FamilyPattern(1, 0.2, 2 * math.pi / 8, 40.0)]),
        ("lines", [FamilyPattern(0, 0.4, 2 * math.pi / 8, 40.0)]),
        # frequency grows as 1 / r, so keep it well below Nyquist on the inner tori
        ("spiral", [FamilyPattern(-2, spiral_theta(0.5, 0.2, 40.0), 0.2, 40.0)]),
        (
            "mixture",
            [FamilyPattern(-1, 0.3, 2 * math.pi / 8, 40.0), FamilyPattern(0, 1.1, 0.5 * 2 * math.pi / 8, 40.0)],
        ),
    ]


def _pattern_image_at(parts, x, y):
    g = sum(family_potential(fp, x, y) for fp in parts)
    return np.cos(np.real(g))


@dataclass
class SteeringCase:
    name: str
    angle: float
    direct: object
    steered: object

    def compare(self, floor: float = 0.2):
        """Max magnitude and phase differences over components with
        ``|SAFE| >= floor`` in both descriptors."""
        a, b = self.direct.safe, self.steered.safe
        mag = float(np.abs(np.abs(a) - np.abs(b)).max())
        sel = (np.abs(a) >= floor) & (np.abs(b) >= floor)
        ph = float(np.abs(np.angle(a[sel] * np.conj(b[sel]))).max()) if sel.any() else 0.0
        return mag, ph, int(sel.sum())

    @property
    def score(self) -> float:
        return match(self.direct, self.steered).score


def steering_tori(bank, size: int, min_radius: float = 4.0):
    """Tori large enough to sample and fully inside a ``size`` canvas."""
    h = size // 2
    return tuple(k for k in range(bank.K) if bank.radii[k] >= min_radius and bank.support[k] <= h)


def steering_experiment(angles=(15.0, 45.0, 90.0), size: int = 257, sigma_in2: float = 1.0, sigma_out2: float = 4.0):
    """Rotate analytic images, recompute the orientation field, and compare
    the extracted descriptor with the steered unrotated one."""
    bank = build_bank(default_spec())
    tori = steering_tori(bank, size)
    x, y = centered_grid(size)
    h = size // 2
    cases = []
    for name, parts in steering_patterns():
        img0 = Image(_pattern_image_at(parts, x, y))
        f0 = orientation_field(img0, sigma_in2, sigma_out2).i20_normalized
        d0 = extract(f0, bank, (h, h), tori=tori)
        for deg in angles:
            a = math.radians(deg)
            px, py = rotate_coordinates(x, y, a)
            img = Image(_pattern_image_at(parts, px, py))
            f = orientation_field(img, sigma_in2, sigma_out2).i20_normalized
            d1 = extract(f, bank, (h, h), tori=tori)
            cases.append(SteeringCase(name, a, d1, rotate_descriptor(d0, a)))
    return cases


@dataclass
class BenchmarkResult:
    rank1: float
    eer: float
    cmc: list
    scores: ScoreSet


def identification_benchmark(
    n_subjects: int = 100,
    noise: float = 0.3,
    max_rotation_deg: float = 30.0,
    size: int = 257,
    seed: int = 0,
    compensate: bool = True,
) -> BenchmarkResult:
    """Gallery of random neighbourhoods against perturbed, rotated probes.

    Probes are rotated by a uniform angle in ``[-max, max]`` and
    compensated by steering with the known angle (the keypoint-direction
    difference in a real system).
    """
    rng = np.random.default_rng(seed)
    spec = default_spec()
    bank = build_bank(spec)
    tori = outer_usable_tori(spec)
    h = size // 2
    center = Keypoint("c", h, h)
    gallery, probes, angles = [], [], []
    for i in range(n_subjects):
        f, _ = random_neighbourhood(rng, size)
        rot = math.radians(rng.uniform(-max_rotation_deg, max_rotation_deg))
        g = extract(f, bank, center, tori=tori)
        pf = perturb(f, noise, rot, seed=int(rng.integers(2**31)))
        gallery.append(g)
        probes.append(extract(pf, bank, center, tori=tori))
        angles.append(rot)
    mat = np.empty((n_subjects, n_subjects))
    for i, p in enumerate(probes):
        # steering back by -rot undoes the probe rotation
        ps = rotate_descriptor(p, -angles[i]) if compensate else p
        for j, g in enumerate(gallery):
            mat[i, j] = match(g, ps).score
    labels = list(range(n_subjects))
    cmc = compute_cmc(CmcInput(mat, labels, labels))
    gen = np.diag(mat)
    imp = mat[~np.eye(n_subjects, dtype=bool)]
    ss = ScoreSet(gen, imp)
    eer, _ = compute_eer(ss)
    return BenchmarkResult(cmc[0], eer, cmc, ss)
