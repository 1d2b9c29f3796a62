"""Ring-shaped filter families with geometrically spaced peaks.

Each torus has the radial profile ``t(r) = r^mu exp(-r^2 / 2 sigma_k^2)``
peaking at ``r_k = sqrt(mu) sigma_k``.  Peaks follow ``r_k = r0 alpha^k``
and a single width exponent ``mu`` is shared by all tori; it is chosen from
either the attenuation ``tau_eps`` of a torus at the next peak, or the
height ``tau`` where neighbouring tori intersect.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ParameterError
from .field import polar_grid

DESIGN_MODES = ("attenuation", "intersection", "explicit")
OVERLAP_BOUND = 0.15
SUPPORT_SIGMAS = 4.0
LOW_FIDELITY_RADIUS = 2.0


def radial_profile(r, mu: float, sigma2: float):
    """``r^mu exp(-r^2 / 2 sigma2)``, evaluated in log space."""
    if not mu > 0 or not sigma2 > 0:
        raise ParameterError("mu and sigma2 must be positive")
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ParameterError("radius must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.exp(mu * np.log(r) - r**2 / (2.0 * sigma2))
    return out if out.ndim else float(out)


def profile_peak(mu: float, sigma2: float) -> float:
    """Maximum of :func:`radial_profile`, reached at ``sqrt(mu * sigma2)``."""
    rp = math.sqrt(mu * sigma2)
    return math.exp(mu * math.log(rp) - mu / 2.0)


def _log_profile(r, mu, sigma2):
    with np.errstate(divide="ignore"):
        return mu * np.log(r) - r**2 / (2.0 * sigma2)


def attenuation_from_mu(mu: float, alpha: float) -> float:
    """Peak-normalized height of a torus at the next peak radius."""
    return (alpha * math.exp(-(alpha**2 - 1.0) / 2.0)) ** mu


def mu_from_attenuation(tau_eps: float, alpha: float) -> float:
    if not 0.0 < tau_eps < 1.0:
        raise ParameterError(f"tau_eps must lie in (0, 1), got {tau_eps}")
    if not alpha > 1.0:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    return math.log(tau_eps) / (math.log(alpha) - (alpha**2 - 1.0) / 2.0)


def _log_beta(alpha: float) -> float:
    # beta = alpha^{2 / (alpha^2 - 1)}
    return 2.0 * math.log(alpha) / (alpha**2 - 1.0)


def intersection_height(mu: float, alpha: float) -> float:
    """Common height of neighbouring peak-normalized tori where they cross.

    ``tau = (log(beta) / beta)^{mu/2} e^{mu/2}``.
    """
    lb = _log_beta(alpha)
    return math.exp(0.5 * mu * (math.log(lb) - lb + 1.0))


def mu_from_intersection(tau: float, alpha: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"tau must lie in (0, 1), got {tau}")
    if not alpha > 1.0:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    lb = _log_beta(alpha)
    beta = math.exp(lb)
    # log tau^2 / (log(log(beta^{1/beta})) + 1)
    return math.log(tau**2) / (math.log(lb / beta) + 1.0)


@dataclass(frozen=True)
class TorusSpec:
    r0: float
    alpha: float
    K: int
    mu: float
    design_mode: str = "explicit"
    design_value: float | None = None

    def __post_init__(self):
        if not self.r0 > 0:
            raise ParameterError(f"r0 must be positive, got {self.r0}")
        if not self.alpha > 1:
            raise ParameterError(f"alpha must exceed 1, got {self.alpha}")
        if int(self.K) != self.K or self.K < 1:
            raise ParameterError(f"K must be a positive integer, got {self.K}")
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if self.design_mode not in DESIGN_MODES:
            raise ParameterError(f"unknown design mode {self.design_mode!r}")

    @classmethod
    def from_attenuation(cls, r0, alpha, K, tau_eps=0.01):
        return cls(r0, alpha, K, mu_from_attenuation(tau_eps, alpha), "attenuation", tau_eps)

    @classmethod
    def from_intersection(cls, r0, alpha, K, tau):
        return cls(r0, alpha, K, mu_from_intersection(tau, alpha), "intersection", tau)

    @classmethod
    def explicit(cls, r0, alpha, K, mu):
        return cls(r0, alpha, K, mu, "explicit", mu)

    @property
    def radii(self) -> np.ndarray:
        return self.r0 * self.alpha ** np.arange(self.K)

    @property
    def sigmas(self) -> np.ndarray:
        return self.radii / math.sqrt(self.mu)

    def as_dict(self) -> dict:
        return {
            "r0": self.r0,
            "alpha": self.alpha,
            "K": self.K,
            "mu": self.mu,
            "design_mode": self.design_mode,
            "design_value": self.design_value,
        }


def intersection_radius(spec: TorusSpec, k: int) -> float:
    """Radius where tori ``k`` and ``k + 1`` have equal peak-normalized height."""
    if not 0 <= k < spec.K - 1:
        raise ParameterError(f"intersection index {k} out of range for K={spec.K}")
    a2 = spec.alpha**2
    return spec.r0 * math.sqrt(math.log(a2) / (a2 - 1.0)) * spec.alpha ** (k + 1)


def peak_normalized(spec: TorusSpec, k: int, r):
    """Continuous ``t(r) / C`` for torus ``k``."""
    s2 = spec.sigmas[k] ** 2
    r = np.asarray(r, dtype=np.float64)
    out = np.exp(_log_profile(r, spec.mu, s2) - _log_profile(spec.radii[k], spec.mu, s2))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class TorusBank:
    """Sampled torus magnitudes ``|psi_k|`` with unit discrete L2 norm."""

    spec: TorusSpec
    grid_halfwidth: int
    sigma: np.ndarray = field(repr=False)
    log_kappa: np.ndarray = field(repr=False)
    support: tuple = field(repr=False)

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def radii(self) -> np.ndarray:
        return self.spec.radii

    @property
    def kappa(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_kappa)

    @property
    def low_fidelity(self) -> tuple:
        """Tori whose peak radius is too small to be sampled faithfully."""
        return tuple(k for k, r in enumerate(self.radii) if r < LOW_FIDELITY_RADIUS)

    def weights(self, k: int, dx: float = 0.0, dy: float = 0.0):
        """``|psi_k|^2`` on the torus window about a subpixel offset.

        Returns ``(w, phi)`` on a ``(2s+1)^2`` grid, ``s = support[k]``,
        with ``w`` summing to 1 over the window.  For ``dx = dy = 0`` the
        normalization equals ``kappa_k``.
        """
        s = self.support[k]
        r, phi = polar_grid(s, dx, dy)
        lw = 2.0 * _log_profile(r, self.spec.mu, self.sigma[k] ** 2)
        w = np.exp(lw - lw.max())
        w /= w.sum()
        return w, phi

    def magnitude(self, k: int) -> np.ndarray:
        """Sampled ``|psi_k|`` (unit L2 norm) on its window."""
        return np.sqrt(self.weights(k)[0])

    @cached_property
    def measured_attenuation(self) -> np.ndarray:
        """Height at the next peak relative to the largest grid sample, per torus."""
        out = np.full(self.K, np.nan)
        for k in range(self.K - 1):
            s2 = self.sigma[k] ** 2
            r, _ = polar_grid(self.support[k])
            lmax = _log_profile(r, self.spec.mu, s2).max()
            out[k] = math.exp(_log_profile(self.radii[k + 1], self.spec.mu, s2) - lmax)
        return out

    def overlap_matrix(self) -> np.ndarray:
        """Normalized cross-correlation of sampled torus magnitudes."""
        H = max(self.support)
        mags = []
        for k in range(self.K):
            m = self.magnitude(k)
            s = self.support[k]
            full = np.zeros((2 * H + 1, 2 * H + 1))
            full[H - s:H + s + 1, H - s:H + s + 1] = m
            mags.append(full.ravel())
        M = np.array(mags)
        return M @ M.T

    @property
    def max_adjacent_overlap(self) -> float:
        if self.K < 2:
            return 0.0
        G = self.overlap_matrix()
        return float(max(G[k, k + 1] for k in range(self.K - 1)))

    def summary_rows(self):
        att = self.measured_attenuation
        for k in range(self.K):
            yield {
                "k": k,
                "r_k": float(self.radii[k]),
                "sigma_k": float(self.sigma[k]),
                "kappa_k": float(self.kappa[k]),
                "attenuation": float(att[k]),
            }

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["k", "r_k", "sigma_k", "kappa_k", "attenuation"], lineterminator="\n")
        w.writeheader()
        for row in self.summary_rows():
            w.writerow({key: (repr(v) if isinstance(v, float) else v) for key, v in row.items()})
        return buf.getvalue()


def build_bank(spec: TorusSpec, grid_halfwidth: int | None = None) -> TorusBank:
    """Sample every torus of ``spec`` on an integer grid.

    The largest torus must fit: ``r_{K-1} + 3 sigma_{K-1} <= grid_halfwidth``.
    Each torus window extends to ``r_k + 4 sigma_k`` (clipped to the grid).
    """
    radii, sigma = spec.radii, spec.sigmas
    need = radii[-1] + 3.0 * sigma[-1]
    if grid_halfwidth is None:
        grid_halfwidth = int(math.ceil(radii[-1] + SUPPORT_SIGMAS * sigma[-1]))
    if need > grid_halfwidth:
        raise ParameterError(
            f"largest torus needs half-width {need:.1f} px, grid half-width is {grid_halfwidth}"
        )
    support = tuple(
        min(int(grid_halfwidth), int(math.ceil(r + SUPPORT_SIGMAS * s))) for r, s in zip(radii, sigma)
    )
    log_kappa = np.empty(spec.K)
    for k in range(spec.K):
        r, _ = polar_grid(support[k])
        lt = _log_profile(r, spec.mu, sigma[k] ** 2)
        m = lt.max()
        log_kappa[k] = m + 0.5 * math.log(np.sum(np.exp(2.0 * (lt - m))))
    for a in (sigma, log_kappa):
        a.setflags(write=False)
    return TorusBank(spec=spec, grid_halfwidth=int(grid_halfwidth), sigma=sigma, log_kappa=log_kappa, support=support)


def default_spec() -> TorusSpec:
    """Fingerprint bank: ``r0 = 2``, ``alpha = 1.54``, 10 taps, ``tau_eps = 0.01``."""
    return TorusSpec.from_attenuation(2.0, 1.54, 10, 0.01)


def outer_usable_tori(spec: TorusSpec, count: int = 3) -> tuple:
    """The ``count`` largest tori, leaving out the last tap.

    The last peak only closes the attenuation design of its predecessor,
    so with 10 taps the usable tori are 0..8 and the default is (6, 7, 8).
    """
    last = spec.K - 2 if spec.K > 1 else 0
    first = max(0, last - count + 1)
    return tuple(range(first, last + 1))
