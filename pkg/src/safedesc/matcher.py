"""Descriptor comparison, grid aggregation, score normalization and fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .descriptor import SafeDescriptor, rotate_descriptor
from .errors import LayoutError, ParameterError

DEN_FLOOR = 1e-300
TANH_SLOPE = 0.01


@dataclass(frozen=True)
class MatchScore:
    ms: complex
    no_overlap: bool = False

    @property
    def score(self) -> float:
        return float(self.ms.real)


def _check_layout(r: SafeDescriptor, t: SafeDescriptor):
    if r.safe.shape != t.safe.shape or r.n_values != t.n_values:
        raise LayoutError(
            f"descriptor layouts differ: K={r.K} n={r.n_values[0]}..{r.n_values[-1]} "
            f"vs K={t.K} n={t.n_values[0]}..{t.n_values[-1]}"
        )


def match(r: SafeDescriptor, t: SafeDescriptor, phi_compensation: float | None = None) -> MatchScore:
    """Complex match ``<r, t> / <|r|, |t|>``; its real part is the score.

    With ``phi_compensation`` the test descriptor is steered by that angle
    first.  No overlapping reliable components gives score 0 and
    ``no_overlap=True``.
    """
    _check_layout(r, t)
    if phi_compensation is not None:
        t = rotate_descriptor(t, phi_compensation)
    a, b = r.safe, t.safe
    den = float(np.sum(np.abs(a) * np.abs(b)))
    if den <= DEN_FLOOR:
        return MatchScore(0j, True)
    ms = complex(np.sum(np.conj(a) * b)) / den
    return MatchScore(ms, False)


def grid_match(reference: Sequence[SafeDescriptor], test: Sequence[SafeDescriptor], phi_compensation=None) -> float:
    """Mean of per-point scores; no-overlap points count as 0."""
    if len(reference) != len(test):
        raise LayoutError(f"grid sizes differ: {len(reference)} vs {len(test)}")
    if not reference:
        raise LayoutError("empty grid")
    return float(np.mean([match(r, t, phi_compensation).score for r, t in zip(reference, test)]))


@dataclass(frozen=True)
class ScoreNormalizer:
    """Genuine-score statistics for the tanh rule."""

    mu_s: float
    sigma_s: float
    slope: float = TANH_SLOPE

    def __post_init__(self):
        if not self.sigma_s > 0:
            raise ParameterError(f"sigma_s must be positive, got {self.sigma_s}")

    @classmethod
    def from_genuine(cls, scores, slope: float = TANH_SLOPE):
        s = np.asarray(scores, dtype=np.float64)
        if s.size < 2:
            raise ParameterError("need at least two genuine scores")
        return cls(float(s.mean()), float(s.std(ddof=0)), slope)


def tanh_normalize(s, norm: ScoreNormalizer):
    """``0.5 * (tanh(slope * (s - mu_s) / sigma_s) + 1)``; arrays welcome."""
    if not norm.sigma_s > 0:
        raise ParameterError("sigma_s must be positive")
    out = 0.5 * (np.tanh(norm.slope * (np.asarray(s, dtype=np.float64) - norm.mu_s) / norm.sigma_s) + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def fuse_scores(a, b):
    """Sum-rule fusion (plain mean) of two normalized scores in [0, 1]."""
    a_ = np.asarray(a, dtype=np.float64)
    b_ = np.asarray(b, dtype=np.float64)
    for v, name in ((a_, "a"), (b_, "b")):
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ParameterError(f"fusion input {name} must lie in [0, 1]")
    out = 0.5 * (a_ + b_)
    return float(out) if np.ndim(out) == 0 else out


def direction_compensation(reference_direction, test_direction):
    """Steering angle that brings the test descriptor onto the reference."""
    if reference_direction is None or test_direction is None:
        return None
    d = float(reference_direction) - float(test_direction)
    return math.remainder(d, 2 * math.pi)
