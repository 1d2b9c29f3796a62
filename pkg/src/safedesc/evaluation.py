"""Verification and identification statistics.

Convention: a comparison is accepted iff ``score >= t``.  ``FA(t)`` is the
fraction of impostor scores ``>= t`` and ``FR(t)`` the fraction of
genuine scores ``< t``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True, eq=False)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.genuine, dtype=np.float64).ravel()
        i = np.asarray(self.impostor, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(i))):
            raise ParameterError("scores must be finite")
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)

    def require_both(self):
        if self.genuine.size == 0:
            raise ParameterError("no genuine scores")
        if self.impostor.size == 0:
            raise ParameterError("no impostor scores")


@dataclass(frozen=True, eq=False)
class CmcInput:
    scores: np.ndarray
    gallery_labels: Sequence
    probe_labels: Sequence

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or s.shape != (len(self.probe_labels), len(self.gallery_labels)):
            raise ParameterError(
                f"score matrix {s.shape} does not match {len(self.probe_labels)} probes x {len(self.gallery_labels)} gallery"
            )
        gl = set(self.gallery_labels)
        missing = [p for p in self.probe_labels if p not in gl]
        if missing:
            raise ParameterError(f"probe labels missing from gallery: {missing[:5]}")
        object.__setattr__(self, "scores", s)


def operating_points(s: ScoreSet):
    """``(thresholds, FA, FR)`` at every distinct score plus one above the max."""
    s.require_both()
    g = np.sort(s.genuine)
    imp = np.sort(s.impostor)
    ts = np.unique(np.concatenate([g, imp]))
    ts = np.append(ts, np.inf)
    fa = 1.0 - np.searchsorted(imp, ts, side="left") / imp.size
    fr = np.searchsorted(g, ts, side="left") / g.size
    return ts, fa, fr


def _lower_hull(points):
    """Lower-left convex hull of points sorted by increasing FA."""
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point unless it lies strictly below the chord
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def compute_eer(s: ScoreSet):
    """Equal error rate on the convex hull of the (FA, FR) operating points.

    The crossing with ``FA = FR`` is linearly interpolated between
    adjacent hull vertices; the threshold is interpolated the same way.
    Returns ``(eer, threshold)``.
    """
    ts, fa, fr = operating_points(s)
    # walk by increasing FA (decreasing threshold)
    order = np.argsort(-ts, kind="stable")
    pts = [(fa[i], fr[i], ts[i]) for i in order]
    hull = _lower_hull([(a, b) for a, b, _ in pts])
    tmap = {}
    for a, b, t in pts:
        tmap.setdefault((a, b), t)
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        d1, d2 = x1 - y1, x2 - y2
        if d1 <= 0 <= d2:
            if d2 == d1:
                lam = 0.5
            else:
                lam = -d1 / (d2 - d1)
            eer = x1 + lam * (x2 - x1)
            t1, t2 = tmap[(x1, y1)], tmap[(x2, y2)]
            if np.isinf(t1):
                t1 = float(np.max(np.concatenate([s.genuine, s.impostor])))
            thr = t1 + lam * (t2 - t1)
            return float(eer), float(thr)
    # hull touches the diagonal only at an end point
    x, y = hull[0]
    return float(max(x, y)), float(tmap[hull[0]])


def eer_bruteforce(s: ScoreSet) -> float:
    """Smallest ``FA = FR`` value reachable by mixing two operating points."""
    _, fa, fr = operating_points(s)
    best = 1.0
    pts = list(zip(fa, fr))
    for (x1, y1), (x2, y2) in itertools.product(pts, repeat=2):
        d1, d2 = x1 - y1, x2 - y2
        if d1 == 0:
            best = min(best, x1)
        if d1 < 0 < d2:
            lam = -d1 / (d2 - d1)
            best = min(best, x1 + lam * (x2 - x1))
    return float(best)


def det_curve(s: ScoreSet, points: int = 101):
    """``(thresholds, FA, FR)`` at ``points`` thresholds across the score range,
    plus one threshold just above the largest score."""
    s.require_both()
    if points < 2:
        raise ParameterError("need at least two DET points")
    allv = np.concatenate([s.genuine, s.impostor])
    lo, hi = float(allv.min()), float(allv.max())
    ts = np.linspace(lo, hi, points)
    ts = np.append(ts, np.nextafter(hi, np.inf))
    g = np.sort(s.genuine)
    imp = np.sort(s.impostor)
    fa = 1.0 - np.searchsorted(imp, ts, side="left") / imp.size
    fr = np.searchsorted(g, ts, side="left") / g.size
    return ts, fa, fr


def compute_det(s: ScoreSet, points: int = 101):
    """DET staircase as a list of ``(FA, FR)`` pairs, thresholds increasing."""
    _, fa, fr = det_curve(s, points)
    return [(float(a), float(b)) for a, b in zip(fa, fr)]


def true_match_ranks(c: CmcInput) -> np.ndarray:
    """1-based rank of the best true match; ties count against it."""
    gl = np.asarray(c.gallery_labels, dtype=object)
    ranks = np.empty(len(c.probe_labels), dtype=np.int64)
    for i, lab in enumerate(c.probe_labels):
        row = c.scores[i]
        true = gl == lab
        best = row[true].max()
        ranks[i] = 1 + int(np.sum(row[~true] >= best))
    return ranks


def compute_cmc(c: CmcInput, max_rank: int | None = None):
    """Fraction of probes whose true match is within the top ``r``, ``r = 1..max_rank``."""
    G = c.scores.shape[1]
    max_rank = G if max_rank is None else int(max_rank)
    if max_rank < 1:
        raise ParameterError("max_rank must be positive")
    ranks = true_match_ranks(c)
    return [float(np.mean(ranks <= r)) for r in range(1, max_rank + 1)]


@dataclass(frozen=True)
class PairingRow:
    probe_id: str
    gallery_id: str
    label: str


def read_manifest(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or rec[0].startswith("#"):
                continue
            if [v.strip() for v in rec[:3]] == ["probe_id", "gallery_id", "label"]:
                continue
            if len(rec) < 3 or rec[2].strip() not in ("genuine", "impostor"):
                raise ParameterError(f"{path}:{lineno}: expected probe_id,gallery_id,genuine|impostor")
            rows.append(PairingRow(rec[0].strip(), rec[1].strip(), rec[2].strip()))
    return rows


def write_manifest(rows: Iterable[PairingRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probe_id", "gallery_id", "label"])
        for r in rows:
            w.writerow([r.probe_id, r.gallery_id, r.label])


@dataclass
class ProtocolResult:
    scores: ScoreSet
    cmc: CmcInput | None
    records: list = field(default_factory=list)


def run_protocol(
    gallery: Mapping,
    probes: Mapping,
    manifest: Sequence[PairingRow],
    score_fn: Callable,
    impostors: str = "all",
) -> ProtocolResult:
    """Score a verification protocol and build the identification matrix.

    ``manifest`` declares genuine pairs (and optionally impostor pairs).
    With ``impostors="all"`` every probe-gallery pair that is not declared
    genuine is an impostor comparison; with ``"manifest"`` only declared
    impostor rows are scored.  ``records`` holds
    ``(probe_id, gallery_id, label, score)`` in deterministic order.
    """
    if impostors not in ("all", "manifest"):
        raise ParameterError(f"unknown impostor rule {impostors!r}")
    for row in manifest:
        if row.probe_id not in probes:
            raise ParameterError(f"manifest references unknown probe {row.probe_id!r}")
        if row.gallery_id not in gallery:
            raise ParameterError(f"manifest references unknown gallery entry {row.gallery_id!r}")
    genuine_pairs = [(r.probe_id, r.gallery_id) for r in manifest if r.label == "genuine"]
    gset = set(genuine_pairs)
    if impostors == "all":
        imp_pairs = [(p, g) for p in probes for g in gallery if (p, g) not in gset]
    else:
        imp_pairs = [(r.probe_id, r.gallery_id) for r in manifest if r.label == "impostor"]

    cache = {}

    def score(p, g):
        if (p, g) not in cache:
            cache[(p, g)] = float(score_fn(gallery[g], probes[p]))
        return cache[(p, g)]

    records = [(p, g, "genuine", score(p, g)) for p, g in genuine_pairs]
    records += [(p, g, "impostor", score(p, g)) for p, g in imp_pairs]
    ss = ScoreSet([r[3] for r in records if r[2] == "genuine"], [r[3] for r in records if r[2] == "impostor"])

    cmc = None
    if impostors == "all" and genuine_pairs:
        true_of = {}
        for p, g in genuine_pairs:
            true_of.setdefault(p, g)
        gids = list(gallery)
        pids = [p for p in probes if p in true_of]
        mat = np.array([[score(p, g) for g in gids] for p in pids])
        # gallery labels are gallery ids; probes inherit the id of their mate
        cmc = CmcInput(mat, gids, [true_of[p] for p in pids])
    return ProtocolResult(ss, cmc, records)


def two_session_manifest(n_users: int = 150, images_per_session: int = 4, impostor_image: int = 2):
    """Two-session periocular protocol.

    Genuine: every session-1 image of a user against every session-2 image.
    Impostor: image ``impostor_image`` of session 1 of a user against the
    same image index of session 2 of every other user.  Ids are
    ``u<user>_s<session>_<image>``; probes are session 2, gallery session 1.
    """
    rows = []
    for u in range(n_users):
        for i in range(1, images_per_session + 1):
            for j in range(1, images_per_session + 1):
                rows.append(PairingRow(f"u{u}_s2_{j}", f"u{u}_s1_{i}", "genuine"))
    for u in range(n_users):
        for v in range(n_users):
            if u != v:
                rows.append(PairingRow(f"u{v}_s2_{impostor_image}", f"u{u}_s1_{impostor_image}", "impostor"))
    return rows


def write_scores(records, path, normalizer=None) -> None:
    """Score CSV: probe_id, gallery_id, label, raw_score, normalized_score."""
    from .matcher import tanh_normalize

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probe_id", "gallery_id", "label", "raw_score", "normalized_score"])
        for p, g, lab, s in records:
            ns = "" if normalizer is None else repr(tanh_normalize(s, normalizer))
            w.writerow([p, g, lab, repr(float(s)), ns])


def read_scores(path, column: str = "raw_score"):
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for lineno, rec in enumerate(rd, 2):
            try:
                out.append((rec["probe_id"], rec["gallery_id"], rec["label"], float(rec[column])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParameterError(f"{path}:{lineno}: bad score row ({exc})") from None
            if rec["label"] not in ("genuine", "impostor"):
                raise ParameterError(f"{path}:{lineno}: label must be genuine or impostor")
    return out


def scores_from_records(records) -> ScoreSet:
    return ScoreSet([r[3] for r in records if r[2] == "genuine"], [r[3] for r in records if r[2] == "impostor"])


def cmc_from_records(records) -> CmcInput | None:
    """Identification matrix from scored pairs (missing pairs score -inf)."""
    probes = sorted({r[0] for r in records if r[2] == "genuine"})
    if not probes:
        return None
    gallery = sorted({r[1] for r in records})
    gi = {g: j for j, g in enumerate(gallery)}
    pi = {p: i for i, p in enumerate(probes)}
    mat = np.full((len(probes), len(gallery)), -np.inf)
    mate = {}
    for p, g, lab, s in records:
        if p in pi:
            mat[pi[p], gi[g]] = s
            if lab == "genuine":
                mate.setdefault(p, g)
    return CmcInput(mat, gallery, [mate[p] for p in probes])


def write_curve(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def plot_det(curves: Mapping, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for name, (fa, fr) in curves.items():
        ax.plot(np.asarray(fa) * 100, np.asarray(fr) * 100, label=name)
    ax.plot([0, 100], [0, 100], "k:", lw=0.8)
    ax.set_xlabel("False acceptance (%)")
    ax.set_ylabel("False rejection (%)")
    ax.legend()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_cmc(cmc: Sequence[float], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(np.arange(1, len(cmc) + 1), np.asarray(cmc) * 100, marker=".")
    ax.set_xlabel("Rank")
    ax.set_ylabel("Identification rate (%)")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
