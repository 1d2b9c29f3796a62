"""Command-line front end.

Exit status: 0 on success, 1 on a runtime error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .descriptor import (
    extract,
    intrinsic_angle,
    read_descriptors,
    write_descriptors,
)
from .errors import FormatError, LayoutError, NoReliableAngle, ParameterError
from .evaluation import (
    cmc_from_records,
    compute_cmc,
    compute_eer,
    det_curve,
    plot_cmc,
    plot_det,
    read_manifest,
    read_scores,
    run_protocol,
    scores_from_records,
    write_curve,
    write_scores,
)
from .field import hsv_render, read_field, read_image, write_field, write_image, write_png
from .grid import grid_points, periocular_grid, read_keypoints, write_keypoints
from .matcher import ScoreNormalizer, fuse_scores, match, tanh_normalize
from .orientation import DEFAULT_SIGMA_IN2, DEFAULT_SIGMA_OUT2, orientation_field
from .torus import TorusSpec, build_bank, outer_usable_tori

BANK_DEFAULTS = {"r0": 2.0, "alpha": 1.54, "tori": 10, "tau_eps": 0.01}


class UsageError(Exception):
    pass


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_bank_flags(p):
    g = p.add_argument_group("torus bank")
    g.add_argument("--bank-config", type=Path, help="key = value file (r0, alpha, tori, tau_eps | tau | mu)")
    g.add_argument("--r0", type=float, help="first peak radius in pixels (default 2)")
    g.add_argument("--alpha", type=float, help="geometric peak factor (default 1.54)")
    g.add_argument("--tori", type=int, help="number of tori K (default 10)")
    m = g.add_mutually_exclusive_group()
    m.add_argument("--tau-eps", type=float, help="attenuation at the next peak (default 0.01)")
    m.add_argument("--tau", type=float, help="height where neighbouring tori intersect")
    m.add_argument("--mu", type=float, help="explicit width exponent")


def _read_bank_config(path: Path) -> dict:
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        key, sep, val = s.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in ("r0", "alpha", "tori", "tau_eps", "tau", "mu"):
            raise FormatError(f"{path}:{lineno}: expected one of r0, alpha, tori, tau_eps, tau, mu as key = value")
        try:
            out[key] = int(val) if key == "tori" else float(val)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad value {val.strip()!r}") from None
    if sum(k in out for k in ("tau_eps", "tau", "mu")) > 1:
        raise FormatError(f"{path}: give only one of tau_eps, tau, mu")
    return out


def bank_spec_from_args(args) -> TorusSpec:
    cfg = dict(BANK_DEFAULTS)
    if args.bank_config is not None:
        c = _read_bank_config(args.bank_config)
        if any(k in c for k in ("tau", "mu")):
            cfg.pop("tau_eps")
        cfg.update(c)
    for key in ("r0", "alpha", "tori"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    for key in ("tau_eps", "tau", "mu"):
        if getattr(args, key) is not None:
            for k in ("tau_eps", "tau", "mu"):
                cfg.pop(k, None)
            cfg[key] = getattr(args, key)
    r0, alpha, K = cfg["r0"], cfg["alpha"], cfg["tori"]
    if "mu" in cfg:
        return TorusSpec.explicit(r0, alpha, K, cfg["mu"])
    if "tau" in cfg:
        return TorusSpec.from_intersection(r0, alpha, K, cfg["tau"])
    return TorusSpec.from_attenuation(r0, alpha, K, cfg["tau_eps"])


# --- subcommands -----------------------------------------------------------


def cmd_orient(args) -> int:
    img = read_image(args.image)
    of = orientation_field(img, args.sigma_in2, args.sigma_out2, args.boundary)
    out = of.i20_normalized if args.kind == "normalized" else of.i20
    write_field(out, args.output)
    if args.render:
        ceiling = 1.0 if args.kind == "normalized" else max(float(np.abs(out.data).max()), 1e-300)
        write_png(hsv_render(out, ceiling), Path(args.output).with_suffix(".png"))
    return 0


def _load_keypoints(args, shape):
    if args.keypoints is not None:
        return read_keypoints(args.keypoints)
    h, w = shape
    center = (args.grid_center[0], args.grid_center[1]) if args.grid_center else ((w - 1) / 2.0, (h - 1) / 2.0)
    if args.iris_radius is not None:
        g = periocular_grid(center, args.iris_radius, args.grid[0], args.grid[1], args.grid_spacing_factor)
    else:
        from .grid import GridSpec

        g = GridSpec(center, args.grid[0], args.grid[1], args.grid_spacing)
    return grid_points(g)


def cmd_extract(args) -> int:
    field = read_field(args.field)
    if field.kind != "normalized":
        _warn(f"{args.field} holds a raw field; SAFE bounds assume a normalized field")
    spec = bank_spec_from_args(args)
    bank = build_bank(spec)
    if args.n_range[0] > args.n_range[1]:
        raise UsageError(f"--n-range {args.n_range[0]},{args.n_range[1]} is empty")
    tori = args.use_tori if args.use_tori else outer_usable_tori(spec)
    kps = _load_keypoints(args, field.shape)
    h, w = field.shape
    items = []
    for kp in kps:
        if not kp.in_bounds(w, h):
            _warn(f"keypoint {kp.id} at ({kp.x:g}, {kp.y:g}) lies outside the {w}x{h} field")
        d = extract(field, bank, kp, tuple(args.n_range), tori, args.mode)
        lost = 1.0 - float(d.coverage.min())
        if args.mode == "masked" and lost > 1e-6:
            _warn(f"keypoint {kp.id}: tori reach past the field border (lost weight {lost:.3g})")
        items.append((kp.id, d))
    write_descriptors(items, args.output)
    if args.keypoints_out:
        write_keypoints(kps, args.keypoints_out)
    return 0


def _compensation(r, t, mode, torus):
    if mode == "none":
        return None
    if mode == "direction":
        dr, dt = r.meta.get("direction"), t.meta.get("direction")
        if dr is None or dt is None:
            raise ParameterError("direction compensation needs a direction on both keypoints")
        return math.remainder(dr - dt, 2 * math.pi)
    if mode == "intrinsic":
        k = torus if torus is not None else r.torus_indices[-1]
        ar, _ = intrinsic_angle(r, k)
        at, _ = intrinsic_angle(t, k)
        return math.remainder(ar - at, 2 * math.pi)
    # auto: keypoint directions when both sides carry one, otherwise none
    if "direction" in r.meta and "direction" in t.meta:
        return _compensation(r, t, "direction", torus)
    return None


def cmd_match(args) -> int:
    ref = read_descriptors(args.reference)
    test = read_descriptors(args.test)
    if len(ref) != len(test):
        raise LayoutError(f"{args.reference} has {len(ref)} descriptors, {args.test} has {len(test)}")
    scores = []
    for (rid, r), (tid, t) in zip(ref, test):
        try:
            comp = _compensation(r, t, args.compensate, args.torus)
        except NoReliableAngle as exc:
            _warn(f"{rid}/{tid}: {exc}; matching without compensation")
            comp = None
        m = match(r, t, comp)
        if m.no_overlap:
            _warn(f"{rid}/{tid}: no overlapping reliable components")
        scores.append(m.score)
        if args.verbose:
            print(f"{rid},{tid},{m.score:.6f}")
    print(f"score {float(np.mean(scores)):.6f}")
    return 0


def _grid_score(g, p):
    """Mean point score; points with directions on both sides are steered."""
    if len(g) != len(p):
        raise LayoutError(f"grid sizes differ: {len(g)} vs {len(p)}")
    return float(np.mean([match(r, t, _compensation(r, t, "auto", None)).score for (_, r), (_, t) in zip(g, p)]))


def cmd_eval(args) -> int:
    if args.scores is not None:
        records = read_scores(args.scores, args.column)
    else:
        if not (args.gallery and args.probes and args.manifest):
            raise UsageError("eval needs --scores or all of --gallery, --probes, --manifest")
        gallery = _descriptor_sets(args.gallery)
        probes = _descriptor_sets(args.probes)
        manifest = read_manifest(args.manifest)
        res = run_protocol(gallery, probes, manifest, _grid_score, args.impostors)
        records = res.records
        if args.scores_out:
            norm = None
            gen = [r[3] for r in records if r[2] == "genuine"]
            if len(gen) >= 2 and np.std(gen) > 0:
                norm = ScoreNormalizer.from_genuine(gen)
            write_scores(records, args.scores_out, norm)
    ss = scores_from_records(records)
    eer, thr = compute_eer(ss)
    print(f"genuine {ss.genuine.size} impostor {ss.impostor.size}")
    print(f"EER {eer:.6f} threshold {thr:.6f}")
    ts, fa, fr = det_curve(ss, args.points)
    if args.det:
        write_curve(args.det, ["threshold", "fa", "fr"], zip(ts, fa, fr))
    cmc = None
    ci = cmc_from_records(records)
    if ci is not None:
        cmc = compute_cmc(ci)
        print(f"rank-1 {cmc[0]:.6f}")
        if args.cmc:
            write_curve(args.cmc, ["rank", "rate"], ((i + 1, v) for i, v in enumerate(cmc)))
    if args.plot_dir:
        args.plot_dir.mkdir(parents=True, exist_ok=True)
        plot_det({"det": (fa, fr)}, args.plot_dir / "det.png")
        if cmc is not None:
            plot_cmc(cmc, args.plot_dir / "cmc.png")
    return 0


def _descriptor_sets(path: Path) -> dict:
    """A directory of ``<id>.safe`` files, or one file whose blocks are ``<set>/<point>``."""
    out = {}
    if path.is_dir():
        for f in sorted(path.glob("*.safe")):
            out[f.stem] = read_descriptors(f)
        return out
    for kid, d in read_descriptors(path):
        sid, _, _ = kid.partition("/")
        out.setdefault(sid, []).append((kid, d))
    return out


def cmd_synth(args) -> int:
    from . import experiments as ex
    from . import synthesis as sy

    if args.fig5:
        strict = ex.fig5_experiment(args.size)
        print(strict.format_table())
        if max(build_bank(ex.fig5_spec()).support) > args.size // 2:
            full = ex.fig5_experiment(ex.fig5_full_support_size())
            print()
            print(full.format_table())
        return 0
    out = Path(args.output) if args.output else None
    if args.blend:
        p = sy.BlendParams.balanced(size=args.size)
        img, fld = sy.synth_blend_image(p), sy.synth_blend_field(p)
    elif args.family is not None:
        fp = sy.FamilyPattern(args.family, args.theta)
        img, fld = sy.synth_family_image(fp, args.size), sy.synth_family_field(fp, args.size)
    elif args.corpus:
        if out is None:
            raise UsageError("synth --corpus needs -o DIR")
        _write_corpus(out, args)
        return 0
    else:
        raise UsageError("synth needs one of --fig5, --blend, --family N, --corpus N")
    if out is None:
        raise UsageError("synth needs -o PREFIX")
    write_image(img, out.with_suffix(".png"))
    write_field(fld, out.with_suffix(".cfld"))
    return 0


def _write_corpus(out: Path, args) -> None:
    """Gallery/probe descriptor sets and a manifest for a synthetic benchmark."""
    from .descriptor import extract as _extract
    from .evaluation import PairingRow, write_manifest
    from .grid import Keypoint
    from .synthesis import perturb, random_neighbourhood
    from .torus import default_spec

    rng = np.random.default_rng(args.seed)
    spec = default_spec()
    bank = build_bank(spec)
    tori = outer_usable_tori(spec)
    h = args.size // 2
    gal, prb = out / "gallery", out / "probes"
    gal.mkdir(parents=True, exist_ok=True)
    prb.mkdir(parents=True, exist_ok=True)
    rows = []
    params = []
    for i in range(args.corpus):
        f, prm = random_neighbourhood(rng, args.size)
        rot = math.radians(rng.uniform(-args.max_rotation, args.max_rotation))
        pseed = int(rng.integers(2**31))
        pf = perturb(f, args.noise, rot, seed=pseed)
        sid = f"s{i:03d}"
        g = _extract(f, bank, Keypoint(sid, h, h, 0.0), tori=tori)
        p = _extract(pf, bank, Keypoint(sid, h, h, rot), tori=tori)
        write_descriptors([(sid, g)], gal / f"{sid}.safe")
        write_descriptors([(sid, p)], prb / f"{sid}.safe")
        rows.append(PairingRow(sid, sid, "genuine"))
        prm.update(rotation=rot, noise=args.noise, noise_seed=pseed)
        params.append((sid, json.dumps(prm, sort_keys=True)))
    write_manifest(rows, out / "manifest.csv")
    with open(out / "corpus.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "generator", "params", "seed"])
        for sid, prm in params:
            w.writerow([sid, "random_neighbourhood", prm, args.seed])


def cmd_bank(args) -> int:
    spec = bank_spec_from_args(args)
    bank = build_bank(spec)
    print(f"# r0={spec.r0:g} alpha={spec.alpha:g} K={spec.K} mu={spec.mu:.6g} design={spec.design_mode}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["k", "r_k", "sigma_k", "kappa_k", "attenuation"])
    for row in bank.summary_rows():
        w.writerow(
            [
                row["k"],
                f"{row['r_k']:.4f}",
                f"{row['sigma_k']:.4f}",
                f"{row['kappa_k']:.6g}",
                "" if math.isnan(row["attenuation"]) else f"{row['attenuation']:.6f}",
            ]
        )
    if bank.low_fidelity:
        _warn(f"tori {list(bank.low_fidelity)} peak below 2 px and are sampled coarsely")
    if args.csv:
        Path(args.csv).write_text(bank.summary_csv())
    return 0


def cmd_fuse(args) -> int:
    a = read_scores(args.scores_a, args.column)
    b = read_scores(args.scores_b, args.column)
    ka = {(p, g): (lab, s) for p, g, lab, s in a}
    kb = {(p, g): (lab, s) for p, g, lab, s in b}
    if set(ka) != set(kb):
        raise LayoutError("score files cover different comparisons")
    na = ScoreNormalizer.from_genuine([s for _, _, lab, s in a if lab == "genuine"])
    nb = ScoreNormalizer.from_genuine([s for _, _, lab, s in b if lab == "genuine"])
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probe_id", "gallery_id", "label", "raw_score", "normalized_score"])
        for p, g, lab, s in a:
            if kb[(p, g)][0] != lab:
                raise LayoutError(f"labels disagree for {p},{g}")
            fused = fuse_scores(tanh_normalize(s, na), tanh_normalize(kb[(p, g)][1], nb))
            w.writerow([p, g, lab, repr(fused), repr(fused)])
    return 0


def cmd_render(args) -> int:
    field = read_field(args.field)
    ceiling = args.ceiling
    if ceiling is None:
        ceiling = 1.0 if field.kind == "normalized" else max(float(np.abs(field.data).max()), 1e-300)
    write_png(hsv_render(field, ceiling), args.output)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safedesc", description="SAFE orientation-field descriptors")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("orient", help="image -> orientation field (CFLD)")
    o.add_argument("image", type=Path)
    o.add_argument("-o", "--output", type=Path, required=True)
    o.add_argument("--sigma-in2", type=float, default=DEFAULT_SIGMA_IN2)
    o.add_argument("--sigma-out2", type=float, default=DEFAULT_SIGMA_OUT2)
    o.add_argument("--boundary", choices=("zero", "reflect"), default="zero")
    o.add_argument("--kind", choices=("normalized", "raw"), default="normalized")
    o.add_argument("--render", action="store_true", help="also write an HSV PNG next to the output")
    o.set_defaults(func=cmd_orient)

    e = sub.add_parser("extract", help="field + keypoints -> descriptor file")
    e.add_argument("field", type=Path)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--keypoints", type=Path, help="CSV id,x,y[,direction[,kind]]")
    src.add_argument("--grid", type=_int_list, metavar="ROWS,COLS", help="rectangular grid, e.g. 7,9")
    e.add_argument("--grid-center", type=lambda s: tuple(float(v) for v in s.split(",")), metavar="X,Y")
    e.add_argument("--grid-spacing", type=float, default=16.0)
    e.add_argument("--iris-radius", type=float, help="grid spacing = factor * iris radius")
    e.add_argument("--grid-spacing-factor", type=float, default=0.5)
    e.add_argument("--keypoints-out", type=Path)
    e.add_argument("-o", "--output", type=Path, required=True)
    e.add_argument("--n-range", type=_int_list, default=(-4, 4), metavar="NMIN,NMAX", help="symmetry indices, e.g. --n-range=-4,4")
    e.add_argument("--use-tori", type=_int_list, metavar="K1,K2,...", help="torus subset (default: 3 outermost usable)")
    e.add_argument("--mode", choices=("masked", "strict"), default="masked")
    _add_bank_flags(e)
    e.set_defaults(func=cmd_extract)

    m = sub.add_parser("match", help="compare two descriptor files block by block")
    m.add_argument("reference", type=Path)
    m.add_argument("test", type=Path)
    m.add_argument("--compensate", choices=("auto", "none", "direction", "intrinsic"), default="auto")
    m.add_argument("--torus", type=int, help="torus for intrinsic angles (default: outermost stored)")
    m.add_argument("-v", "--verbose", action="store_true", help="print per-block scores")
    m.set_defaults(func=cmd_match)

    v = sub.add_parser("eval", help="EER, DET and CMC from scores or descriptor sets")
    v.add_argument("--scores", type=Path)
    v.add_argument("--column", choices=("raw_score", "normalized_score"), default="raw_score")
    v.add_argument("--gallery", type=Path)
    v.add_argument("--probes", type=Path)
    v.add_argument("--manifest", type=Path)
    v.add_argument("--impostors", choices=("all", "manifest"), default="all")
    v.add_argument("--scores-out", type=Path)
    v.add_argument("--det", type=Path)
    v.add_argument("--cmc", type=Path)
    v.add_argument("--points", type=int, default=101)
    v.add_argument("--plot-dir", type=Path)
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="analytic test patterns and experiments")
    what = s.add_mutually_exclusive_group()
    what.add_argument("--fig5", action="store_true", help="print the 7x3 coefficient table of the blend field")
    what.add_argument("--blend", action="store_true", help="balanced core/delta blend image and field")
    what.add_argument("--family", type=int, metavar="N", help="pure symmetry family N")
    what.add_argument("--corpus", type=int, metavar="COUNT", help="synthetic gallery/probe descriptor sets")
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--size", type=int, default=257)
    s.add_argument("--noise", type=float, default=0.3)
    s.add_argument("--max-rotation", type=float, default=30.0, help="degrees")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", type=Path)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("bank", help="print the torus table")
    _add_bank_flags(b)
    b.add_argument("--csv", type=Path, help="also write the full-precision summary CSV")
    b.set_defaults(func=cmd_bank)

    f = sub.add_parser("fuse", help="tanh-normalize two score files and average them")
    f.add_argument("scores_a", type=Path)
    f.add_argument("scores_b", type=Path)
    f.add_argument("--column", choices=("raw_score", "normalized_score"), default="raw_score")
    f.add_argument("-o", "--output", type=Path, required=True)
    f.set_defaults(func=cmd_fuse)

    r = sub.add_parser("render", help="HSV rendering of a CFLD field")
    r.add_argument("field", type=Path)
    r.add_argument("-o", "--output", type=Path, required=True)
    r.add_argument("--ceiling", type=float)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        name = exc.filename if exc.filename is not None else str(exc)
        print(f"error: file not found: {name}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
