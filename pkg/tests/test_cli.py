import csv
import math

import numpy as np
import pytest

from safedesc.cli import main
from safedesc.descriptor import read_descriptors
from safedesc.field import read_field


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def blend(tmp_path, capsys):
    code, _, _ = run(["synth", "--blend", "--size", "129", "-o", tmp_path / "blend"], capsys)
    assert code == 0
    return tmp_path


def test_help_and_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    with pytest.raises(SystemExit) as e:
        main(["bank", "--bogus"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["bank", "--tau", "0.3", "--mu", "20"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2


def test_orient(blend, capsys):
    code, _, _ = run(["orient", blend / "blend.png", "-o", blend / "f.cfld", "--sigma-out2", "4", "--render"], capsys)
    assert code == 0
    f = read_field(blend / "f.cfld")
    assert f.kind == "normalized" and f.shape == (129, 129)
    assert (blend / "f.png").exists()


def test_orient_missing_file(tmp_path, capsys):
    code, _, err = run(["orient", tmp_path / "nope.pgm", "-o", tmp_path / "f.cfld"], capsys)
    assert code == 1
    assert "nope.pgm" in err


def test_bad_field_file(tmp_path, capsys):
    (tmp_path / "bad.cfld").write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
    code, _, err = run(["render", tmp_path / "bad.cfld", "-o", tmp_path / "x.png"], capsys)
    assert code == 1 and "magic" in err


def _field(tmp, capsys):
    run(["orient", tmp / "blend.png", "-o", tmp / "f.cfld", "--sigma-out2", "4"], capsys)
    return tmp / "f.cfld"


def test_extract_blocks_and_determinism(blend, capsys):
    fld = _field(blend, capsys)
    (blend / "kp.csv").write_text("a,64,64,0.3,core\nb,60.5,70.25\nout,500,10,,other\n")
    argv = ["extract", fld, "--keypoints", blend / "kp.csv", "--r0", "4", "--alpha", "1.5", "--tori", "5"]
    code, _, err = run(argv + ["-o", blend / "d1.safe"], capsys)
    assert code == 0
    assert "out" in err and "outside" in err
    run(argv + ["-o", blend / "d2.safe"], capsys)
    assert (blend / "d1.safe").read_bytes() == (blend / "d2.safe").read_bytes()
    ds = read_descriptors(blend / "d1.safe")
    assert [k for k, _ in ds] == ["a", "b", "out"]
    assert ds[0][1].torus_indices == (1, 2, 3)
    assert np.all(ds[2][1].e < ds[0][1].e)


def test_extract_grid_mode(blend, capsys):
    fld = _field(blend, capsys)
    code, _, _ = run(
        ["extract", fld, "--grid", "3,3", "--grid-spacing", "5", "--r0", "4", "--alpha", "1.5", "--tori", "5",
         "--use-tori", "0,1", "--n-range=-2,2", "-o", blend / "g.safe"],
        capsys,
    )
    assert code == 0
    ds = read_descriptors(blend / "g.safe")
    assert len(ds) == 9 and ds[0][0] == "r0c0"
    assert ds[0][1].n_values == (-2, -1, 0, 1, 2)


def test_match_identical(blend, capsys):
    fld = _field(blend, capsys)
    (blend / "kp.csv").write_text("a,64,64\nb,50,70\n")
    run(["extract", fld, "--keypoints", blend / "kp.csv", "--r0", "4", "--alpha", "1.5", "--tori", "5", "-o", blend / "d.safe"], capsys)
    code, out, _ = run(["match", blend / "d.safe", blend / "d.safe"], capsys)
    assert code == 0
    assert out.strip().splitlines()[-1] == "score 1.000000"


def test_match_layout_error(blend, capsys):
    fld = _field(blend, capsys)
    (blend / "kp.csv").write_text("a,64,64\n")
    base = ["extract", fld, "--keypoints", blend / "kp.csv", "--r0", "4", "--alpha", "1.5", "--tori", "5"]
    run(base + ["-o", blend / "a.safe"], capsys)
    run(base + ["--n-range=-1,1", "-o", blend / "b.safe"], capsys)
    code, _, err = run(["match", blend / "a.safe", blend / "b.safe"], capsys)
    assert code == 1 and "layout" in err


def test_bank_table(capsys):
    code, out, _ = run(["bank"], capsys)
    assert code == 0
    rows = [ln.split(",") for ln in out.splitlines() if ln and not ln.startswith("#")]
    assert rows[0] == ["k", "r_k", "sigma_k", "kappa_k", "attenuation"]
    assert [round(float(rows[k + 1][1])) for k in (6, 7, 8)] == [27, 41, 63]
    code, out, _ = run(["bank", "--mu", "20"], capsys)
    assert "mu=20 design=explicit" in out


def test_bank_config(tmp_path, capsys):
    (tmp_path / "bank.cfg").write_text("# fingerprint bank\nr0 = 2\nalpha = 1.54\ntori = 10\ntau = 0.5\n")
    code, out, _ = run(["bank", "--bank-config", tmp_path / "bank.cfg", "--csv", tmp_path / "b.csv"], capsys)
    assert code == 0 and "design=intersection" in out
    assert (tmp_path / "b.csv").read_text().startswith("k,r_k,sigma_k,kappa_k,attenuation")
    (tmp_path / "bad.cfg").write_text("radius = 3\n")
    code, _, err = run(["bank", "--bank-config", tmp_path / "bad.cfg"], capsys)
    assert code == 1 and "bad.cfg:1" in err


def test_synth_fig5(capsys):
    code, out, _ = run(["synth", "--fig5"], capsys)
    assert code == 0
    tables = out.strip().split("\n\n")
    assert len(tables) == 2
    last = tables[-1].splitlines()
    assert len(last) == 9
    assert "(0.62 4.71)" in last[5] and "(1.23 6.28)" in last[5] and "(0.62 1.57)" in last[5]


def test_synth_requires_choice(capsys):
    code, _, _ = run(["synth"], capsys)
    assert code == 2


def test_corpus_eval_fuse(tmp_path, capsys):
    code, _, _ = run(["synth", "--corpus", "6", "--size", "257", "-o", tmp_path / "c"], capsys)
    assert code == 0
    with open(tmp_path / "c" / "corpus.csv") as fh:
        assert next(csv.reader(fh)) == ["id", "generator", "params", "seed"]
    c = tmp_path / "c"
    code, out, _ = run(
        ["eval", "--gallery", c / "gallery", "--probes", c / "probes", "--manifest", c / "manifest.csv",
         "--scores-out", tmp_path / "s.csv", "--det", tmp_path / "det.csv", "--cmc", tmp_path / "cmc.csv",
         "--plot-dir", tmp_path / "plots"],
        capsys,
    )
    assert code == 0
    assert "genuine 6 impostor 30" in out
    assert "EER 0.000000" in out and "rank-1 1.000000" in out
    assert (tmp_path / "plots" / "det.png").exists() and (tmp_path / "plots" / "cmc.png").exists()
    det = list(csv.reader(open(tmp_path / "det.csv")))
    assert det[0] == ["threshold", "fa", "fr"] and len(det) == 103
    code, _, _ = run(["fuse", tmp_path / "s.csv", tmp_path / "s.csv", "-o", tmp_path / "f.csv"], capsys)
    assert code == 0
    code, out, _ = run(["eval", "--scores", tmp_path / "f.csv"], capsys)
    assert code == 0 and "EER 0.000000" in out


def test_eval_needs_inputs(capsys):
    code, _, _ = run(["eval"], capsys)
    assert code == 2
