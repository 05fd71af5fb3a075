import json
import os
import types

import numpy as np
import pytest

from rp2struct import cli
from rp2struct import developing as dv
from rp2struct import surface as sf

from conftest import torus


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_vinberg_output(capsys):
    code, out, _ = run(["vinberg", "--cone", "octant", "--x", "1,1,1"], capsys)
    assert code == 0 and abs(float(out) - 1) < 1e-8
    code, out, _ = run(["vinberg", "--x", "2,1,1"], capsys)
    assert code == 0 and abs(float(out) - 0.5) < 1e-8


def test_usage_errors(capsys):
    assert run(["vinberg"], capsys)[0] == cli.EXIT_USAGE
    assert run(["no-such-command"], capsys)[0] == cli.EXIT_USAGE
    assert run(["vinberg", "--x", "1,2"], capsys)[0] == cli.EXIT_USAGE
    assert run(["ma-solve", "--op", "d"], capsys)[0] == cli.EXIT_USAGE
    assert run(["--help"], capsys)[0] == cli.EXIT_OK


def test_pipeline_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(["pipeline", "--surface", "torus:16,i", "--cubic-const", "1,0",
                           "--out", str(out)], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["passed"] and summary["version"] == "summary/1"
    for name in ("surface", "cubic", "wang", "residuals", "holonomy", "developed", "summary"):
        doc = json.loads((out / f"{name}.json").read_text())
        assert doc["version"] == f"{name}/1"
    hol = json.loads((out / "holonomy.json").read_text())
    for g in hol["generators"]:
        assert abs(np.linalg.det(np.array(g)) - 1) < 1e-8
    assert (out / "developed.svg").read_text().startswith("<svg")
    assert "overall: PASS" in (out / "summary.txt").read_text()


def test_negative_f_is_rejected(tmp_path, capsys):
    s = sf.build("genus2:2")
    neg = tmp_path / "neg.json"
    neg.write_text(json.dumps([-1.0] * s.n))
    code, _, err = run(["solve-wang", "--surface", "genus2:2", "--f", str(neg)], capsys)
    assert code == cli.EXIT_ERROR
    assert "f must be positive" in err


def test_schema_rejection(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": "cubic/2", "coeff_re": [], "coeff_im": []}))
    code, _, err = run(["check", "--surface", "torus:8,i", "--cubic", str(bad)], capsys)
    assert code == cli.EXIT_ERROR and "cubic" in err


def test_certificate_failure_exit(tmp_path, capsys):
    t = sf.build("torus:16,i")
    x, y = t.pos.T
    c = 1 + 0.3 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    path = tmp_path / "w.json"
    path.write_text(json.dumps({"version": "cubic/1", "coeff_re": c.tolist(), "coeff_im": [0.0] * t.n}))
    code, stdout, _ = run(["check", "--surface", "torus:16,i", "--cubic", str(path)], capsys)
    assert code == cli.EXIT_CERT
    assert not json.loads(stdout)["certificates"]["holomorphicity"]["passed"]


def test_config_file_and_summary_path(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# defaults\ncubic-const = 2,0\ntol = 1e-10\n")
    summ = tmp_path / "s.json"
    code, stdout, _ = run(["--config", str(conf), "--summary", str(summ), "holonomy",
                           "--surface", "torus:8,i"], capsys)
    assert code == 0 and stdout == ""
    assert json.loads(summ.read_text())["passed"]
    bad = tmp_path / "bad.conf"
    bad.write_text("no equals sign\n")
    assert run(["--config", str(bad), "vinberg", "--x", "1,1,1"], capsys)[0] == cli.EXIT_USAGE


def test_svg_determinism_and_errors(tmp_path, capsys):
    svgs = []
    for k in range(2):
        path = tmp_path / f"d{k}.svg"
        code, _, _ = run(["--seed", "3", "develop", "--surface", "torus:8,i", "--svg", str(path),
                          "--ring", "--out", str(tmp_path / f"d{k}.json")], capsys)
        assert code == 0
        svgs.append(path.read_bytes())
    assert svgs[0] == svgs[1]
    assert (tmp_path / "d0.json").read_bytes() == (tmp_path / "d1.json").read_bytes()
    empty = types.SimpleNamespace(cells=np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError):
        cli.export_svg(empty, types.SimpleNamespace(points=np.zeros((0, 3))))
    t = torus(8)
    far = types.SimpleNamespace(points=-np.ones((t.copy_pos.shape[0], 3)))
    with pytest.raises(ValueError, match="clipped"):
        cli.export_svg(t, far, chart=(1.0, 1.0, 1.0))


@pytest.mark.parametrize("n", [16, 32])
def test_titeica_hull_ratio(n):
    from test_developing import titeica_econn
    t, ref, econn = titeica_econn(n)
    dev = dv.develop(t, econn)
    coords = np.linalg.solve(ref.eigenbasis, dev.points.T).T
    ratio = cli.hull_ratio(t, types.SimpleNamespace(points=coords), chart=(1.0, 1.0, 1.0))
    assert abs(ratio - 1) <= 0.01


def test_geodesic_and_ma_solve(tmp_path, capsys):
    code, stdout, _ = run(["geodesic", "--surface", "torus:16,i", "--count", "5"], capsys)
    assert code == 0 and json.loads(stdout)["certificates"]["lipschitz"]["passed"]
    code, stdout, _ = run(["ma-solve", "--op", "hmu", "--surface", "torus:8,i"], capsys)
    assert code == 0 and json.loads(stdout)["passed"]
    out = tmp_path / "run"
    assert run(["pipeline", "--surface", "torus:8,i", "--out", str(out)], capsys)[0] == 0
    code, stdout, _ = run(["ma-solve", "--op", "d", "--geometric", "--structure", str(out),
                           "--target", "1"], capsys)
    assert code == 0, stdout
