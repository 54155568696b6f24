import csv
import json
import math
import re

import pytest

from conformal_dirac.cli import PlotRow, read_sweep_csv, render_svg, run


def test_spectrum_first_row(capsys):
    assert run(["spectrum", "--v1", "1", "0", "--v2", "0", "1", "--eps", "0", "1", "--cutoff", "4"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0][0] == "lambda"
    assert abs(float(rows[1][0])) == pytest.approx(math.pi, rel=1e-12)


def test_reduce(capsys):
    assert run(["reduce", "--v1", "2", "0", "--v2", "0", "2", "--eps", "1", "0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert (out["x"], out["y"]) == pytest.approx((0.0, 1.0))


def test_domain_and_usage_errors(capsys):
    assert run(["reduce", "--v1", "1", "0", "--v2", "0", "1", "--eps", "0", "0"]) == 1
    assert run(["reduce", "--v1", "1", "0", "--v2", "2", "0", "--eps", "0", "1"]) == 1
    assert run(["reduce", "--bogus"]) == 64
    assert run(["frobnicate"]) == 64
    assert run(["minimize", "--x", "0.45", "--y", "0.05", "--modes", "4"]) == 1
    err = capsys.readouterr().err
    assert "error" in err


def test_minimize_json(capsys, tmp_path):
    save = tmp_path / "psi.json"
    argv = ["minimize", "--x", "0", "--y", "0.8", "--modes", "6", "--restarts", "2", "--save", str(save)]
    assert run(argv) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["lambda_hat"] <= out["flat_bound"] + 1e-9
    assert json.loads(save.read_text())["N"] == [6, 6]


def _sweep(tmp_path, name="s.csv"):
    pts = tmp_path / "pts.json"
    pts.write_text(json.dumps([[0, 0.8], {"x": 0.1, "y": 1.0}, [0, 3.0], [0, 20.0]]))
    out = tmp_path / name
    code = run(["sweep", "--path", str(pts), "--out", str(out), "--modes", "6", "--restarts", "2"])
    return code, out


def test_sweep_csv_sidecar_and_determinism(tmp_path):
    code, out = _sweep(tmp_path)
    assert code == 0
    text = out.read_text()
    header, *rows = text.splitlines()
    assert header == "x,y,lambda_hat,el_residual,iters,converged,flat_bound,ceiling"
    assert len(rows) == 4
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["params"]["N"] == 6 and side["workers"] == 1
    _, again = _sweep(tmp_path, "t.csv")
    assert again.read_text() == text


def test_plot_structure_and_round_trip(tmp_path):
    _, out = _sweep(tmp_path)
    svg = tmp_path / "p.svg"
    assert run(["plot", "--csv", str(out), "--out", str(svg)]) == 0
    doc = svg.read_text()
    assert doc.count('class="data"') == 4
    assert doc.count('class="reference') == 2
    assert "log scale" in doc
    csv_vals = [float(r["lambda_hat"]) for r in csv.DictReader(out.open())]
    svg_vals = [float(v) for v in re.findall(r'data-lambda="([^"]+)"', doc)]
    for a, b in zip(csv_vals, svg_vals):
        assert f"{a:.12g}" == f"{b:.12g}"
    svg2 = tmp_path / "q.svg"
    run(["plot", "--csv", str(out), "--out", str(svg2)])
    assert svg2.read_bytes() == svg.read_bytes()


def test_hollow_marker_for_non_converged():
    doc = render_svg([PlotRow(0.5, 3.5, True), PlotRow(1.0, 3.1, False)])
    assert doc.count('fill="none" data-y') == 1
    assert "log scale" not in doc


def test_plot_errors(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert run(["plot", "--csv", str(empty)]) == 1
    assert "no rows" in capsys.readouterr().err
    bad = tmp_path / "b.csv"
    bad.write_text("x,y,lambda_hat,el_residual,iters,converged,flat_bound,ceiling\n0,1,abc,0,1,true,1,1\n")
    assert run(["plot", "--csv", str(bad)]) == 1
    assert ":2:" in capsys.readouterr().err
    with pytest.raises(Exception):
        read_sweep_csv(str(tmp_path / "missing.csv"))


def test_mercator_check(capsys):
    assert run(["mercator-check", "--points", "1000"]) == 0
    assert "orthogonality" in capsys.readouterr().out


def test_cylinder_check(capsys):
    assert run(["cylinder-check", "--x", "0", "--y", "0.5", "--cases", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("case") == 3 and "ok" in out
