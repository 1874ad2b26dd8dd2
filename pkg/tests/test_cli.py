import numpy as np
import pytest

from crebound import meshgen
from crebound.cli import main
from crebound.mesh import write_mesh
from crebound.pipeline import RunConfig, ReportRow, loglog_slope, read_csv, write_csv, run
from crebound.problems import make_problem


def test_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", "--problem", "patch_test", "--h", "0.5", "--criterion", "erdc", "--out", str(out)]) == 0
    assert "gates=ok" in capsys.readouterr().out
    text = out.read_text().splitlines()
    assert text[0] == "# crebound report schema v1"
    rows = read_csv(out)
    assert len(rows) == 1
    assert set(rows[0]) == set(ReportRow.__dataclass_fields__)
    assert float(rows[0]["estimate"]) <= 1e-10


def test_sweep_cli(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = main(["sweep", "--problem", "analytic_rectangle", "--hs", "0.5", "0.25", "--criteria", "eet", "l2", "--out", str(out), "--threads", "1"])
    assert code == 0
    text = capsys.readouterr().out
    assert "slope eet" in text and "slope e_ex" in text
    assert len(read_csv(out)) == 4


def test_check_mesh(tmp_path, capsys):
    path = tmp_path / "annulus.txt"
    write_mesh(meshgen.square_with_hole(1 / 9, lambda a, b: "D", (1 / 3, 2 / 3)), path)
    assert main(["check-mesh", str(path)]) == 0
    assert "holes: 1" in capsys.readouterr().out


def test_bad_mesh_file_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("4 2 4\n0 0\n1 0\n1 1\n0 1\n1 2 3\n1 3 4\n1 2 D\n2 3 D\n3 4 D\n4 1 D\n")
    assert main(["check-mesh", str(path)]) == 2
    assert "ElementWithTwoBorderEdges" in capsys.readouterr().err
    path.write_text("5 4 1\n0 0\n1 0\n1 1\n0 1\n0.5 0.5\n1 2 5\n2 3 5\n3 4 5\n4 1 5\n1 2 D\n")
    assert main(["check-mesh", str(path)]) == 2
    assert "UntaggedBorderEdge" in capsys.readouterr().err


def test_invalid_arguments():
    with pytest.raises(SystemExit):
        main(["run", "--criterion", "nope"])
    with pytest.raises(ValueError):
        RunConfig(order=4)


def test_csv_round_trip(tmp_path):
    row = run(make_problem("square_shear", 0.25), RunConfig("l2")).row
    path = tmp_path / "x.csv"
    write_csv([row, row], path)
    back = read_csv(path)
    assert float(back[1]["estimate"]) == pytest.approx(row.estimate, rel=1e-15)
    assert np.isnan(float(back[0]["e_ex"]))


def test_loglog_slope():
    h = np.array([0.25, 0.125, 0.0625])
    assert loglog_slope(h, 3 * h) == pytest.approx(1.0)
