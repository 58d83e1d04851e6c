import pytest

from mcflab.cli import EXIT_ACCEPTANCE, EXIT_ERROR, EXIT_OK, main
from mcflab.scenarios import BUILTIN

SMALL = """
[scenario]
name = small
[shape]
spec = sphere(center=(0.05, 0), radius=0.6)
[grid]
lower = -0.8, -0.8
upper = 0.8, 0.8
h = 0.025
[analysis]
flowline_count = 4
[acceptance]
criteria = 2, 10
"""


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in BUILTIN:
        assert name in out


def test_validate_builtin_and_schema(capsys):
    assert main(["validate", "torus3d"]) == EXIT_OK
    assert "OK torus3d" in capsys.readouterr().out
    assert main(["validate", "--schema"]) == EXIT_OK
    assert "[analysis]" in capsys.readouterr().out


def test_validate_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL.replace("h = 0.025", "h = -0.025"))
    assert main(["validate", str(bad)]) == EXIT_ERROR
    assert "grid.h" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.ini")]) == EXIT_ERROR
    assert main(["validate"]) == EXIT_ERROR


def test_run_negative_emit_every(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SMALL)
    assert main(["run", str(cfg), "--emit-every", "-1"]) == EXIT_ERROR


def test_small_run_writes_artifacts(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--output", str(out), "--emit-every", "50"])
    text = capsys.readouterr().out
    assert code in (EXIT_OK, EXIT_ACCEPTANCE)
    assert ("FAIL" in text) == (code == EXIT_ACCEPTANCE)
    assert "criterion 2" in text and "criterion 10" in text
    for name in ("report.txt", "singular_points.csv", "arrival.vtk", "flowlines.csv"):
        assert (out / name).exists()
    assert any((out / "snapshots").iterdir())
    assert "extinction_time" in (out / "report.txt").read_text()


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
