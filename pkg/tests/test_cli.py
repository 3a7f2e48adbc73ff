import csv
import json

import pytest

from morseflow.cli import main

SMALL = """
name = "small"
[manifold]
kind = "sphere"
dim = 2
[function]
expression = "{expr}"
[expect]
betti = {betti}
"""


def write(tmp_path, expr="z", betti="[1, 0, 1]"):
    path = tmp_path / "small.toml"
    path.write_text(SMALL.format(expr=expr, betti=betti))
    return str(path)


@pytest.fixture(scope="module")
def height_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    code = main(["all", "--config", "sphere-height", "--out", str(out)])
    return code, out / "sphere-height"


def test_all_on_height(height_run):
    code, out = height_run
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == "morseflow.report/1"
    assert report["status"] == "ok"
    assert report["results"]["homology"]["Z"]["betti"] == [1, 0, 1]
    for name in ("critical_points.csv", "flow_lines.csv", "residues.csv", "timings.json"):
        assert (out / name).is_file()
    with open(out / "critical_points.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["index"] for r in rows] == ["0", "2"]
    assert list(rows[0]) == ["id", "index", "value", "x1", "x2", "x3"]
    assert any((out / "trajectories").iterdir())


def test_warm_run_is_byte_identical(height_run):
    _, out = height_run
    cold = (out / "report.json").read_bytes()
    assert main(["all", "--config", "sphere-height", "--out", str(out.parent)]) == 0
    assert (out / "report.json").read_bytes() == cold
    assert main(["report", "--config", "sphere-height", "--out", str(out.parent)]) == 0
    assert (out / "report.json").read_bytes() == cold


def test_cache_matches_cold_run(tmp_path):
    cfg = write(tmp_path)
    assert main(["homology", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["homology", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["homology", "--config", cfg, "--out", str(tmp_path / "b"), "--no-cache"]) == 0
    warm = (tmp_path / "a" / "small" / "report.json").read_bytes()
    cold = (tmp_path / "b" / "small" / "report.json").read_bytes()
    assert warm == cold


def test_editing_f_invalidates_cache(tmp_path):
    out = tmp_path / "o"
    assert main(["critical-points", "--config", write(tmp_path), "--out", str(out)]) == 0
    first = json.loads((out / "small" / "report.json").read_text())
    assert main(["critical-points", "--config", write(tmp_path, "z + 0.5*x"),
                 "--out", str(out)]) == 0
    second = json.loads((out / "small" / "report.json").read_text())
    a = first["results"]["critical_points"]["points"][1]["location"]
    b = second["results"]["critical_points"]["points"][1]["location"]
    assert abs(a[0] - b[0]) > 0.1
    assert len(list((out / "small" / ".cache").glob("critical-points-*.json"))) == 2


def test_misspelled_key_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(SMALL.format(expr="z", betti="[1, 0, 1]") + "[currents]\nint_tl = 1e-4\n")
    assert main(["all", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "currents.int_tl" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["frobnicate", "--config", "sphere-height"],
                                  ["all"],
                                  ["all", "--config", "no-such-thing"]])
def test_usage_errors_exit_1(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 1


def test_bad_expression_exits_1(tmp_path):
    assert main(["critical-points", "--config", write(tmp_path, "z +* x"),
                 "--out", str(tmp_path)]) == 1


def test_failed_expectation_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, betti="[1, 1, 1]")
    assert main(["homology", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "verification failed" in capsys.readouterr().err


def test_fme_threads_agree(tmp_path):
    path = tmp_path / "fme.toml"
    path.write_text(SMALL.format(expr="z", betti="[1, 0, 1]") + """
[currents]
samples = 4
[forms.dh]
degree = 1
terms = { x = "y", y = "x" }
[checks]
fme = ["dh"]
""")
    assert main(["verify-fme", "--config", str(path), "--out", str(tmp_path / "1")]) == 0
    assert main(["verify-fme", "--config", str(path), "--out", str(tmp_path / "4"),
                 "--threads", "4"]) == 0
    one = json.loads((tmp_path / "1" / "small" / "report.json").read_text())
    four = json.loads((tmp_path / "4" / "small" / "report.json").read_text())
    assert one["results"]["fme"] == four["results"]["fme"]
