import csv
import io
import json
import math

import pytest

from geopressure.cli import EXIT_COMPUTE, EXIT_CONFIG, EXIT_OK, main, resolve_settings
from geopressure.pressure import CSV_COLUMNS


def untagged_numbers(node, path=(), tagged=False):
    """Paths of numbers with no enclosing object carrying both ``method`` and ``depth``."""
    out = []
    if isinstance(node, dict):
        here = tagged or ("method" in node and "depth" in node)
        for k, v in node.items():
            if path == () and k == "parameters":
                continue
            out += untagged_numbers(v, path + (k,), here)
    elif isinstance(node, list):
        for i, v in enumerate(node):
            out += untagged_numbers(v, path + (i,), tagged)
    elif (isinstance(node, (int, float)) and not isinstance(node, bool)) or node in ("inf", "-inf", "nan"):
        if not tagged:
            out.append(path)
    return out


def test_pressure_csv_to_stdout(capsys):
    assert main(["pressure", "--map", "cheb3", "--t-grid", "-2:3:0.25", "--depth", "8", "--methods", "tree,periodic"]) == EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 22
    assert float(rows[1][0]) == -2.0 and float(rows[-1][0]) == 3.0


def test_coding_notwi_entropy(capsys):
    assert main(["coding", "--map", "notwi"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["entropy"]["value"] == pytest.approx(math.log(1 + math.sqrt(3)), abs=1e-9)
    assert report["schema_version"] == "1.0" and report["report"] == "coding"


def test_exceptional_logistic4_marks_critical_value(capsys):
    assert main(["exceptional", "--map", "logistic4", "--wi-n-max", "4"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    marked = {c["point"] for c in report["exceptional"]["candidates"] if c["verdict"] == "weakly_exceptional"}
    assert 1.0 in marked


@pytest.mark.parametrize(
    "argv, field",
    [
        (["pressure", "--depth", "99"], "depth"),
        (["pressure", "--t-grid", "3:1:0.5"], "t_grid"),
        (["pressure", "--methods", "tree,guess"], "methods"),
        (["pressure", "--depth", "deep"], "arguments"),
        (["nonsense"], "arguments"),
        (["all"], "out"),
    ],
)
def test_config_errors_name_the_field(capsys, argv, field):
    assert main(argv) == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_unknown_map_is_config_error(capsys):
    assert main(["coding", "--map", "nosuchmap"]) == EXIT_CONFIG


def test_computational_failure_exit_code(capsys):
    assert main(["conformal", "--map", "cheb3", "--lambda", "0.5", "--k-max", "6", "--depth", "6"]) == EXIT_COMPUTE
    assert "Divergent" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nmap = logistic4\ndepth = 7 ; levels\ntail = yes\nlambda = none\n", encoding="utf-8")
    s = resolve_settings(["pressure", "--config", str(cfg), "--depth", "9"])
    assert s["map"] == "logistic4" and s["depth"] == 9 and s["tail"] is True and s["lambda"] is None
    assert s["_t_values"][0] == -2.0


def test_config_file_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\ncolour = blue\n", encoding="utf-8")
    assert main(["pressure", "--config", str(cfg)]) == EXIT_CONFIG


def _run_twice(tmp_path, argv):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    return outs


def test_byte_identical_reruns(tmp_path):
    a, b = _run_twice(tmp_path, ["conformal", "--map", "cheb3", "--k-max", "6", "--depth", "6"])
    assert set(a) == {"conformal.json", "conformal.csv", "conformal_cdf.csv"}
    assert a == b


def test_every_number_is_tagged(tmp_path):
    for argv in (
        ["pressure", "--t-grid", "0:2:0.5", "--depth", "6", "--methods", "tree,periodic,markov"],
        ["conformal", "--k-max", "5", "--depth", "6"],
        ["coding", "--map", "notwi"],
        ["exceptional", "--map", "logistic4", "--wi-n-max", "4"],
        ["tce", "--n-uhp", "4", "--n-exp", "4", "--samples", "3", "--n-ce2", "6", "--depth", "6", "--t-grid", "0:2:0.5",
         "--rule-II-n", "100", "--rule-II-samples", "3"],
    ):
        out = tmp_path / argv[0]
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        for path in out.glob("*.json"):
            report = json.loads(path.read_text())
            assert untagged_numbers(report) == [], path.name
