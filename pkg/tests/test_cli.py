import json

import jsonschema
import pytest

from commfact.cli import InputError, load_schema, main, parse_spec

from conftest import SPECS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name, verdict", [
    ("daniele.txt", "branch-commutative"),
    ("nested.txt", "bypass-commutative"),
    ("unbalanced.txt", "unbalanced"),
    ("example.txt", "bypass-commutative"),
    ("example_corrected.txt", "branch-commutative"),
])
def test_run_report_validates(capsys, name, verdict):
    code, out, err = run(capsys, "run", str(SPECS / name))
    assert code == 0
    report = json.loads(out)
    jsonschema.validate(report, load_schema())
    assert report["verdict"] == verdict
    assert report["format_version"] == "1.0"
    assert "timing" not in report
    assert f"verdict: {verdict}" in err


def test_nonsquare_exits_2(capsys):
    code, out, _ = run(capsys, "run", str(SPECS / "nonsquare.txt"))
    assert code == 2
    report = json.loads(out)
    assert report["verdict"] == "error"
    jsonschema.validate(report, load_schema())


def test_missing_file_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "run", str(tmp_path / "absent.txt"))
    assert code == 2 and "input error" in err


def test_bad_arguments_exit_2(capsys):
    assert main(["run"]) == 2
    assert main(["frobnicate"]) == 2
    capsys.readouterr()


def test_determinism(capsys, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert main(["run", str(SPECS / "nested.txt"), "--seed", "3", "--json-out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    capsys.readouterr()


def test_timing_and_diagram_flags(capsys):
    code, out, _ = run(capsys, "run", str(SPECS / "daniele.txt"), "--timing", "--emit-diagram")
    report = json.loads(out)
    assert code == 0 and "timing" in report and "a1" in report["diagram"]


def test_cli_options_override_spec(capsys):
    code, out, _ = run(capsys, "run", str(SPECS / "daniele.txt"), "--samples", "4", "--tol", "1e-9")
    report = json.loads(out)
    assert report["branch_commutativity"]["samples"] == 4
    assert report["options"]["tol"] == pytest.approx(1e-9)


@pytest.mark.parametrize("fmt, marker", [("text", "a1"), ("dot", "graph riemann_surface")])
def test_diagram_command(capsys, fmt, marker):
    code, out, _ = run(capsys, "diagram", str(SPECS / "nested.txt"), "--format", fmt)
    assert code == 0 and marker in out


def test_parse_spec_sections():
    spec = parse_spec((SPECS / "daniele.txt").read_text())
    assert spec.matrix.n == 2
    assert len(spec.sha256) == 64
    with pytest.raises(InputError) as exc:
        parse_spec("[matrix]\n1, 2\n3, 4\n[bogus]\nx = 1\n")
    assert exc.value.line == 4


def test_parse_spec_unbound_symbol_reports_line():
    with pytest.raises(InputError) as exc:
        parse_spec("[radicals]\ns = sqrt(q - k)\n[matrix]\ns\n")
    assert exc.value.line == 2
