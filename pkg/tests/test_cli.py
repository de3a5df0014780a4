import json
import subprocess
import sys

import pytest

from klab.cli import run


def gen(tmp_path, *args, name="inst.json"):
    out = tmp_path / name
    code, text = run(["gen", *args, "--out", str(out)])
    return code, out


def report(text):
    return json.loads(text)


def test_gen_and_check(tmp_path):
    code, path = gen(tmp_path, "--p", "3", "--k", "1", "--r", "1", "--m", "1")
    assert code == 0
    rep = report(path.read_text())
    assert rep["schema_version"] == 1 and rep["command"] == "gen" and rep["pass"]
    assert rep["result"]["dual_invariants"] == []
    code, text = run(["check", str(path)])
    assert code == 0 and report(text)["instance_hash"] == rep["instance_hash"]


def test_commands_on_mixed_instance(tmp_path):
    code, path = gen(tmp_path, "--p", "3", "--k", "2", "--r", "1", "--m", "3", "--e", "1", "--seed", "5")
    assert code == 0
    for cmd in ("stark", "koly", "transform", "recover", "path"):
        code, text = run([cmd, str(path)])
        assert code == 0, cmd
    rep = report(run(["recover", str(path)])[1])
    assert rep["result"]["recovered"]["invariant_factors"] == [1]
    rep = report(run(["transform", str(path)])[1])
    assert rep["result"]["matches_stub_generator_up_to_unit"]


def test_path_between_named_vertices(tmp_path):
    code, path = gen(tmp_path, "--p", "2", "--k", "2", "--r", "2", "--m", "3", "--seed", "1")
    code, text = run(["path", str(path), "--from", "1", "--to", "q1*q2*q3"])
    assert code == 0
    assert report(text)["result"]["paths"][0]["path"][-1] == "q1*q2*q3"


def test_recover_infinite_case_passes(tmp_path):
    code, path = gen(tmp_path, "--p", "3", "--k", "3", "--r", "1", "--m", "3", "--e", "2,1")
    code, text = run(["recover", str(path)])
    rep = report(text)
    assert code == 0 and rep["result"]["recovered"]["finite"] is False


def test_tower(tmp_path):
    code, path = gen(tmp_path, "--p", "3", "--k", "2", "--r", "1", "--m", "3", "--levels", "2,1,2")
    assert code == 0
    code, text = run(["tower", str(path)])
    assert code == 0 and report(text)["pass"]


@pytest.mark.parametrize("args", [
    ["gen", "--p", "7", "--k", "3", "--r", "1", "--m", "2"],
    ["gen", "--p", "3", "--k", "1", "--r", "1", "--m", "6"],
    ["gen", "--p", "3", "--k", "1", "--r", "2", "--m", "1"],
    ["gen", "--p", "3", "--k", "1", "--r", "1"],
    ["gen", "--p", "3", "--k", "1", "--r", "1", "--m", "2", "--e", "x"],
    ["check", "/nonexistent/file.json"],
    ["frobnicate"],
])
def test_usage_errors(args, capsys):
    code, text = run(args)
    assert code == 2 and text is None


def test_parse_error_names_location(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"p": 3,\n  oops}')
    code, _ = run(["check", str(bad)])
    err = capsys.readouterr().err
    assert code == 2 and "line 2" in err


def test_reruns_are_byte_identical(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for out in (a, b):
        subprocess.run([sys.executable, "-m", "klab.cli", "gen", "--p", "3", "--k", "2", "--r", "1", "--m", "3",
                        "--e", "1", "--seed", "9", "--out", str(out)], check=True)
    assert a.read_bytes() == b.read_bytes()
    c1 = subprocess.run([sys.executable, "-m", "klab.cli", "recover", str(a)], capture_output=True)
    c2 = subprocess.run([sys.executable, "-m", "klab.cli", "recover", str(a)], capture_output=True)
    assert c1.returncode == 0 and c1.stdout == c2.stdout
