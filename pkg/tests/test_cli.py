import csv
import json

import pytest

from hypersynth.cli import run

META_KEYS = {"params", "states", "layout"}


@pytest.fixture
def meet(tmp_path):
    code = run(["gen", "meet", "--out", str(tmp_path), "--width", "3", "--height", "2", "--start", "0,0",
                "--start", "2,0", "--target", "1,1", "--obstacle", "1,0", "--slip", "0.1", "--trap", "0.05",
                "--name", "small"])
    assert code == 0
    return tmp_path / "small.mdp", tmp_path / "small.spec"


def test_gen_writes_files(meet, tmp_path):
    model, spec = meet
    assert model.exists() and spec.exists()
    meta = json.load(open(tmp_path / "small.meta.json"))
    assert META_KEYS <= set(meta)
    assert meta["layout"] == [".T.", "1#2"]


def test_gen_calibrated(tmp_path, capsys):
    assert run(["gen", "race-2-4x4", "--out", str(tmp_path)]) == 0
    meta = json.load(open(tmp_path / "race-2-4x4.meta.json"))
    assert "measured" in meta and meta["params"]["kind"] == "race-2"
    assert "wrote" in capsys.readouterr().out


def test_gen_errors(tmp_path):
    assert run(["gen", "meet", "--out", str(tmp_path)]) == 1
    assert run(["gen", "meet", "--out", str(tmp_path), "--width", "2", "--height", "2", "--start", "0,0",
                "--target", "1,1"]) == 1
    with pytest.raises(SystemExit):
        run(["gen", "meet", "--start", "zero"])


def test_synth_outputs_and_check(meet, tmp_path, capsys):
    model, spec = meet
    files = {k: tmp_path / f"out.{k}" for k in ("trace", "csv", "json", "pol")}
    code = run(["synth", str(model), str(spec), "--trace", str(files["trace"]), "--csv", str(files["csv"]),
                "--report", str(files["json"]), "--policy-out", str(files["pol"])])
    assert code == 0
    out = capsys.readouterr().out
    assert "status        optimum-found" in out
    report = json.load(open(files["json"]))
    assert report["status"] == "optimum-found"
    assert report["upper_bound"] >= report["value"] - 1e-9
    rows = list(csv.reader(open(files["csv"])))
    assert rows[0] == ["time", "value"]
    values = [float(r[1]) for r in rows[1:]]
    assert values == sorted(values) and values[-1] == pytest.approx(report["value"])
    assert files["trace"].read_text().splitlines()[-1].startswith("done status=optimum-found")

    assert run(["check", str(model), str(spec), str(files["pol"])]) == 0
    out = capsys.readouterr().out
    assert f"value {report['value']:.6f}" in out and "verdict True" in out

    assert run(["check", str(model), str(spec), "--random"]) == 0
    out = capsys.readouterr().out
    rand = float(out.split("value ")[1].split()[0])
    assert rand < report["value"]


def test_synth_is_deterministic(meet, tmp_path):
    model, spec = meet
    outs = []
    for k in range(2):
        rep, trace = tmp_path / f"r{k}.json", tmp_path / f"t{k}.txt"
        assert run(["synth", str(model), str(spec), "--seed", "5", "--report", str(rep), "--trace", str(trace)]) == 0
        outs.append((rep.read_text(), trace.read_text()))
    assert outs[0] == outs[1]


def test_memory_option(meet, tmp_path):
    model, spec = meet
    rep, pol = tmp_path / "r.json", tmp_path / "p.txt"
    assert run(["synth", str(model), str(spec), "--mem", "1", "--report", str(rep), "--policy-out", str(pol),
                "--budget", "5"]) in (0, 3)
    assert json.load(open(rep))["memory_bits"] == 1
    assert pol.read_text().startswith("memory 1\n")
    assert run(["check", str(model), str(spec), str(pol)]) == 0


def test_oracle_agrees(tmp_path, capsys):
    (tmp_path / "m.mdp").write_text(TINY_MODEL)
    (tmp_path / "s.spec").write_text("exists (p q); forall x in {s0} (p); forall y in {s1} (q);\n"
                                     "Pmax [ F (a@x & a@y) ]\n")
    assert run(["oracle", str(tmp_path / "m.mdp"), str(tmp_path / "s.spec")]) == 0
    oracle_out = capsys.readouterr().out
    assert run(["synth", str(tmp_path / "m.mdp"), str(tmp_path / "s.spec")]) == 0
    synth_out = capsys.readouterr().out
    line = [x for x in oracle_out.splitlines() if x.startswith("value")][0]
    assert line in synth_out.splitlines()
    assert run(["oracle", str(tmp_path / "m.mdp"), str(tmp_path / "s.spec"), "--limit", "1"]) == 4


def test_export(meet, tmp_path, capsys):
    model, spec = meet
    out = tmp_path / "x.dpomdp"
    assert run(["export-decmdp", str(model), str(spec), str(out)]) == 0
    assert out.read_text().startswith("# decentralized")
    (tmp_path / "iso.spec").write_text("exists (p); forall x in {x0y0} (p); forall y in {x2y0} (p);\n"
                                       "Pmax [ F (T@x & T@y) ]\n")
    assert run(["export-decmdp", str(model), str(tmp_path / "iso.spec"), str(out)]) == 1


def test_input_errors(meet, tmp_path, capsys):
    model, spec = meet
    assert run(["synth", str(tmp_path / "missing.mdp"), str(spec)]) == 1
    (tmp_path / "bad.spec").write_text("exists (p); forall x in {x0y0} (p); Pmax [ F nope@x ]\n")
    assert run(["synth", str(model), str(tmp_path / "bad.spec")]) == 1
    assert "unknown atomic proposition nope" in capsys.readouterr().err
    (tmp_path / "junk.spec").write_text("hello")
    assert run(["check", str(model), str(tmp_path / "junk.spec"), "--random"]) == 1
    assert run(["check", str(model), str(spec)]) == 1
    assert run(["synth", str(model), str(spec), "--budget", "0"]) == 1
    (tmp_path / "bad.hoa").write_text("HOA: v1\nacc-name: Buchi\n--BODY--\n--END--\n")
    assert run(["synth", str(model), str(spec), "--hoa", str(tmp_path / "bad.hoa")]) == 1


def test_infeasible_exit_code(meet, tmp_path):
    model, _ = meet
    (tmp_path / "inf.spec").write_text("exists (p); forall x in {x0y0} (p); P>=0.99 [ F T@x ]\n")
    assert run(["synth", str(model), str(tmp_path / "inf.spec")]) == 2


def test_state_budget_exit_code(meet, monkeypatch):
    model, spec = meet
    monkeypatch.setenv("HYPERSYNTH_STATE_BUDGET", "3")
    assert run(["synth", str(model), str(spec)]) == 4


def test_budget_exhausted_exit_code(tmp_path):
    assert run(["gen", "meet-4x4", "--out", str(tmp_path)]) == 0
    code = run(["synth", str(tmp_path / "meet-4x4.mdp"), str(tmp_path / "meet-4x4.spec"), "--budget", "0.5"])
    assert code in (3, 4)


TINY_MODEL = """\
states 3
actions l r
ap a
name 0 s0
name 1 s1
name 2 s2
0 l 0 0.5
0 l 1 0.5
0 r 2 1.0
1 l 1 1.0
1 r 0 0.3
1 r 2 0.7
2 l 2 1.0
label 2 a
"""
