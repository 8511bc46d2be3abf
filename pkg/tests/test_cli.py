import csv
import json

import pytest

from apexbl import cli, files


@pytest.fixture
def inst(tmp_path):
    path = tmp_path / "inst.json"
    assert cli.main(["gen", "maxquad", "--d", "10", "--k", "4", "--L", "10", "--seed", "1", "-o", str(path)]) == 0
    return path


def _summary(root, name):
    return json.loads((root / name / "summary.json").read_text())


def test_gen_is_byte_reproducible(tmp_path, inst):
    again = tmp_path / "again.json"
    cli.main(["gen", "maxquad", "--d", "10", "--k", "4", "--L", "10", "--seed", "1", "-o", str(again)])
    assert inst.read_bytes() == again.read_bytes()
    lit = tmp_path / "lit.json"
    assert cli.main(["gen", "maxquad", "--d", "4", "--literal", "-o", str(lit)]) == 0
    assert json.loads(lit.read_text())["type"] == "maxquad_literal"


def test_gen_rejects_inconsistent_parameters(tmp_path):
    assert cli.main(["gen", "maxquad", "--mu", "2", "--L", "1", "-o", str(tmp_path / "x.json")]) == 2
    assert not (tmp_path / "x.json").exists()


def test_solve_writes_logs(tmp_path, inst, monkeypatch):
    monkeypatch.setenv("APEX_LOG_DIR", str(tmp_path / "logs"))
    assert cli.main(["solve", "--instance", str(inst), "--method", "rapex_unknown", "--mu-hat", "10",
                     "--m", "4"]) == 0
    run = tmp_path / "logs" / "rapex_unknown"
    for f in ("trace.jsonl", "summary.json", "convergence.csv", "events.jsonl"):
        assert (run / f).exists(), f
    s = _summary(tmp_path / "logs", "rapex_unknown")
    for k in ("f_final", "f_star_if_known", "gap_bound", "oracle_calls", "wall_time", "final_mu_hat"):
        assert k in s
    assert abs(s["f_final"] - s["f_star_if_known"]) <= 1e-6 and s["status"] == "converged"
    rows = list(csv.reader((run / "convergence.csv").open(newline="")))
    assert rows[0][:2] == ["iteration", "oracle_calls"] and len(rows) > 2
    assert list((run / "certificates").iterdir())


def test_summaries_are_deterministic(tmp_path, inst):
    for name in ("a", "b"):
        cli.main(["solve", "--instance", str(inst), "--method", "rapex_known", "--m", "4",
                  "--out", str(tmp_path), "--name", name])
    a, b = _summary(tmp_path, "a"), _summary(tmp_path, "b")
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b
    assert (tmp_path / "a" / "convergence.csv").read_bytes() == (tmp_path / "b" / "convergence.csv").read_bytes()


@pytest.mark.parametrize("method,extra", [("apex", []), ("polyak", ["--iters", "50"]), ("bl", ["--m", "3"]),
                                          ("awg", ["--delta", "1.0"])])
def test_other_methods(tmp_path, inst, method, extra):
    code = cli.main(["solve", "--instance", str(inst), "--method", method, "--iters", "100",
                     "--out", str(tmp_path)] + extra)
    assert code == 0
    assert _summary(tmp_path, method)["oracle_calls"] > 0


def test_inline_instance_and_lowerbound(tmp_path):
    spec = json.dumps(files.chain_spec(2, 40, 1.0, 10.0))
    assert cli.main(["solve", "--instance", spec, "--method", "lowerbound", "--base", "gd",
                     "--iters", "2000", "--out", str(tmp_path)]) == 0
    assert _summary(tmp_path, "lowerbound")["violations"] == 0


def test_validation_happens_before_compute(tmp_path, inst):
    for bad in (["--theta", "0.5"], ["--theta", "1.2"], ["--beta", "0"], ["--m", "0"]):
        assert cli.main(["solve", "--instance", str(inst), "--method", "rapex_unknown",
                         "--out", str(tmp_path / "v")] + bad) == 2
    assert not (tmp_path / "v").exists()
    with pytest.raises(SystemExit) as e:
        cli.main(["solve", "--instance", str(inst), "--method", "nope"])
    assert e.value.code == 2


def test_budget_exhaustion_exits_nonzero(tmp_path, inst):
    code = cli.main(["solve", "--instance", str(inst), "--method", "rapex_unknown", "--budget", "30",
                     "--out", str(tmp_path)])
    assert code == cli.EXIT_BUDGET != 0
    assert _summary(tmp_path, "rapex_unknown")["status"] == "budget"


def test_verify_exit_codes(tmp_path, inst):
    cli.main(["solve", "--instance", str(inst), "--method", "rapex_unknown", "--m", "4", "--out", str(tmp_path)])
    cert = sorted((tmp_path / "rapex_unknown" / "certificates").iterdir())[0]
    assert cli.main(["verify", str(cert), str(inst)]) == 0
    doc = json.loads(cert.read_text())
    doc["nu"] = doc["nu"] * 1e-3
    files.write_json(tmp_path / "tight.json", doc)
    assert cli.main(["verify", str(tmp_path / "tight.json"), str(inst)]) == 1
    doc = json.loads(cert.read_text())
    doc["points"][0]["fz"] += 1.0  # no longer what the oracle returns
    files.write_json(tmp_path / "forged.json", doc)
    assert cli.main(["verify", str(tmp_path / "forged.json"), str(inst)]) == 1
    (tmp_path / "junk.json").write_text("{")
    assert cli.main(["verify", str(tmp_path / "junk.json"), str(inst)]) == 2
    other = tmp_path / "other.json"
    cli.main(["gen", "maxquad", "--d", "3", "-o", str(other)])
    assert cli.main(["verify", str(cert), str(other)]) == 2


def test_bench_merges_in_configured_order(tmp_path):
    assert cli.main(["bench", "invariants", "--out", str(tmp_path / "w1")]) == 0
    assert cli.main(["bench", "invariants", "--workers", "2", "--out", str(tmp_path / "w2")]) == 0
    a = (tmp_path / "w1" / "bench" / "invariants.csv").read_bytes()
    b = (tmp_path / "w2" / "bench" / "invariants.csv").read_bytes()
    assert a == b
    rows = list(csv.DictReader((tmp_path / "w1" / "bench" / "invariants.csv").open(newline="")))
    assert len(rows) == 20 and all(r["certificate_failures"] == "0" for r in rows)


def test_bench_lowerbound(tmp_path):
    assert cli.main(["bench", "lowerbound", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "bench" / "lowerbound.csv").open(newline="")))
    assert len(rows) == 18 and all(r["violations"] == "0" for r in rows)
