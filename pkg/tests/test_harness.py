import csv
import hashlib
import io
import json

import pytest

from noisy_exposure import harness
from noisy_exposure.errors import ScenarioError


def scenario(kind, params=None, **kw):
    doc = {"schema": 1, "id": f"t-{kind}", "master_seed": 7, "kind": kind, "params": params or {}}
    doc.update(kw)
    return harness.parse_scenario(doc)


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return p


def test_noise_sweep_rows_and_bound():
    s = scenario("noise-sweep", {"n": 12, "f_grid": [0.5, 1, 2, 3]}, trials=100)
    rows = harness.run_scenario(s)
    assert len(rows) == 400
    assert all(r["distance"] <= 4 * r["f"] for r in rows)
    assert all(r["distance"] == 0 for r in rows if r["f"] == 0.5)
    assert all(r["scenario_id"] == "t-noise-sweep" and r["master_seed"] == 7 for r in rows)


def test_noise_sweep_empty_grid():
    assert harness.run_scenario(scenario("noise-sweep", {"n": 6, "f_grid": []}, trials=3)) == []


def test_noise_sweep_cap_rejected_before_running():
    with pytest.raises(ScenarioError) as exc:
        scenario("noise-sweep", {"n": 40, "f_grid": [1]})
    assert exc.value.field == "n"


def test_parallel_trials_match_serial():
    base = {"n": 8, "f_grid": [1, 2]}
    serial = harness.run_scenario(scenario("noise-sweep", base, trials=6))
    parallel = harness.run_scenario(scenario("noise-sweep", base, trials=6, workers=3))
    assert serial == parallel


def test_frontier_properties():
    rows = harness.run_scenario(scenario("frontier", {"eps_grid": [1e-6, 0.1, 0.5, 1, 2, 5]}))
    acc = [r["accuracy"] for r in rows]
    assert all(a < b for a, b in zip(acc, acc[1:]))
    assert abs(acc[0] - 1 / 4) < 1e-3
    assert all(r["eps_measured"] <= r["eps_param"] + 1e-9 for r in rows)
    assert all(r["dp_pass"] and r["monotone"] and not r["unbounded"] for r in rows)
    assert all(r["t"] == 3 and r["d_max"] == 4 for r in rows)


def test_reconstruct_attacks_run():
    for attack, params in [
        ("brute-force", {"n": 8, "mechanism": {"kind": "bounded-uniform", "f": 1}}),
        ("relax-round", {"n": 20, "mechanism": {"kind": "exact"}, "num_queries": 120}),
        ("adaptive-split", {"n": 64, "ones": 3}),
        ("split", {"n": 20, "block_size": 5, "mechanism": {"kind": "bounded-uniform", "f": 3}}),
    ]:
        rows = harness.run_scenario(scenario("reconstruct", {"attack": attack, **params}, trials=3))
        assert len(rows) == 3
        for r in rows:
            assert r["attack"] == attack
            if r["within_bound"] is not None:
                assert r["within_bound"]
    rows = harness.run_scenario(scenario("reconstruct", {"attack": "adaptive-split", "n": 64, "ones": 3}, trials=4))
    assert all(r["distance"] == 0 and r["queries_used"] <= r["query_bound"] for r in rows)


def test_dp_audit_and_bounds_runners():
    rows = harness.run_scenario(scenario("dp-audit", {"n": 4, "eps_param": 1.0}))
    assert len(rows) == 64 and all(r["passed"] for r in rows)
    best = harness.run_scenario(scenario("dp-audit", {"n": 4, "recommender": "best"}))
    assert any(r["unbounded"] for r in best)
    doc = {"n": 3, "contacts": [[0, 1, 0], [0, 2, 0]], "positives": [[1, 0]]}
    one = harness.run_scenario(scenario("dp-audit", {"graphs": [doc], "eps_param": 2.0}))
    assert len(one) == 1 and one[0]["edges"] == "0-1"
    b = harness.run_scenario(scenario("bounds", {"requests": [
        {"kind": "reconstruction", "n": 50, "f": 3},
        {"kind": "theorem4", "n": 1000, "beta": 5, "d_max": 20, "log_base": "10"},
        {"kind": "lemma1", "t": 4, "c": 0.5, "delta": 0.1, "n": 100, "k": 5},
    ]}))
    assert b[0]["value"] == 12 and "meaningless" not in b[0]["flags"]
    assert b[1]["value"] == pytest.approx(0.0228, abs=1e-4)
    assert b[2]["value"] == pytest.approx(1.0826833350715828)


@pytest.mark.parametrize("doc,fieldname", [
    ({"schema": 2, "id": "x", "kind": "bounds"}, "schema"),
    ({"schema": 1, "id": "x", "kind": "teleport"}, "kind"),
    ({"schema": 1, "id": "", "kind": "bounds"}, "id"),
    ({"schema": 1, "id": "x", "kind": "bounds", "master_seed": -1}, "master_seed"),
    ({"schema": 1, "id": "x", "kind": "noise-sweep", "params": {"n": 5, "f_grid": "1,2"}}, "f_grid"),
    ({"schema": 1, "id": "x", "kind": "reconstruct", "params": {"n": 5, "attack": "magic"}}, "attack"),
    ({"schema": 1, "id": "x", "kind": "reconstruct",
      "params": {"n": 5, "attack": "adaptive-split", "mechanism": {"kind": "laplace", "b": 1}}}, "mechanism"),
    ({"schema": 1, "id": "x", "kind": "frontier", "params": {"n": 9}}, "n"),
])
def test_validation_names_field(doc, fieldname):
    with pytest.raises(ScenarioError) as exc:
        harness.parse_scenario(doc)
    assert exc.value.field == fieldname
    assert fieldname in str(exc.value)


def test_scenario_file_happy_path_and_determinism(tmp_path):
    doc = {"schema": 1, "id": "recon", "master_seed": 123, "kind": "reconstruct", "trials": 5,
           "params": {"attack": "brute-force", "n": 9, "mechanism": {"kind": "bounded-uniform", "f": 2}}}
    path = write(tmp_path, doc)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert harness.run_scenario_file(path, out1) == 0
    assert harness.run_scenario_file(path, out2) == 0
    c1, c2 = (out1 / "recon.csv").read_bytes(), (out2 / "recon.csv").read_bytes()
    assert hashlib.sha256(c1).hexdigest() == hashlib.sha256(c2).hexdigest()
    assert not (out1 / "recon.partial").exists()
    rows = list(csv.DictReader(io.StringIO(c1.decode())))
    assert len(rows) == 5
    assert list(rows[0]) == harness.COLUMNS["reconstruct"]
    assert all(r["scenario_id"] == "recon" and r["master_seed"] == "123" for r in rows)
    assert b"\r\n" not in c1
    summary = json.loads((out1 / "recon.summary.json").read_text())
    assert summary["rows"] == 5 and summary["bound_violations"] == 0


def test_different_seed_changes_output(tmp_path):
    doc = {"schema": 1, "id": "s", "kind": "noise-sweep", "trials": 3, "params": {"n": 8, "f_grid": [2]}}
    a = harness.run_scenario(harness.parse_scenario({**doc, "master_seed": 1}))
    b = harness.run_scenario(harness.parse_scenario({**doc, "master_seed": 2}))
    assert [r["seed"] for r in a] != [r["seed"] for r in b]


def test_unknown_kind_exit_2_with_line(tmp_path, capsys):
    path = write(tmp_path, {"schema": 1, "id": "bad", "kind": "teleport"})
    assert harness.run_scenario_file(path, tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "kind" in err and "line 4" in err


def test_bad_json_reports_line(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "schema": 1,\n  "id": "x"\n  "kind": "bounds"\n}\n')
    assert harness.run_scenario_file(p, tmp_path / "o") == 2
    assert "line 4" in capsys.readouterr().err


def test_failed_run_leaves_partial_marker(tmp_path):
    doc = {"schema": 1, "id": "boom", "kind": "bounds",
           "params": {"requests": [{"kind": "lemma1", "t": 1, "c": 0.2, "delta": 0.5, "n": 10, "k": 2}]}}
    path = write(tmp_path, doc)
    assert harness.run_scenario_file(path, tmp_path / "o") == 1
    assert (tmp_path / "o" / "boom.partial").exists()
    assert not (tmp_path / "o" / "boom.csv").exists()


def test_float_format_twelve_significant_digits():
    text = harness.rows_to_csv("bounds", [{"scenario_id": "x", "master_seed": 1, "kind": "lemma1",
                                           "value": 1 / 3, "flags": ""}])
    assert "0.333333333333" in text and "0.3333333333333" not in text
