import json
import random
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from reactionmap.cli import main
from reactionmap.errors import FormatError
from reactionmap.export import read_sweep_table
from reactionmap.instance import ProblemInstance

FIX = Path(__file__).parent / "fixtures"
ROUNDTRIP = sorted((FIX / "roundtrip").glob("case_*.json"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def dot_degrees(text):
    deg = {}
    for line in text.splitlines():
        if "->" in line:
            t, h = (s.strip().strip('"') for s in line.split("[")[0].split("->"))
            deg[t] = deg.get(t, 0) + 1
            deg[h] = deg.get(h, 0) + 1
    return deg


# --- instances -----------------------------------------------------------------------


def test_twenty_fixture_instances():
    assert len(ROUNDTRIP) == 20


@pytest.mark.parametrize("path", ROUNDTRIP, ids=lambda p: p.stem)
def test_round_trip_hash(path, tmp_path):
    inst = ProblemInstance.load(path)
    (tmp_path / "x.json").write_text(inst.to_json())
    for f in (FIX / "roundtrip").glob("*.rmcf"):
        (tmp_path / f.name).write_bytes(f.read_bytes())
    again = ProblemInstance.load(tmp_path / "x.json")
    assert again.canonical_hash() == inst.canonical_hash()
    np.testing.assert_array_equal(again.graph().beta, inst.graph().beta)


@pytest.mark.parametrize("path", ROUNDTRIP[:5], ids=lambda p: p.stem)
def test_hash_ignores_row_and_key_order(path):
    doc = json.loads(path.read_text())
    rng = random.Random(0)
    rng.shuffle(doc["vertices"])
    rng.shuffle(doc["edges"])
    doc["vertices"] = [dict(reversed(list(v.items()))) for v in doc["vertices"]]
    doc = dict(reversed(list(doc.items())))
    doc["name"] = "renamed"
    assert ProblemInstance(doc, path.parent).canonical_hash() == ProblemInstance.load(path).canonical_hash()


def test_hash_sees_content_changes():
    doc = json.loads(ROUNDTRIP[0].read_text())
    h0 = ProblemInstance(doc).canonical_hash()
    doc["edges"][0]["beta"] += 1e-6
    assert ProblemInstance(doc).canonical_hash() != h0


def test_measures_define_supply():
    g = ProblemInstance.load(FIX / "y_vs_v.json").graph()
    assert g.b.tolist() == [0.5, 0.5, -1.0, 0.0]
    np.testing.assert_allclose(g.beta, [np.sqrt(5), np.sqrt(5), np.sqrt(2), np.sqrt(2), 1.0], atol=1e-12)


def test_referential_integrity():
    doc = json.loads((FIX / "y_vs_v.json").read_text())
    bad = json.loads(json.dumps(doc))
    bad["edges"][0]["head"] = "nowhere"
    with pytest.raises(FormatError):
        ProblemInstance(bad)
    bad = json.loads(json.dumps(doc))
    bad["measures"]["target"] = {"ghost": 1.0}
    with pytest.raises(FormatError):
        ProblemInstance(bad)
    bad = json.loads(json.dumps(doc))
    bad["vertices"][0]["b"] = 0.7
    with pytest.raises(FormatError):
        ProblemInstance(bad).graph()
    bad = json.loads(json.dumps(doc))
    bad["extra"] = 1
    with pytest.raises(FormatError):
        ProblemInstance(bad)


# --- estimate ---------------------------------------------------------------------------


def test_estimate_roi_table(capsys, tmp_path):
    code, out, _ = run(capsys, "estimate", "--roi-table", FIX / "roi_table.csv", "-o", tmp_path / "m.json")
    assert code == 0 and json.loads(out)["balanced"]
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["source"]["masses"] == [0.75, 0.25, 0.0]
    assert doc["target"]["masses"] == [0.0, 0.25, 0.75]
    assert doc["source"]["labels"] == ["V1", "PPC", "M1"]


def test_estimate_all_zero_column(capsys, tmp_path):
    code, _, err = run(capsys, "estimate", "--roi-table", FIX / "roi_zero.csv", "-o", tmp_path / "m.json")
    assert code == 2
    assert json.loads(err)["error"] == "AllZeroScores"


def test_estimate_ramp_timeseries(capsys, tmp_path):
    code, _, _ = run(capsys, "estimate", "--timeseries", FIX / "ramp_timeseries.csv",
                     "--stim-window", 0, 1, "--react-window", 0, 1, "-o", tmp_path / "m.json")
    assert code == 0
    masses = json.loads((tmp_path / "m.json").read_text())["source"]["masses"]
    # ramp integrates to 0.5 and the flat signal to 1.0
    np.testing.assert_allclose(masses, [1 / 3, 2 / 3], atol=1e-4)


def test_estimate_window_out_of_range(capsys, tmp_path):
    code, _, err = run(capsys, "estimate", "--timeseries", FIX / "ramp_timeseries.csv",
                       "--stim-window", 0, 5, "--react-window", 0, 1, "-o", tmp_path / "m.json")
    assert code == 2 and json.loads(err)["error"] == "WindowOutOfRange"


# --- solve ------------------------------------------------------------------------------


@pytest.mark.parametrize("flag", ["--oracle", "--local"])
def test_solve_y_branches_at_half(capsys, tmp_path, flag):
    code, out, _ = run(capsys, "solve", FIX / "y_vs_v.json", "--alpha", 0.5, flag, "--seed", 1, "--out-dir", tmp_path)
    assert code == 0
    assert json.loads(out)["energy"] == pytest.approx(3.0, abs=1e-9)
    assert dot_degrees((tmp_path / "y_vs_v.dot").read_text())["r"] == 3
    report = json.loads((tmp_path / "y_vs_v.report.json").read_text())
    assert report["hubs"] == ["r"]
    assert report["config"]["alpha"] == 0.5 and report["config"]["rng_seed"] == 1
    assert report["instance_hash"] == ProblemInstance.load(FIX / "y_vs_v.json").canonical_hash()
    assert (tmp_path / "y_vs_v.svg").read_text().startswith("<svg")
    assert (tmp_path / "y_vs_v.edges.csv").read_text().count("\n") == 4


def test_solve_v_at_095(capsys, tmp_path):
    code, _, _ = run(capsys, "solve", FIX / "y_vs_v.json", "--alpha", 0.95, "--seed", 1, "--out-dir", tmp_path)
    assert code == 0
    assert "r" not in dot_degrees((tmp_path / "y_vs_v.dot").read_text())


def test_solve_infeasible(capsys, tmp_path):
    code, _, err = run(capsys, "solve", FIX / "infeasible.json", "--seed", 0, "--out-dir", tmp_path)
    assert code == 3
    payload = json.loads(err)
    assert payload["error"] == "Infeasible" and payload["witness"] == [3]


def test_solve_needs_seed(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", str(FIX / "y_vs_v.json")])
    assert exc.value.code == 2
    capsys.readouterr()


def test_validate(capsys):
    code, out, _ = run(capsys, "validate", FIX / "y_vs_v.json")
    assert code == 0 and json.loads(out)["feasible"]
    code, out, _ = run(capsys, "validate", FIX / "infeasible.json")
    assert code == 3 and json.loads(out)["witness"] == ["t"]


def test_missing_file_is_input_error(capsys, tmp_path):
    code, _, err = run(capsys, "validate", tmp_path / "absent.json")
    assert code == 2 and "error" in json.loads(err)


# --- bridge ------------------------------------------------------------------------------


def test_bridge_scalar_case(capsys, tmp_path):
    code, _, _ = run(capsys, "bridge", FIX / "scalar_bridge.json", "--seed", 0, "--steps", 200,
                     "--mc-paths", 20000, "-o", tmp_path / "b.json")
    assert code == 0
    rep = json.loads((tmp_path / "b.json").read_text())
    exact = 1.0 / (1 - np.exp(-2.0))
    assert abs(rep["cost_total"] - exact) / exact <= 0.01
    assert rep["cost_cov"] <= 1e-6 and rep["units"] == "nats"
    mc = rep["monte_carlo"]
    assert abs(mc["estimate"] - rep["cost_total"]) <= 3 * mc["stderr"]
    assert mc["n_paths"] == 20000 and mc["seed"] == 0


def test_bridge_zero_steering(capsys, tmp_path):
    code, _, _ = run(capsys, "bridge", FIX / "zero_steer.json", "--seed", 0, "-o", tmp_path / "b.json")
    assert code == 0
    assert json.loads((tmp_path / "b.json").read_text())["cost_total"] <= 1e-6


def test_bridge_no_convergence_exit_code(capsys, tmp_path, monkeypatch):
    import reactionmap.gaussian_bridge as gb

    monkeypatch.setattr(gb, "COV_RTOL", 1e-30)
    orig = gb.covariance_steering_cost
    monkeypatch.setattr(gb, "covariance_steering_cost", lambda *a, **k: orig(*a, **{**k, "rtol": 1e-30, "max_outer": 1}))
    code, _, err = run(capsys, "bridge", FIX / "tie.json", "--seed", 0, "--steps", 20, "-o", tmp_path / "b.json")
    assert code == 4 and json.loads(err)["error"] == "NoConvergence"


# --- hybrid -------------------------------------------------------------------------------


def test_hybrid_sweep(capsys, tmp_path):
    code, out, _ = run(capsys, "hybrid", FIX / "tie.json", "--lambda-grid", "0,0.25,0.5,1,2",
                       "--seed", 0, "--out-dir", tmp_path)
    assert code == 0
    rows = read_sweep_table((tmp_path / "tie.sweep.csv").read_text())
    assert out == (tmp_path / "tie.sweep.csv").read_text()
    assert [r["support"] for r in rows] == ["st", "st", "sr1;r1t", "sr1;r1t", "sr1;r1t"]
    assert rows[0]["F_lambda"] == rows[0]["E_alpha"] == 2.0
    F = np.array([r["F_lambda"] for r in rows])
    lam = np.array([r["lambda"] for r in rows])
    assert np.all(np.diff(F) >= -1e-9)
    assert np.all(np.diff(np.diff(F) / np.diff(lam)) <= 1e-9)
    assert len(list(tmp_path.glob("tie.lambda_*.dot"))) == 5


# --- cost-eval ----------------------------------------------------------------------------


def test_cost_eval_field_file(capsys):
    code, out, _ = run(capsys, "cost-eval", "--field", FIX / "roundtrip" / "iso.rmcf",
                       "--point", 0.5, 0.5, "--tangent", 3, 4, "--normalize",
                       "--path", 0, 0, 1, 0, "--path-points", 2)
    res = json.loads(out)
    assert code == 0 and res["variant"] == "isotropic_whitematter"
    assert res["bounds"][0] * 1.0 <= res["beta"] <= res["bounds"][1] * 1.0
    assert res["bounds"][0] <= res["c"] <= res["bounds"][1]


def test_cost_eval_non_unit_tangent(capsys):
    code, _, err = run(capsys, "cost-eval", "--field", FIX / "roundtrip" / "iso.rmcf",
                       "--point", 0.5, 0.5, "--tangent", 3, 4)
    assert code == 2 and json.loads(err)["error"] == "NonUnitTangent"


def test_cost_eval_instance_edges(capsys):
    code, out, _ = run(capsys, "cost-eval", "--instance", FIX / "y_vs_v.json")
    assert code == 0
    assert json.loads(out)["edges"]["rt"] == pytest.approx(1.0)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "reactionmap", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
