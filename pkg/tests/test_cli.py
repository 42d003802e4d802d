import json
import subprocess
import sys

import pytest

from setgame.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_hamiltonian_e2_json(capsys):
    code, out = run(capsys, "hamiltonian", "--spec", "e2", "--t-points", "2", "--x-points", "2",
                    "--z-points", "2")
    data = json.loads(out.out)
    assert code == 0 and data["verdict"] == "nonempty at all probes"
    assert all(p["cloud"]["points"] == [[1.0, 2.0], [2.0, 1.0]] for p in data["probes"])


def test_hamiltonian_e3_empty_exit(capsys):
    code, _ = run(capsys, "hamiltonian", "--spec", "e3", "--t-points", "1", "--x-points", "1")
    assert code == 3


def test_isaacs_exit_codes(capsys):
    assert run(capsys, "isaacs", "--spec", "e3")[0] == 3
    code, out = run(capsys, "isaacs", "--spec", "e1")
    assert code == 0 and json.loads(out.out)["n_failing"] == 0


def test_spec_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.game"
    bad.write_text("[game]\nN = 0\n")
    code, out = run(capsys, "isaacs", "--spec", str(bad))
    assert code == 2 and "error" in out.err
    assert run(capsys, "isaacs", "--spec", str(tmp_path / "missing.game"))[0] in (2, 5)


def test_numeric_guard_exit(capsys):
    assert run(capsys, "set-value", "--spec", "e2", "--depth", "23")[0] == 4


def test_pde_no_value(capsys):
    code, out = run(capsys, "pde", "--spec", "e3", "--nx", "59")
    assert code == 3 and json.loads(out.out)["value"] is None


def test_pde_control(tmp_path, capsys):
    out = tmp_path / "e4.json"
    assert run(capsys, "pde", "--spec", "e4", "--nx", "119", "--out", str(out))[0] == 0
    data = json.loads(out.read_text())
    assert data["mode"] == "control" and data["value"][0] > 0.05
    assert (tmp_path / "e4_u0.png").exists()


def test_set_value_deterministic_and_round_trip(tmp_path, capsys):
    args = ["set-value", "--spec", "e2", "--depth", "6", "--samples", "10", "--band", "2",
            "--seed", "3"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, *args, "--out", str(a))[0] == 0
    assert run(capsys, *args, "--out", str(b), "--no-figures")[0] == 0
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    da.pop("figures")
    assert da == db
    assert (tmp_path / "a_cloud.png").exists() and not (tmp_path / "b_cloud.png").exists()
    assert all(e["eps"] <= 0.05 for e in da["band"])
    code, out = run(capsys, "hausdorff", str(a), str(b))
    assert code == 0 and json.loads(out.out)["distance"] == 0.0


def test_identical_runs_same_bytes(tmp_path, capsys):
    args = ["set-value", "--spec", "e2", "--depth", "5", "--samples", "5", "--band", "0",
            "--no-figures"]
    outs = []
    for name in ("x.json", "y.json"):
        run(capsys, *args, "--out", str(tmp_path / name))
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_csv_output(tmp_path, capsys):
    out = tmp_path / "cloud.csv"
    run(capsys, "set-value", "--spec", "e2", "--depth", "5", "--samples", "3", "--band", "0",
        "--format", "csv", "--out", str(out))
    lines = out.read_text().splitlines()
    assert lines[0].startswith("y1,y2,provenance") and len(lines) >= 3


def test_certify_and_construct(tmp_path, capsys):
    ctrl = tmp_path / "c.json"
    ctrl.write_text(json.dumps({"constant": [[0.0], [1.0]]}))
    code, out = run(capsys, "certify", "--spec", "e2", "--control", str(ctrl), "--depth", "8")
    assert code == 0 and json.loads(out.out)["certificate"]["eps"] == 1.0
    eta = tmp_path / "eta.json"
    eta.write_text(json.dumps({"constant": [1.0, 2.0]}))
    code, out = run(capsys, "construct", "--spec", "e2", "--eta", str(eta), "--depth", "6")
    assert code == 0 and json.loads(out.out)["certificate"]["eps"] <= 0.05


def test_hausdorff_empty_and_missing(tmp_path, capsys):
    a = tmp_path / "a.json"
    a.write_text(json.dumps({"points": [[0.0, 0.0]]}))
    e = tmp_path / "e.json"
    e.write_text(json.dumps({"points": [], "dim": 2}))
    code, out = run(capsys, "hausdorff", str(a), str(e))
    assert code == 0 and json.loads(out.out) == {"distance": None, "empty": True}
    assert run(capsys, "hausdorff", str(a), str(tmp_path / "nope.json"))[0] == 5


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "setgame.cli", "isaacs", "--spec", "e3",
                          "--t-points", "1", "--x-points", "1", "--z-points", "3"],
                         capture_output=True, text=True)
    assert res.returncode == 3


def test_missing_spec_flag(capsys):
    with pytest.raises(SystemExit):
        main(["pde"])
