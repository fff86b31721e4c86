import csv
import io
import json
import math
import subprocess
import sys

import pytest

from glasskit import __version__
from glasskit.cli import main, run


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def as_json(capsys, *argv):
    code, out, err = call(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_parisi_two_spin(capsys):
    rec = as_json(capsys, "parisi", "--p", "2", "--beta", "2")
    assert set(rec) == {"command", "parameters", "values", "residuals", "verdict", "seed", "version"}
    assert rec["values"]["value"] == pytest.approx(0.903426, abs=1e-6)
    assert rec["values"]["q_fixed_point"] == 0.5
    assert abs(rec["residuals"]["value_minus_closed"]) < 1e-8
    assert rec["version"] == __version__


def test_parisi_pspin(capsys):
    rec = as_json(capsys, "parisi", "--p", "4", "--beta", "3", "--k", "2")
    assert max(abs(rec["residuals"][k]) for k in ("lemma3_qm", "lemma3_delta", "lemma3_gamma")) < 1e-10
    assert abs(rec["residuals"]["value_minus_closed"]) < 1e-8
    rec = as_json(capsys, "parisi", "--p", "4", "--beta", "2", "--k", "2")
    assert rec["verdict"] == "trivial phase" and rec["values"]["value"] == 0.5


def test_parisi_rejects_odd_p(capsys):
    code, _, err = call(capsys, "parisi", "--p", "3", "--beta", "2")
    assert code == 2 and "even" in err


def test_bad_arguments_exit_2(capsys):
    assert call(capsys, "parisi")[0] == 2
    assert call(capsys, "bound", "nope")[0] == 2
    assert call(capsys, "parisi", "--beta", "-1")[0] == 2


def test_bound_ultrametric(capsys):
    rec = as_json(capsys, "bound", "ultrametric", "--beta", "1.5")
    assert rec["values"]["excluded"] is True
    assert rec["values"]["r3"] == pytest.approx(0.5)
    rec = as_json(capsys, "bound", "ultrametric", "--beta", "2.5")
    assert rec["values"]["reason"] == "not PSD"


def test_bound_theorem1_inline_and_file(capsys, tmp_path):
    rec = as_json(capsys, "bound", "theorem1", "--betas", "2,2", "--q", "1,0.8,0.8,1")
    assert rec["values"]["excluded"] is True
    path = tmp_path / "q.txt"
    path.write_text("# constraint\n1 0.8\n0.8 1\n")
    rec2 = as_json(capsys, "bound", "theorem1", "--betas", "2", "--q-file", str(path))
    assert rec2["values"] == rec["values"]


@pytest.mark.parametrize("q", ["1,0.5,0.4,1", "0.9,0.5,0.5,1", "1,2,2,1", "1,0.5,0.5"])
def test_bound_theorem1_invalid_matrix(capsys, q):
    code, _, err = call(capsys, "bound", "theorem1", "--betas", "2,2", "--q", q)
    assert code == 2 and "invalid" in err


def test_bound_pspin_coupled_csv(capsys):
    code, out, _ = call(capsys, "bound", "pspin-coupled", "--p", "4", "--betas", "3,4", "--scan-c", "0:1:0.05",
                        "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 21 and list(rows[0]) == ["c", "U_m0", "d", "d_fd"]
    assert float(rows[0]["c"]) == 0.0 and float(rows[-1]["c"]) == 1.0
    U = [float(r["U_m0"]) for r in rows]
    assert max(U) - min(U) < 1e-8
    assert all(abs(float(r["d"]) - float(r["d_fd"])) < 1e-7 for r in rows)


def test_bound_pspin_coupled_trivial_phase_is_numeric_failure(capsys):
    code, _, err = call(capsys, "bound", "pspin-coupled", "--p", "4", "--betas", "2,2")
    assert code == 3


def test_bound_pspin_tail(capsys):
    rec = as_json(capsys, "bound", "pspin-tail", "--p", "4", "--beta", "3")
    assert rec["residuals"]["max_U_minus_2P"] < 1e-8
    assert abs(rec["residuals"]["d_at_q"]) < 1e-8


def test_bound_chaos(capsys):
    rec = as_json(capsys, "bound", "chaos-u0", "--beta1", "2", "--h1", "0", "--beta2", "1.5", "--h2", "0.4")
    assert rec["values"]["u0"] == 0.0
    code, _, err = call(capsys, "bound", "chaos-u0", "--beta1", "2", "--h1", "0", "--beta2", "2", "--h2", "0")
    assert code == 3


def test_bound_guerra_and_lemma4(capsys):
    rec = as_json(capsys, "bound", "guerra", "--q", "1,0.3,0.3,1", "--betas", "2", "--construct", "remark")
    assert rec["values"]["bound"] == pytest.approx(rec["values"]["trivial_sum"], abs=1e-12)
    rec2 = as_json(capsys, "bound", "guerra", "--q", "1,0.3,0.3,1", "--betas", "2", "--q1", "0.5,0.3,0.3,0.5",
                   "--a", "4,0,0,4")
    assert rec2["values"]["bound"] == rec["values"]["bound"]
    code, _, _ = call(capsys, "bound", "guerra", "--q", "1,0.3,0.3,1", "--betas", "2", "--q1", "1,-0.9,-0.9,1",
                      "--a", "4,0,0,4")
    assert code == 2
    rec = as_json(capsys, "bound", "lemma4", "--q", "1,0.3,0.3,1", "--delta0", "2,1.2,1.2,2",
                  "--delta1", "2,0,0,2")
    assert rec["values"]["phi0"] == pytest.approx(3 * 2 - 2 - math.log(2), abs=1e-6)
    assert rec["residuals"]["stationarity_max"] < 1e-6


def test_json_round_trip(capsys, tmp_path):
    path = tmp_path / "out.json"
    code, record = run(["bound", "theorem1", "--betas", "2,3", "--q", "1,0.4,0.4,1", "--output", str(path)])
    assert code == 0
    record.pop("_format")
    record.pop("_output")
    assert main(["bound", "theorem1", "--betas", "2,3", "--q", "1,0.4,0.4,1", "--output", str(path)]) == 0
    assert json.loads(path.read_text()) == record


def test_seed_from_environment(capsys, monkeypatch):
    rec = as_json(capsys, "bound", "ultrametric", "--beta", "1.5", "--seed", "3")
    assert rec["seed"] == 3
    monkeypatch.setenv("GLASSKIT_SEED", "42")
    rec = as_json(capsys, "bound", "ultrametric", "--beta", "1.5", "--seed", "3")
    assert rec["seed"] == 42
    monkeypatch.setenv("GLASSKIT_SEED", "x")
    assert call(capsys, "bound", "ultrametric", "--beta", "1.5")[0] == 2


SMALL = ["--N", "16", "--sweeps", "3000", "--burn-in", "500", "--thin", "2", "--disorder", "2"]


def test_simulate_overlap_deterministic(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    a = as_json(capsys, "simulate", "overlap", "--beta", "2", *SMALL, "--seed", "7", "--trace", str(trace))
    b = as_json(capsys, "simulate", "overlap", "--beta", "2", *SMALL, "--seed", "7")
    assert a == b
    assert a["values"]["prediction"] == 0.25
    assert sum(a["values"]["histogram"]) == pytest.approx(1.0)
    assert trace.read_text().splitlines()[0] == "sweep,replica_pair,overlap"


def test_simulate_chaos_and_lemma2(capsys):
    rec = as_json(capsys, "simulate", "chaos", "--beta1", "2", "--h1", "0", "--beta2", "1.5", "--h2", "0.4", *SMALL)
    assert rec["values"]["prediction_u0"] == 0.0
    rec = as_json(capsys, "simulate", "lemma2", "--beta1", "2", "--beta2", "3", "--k", "4", *SMALL)
    assert rec["verdict"] == "holds"


def test_simulate_validation_and_short_chains(capsys):
    assert call(capsys, "simulate", "overlap", "--beta", "2", "--p", "4")[0] == 2
    assert call(capsys, "simulate", "overlap", "--beta", "2", "--N", "8")[0] == 2
    code, _, err = call(capsys, "simulate", "overlap", "--beta", "3", "--N", "16", "--sweeps", "120",
                        "--burn-in", "0", "--thin", "5", "--disorder", "1")
    assert code == 4 and "effective sample size" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "glasskit", "bound", "ultrametric", "--beta", "1.5",
                          "--format", "csv"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "section,key,value"
