import json
from pathlib import Path

import numpy as np
import pytest

from isac_pcrb.cli import main

SMALL = Path(__file__).parent / "data" / "small.yaml"


def _csv_rows(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def test_feasibility_json(tmp_path):
    out = tmp_path / "f.json"
    assert main(["feasibility", "--config", str(SMALL), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["columns"] == ["r_max", "rbar", "feasible", "rank_h"]
    assert doc["rows"][0][2] is True
    assert doc["meta"]["command"] == "feasibility"


def test_infeasible_exit_code(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("rate_target: 40.0\n")
    assert main(["feasibility", "--config", str(cfg)]) == 3
    assert main(["solve-optimal", "--config", str(cfg)]) == 3


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("system:\n  n_tx: -2\n")
    assert main(["bounds", "--config", str(cfg)]) == 2
    assert main(["bounds", "--config", str(tmp_path / "none.yaml")]) == 2


def test_bounds_table(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bounds", "--config", str(SMALL), "--out", str(out)]) == 0
    header, rows = _csv_rows(out)
    assert header[:4] == ["design", "rate", "pcrb", "pcrb_upper"]
    vals = {r[0]: (float(r[2]), float(r[3])) for r in rows}
    assert vals["optimal"][0] <= vals["suboptimal"][0] <= vals["isotropic"][0]
    assert vals["suboptimal"][1] <= vals["optimal"][1] + 1e-7
    for p, up in vals.values():
        assert up >= p * (1 - 1e-10)


def test_solve_writes_covariance(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["solve-suboptimal", "--config", str(SMALL), "--out", str(out)]) == 0
    header, rows = _csv_rows(out)
    assert header == ["row", "col", "re", "im"]
    w = np.zeros((10, 10), complex)
    for r, c, re, im in rows:
        w[int(r), int(c)] = float(re) + 1j * float(im)
    assert np.trace(w).real == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(w, w.conj().T)


def test_beampattern_stdout(capsys):
    assert main(["beampattern", "--config", str(SMALL)]) == 0
    text = capsys.readouterr().out
    assert "theta,power,prior_density" in text


def test_montecarlo_small(tmp_path):
    out = tmp_path / "mc.csv"
    assert main(["montecarlo", "--config", str(SMALL), "--out", str(out), "--trials", "3"]) == 0
    header, rows = _csv_rows(out)
    assert header[0] == "snr_db" and len(rows) == 2


def test_sweep_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["sweep", "--config", str(SMALL), "--out", str(p), "--seed", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "# channel_seed: 4" in a.read_text()
