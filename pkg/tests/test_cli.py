from __future__ import annotations

import csv
import json

import pytest

from treelab.cli import main


def _run(tmp_path, name, cfg, cmd, sub="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / sub
    code = main([cmd, "--config", str(path), "--out", str(out)])
    text = (out / f"{cmd}.json").read_text() if (out / f"{cmd}.json").exists() else ""
    return code, text, out


def test_spectrum_agreement(tmp_path):
    code, text, _ = _run(tmp_path, "s", {"graph": "theta_unit"}, "spectrum")
    doc = json.loads(text)
    assert code == 0 and doc["report"]["agreement"] < 2e-3
    assert len(doc["config_hash"]) == 64 and doc["version"]


def test_spectrum_deterministic(tmp_path):
    cfg = {"graph": "theta_unit", "spectrum": {"radius": 8.0, "h": 0.05, "tolerance": 0.1}}
    _, a, _ = _run(tmp_path, "s", cfg, "spectrum", "a")
    _, b, _ = _run(tmp_path, "s", cfg, "spectrum", "a")  # cache hit
    _, c, _ = _run(tmp_path, "s", cfg, "spectrum", "c")  # fresh solve
    assert a == b == c


@pytest.mark.parametrize(
    "cfg",
    [
        {"graph": {"vertices": ["p"], "edges": [{"name": "a", "u": "p", "v": "q", "length": 1.0}]}},
        {"graph": "theta_unit", "spectrum": {"radius": 500.0}},
        {"graph": "no_such_graph"},
    ],
)
def test_invalid_config_exit_code(tmp_path, cfg):
    code, _, _ = _run(tmp_path, "bad", cfg, "spectrum")
    assert code == 2


def test_pressure_verdict(tmp_path):
    code, text, out = _run(tmp_path, "p", {"graph": "theta_unit", "pressure": {"k": 6}}, "pressure")
    rep = json.loads(text)["report"]
    assert code == 0 and rep["verdict"] == "PASS"
    with open(out / "pressure.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    deltas = [float(r["delta"]) for r in rows]
    assert all(d <= 1e-12 for d in deltas)
    assert all(b >= a for a, b in zip(deltas, deltas[1:]))
    assert (out / "pressure.csv").read_bytes().count(b"\r") == 0


def test_llt_refuses_label_on_lattice(tmp_path):
    cfg = {"graph": "theta_unit", "llt": {"x": "", "y": "a b'", "radius": 3.0, "dt": 0.02}}
    _, text, out = _run(tmp_path, "l", cfg, "llt")
    rep = json.loads(text)["report"]
    assert rep["llt_label"] is False and rep["label"].startswith("not")
    assert "predicted_C" in rep and "C_fit" in rep
    assert (out / "llt_curve.csv").exists()
