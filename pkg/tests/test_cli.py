import json
import subprocess
import sys
from pathlib import Path

import pytest

from gradedmult.cli import main
from gradedmult.experiment import ConfigError, config_hash, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "group": "abelian-12",
    "grid": {"extents": [8, 32], "points": [32, 32]},
    "seed": 0,
    "symbols": [
        {"builtin": "riesz", "alpha": [1, 0]},
        {"expr": "exp(-xi1**4 - xi2**2)", "name": "gauss"},
    ],
    "probes": {"s": [0, 1], "N": 2, "K": 2, "r_values": [0.5, 2.0]},
}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _tree(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def test_validate_shipped_config(tmp_path, capsys):
    code = main(["validate", "--config", str(CONFIGS / "heisenberg-validate.json"), "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["n_failed"] == 0
    assert summary["constants"]["Q"] == 4
    assert (tmp_path / "validate_checks.csv").read_text().startswith("check,passed,detail\n")
    assert "0 failed" in capsys.readouterr().out


def test_bad_weights_exit_2(tmp_path, capsys):
    code = main(["validate", "--config", str(CONFIGS / "bad-weights.json"), "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "error:" in err and "weight" in err


def test_parse_error_reports_position(tmp_path, capsys):
    code = main(["validate", "--config", str(CONFIGS / "bad-syntax.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "line 2, column" in capsys.readouterr().err


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="unknown config field"):
        parse_config(dict(SMALL, colour="red"))
    with pytest.raises(ConfigError, match="seed"):
        parse_config(dict(SMALL, seed=-1))


def test_missing_symbols_is_an_error(tmp_path, capsys):
    cfg = _write(tmp_path, {k: v for k, v in SMALL.items() if k != "symbols"})
    assert main(["norms", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "symbols" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["norms", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["norms", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_worker_count_does_not_change_output(tmp_path, monkeypatch):
    cfg = _write(tmp_path, SMALL)
    monkeypatch.setenv("GRADEDMULT_WORKERS", "1")
    main(["lu", "--config", str(cfg), "--out", str(tmp_path / "w1")])
    monkeypatch.setenv("GRADEDMULT_WORKERS", "4")
    main(["lu", "--config", str(cfg), "--out", str(tmp_path / "w4")])
    assert _tree(tmp_path / "w1") == _tree(tmp_path / "w4")


def test_mihlin_table_rows(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert main(["mihlin", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    lines = (tmp_path / "m" / "mihlin_table.csv").read_text().splitlines()
    assert lines[0] == "symbol,alpha,hom_degree,left,right"
    # weights (1, 2) and N = 2: six multi-indices of homogeneous degree at most 2 per symbol
    assert sum(1 for ln in lines[1:] if ln.startswith("gauss,")) == 6


def test_config_hash_tracks_content(tmp_path):
    a = load_config(_write(tmp_path, SMALL, "a.json"))
    b = load_config(_write(tmp_path, dict(SMALL, seed=1), "b.json"))
    c = load_config(_write(tmp_path, json.loads(json.dumps(SMALL)), "c.json"))
    assert config_hash(a) == config_hash(c) != config_hash(b)


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "gradedmult.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "Exit status" in res.stdout
    res = subprocess.run([sys.executable, "-m", "gradedmult.cli", "validate", "--config",
                          str(CONFIGS / "bad-weights.json"), "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2
