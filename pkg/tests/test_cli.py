import csv
import io
import json

import pytest

from ofdm_dlc import __version__
from ofdm_dlc.cli import run, write_table


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


def test_bounds_list(capsys):
    assert run(["bounds", "--list"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("id,kind,regime,summary")
    assert "high_snr_sandwich" in out and "prop_high5_bound" in out


def test_su_dlc_writes_table_and_manifest(tmp_path):
    out = tmp_path / "su.csv"
    assert run(["su-dlc", "--carriers", "4", "--snr-db", "0", "10", "--samples", "2000",
                "--seed", "7", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0][:3] == ["P", "C_d", "SE"] and len(rows) == 3
    assert float(rows[1][1]) < float(rows[2][1])
    man = json.loads((tmp_path / "su.csv.manifest.json").read_text())
    assert man["seed"] == 7 and man["version"] == __version__
    assert man["config"]["carriers"] == 4 and "timestamp" not in json.dumps(man)


def test_identical_runs_are_byte_identical(tmp_path):
    args = ["bc-region", "--users", "2", "--carriers", "4", "--snr-db", "0", "--levels", "1",
            "--samples", "500", "--seed", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.manifest.json").read_bytes() == \
        (tmp_path / "b.csv.manifest.json").read_bytes()


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"carriers": 2, "samples": 1000, "seed": 1}))
    out = tmp_path / "o.csv"
    assert run(["su-dlc", "--carriers", "16", "--power", "1", "--config", str(cfg),
                "--out", str(out)]) == 0
    man = json.loads((tmp_path / "o.csv.manifest.json").read_text())
    assert man["config"]["carriers"] == 2 and man["seed"] == 1
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["su-dlc", "--power", "1", "--config", str(cfg)]) == 2


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("OFDM_DLC_SEED", "42")
    out = tmp_path / "o.csv"
    assert run(["channel-stats", "--carriers", "4", "--samples", "1000", "--out", str(out)]) == 0
    assert json.loads((tmp_path / "o.csv.manifest.json").read_text())["seed"] == 42


def test_regime_error_is_reported(capsys):
    code = run(["su-bounds", "--carriers", "2", "--taps", "2", "--snr-db", "0",
                "--bound", "corollary_low1_interval"])
    assert code == 3
    assert "no admissible kappa" in capsys.readouterr().err


def test_all_bounds_table_marks_regime_errors(capsys):
    assert run(["su-bounds", "--carriers", "16", "--snr-db", "0"]) == 0
    out = capsys.readouterr().out
    assert "regime error: high-SNR bound needs" in out


def test_invalid_input_exit_codes(capsys):
    assert run(["figure", "nope"]) == 2
    err = capsys.readouterr().err
    assert "valid ids" in err and "dlc1_ord" in err
    assert run(["figure", "dlc_low_approx_1024"]) == 2
    assert run(["su-dlc"]) == 2
    assert run(["su-dlc", "--carriers", "2", "--taps", "4", "--power", "1"]) == 2
    assert run(["no-such-command"]) == 2


def test_ofdma_commands(capsys):
    assert run(["ofdma-bounds", "--carriers", "8", "--snr-db", "10", "--s", "1", "2",
                "--directions", "3", "--prorated"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["R_1", "R_2", "bound_power", "s", "variant"] and len(rows) == 10
    assert run(["ofdma-bounds", "--carriers", "8", "--rates", "0.2", "0.3"]) == 0
    assert run(["ofdma-run", "--carriers", "8", "--rates", "0.3", "0.3", "--samples", "50"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[-1][2]) >= float(rows[-1][4])


def test_figure_writes_dataset(tmp_path):
    assert run(["figure", "dlc1_low", "--samples", "2000", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "curves.csv")
    assert rows[0][:4] == ["K", "snr_db", "P", "dlc"]
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["figure"] == "dlc1_low"


def test_json_format():
    text = write_table(["a", "b"], [[1, float("inf")]], "json")
    assert json.loads(text) == [{"a": 1, "b": "inf"}]
    assert write_table(["x"], [[0.1]]) == "x\n0.1\n"
