import csv
import json

import pytest

from unidev import cli
from unidev.errors import ConfigError


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


SMALL_TAIL = {"kind": "simulate", "experiment": "tail", "seed": 5, "n": 50, "R": 400, "median_R": 201,
              "u_grid": [1, 2], "resolution": 0.03125}


@pytest.mark.parametrize("command", ["capacity", "entropy", "chain", "kernel-verify", "bound"])
def test_bundled_configs_exit_zero(command, tmp_path):
    assert cli.main([command, "--out", str(tmp_path / command)]) == 0
    manifest = json.loads((tmp_path / command / "manifest.json").read_text())
    assert manifest["status"] == "pass"


def test_even_R_median_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "simulate", "experiment": "median", "seed": 1, "R": 100})
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "R" in capsys.readouterr().err


def test_schema_errors(tmp_path, capsys):
    assert cli.main(["simulate", "--config", write(tmp_path, {"kind": "simulate", "experiment": "tail", "seed": 1,
                                                               "bogus": 3})]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["chain", "--config", write(tmp_path, {"kind": "chain"})]) == 2
    assert "seed" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "bound",\n "bound": }')
    assert cli.main(["bound", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_same_median_and_tail_seed_rejected(tmp_path):
    cfg = write(tmp_path, {**SMALL_TAIL, "median_seed": 9, "tail_seed": 9})
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_round_trip_and_hash():
    raw = {"kind": "bound", "bound": "vc-dim", "d": 2, "n": 500, "delta": 0.1}
    cfg = cli.Config.from_dict(raw)
    back = cli.Config.from_dict(json.loads(cfg.canonical_json()))
    assert back == cfg and back.canonical_json() == cfg.canonical_json()
    reordered = cli.Config.from_dict(dict(reversed(list(raw.items()))))
    assert reordered.hash() == cfg.hash()
    assert cli.Config.from_dict({**raw, "out": "elsewhere"}).hash() == cfg.hash()
    assert cli.Config.from_dict({**raw, "n": 501}).hash() != cfg.hash()


def test_config_error_type():
    with pytest.raises(ConfigError):
        cli.Config.from_dict({"kind": "nothing"})
    with pytest.raises(ConfigError):
        cli.Config.from_dict({"kind": "bound", "bound": "vc"}, "simulate")


def test_tail_outputs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL_TAIL)
    outs = []
    for k, threads in enumerate((1, 3, 1)):
        out = tmp_path / f"run{k}"
        assert cli.main(["simulate", "--config", cfg, "--out", str(out), "--threads", str(threads)]) in (0, 1)
        outs.append({p.name: p.read_bytes() for p in out.glob("*.csv")})
    assert outs[0] and outs[0] == outs[1] == outs[2]
    header = read_csv(tmp_path / "run0" / "tail_plot.csv")[0]
    assert header == ["u", "frequency", "stderr", "budget"]
    manifest = json.loads((tmp_path / "run0" / "manifest.json").read_text())
    assert manifest["config_hash"] == cli.Config.from_dict(SMALL_TAIL).hash()


def test_plot_columns(tmp_path):
    assert cli.main(["bound", "--out", str(tmp_path / "b")]) == 0
    rows = read_csv(tmp_path / "b" / "comparison_plot.csv")
    assert rows[0] == ["Pf", "eq12_value", "eq13_value", "ratio"]
    cfg = write(tmp_path, {"kind": "simulate", "experiment": "stability", "seed": 3, "R": 51,
                           "n_grid": [20, 40], "resolution": 0.0625})
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "s")]) in (0, 1)
    assert read_csv(tmp_path / "s" / "median_scan_plot.csv")[0] == ["n", "M_hat", "q25", "q75"]


def test_format_value():
    assert cli.format_value(True) == "true"
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert cli.format_value(3) == "3"
