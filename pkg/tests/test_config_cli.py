import json
import subprocess
import sys

import numpy as np
import pytest

from pertspec.cli import EXIT_CONFIG, EXIT_OK, main
from pertspec.config import RunConfig
from pertspec.errors import ConfigError

SMALL = """
[operator]
h = 0.02
[monte_carlo]
trials = 40
master_seed = 5
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_hash_ignores_key_order_and_excluded_keys():
    a = RunConfig.from_text("[operator]\nh = 0.02\nC1 = 2.0\n[window]\nre_lo = -0.5\n")
    b = RunConfig.from_text("[window]\nre_lo = -0.5\n[operator]\nC1 = 2.0\nh = 0.02\n")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() == RunConfig.default().config_hash()
    assert a.override("monte_carlo", "workers", 8).config_hash() == a.config_hash()
    assert a.override("output", "dir", "/elsewhere").config_hash() == a.config_hash()
    assert a.override("monte_carlo", "master_seed", 1).config_hash() != a.config_hash()
    # round trip through text
    assert RunConfig.from_text(a.to_text()).config_hash() == a.config_hash()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_text("[operator]\nhbar = 0.1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("not an ini file")
    with pytest.raises(ConfigError):
        RunConfig.default().override("operator", "hbar", 1)


@pytest.mark.parametrize("text, tag", [
    ("[window]\nim_lo = -1.5\nim_hi = 1.5\n", "H.2"),
    ("[symbol]\ncoefficients = 1, 1.0, 0.0; 2, 0.5, 0.0\n", "H.1"),
    ("[operator]\nh = 0.05\n", "H.3"),
    ("[window]\nre_lo = 0.5\nre_hi = -0.5\n", "empty window"),
])
def test_simulate_refuses_invalid_config(tmp_path, capsys, text, tag):
    cfg = _write(tmp_path, text)
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "configuration error" in err and tag in err
    assert not (tmp_path / "o" / "records.csv").exists()


def test_simulate_stats_and_hash_checks(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    # Monte Carlo artifacts carry the hash of the numerical trial configuration
    h = RunConfig.from_file(cfg).trial_config().config_hash()
    assert (out / "config.ini").read_text().startswith(f"# config_hash={h}")
    code = main(["stats", "--config", str(cfg), "--out", str(out)])
    assert code in (0, 1)  # 40 trials: criteria may legitimately fail
    for name in ("intensity.csv", "pair_correlation.csv"):
        first = (out / name).read_text().splitlines()[0]
        assert first == f"# config_hash={h}"
    rep = json.loads((out / "report.json").read_text())
    assert rep["config_hash"] == h
    assert (out / "g2.svg").read_text().lstrip().startswith(("<?xml", "<svg"))
    data = np.genfromtxt(out / "pair_correlation.csv", delimiter=",", names=True, skip_header=1)
    assert np.all(data["g2"] >= 0)
    # stats under a different configuration refuses the records
    other = _write(tmp_path, SMALL.replace("master_seed = 5", "master_seed = 6"), "other.ini")
    capsys.readouterr()
    assert main(["stats", "--config", str(other), "--out", str(out)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    # and simulate will not mix a new seed into the same directory
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "9", "--resume"]) == EXIT_CONFIG


def test_theory_and_pseudospectrum_artifacts(tmp_path):
    cfg = _write(tmp_path, "[theory]\npoints = 30\n[pseudospectrum]\nn_re = 8\nn_im = 6\n")
    out = tmp_path / "o"
    h = RunConfig.from_file(cfg).config_hash()
    assert main(["theory", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "theory.csv").read_text().splitlines()
    assert lines[0] == f"# config_hash={h}"
    assert lines[1].split(",") == ["r", "D", "D_short", "D_long", "conditional"]
    assert len(lines) == 32
    assert main(["pseudospectrum", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    ps = np.genfromtxt(out / "pseudospectrum.csv", delimiter=",", names=True, skip_header=1)
    assert len(ps) == 48
    assert np.all(np.isfinite(ps["log10_resolvent_norm"]))
    assert (out / "pseudospectrum.csv").read_text().startswith(f"# config_hash={h}")


def test_gramian_artifacts(tmp_path):
    cfg = _write(tmp_path, "[gramian]\nh_values = 0.1\npairs = 12\n")
    out = tmp_path / "o"
    assert main(["gramian", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "gramian_rows.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["config_hash"] == RunConfig.from_file(cfg).config_hash()
    assert len(lines) == 13
    fit = json.loads((out / "gramian_fit.json").read_text())
    assert "config_hash" in fit


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pertspec", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("simulate", "stats", "theory", "gramian", "pseudospectrum", "verify"):
        assert sub in res.stdout
