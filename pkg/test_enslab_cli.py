"""
Tests for the enslab command line
"""
import numpy as np
import pytest

import config
from enslab import main
from utils.ledger import LEDGER_COLUMNS, EnergyLedger, read_ledger, write_ledger

STATIONARY = """
# rest state, nothing should move
n = 8
dt = 0.1
t_end = 1.0
cadence = 5
init.generator = uniform
init.amplitude = 2.0
output.dir = {out}
"""


@pytest.fixture
def run_dir(tmp_path, capsys):
    cfg = tmp_path / "rest.cfg"
    cfg.write_text(STATIONARY.format(out=tmp_path / "out"), encoding="utf-8")
    assert main(["run", "--config", str(cfg)]) == 0
    return tmp_path / "out"


def _value(output, key):
    for line in output.splitlines():
        parts = line.split()
        if len(parts) == 2 and parts[0] == key:
            return parts[1]
    raise KeyError(key)


def test_run_writes_ledger_checkpoint_and_config(run_dir, capsys):
    ledger = read_ledger(run_dir / "ledger.csv")
    assert len(ledger) == 3
    assert (run_dir / config.CHECKPOINT_PATTERN.format(step=10)).exists()
    assert "init.generator = uniform" in (run_dir / "run.cfg").read_text(encoding="utf-8")
    assert "RUN 8^3" in capsys.readouterr().out


def test_diagnose_matches_ledger(run_dir, capsys):
    capsys.readouterr()
    checkpoint = run_dir / config.CHECKPOINT_PATTERN.format(step=10)
    assert main(["diagnose", str(checkpoint)]) == 0
    out = capsys.readouterr().out

    last = read_ledger(run_dir / "ledger.csv")[-1]
    for key in ("mass", "rho_inf", "E0"):
        assert float(_value(out, key)) == pytest.approx(last[key], rel=1e-6, abs=1e-300)


def test_decay_fit_from_ledger_column(tmp_path, capsys):
    path = tmp_path / "ledger.csv"
    ledger = EnergyLedger()
    for t in np.linspace(0.0, 10.0, 50):
        row = dict.fromkeys(LEDGER_COLUMNS, 0.0)
        row.update(t=float(t), E0=float((1 + 2 * t) ** -1.5))
        ledger.append(row)
    write_ledger(ledger, path)

    assert main(["decay-fit", str(path), "--column", "E0"]) == 0
    assert float(_value(capsys.readouterr().out, "beta")) == pytest.approx(1.5, abs=1e-5)


def test_ens_check_reports_monotonicity(tmp_path, capsys):
    path = tmp_path / "ledger.csv"
    ledger = EnergyLedger()
    for t in np.linspace(0.0, 10.0, 50):
        row = dict.fromkeys(LEDGER_COLUMNS, 0.0)
        row.update(t=float(t), E1=float((1 + t) ** -2.0))
        ledger.append(row)
    write_ledger(ledger, path)

    assert main(["decay-fit", str(path), "--ens-check"]) == 0
    out = capsys.readouterr().out
    assert float(_value(out, "beta")) == pytest.approx(2.0, abs=1e-5)
    assert float(_value(out, "t_lo")) == pytest.approx(0.5)
    assert _value(out, "monotone") == "yes"
    assert _value(out, "holds") == "yes"


def test_heat_decay_fit_runs_from_defaults(capsys):
    assert main(["decay-fit", "--heat"]) == 0
    out = capsys.readouterr().out
    assert float(_value(out, "beta")) == pytest.approx(1.5, abs=0.05)


def test_emit_plots_writes_script(run_dir, tmp_path):
    script = tmp_path / "plots.py"
    assert main(["emit-plots", str(run_dir / "ledger.csv"), "--out", str(script), "--groups", "energies"]) == 0
    text = script.read_text(encoding="utf-8")
    assert "matplotlib" in text and "E0" in text


def test_usage_errors_exit_with_two(capsys):
    assert main(["explode"]) == 2
    assert main(["run"]) == 2


@pytest.mark.parametrize("argv", [
    ["decay-fit"],
    ["run", "--config", "does/not/exist.cfg"],
    ["diagnose", "does/not/exist.bin"],
])
def test_failures_report_one_error_line(argv, capsys):
    assert main(argv) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error: ")


def test_bad_config_names_the_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = 12\ndt = 0.1\nt_end = 1.0\ninit.generator = uniform\n", encoding="utf-8")
    assert main(["run", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ") and "n" in err
