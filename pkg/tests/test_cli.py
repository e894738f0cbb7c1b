import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from hyperns import dynamics
from hyperns.cli import main
from hyperns.diagnostics import COLUMNS, EnergyTrace
from hyperns.io import read_trace, write_trace

TG = """\
[simulation]
d = 2
n = 32
dt = 1e-3
t_end = 0.02
symbol = "navier_stokes"

[initial]
kind = "taylor_green_2d"
"""

BAND = """\
[simulation]
d = 3
n = 16
dt = 1e-3
t_end = {t_end}
symbol = "log_supercritical"
record_every = 5

[initial]
kind = "random_band"
k_max = 3
amplitude = 4.0
seed = 42
"""

EULER = """\
[simulation]
d = 3
n = 16
dt = 1e-2
t_end = 5.0
symbol = "zero"
blowup_threshold = 1e6
k = 3

[initial]
kind = "random_band"
k_max = 3
amplitude = 1.0
seed = 1
"""


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def independent_hash(path):
    data = tomllib.loads(path.read_text())
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


class TestRun:
    def test_taylor_green(self, write, tmp_path):
        cfg = write("tg.cfg", TG)
        out = tmp_path / "tg.csv"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
        trace = read_trace(out)
        assert len(trace) == 3
        np.testing.assert_allclose(trace.E, 2 * np.pi**2 * np.exp(-4 * trace.t), rtol=1e-12)
        manifest = json.loads((tmp_path / "tg.csv.manifest.json").read_text())
        assert manifest["config_hash"] == independent_hash(cfg)
        assert manifest["termination_reason"] == "reached_t_end"
        assert manifest["command"] == "run"
        assert str(out) in manifest["artifacts"]
        assert manifest["end_time"] >= manifest["start_time"]

    def test_blowup_exit_code(self, write, tmp_path):
        out = tmp_path / "eu.csv"
        assert main(["run", "--config", str(write("eu.cfg", EULER)), "--out", str(out), "--quiet"]) == 4
        manifest = json.loads((tmp_path / "eu.csv.manifest.json").read_text())
        assert manifest["termination_reason"] == "blowup_threshold_exceeded"
        assert read_trace(out).E_k[-1] > 1e6

    def test_numerical_failure_exit_code(self, write, tmp_path, monkeypatch):
        def fail(self, c, previous):
            raise dynamics.NumericalFailure("injected", previous)

        monkeypatch.setattr(dynamics.Stepper, "check", fail)
        cfg = write("b.cfg", BAND.format(t_end=0.01))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b.csv"), "--quiet"]) == 3

    def test_reproducible_and_seed_override(self, write, tmp_path):
        cfg = write("b.cfg", BAND.format(t_end=0.01))
        outs = [tmp_path / f"r{i}.csv" for i in range(3)]
        for out in outs[:2]:
            assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        assert main(["run", "--config", str(cfg), "--out", str(outs[2]), "--seed", "7", "--quiet"]) == 0
        assert outs[2].read_bytes() != outs[0].read_bytes()
        assert json.loads((tmp_path / "r2.csv.manifest.json").read_text())["seed"] == 7

    @pytest.mark.parametrize("seed", ["-1", str(2**64)])
    def test_seed_range(self, write, tmp_path, seed):
        cfg = write("b.cfg", BAND.format(t_end=0.01))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x.csv"), "--seed", seed]) == 2

    def test_resume_matches_uninterrupted(self, write, tmp_path):
        half = write("half.cfg", BAND.format(t_end=0.01))
        full = write("full.cfg", BAND.format(t_end=0.02))
        split, ckpt, whole = tmp_path / "split.csv", tmp_path / "c.bin", tmp_path / "whole.csv"
        assert main(["run", "--config", str(half), "--out", str(split), "--checkpoint", str(ckpt), "--quiet"]) == 0
        assert main(["run", "--config", str(full), "--out", str(split), "--resume", str(ckpt), "--quiet"]) == 0
        assert main(["run", "--config", str(full), "--out", str(whole), "--quiet"]) == 0
        assert split.read_bytes() == whole.read_bytes()

    def test_resume_errors(self, write, tmp_path):
        full = write("full.cfg", BAND.format(t_end=0.02))
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"garbage")
        assert main(["run", "--config", str(full), "--resume", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
        other = write("tg.cfg", TG)
        ckpt = tmp_path / "tg.bin"
        assert main(["run", "--config", str(other), "--out", str(tmp_path / "y.csv"), "--checkpoint", str(ckpt)]) == 0
        assert main(["run", "--config", str(full), "--resume", str(ckpt), "--out", str(tmp_path / "z.csv")]) == 2


class TestErrors:
    def test_config_error_reports_line(self, write, caplog):
        cfg = write("bad.cfg", TG.replace("n = 32", "n = 33"))
        assert main(["run", "--config", str(cfg)]) == 2
        assert "line 3:" in caplog.text

    def test_missing_config(self, tmp_path):
        assert main(["run"]) == 2
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_wrong_task(self, write):
        assert main(["criterion", "--config", str(write("tg.cfg", TG))]) == 2

    def test_bad_subcommand(self):
        assert main(["simulate"]) == 2

    def test_bad_threads(self, monkeypatch, write):
        monkeypatch.setenv("HN_THREADS", "0")
        assert main(["criterion", "--config", str(write("c.cfg", '[criterion]\ng = "one"\n'))]) == 2


class TestAnalysis:
    def test_criterion_log_quarter(self, write, tmp_path, capsys):
        cfg = write("lq.cfg", '[criterion]\ng = "log_quarter"\nq = 4\nS = 1e6\n')
        out = tmp_path / "crit.csv"
        assert main(["criterion", "--config", str(cfg), "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "classification: diverges" in text
        assert "1.95299334326" in text
        table = np.loadtxt(out, delimiter=",", skiprows=1)
        assert table.shape == (30, 3)

    def test_criterion_converges(self, write, capsys):
        assert main(["criterion", "--config", str(write("p.cfg", '[criterion]\ng = "power:0.25"\n'))]) == 0
        assert "classification: converges" in capsys.readouterr().out

    def test_gronwall(self, write, tmp_path, capsys):
        cfg = write("g.cfg", '[comparison]\nC = 1\ng = "log_quarter"\nE0 = 1\nt_end = 0.5\n')
        out = tmp_path / "g.csv"
        assert main(["gronwall", "--config", str(cfg), "--out", str(out)]) == 0
        assert capsys.readouterr().out.startswith("global")
        assert json.loads((tmp_path / "g.csv.manifest.json").read_text())["termination_reason"] == "global"
        cfg = write("b.cfg", '[comparison]\nC = 1\ng = "power:0.25"\nE0 = 10\nt_end = 1\n')
        assert main(["gronwall", "--config", str(cfg)]) == 4
        assert "blowup_at(0.0953101798" in capsys.readouterr().out

    def test_gronwall_trace_forcing(self, write, tmp_path):
        rows = np.zeros((3, len(COLUMNS)))
        rows[:, 0] = [0, 0.5, 1.0]
        rows[:, 2] = 1.0
        trace = tmp_path / "f.csv"
        write_trace(EnergyTrace(rows), trace)
        text = f'[comparison]\nC = 1\ng = "one"\nE0 = 1\nt_end = 1\nforcing_trace = "{trace}"\n'
        out = tmp_path / "g.csv"
        assert main(["gronwall", "--config", str(write("g.cfg", text)), "--out", str(out)]) == 0
        final = np.loadtxt(out, delimiter=",", skiprows=1)[-1]
        assert final[1] == pytest.approx(np.exp(2.0), rel=1e-8)

    def test_envelope(self, write, tmp_path, capsys):
        trace = tmp_path / "b.csv"
        assert main(["run", "--config", str(write("b.cfg", BAND.format(t_end=0.02))), "--out", str(trace), "--quiet"]) == 0
        cfg = write("e.cfg", f'[envelope]\ntrace = "{trace}"\ng = "log_quarter"\n')
        assert main(["envelope", "--config", str(cfg), "--out", str(tmp_path / "env.csv")]) == 0
        assert "violations = 0" in capsys.readouterr().out

    def test_envelope_violation(self, write, tmp_path):
        rows = np.zeros((3, len(COLUMNS)))
        rows[:, 0] = [0, 0.5, 1.0]
        rows[:, 3] = [1.0, 5.0, 9.0]
        trace = tmp_path / "v.csv"
        write_trace(EnergyTrace(rows), trace)
        cfg = write("e.cfg", f'[envelope]\ntrace = "{trace}"\ng = "one"\nC = 0.1\n')
        assert main(["envelope", "--config", str(cfg)]) == 1

    def test_decay_test(self, capsys):
        assert main(["decay-test"]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("PASS")]
        assert len(lines) == 3

    def test_decay_test_config(self, write, capsys):
        assert main(["decay-test", "--config", str(write("tg.cfg", TG))]) == 0
        text = BAND.format(t_end=0.01)
        assert main(["decay-test", "--config", str(write("b.cfg", text))]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hyperns", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "decay-test" in proc.stdout
