import hashlib
import json
import math
import struct

import numpy as np
import pytest
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from hyperns.config import ConfigError, config_hash, load_config, parse_config
from hyperns.diagnostics import COLUMNS, EnergyTrace
from hyperns.dynamics import SolverState, make_initial_data
from hyperns.gronwall import classify_divergence
from hyperns.io import (
    HEADER,
    CheckpointError,
    TraceFormatError,
    checkpoint_payload_size,
    read_checkpoint,
    read_trace,
    write_checkpoint,
    write_trace,
)
from hyperns.spectral import make_lattice

from conftest import random_field


class TestTrace:
    def test_empty_trace_is_header_only(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace(EnergyTrace.empty(), path)
        assert path.read_text() == ",".join(COLUMNS) + "\n"
        assert len(read_trace(path)) == 0

    def test_column_order(self, tmp_path):
        assert COLUMNS == ("t", "E", "a", "E_k", "N_sqrt_ratio", "N_sobolev", "N_centroid",
                           "ratio", "spectrum_health")

    def test_thousand_row_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((1000, len(COLUMNS))) * 10.0 ** rng.integers(-300, 300, (1000, len(COLUMNS)))
        data[:, 0] = np.cumsum(rng.random(1000))
        data[5, 7] = np.nan
        data[6, 3] = np.inf
        data[7, 2] = 5e-324
        path = tmp_path / "t.csv"
        write_trace(EnergyTrace(data), path)
        back = read_trace(path).data
        assert back.tobytes() == data.tobytes()

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t,E,a\n0,1,2\n")
        with pytest.raises(TraceFormatError, match="header"):
            read_trace(path)

    def test_row_arity(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(",".join(COLUMNS) + "\n" + ",".join(["1"] * 8) + "\n")
        with pytest.raises(TraceFormatError, match=":2:"):
            read_trace(path)

    def test_bad_number(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(",".join(COLUMNS) + "\n" + ",".join(["x"] * 9) + "\n")
        with pytest.raises(TraceFormatError):
            read_trace(path)


class TestCheckpoint:
    def make_state(self, d=3, n=8, period=2 * math.pi):
        lat = make_lattice(d, n, period)
        return SolverState(0.125, random_field(lat, seed=d * n, solenoidal=True), 77)

    @pytest.mark.parametrize("d,n,period", [(3, 8, 2 * math.pi), (2, 16, 3.5), (3, 12, 1.0)])
    def test_round_trip(self, tmp_path, d, n, period):
        state = self.make_state(d, n, period)
        path = tmp_path / "c.bin"
        write_checkpoint(state, path)
        back = read_checkpoint(path)
        assert back.t == state.t and back.step_count == 77
        assert back.u.lattice.compatible(state.u.lattice)
        assert back.u.coeffs.tobytes() == state.u.coeffs.tobytes()
        assert back.u.divergence_free
        assert path.stat().st_size == HEADER.size + checkpoint_payload_size(d, n)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "c.bin"
        write_checkpoint(self.make_state(), path)
        raw = path.read_bytes()
        assert raw[:8] == b"HNAVCKPT"
        assert struct.unpack_from("<I", raw, 8)[0] == 1
        assert struct.unpack_from("<IIddQ", raw, 12) == (3, 8, 2 * math.pi, 0.125, 77)
        assert HEADER.size == 44
        first = struct.unpack_from("<dd", raw, 44)
        c = self.make_state().u.coeffs[0, 0, 0, 0]
        assert first == (c.real, c.imag)

    def test_payload_size(self):
        assert checkpoint_payload_size(3, 64) == 3 * 64**3 * 16

    def test_truncated(self, tmp_path):
        path = tmp_path / "c.bin"
        write_checkpoint(self.make_state(), path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(CheckpointError, match="truncated payload"):
            read_checkpoint(path)
        path.write_bytes(b"HNAVCKPT\x01\x00")
        with pytest.raises(CheckpointError, match="truncated"):
            read_checkpoint(path)

    def test_magic_and_version(self, tmp_path):
        path = tmp_path / "c.bin"
        write_checkpoint(self.make_state(), path)
        raw = bytearray(path.read_bytes())
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOTACKPT" + raw[8:])
        with pytest.raises(CheckpointError, match="magic"):
            read_checkpoint(bad)
        raw[8:12] = struct.pack("<I", 2)
        bad.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            read_checkpoint(bad)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "c.bin"
        write_checkpoint(self.make_state(), path)
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CheckpointError, match="trailing"):
            read_checkpoint(path)

    def test_non_solenoidal_flag(self, tmp_path):
        lat = make_lattice(3, 8)
        path = tmp_path / "c.bin"
        write_checkpoint(SolverState(0.0, random_field(lat, seed=1)), path)
        assert not read_checkpoint(path).u.divergence_free


SIM = """\
# reference config
[simulation]
d = 3
n = 16
dt = 1e-3
t_end = 0.01
symbol = "log_supercritical"

[initial]
kind = "random_band"
k_max = 4
seed = 42
"""


class TestConfig:
    def test_defaults_resolved(self):
        parsed = parse_config(SIM)
        assert parsed.task == "run"
        sim = parsed.sim
        assert sim.symbol.family == "log_supercritical"
        assert (sim.dealias, sim.k, sim.record_every, sim.blowup_threshold) == ("two_thirds", 3, 10, 1e12)
        assert sim.period == pytest.approx(2 * math.pi)
        assert parsed.initial_params == {"k_min": 1.0, "k_max": 4.0, "amplitude": 1.0, "seed": 42}
        assert parsed.seed == 42
        assert parsed.growth.family == "log_quarter"
        echo = parsed.echo()
        assert "record_every = 10" in echo and "# regime: log_supercritical" in echo

    def test_navier_stokes(self):
        parsed = parse_config(SIM.replace('"log_supercritical"', '"navier_stokes"'))
        assert parsed.sim.symbol.family == "navier_stokes"

    def test_critical_flagged(self):
        parsed = parse_config(SIM.replace('"log_supercritical"', '"hyper:1.25"'))
        assert parsed.sim.symbol.is_critical
        assert 'symbol = "hyper:1.25"  # critical' in parsed.echo()

    def test_two_dimensional_note(self):
        text = SIM.replace("d = 3", "d = 2").replace('"log_supercritical"', '"critical"')
        assert "outside the regularity regime" in parse_config(text).echo()

    def test_criterion_power_quarter(self):
        parsed = parse_config('[criterion]\ng = "power:0.25"\nq = 4\n')
        assert parsed.task == "criterion"
        assert classify_divergence(parsed.growth, 4).verdict == "converges"

    def test_comparison(self):
        parsed = parse_config('[comparison]\nC = 2\ng = "one"\nE0 = 1.5\nt_end = 3\n')
        prob = parsed.comparison
        assert parsed.task == "gronwall"
        assert (prob.C, prob.E0, prob.t_end, prob.q) == (2.0, 1.5, 3.0, 4)

    @pytest.mark.parametrize(
        "text,line,match",
        [
            (SIM.replace("n = 16", "n = 16\nviscosity = 1"), 5, "unknown key"),
            (SIM.replace("dt = 1e-3", 'dt = "small"'), 5, "must be a number"),
            (SIM.replace("dt = 1e-3", "dt = -1e-3"), 5, "dt"),
            (SIM.replace("n = 16", "n = 15"), 4, "n"),
            (SIM.replace('"log_supercritical"', '"hyper:-2"'), 7, "exponent"),
            (SIM.replace('kind = "random_band"', 'kind = "vortex"'), 10, "initial kind"),
            (SIM + "\n[extras]\nx = 1\n", 14, "unknown section"),
            (SIM.replace("d = 3", "d = true"), 3, "integer"),
            ('[criterion]\ng = "power:0.25"\nq = 3\n', 3, "q"),
            ('[criterion]\ng = "cubic"\n', 2, "growth"),
            ('[comparison]\nC = 0\ng = "one"\nE0 = 1\nt_end = 1\n', 2, "C"),
        ],
    )
    def test_errors_carry_line(self, text, line, match):
        with pytest.raises(ConfigError, match=match) as err:
            parse_config(text)
        assert err.value.line == line
        assert str(err.value).startswith(f"line {line}:")

    def test_missing_and_conflicting(self):
        with pytest.raises(ConfigError, match="missing required key 'dt'"):
            parse_config(SIM.replace("dt = 1e-3\n", ""))
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(SIM + '\n[criterion]\ng = "one"\n')
        with pytest.raises(ConfigError, match="only valid"):
            parse_config('[criterion]\ng = "one"\n[initial]\nseed = 1\n')
        with pytest.raises(ConfigError):
            parse_config("[simulation\nd = 3\n")

    def test_hash_is_canonical(self, tmp_path):
        reordered = SIM.replace("d = 3\nn = 16", "n = 16\nd = 3").replace("# reference config", "# other")
        assert config_hash(SIM) == config_hash(reordered)
        assert config_hash(SIM) != config_hash(SIM.replace("seed = 42", "seed = 43"))
        canonical = json.dumps(tomllib.loads(SIM), sort_keys=True, separators=(",", ":"))
        assert config_hash(SIM) == hashlib.sha256(canonical.encode()).hexdigest()
        path = tmp_path / "sim.toml"
        path.write_text(SIM)
        assert load_config(path).canonical_hash == config_hash(SIM)

    def test_initial_params_match_kind(self):
        text = SIM.replace('kind = "random_band"\nk_max = 4\nseed = 42', 'kind = "single_mode"\nwavevector = [1, 0, 0]\npolarization = [0, 1, 0]')
        parsed = parse_config(text)
        u = make_initial_data(parsed.initial_kind, parsed.sim.lattice(), **parsed.initial_params)
        assert u.divergence_error() == 0
