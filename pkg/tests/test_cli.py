import csv
import io
import json

import numpy as np
import pytest

from entrans import cli, experiments
from entrans.experiments import Grid, SweepConfig, format_value, run
from entrans.fock_space import DensityOperator, ModeLayout, make_bell_state, make_tmsv
from entrans.fourport import DeviceSpec, bell_output_closed_form
from entrans.gaussian import ScalarDevice, moments_from_density, tmsv_covariance, transform_moments

LN2 = np.log(2)


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# schema: entrans/")
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    summary = dict(ln[2:].split(": ", 1) for ln in lines[1:] if ln.startswith("# "))
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return rows, summary


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


def decode_matrix(data):
    return np.array([[complex(re, im) for re, im in row] for row in data["matrix"]])


class TestConfig:
    def test_grid_needs_two_steps(self):
        with pytest.raises(experiments.ConfigError):
            Grid(0, 1, 1)

    def test_unknown_key_rejected(self):
        with pytest.raises(experiments.ConfigError):
            SweepConfig.from_mapping({"experiment": "bell-decay", "colour": "red"})

    def test_defaults(self):
        cfg = SweepConfig("amplifier-gain")
        assert (cfg.grid.start, cfg.grid.stop, cfg.grid.steps) == (1.0, 2.2, 61)
        assert SweepConfig("bell-decay").cutoffs == (6, 6)
        assert SweepConfig("tmsv-separability").cutoffs == (14, 14)

    def test_format_value(self):
        assert format_value(1 / 3) == "0.333333333333"
        assert format_value(True) == "true" and format_value(np.False_) == "false"
        assert format_value(None) == "" and format_value("psi+") == "psi+"


class TestExitCodes:
    def test_config_errors_exit_2(self, capsys, tmp_path):
        assert run_cli(capsys, "bell-decay", "--steps", 1)[0] == 2
        assert run_cli(capsys, "nonsense")[0] == 2
        assert run_cli(capsys, "tmsv-separability", "--n-th", 0)[0] == 2
        bad = tmp_path / "bad.json"
        bad.write_text('{"zeta": 1.0,\n "grid": }')
        code, _, err = run_cli(capsys, "tmsv-separability", "--config", bad)
        assert code == 2 and "line 2" in err
        assert run_cli(capsys, "tmsv-separability", "--config", tmp_path / "missing.json")[0] == 2
        assert run_cli(capsys, "amplifier-gain", "--zeta", 20)[0] == 2

    def test_truncation_exits_3(self, capsys, tmp_path):
        state = write_json(tmp_path / "tmsv.json", make_tmsv(np.tanh(0.4), ModeLayout((4, 4))).density().to_dict())
        code, _, err = run_cli(capsys, "channel-apply", "--input", state, "--sigma", -1, "--T1", 1.4, "--T2", 1.4,
                               "--field-cutoff", 4)
        assert code == 3 and "cutoff" in err

    def test_invariant_violation_exits_4(self, capsys, monkeypatch):
        monkeypatch.setattr(experiments, "lmax_fiber", lambda zeta, n_th: 0.5)
        code, _, err = run_cli(capsys, "tmsv-separability", "--zeta", 1.0)
        assert code == 4 and "invariant" in err


class TestDeterminism:
    def test_byte_identical_csv(self, capsys, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            assert run_cli(capsys, "amplifier-gain", "--zeta", 0.7, "--out", tmp_path / name)[0] == 0
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]

    def test_parallel_rows_keep_order(self, capsys):
        serial = run_cli(capsys, "tmsv-separability", "--zeta", 0.5)[1]
        parallel = run_cli(capsys, "tmsv-separability", "--zeta", 0.5, "--workers", 2)[1]
        assert serial == parallel

    def test_flags_override_file(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "cfg.json", {"experiment": "tmsv-separability", "zeta": 3.0, "n_th": 2.0,
                                                 "grid": {"start": 0, "stop": 1, "steps": 11}})
        rows, summary = parse_csv(run_cli(capsys, "tmsv-separability", "--config", cfg, "--n-th", 0.5)[1])
        assert float(summary["n_th"]) == 0.5 and float(summary["zeta"]) == 3.0 and len(rows) == 11
        rows, _ = parse_csv(run_cli(capsys, "tmsv-separability", "--config", cfg, "--steps", 21)[1])
        assert len(rows) == 21 and float(rows[-1]["l_over_L"]) == 1.0

    def test_json_mirrors_csv(self, capsys):
        rows, summary = parse_csv(run_cli(capsys, "amplifier-gain", "--zeta", 0.5)[1])
        data = json.loads(run_cli(capsys, "amplifier-gain", "--zeta", 0.5, "--format", "json")[1])
        assert data["schema"] == "entrans/amplifier-gain/v1"
        assert data["columns"] == list(rows[0])
        assert len(data["rows"]) == len(rows)
        for row, jrow in zip(rows, data["rows"]):
            for value, jvalue in zip(row.values(), jrow):
                assert value == format_value(jvalue)
        assert float(summary["g_max"]) == pytest.approx(data["summary"]["g_max"], rel=1e-11)


class TestSweeps:
    def test_short_bell_sweep(self, capsys):
        code, out, _ = run_cli(capsys, "bell-decay", "--stop", 1.0, "--steps", 5, "--verify")
        assert code == 0
        rows, summary = parse_csv(out)
        assert float(rows[0]["E_psi"]) == pytest.approx(LN2, abs=1e-4)
        assert float(rows[0]["E_phi_norm"]) == pytest.approx(1, abs=2e-4)
        assert all(float(r["E_phi"]) < float(r["E_psi"]) for r in rows[1:])
        assert summary["verified_rows"] == "1" and summary["all_converged"] == "true"

    def test_bell_negativity_sweep(self, capsys):
        code, out, _ = run_cli(capsys, "bell-decay", "--measure", "negativity", "--steps", 5)
        rows, _ = parse_csv(out)
        assert code == 0 and float(rows[0]["E_psi"]) == pytest.approx(0.5)

    def test_tmsv_at_zero_squeezing(self):
        table = run(SweepConfig("tmsv-separability", zeta=0.0))
        assert table.summary["crossing"] == 0
        assert not any(table.column("entangled"))

    def test_tmsv_large_squeezing(self):
        table = run(SweepConfig("tmsv-separability", zeta=10.0, n_th=1.0, verify=True))
        assert abs(table.summary["crossing"] - 0.20273) < 1e-5

    def test_amplifier_zero_squeezing(self):
        table = run(SweepConfig("amplifier-gain", zeta=0.0))
        assert table.summary["T_max_sq_closed_form"] == 1.0 and table.summary["crossing_T_sq"] == 1.0

    def test_amplifier_half_gain(self):
        table = run(SweepConfig("amplifier-gain", zeta=float(np.arctanh(0.5)), verify=True))
        assert table.summary["g_max"] == pytest.approx(0.5, abs=1e-12)
        assert table.summary["crossing_T_sq"] - 1 == pytest.approx(0.5, abs=1e-6)

    def test_amplifier_rejects_absorber(self):
        with pytest.raises(experiments.ConfigError):
            run(SweepConfig("amplifier-gain", sigma=1))


class TestChannelApply:
    def test_identity_device(self, capsys, tmp_path):
        rho = make_tmsv(np.tanh(0.3), ModeLayout((5, 5))).density()
        state = write_json(tmp_path / "in.json", rho.to_dict())
        cfg = write_json(tmp_path / "cfg.json", {
            "experiment": "channel-apply", "input": str(state),
            "device": {"T": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]], "A": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]}})
        code, _, _ = run_cli(capsys, "channel-apply", "--config", cfg, "--out", tmp_path / "out.json")
        out = json.loads((tmp_path / "out.json").read_text())
        assert code == 0 and out["engine"] == "fock"
        assert np.abs(decode_matrix(out) - rho.matrix).max() < 1e-12

    def test_psi_plus_half_transmission(self, capsys, tmp_path):
        state = write_json(tmp_path / "psi.json", make_bell_state("psi+", ModeLayout((1, 1))).to_dict())
        t = np.sqrt(0.5)
        code, out, _ = run_cli(capsys, "channel-apply", "--input", state, "--T1", t, "--T2", t)
        data = json.loads(out)
        m = decode_matrix(data)
        assert code == 0 and data["schema"] == "entrans/channel-apply/v1"
        assert np.abs(m[:4, :4] - bell_output_closed_form("psi+", t, t)).max() < 1e-12
        expected = np.diag([0.5, 0.25, 0.25, 0]).astype(complex)
        expected[1, 2] = expected[2, 1] = 0.25
        assert np.abs(m[:4, :4] - expected).max() < 1e-12

    def test_gaussian_and_fock_engines_agree(self, capsys, tmp_path):
        zeta, t1, t2 = 0.3, np.sqrt(0.6), np.sqrt(0.8)
        gauss_in = write_json(tmp_path / "g.json", tmsv_covariance(zeta).to_dict())
        fock_in = write_json(tmp_path / "f.json", make_tmsv(np.tanh(zeta), ModeLayout((12, 12))).density().to_dict())
        flags = ["--T1", t1, "--T2", t2]
        g = json.loads(run_cli(capsys, "channel-apply", "--input", gauss_in, *flags)[1])
        f = json.loads(run_cli(capsys, "channel-apply", "--input", fock_in, *flags)[1])
        assert g["engine"] == "gaussian" and f["engine"] == "fock"
        rho = DensityOperator.from_dict(f)
        fock_cov = moments_from_density(rho).cov
        assert np.abs(np.array(g["cov"]) - fock_cov).max() < 1e-6
        ref = transform_moments(tmsv_covariance(zeta), ScalarDevice(t1), ScalarDevice(t2))
        assert np.abs(np.array(g["cov"]) - ref.cov).max() < 1e-12

    def test_device_and_missing_input(self, capsys, tmp_path):
        assert run_cli(capsys, "channel-apply", "--T1", 0.5, "--T2", 0.5)[0] == 2
        state = write_json(tmp_path / "s.json", {"nothing": 1})
        assert run_cli(capsys, "channel-apply", "--input", state, "--T1", 0.5, "--T2", 0.5)[0] == 2

    def test_general_device_round_trip(self, capsys, tmp_path):
        spec = DeviceSpec.from_transmission(np.array([[0.6, 0.2j], [0.1, 0.5]]))
        state = write_json(tmp_path / "s.json", make_bell_state("phi-", ModeLayout((1, 1))).to_dict())
        cfg = write_json(tmp_path / "c.json", {"experiment": "channel-apply", "input": str(state),
                                               "device": {k: v for k, v in spec.to_dict().items() if k in "TA"}})
        code, out, _ = run_cli(capsys, "channel-apply", "--config", cfg)
        data = json.loads(out)
        assert code == 0 and np.allclose(DeviceSpec.from_dict(data["device"]).T, spec.T)
        assert np.trace(decode_matrix(data)).real == pytest.approx(1, abs=1e-10)
