import json

import numpy as np
import pytest

from hamnorm.benchmarks import kolmogorov_benchmark
from hamnorm.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_SMALL_DIVISOR,
    main,
)
from hamnorm.io import save_series
from hamnorm.series import PoissonSeries, Signature, TruncationPolicy


def run(tmp_path, command, config=None, out=None, extra=()):
    args = [command]
    if config is not None:
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        args += ["--config", str(cfg_path)]
    args += ["--out", str(out if out is not None else tmp_path)]
    return main(args + list(extra))


class TestKolmogorovCommand:
    def test_history_rows_and_decay(self, tmp_path):
        assert run(tmp_path, "kolmogorov", {"steps": 10}) == EXIT_OK
        lines = (tmp_path / "history.csv").read_text().strip().splitlines()
        assert len(lines) == 11  # header + one row per step
        cols = lines[0].split(",")
        i = cols.index("norm_chi2")
        norms = [float(line.split(",")[i]) for line in lines[1:]]
        assert norms[-1] < 1e-6 * norms[0]

    def test_zero_steps_byte_identity(self, tmp_path):
        H, _ = kolmogorov_benchmark(eps=1e-3, R=4)
        src = tmp_path / "input.json"
        save_series(src, H)
        cfg = {"input": str(src), "steps": 0}
        out = tmp_path / "out"
        out.mkdir()
        assert run(tmp_path, "kolmogorov", cfg, out=out) == EXIT_OK
        assert (out / "hamiltonian.json").read_bytes() == src.read_bytes()

    def test_resonant_small_divisor(self, tmp_path, capsys):
        sig = Signature(2, 0)
        pol = TruncationPolicy(ell_max=4, trig_max=4, K=1)
        H = PoissonSeries.action_linear(sig, pol, [1.0, 1.0])
        p1 = PoissonSeries.action_linear(sig, pol, [1.0, 0.0])
        p2 = PoissonSeries.action_linear(sig, pol, [0.0, 1.0])
        H = H + (p1 * p1 + p2 * p2).scale(0.5)
        H = H + PoissonSeries.cosine(sig, pol, (1, -1), 1e-3)
        src = tmp_path / "resonant.json"
        save_series(src, H)
        rc = run(tmp_path, "kolmogorov", {"input": str(src), "steps": 2})
        assert rc == EXIT_SMALL_DIVISOR
        err = capsys.readouterr().err  # the offending harmonic is reported
        assert "(1, -1)" in err or "(-1, 1)" in err

    def test_missing_input_no_partial_outputs(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        cfg = {"input": str(tmp_path / "nope.json"), "steps": 2}
        assert run(tmp_path, "kolmogorov", cfg, out=out) == EXIT_IO
        assert list(out.iterdir()) == []

    def test_unknown_config_key(self, tmp_path):
        assert run(tmp_path, "kolmogorov", {"stpes": 3}) == EXIT_CONFIG

    def test_negative_steps(self, tmp_path):
        assert run(tmp_path, "kolmogorov", {"steps": -1}) == EXIT_CONFIG

    def test_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        for out in (a, b):
            assert run(tmp_path, "kolmogorov", {"steps": 4}, out=out) == EXIT_OK
        for name in ("state.json", "hamiltonian.json", "history.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestEllipticCommand:
    def test_runs_and_decays(self, tmp_path):
        cfg = {"steps": 3, "benchmark": {"eps": 1e-3, "R": 3}}
        assert run(tmp_path, "elliptic", cfg) == EXIT_OK
        lines = (tmp_path / "history.csv").read_text().strip().splitlines()
        assert len(lines) == 4
        cols = lines[0].split(",")
        i = cols.index("norm_chi1")
        norms = [float(line.split(",")[i]) for line in lines[1:]]
        assert norms[-1] < norms[0]


class TestSecularCommand:
    def test_fixed_center(self, tmp_path):
        cfg = {
            "center": {"mode": "fixed", "x1_star": 0.106, "x2_star": 0.3},
            "cascade": {"ell_max": 8, "trig_max": 12, "K": 2},
        }
        assert run(tmp_path, "secular", cfg) == EXIT_OK
        assert (tmp_path / "hsec.json").exists()
        assert (tmp_path / "h0.json").exists()
        rows = dict(
            line.split(",", 1)
            for line in (tmp_path / "summary.csv").read_text().splitlines()[1:]
        )
        assert abs(float(rows["i_mut_deg"]) - 2.0) < 1e-9
        assert float(rows["D2"]) > 0
        assert float(rows["chart_a"]) * float(rows["chart_b"]) > 0

    def test_chart_range_numeric_exit(self, tmp_path):
        cfg = {"center": {"mode": "fixed", "x1_star": 0.5, "x2_star": 0.1}}
        assert run(tmp_path, "secular", cfg) == EXIT_NUMERIC

    def test_bad_center_mode(self, tmp_path):
        cfg = {"center": {"mode": "guess"}}
        assert run(tmp_path, "secular", cfg) == EXIT_CONFIG


PIPELINE_CFG = {
    "center": {"mode": "fixed", "x1_star": 0.106, "x2_star": 0.3},
    "cascade": {"ell_max": 8, "trig_max": 12, "K": 2},
    "steps_elliptic": 4,
    "steps_kam": 3,
    "refine_energy": {"enabled": False},
    "J_star": 1e-4,
    "kam_ell_max": 8,
    "orbit": {"n_periods": 2, "samples": 50},
}


class TestPipelineCommand:
    def test_end_to_end(self, tmp_path):
        assert run(tmp_path, "pipeline", PIPELINE_CFG) == EXIT_OK
        rows = dict(
            line.split(",", 1)
            for line in (tmp_path / "summary.csv").read_text().splitlines()[1:]
        )
        # generating functions decayed and the semi-analytic orbit shadows
        # the direct integration
        assert float(rows["final_norm_chi1_elliptic"]) < 1e-6
        assert float(rows["orbit_sup_discrepancy"]) < 1e-4
        for name in ("elliptic_state.json", "kam_state.json", "hsec.json",
                     "elliptic_history.csv", "kam_history.csv",
                     "orbit_comparison.csv"):
            assert (tmp_path / name).exists()

    def test_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        for out in (a, b):
            assert run(tmp_path, "pipeline", PIPELINE_CFG, out=out) == EXIT_OK
        for name in ("summary.csv", "kam_state.json", "orbit_comparison.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestPoincareCommand:
    def test_sections_csv(self, tmp_path):
        cfg = {"points": [[0.05, 0.3]], "n_crossings": 5}
        assert run(tmp_path, "poincare", cfg) == EXIT_OK
        lines = (tmp_path / "section_0.csv").read_text().strip().splitlines()
        assert len(lines) == 6
        assert lines[0] == "t,x1,x2,y1,y2"
        # on the section: y2 = 0, x2 > 0
        for line in lines[1:]:
            vals = [float(v) for v in line.split(",")]
            assert abs(vals[4]) < 1e-9 and vals[2] > 0


class TestSelftest:
    def test_passes(self, tmp_path, capsys):
        assert run(tmp_path, "selftest") == EXIT_OK
        assert "FAIL" not in capsys.readouterr().out


class TestDefaults:
    @pytest.mark.parametrize("command", [
        "kolmogorov", "elliptic", "secular", "pipeline", "poincare",
    ])
    def test_print_defaults_is_json(self, command, capsys):
        assert main([command, "--print-defaults"]) == EXIT_OK
        json.loads(capsys.readouterr().out)

    def test_bad_jobs(self, tmp_path):
        assert run(tmp_path, "selftest", extra=["--jobs", "0"]) == EXIT_CONFIG
