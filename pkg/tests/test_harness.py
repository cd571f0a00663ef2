"""Tests for the sweep harness, scaling fits, and tabular output."""

import dataclasses
import json

import numpy as np
import pytest

from dicke_sense.dicke import ModelParams
from dicke_sense.harness import (
    SweepSpec,
    default_dt,
    fit_scaling,
    run_sweep,
)
from dicke_sense.interferometer import estimation_error
from dicke_sense.io import (
    Table,
    plot_error_vs_tau,
    plot_loglog_scaling,
    read_table,
    write_csv,
    write_json,
)
from dicke_sense.metrology import qfi_one_bin, qfi_vs_tau


class TestFitScaling:
    def test_recovers_exact_power_law(self):
        xs = np.array([10.0, 20.0, 40.0, 80.0])
        ys = 3.5 * xs ** 2
        fit = fit_scaling(xs, ys)
        assert fit.exponent == pytest.approx(2.0, abs=1e-12)
        assert fit.prefactor == pytest.approx(3.5, rel=1e-12)
        assert fit.points_used == 4
        assert fit.restriction == "all points"

    def test_restriction_to_largest_points(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        # slope 1 on the small-x side, slope 3 beyond x = 4
        ys = np.where(xs <= 4.0, xs, 4.0 ** (-2) * xs ** 3)
        fit = fit_scaling(xs, ys, restrict_largest=3)
        assert fit.exponent == pytest.approx(3.0, abs=1e-12)
        assert fit.points_used == 3
        assert fit.restriction == "largest 3"

    def test_sorts_before_restricting(self):
        xs = np.array([8.0, 1.0, 4.0, 2.0])
        ys = 2.0 * xs ** 1.5
        fit = fit_scaling(xs, ys, restrict_largest=2)
        assert fit.exponent == pytest.approx(1.5, abs=1e-12)

    def test_rejections(self):
        with pytest.raises(ValueError, match="positive"):
            fit_scaling([1.0, 2.0], [1.0, 0.0])
        with pytest.raises(ValueError, match="positive"):
            fit_scaling([0.0, 2.0], [1.0, 1.0])
        with pytest.raises(ValueError, match="equal length"):
            fit_scaling([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="at least 2"):
            fit_scaling([1.0, 2.0], [1.0, 2.0], restrict_largest=1)

    def test_stderr_vanishes_on_exact_data(self):
        xs = np.array([2.0, 4.0, 8.0])
        fit = fit_scaling(xs, 0.3 * xs ** -1.7)
        assert fit.exponent == pytest.approx(-1.7, abs=1e-12)
        assert fit.stderr == pytest.approx(0.0, abs=1e-10)


class TestDefaultDt:
    def test_small_sizes_use_the_cap(self):
        assert default_dt(10) == 2.5e-5
        assert default_dt(40) == 2.5e-5

    def test_large_sizes_keep_n_dt_small(self):
        assert default_dt(100) == pytest.approx(1e-5)
        assert default_dt(100) * 100 <= 1e-3 + 1e-15


class TestSweepSpec:
    def test_validation(self):
        with pytest.raises(ValueError, match="task"):
            SweepSpec(task="bogus", n=(4,), omega_ratio=(2.0,))
        with pytest.raises(ValueError, match="non-empty"):
            SweepSpec(task="qfi1", n=(), omega_ratio=(2.0,))
        with pytest.raises(ValueError, match="workers"):
            SweepSpec(task="qfi1", n=(4,), omega_ratio=(2.0,), workers=0)

    def test_output_name(self):
        spec = SweepSpec(task="qfi1", n=(4,), omega_ratio=(2.0,))
        assert spec.output_name == "qfi1"
        named = dataclasses.replace(spec, name="study_a")
        assert named.output_name == "study_a"

    def test_from_config(self, tmp_path):
        path = tmp_path / "sweep.ini"
        path.write_text(
            "[sweep]\n"
            "task = qfi2\n"
            "n = 10, 20 40\n"
            "omega_ratio = 0.5 1.0 2.0\n"
            "gamma_loc_ratio = 0.0 0.1\n"
            "dt = 1e-4\n"
            "t1 = sy_max\n"
            "tau = linspace:0.1:2.0:50  # lag grid\n"
            "dg = 1e-3\n"
            "source = short_time_analytic\n"
            "observables = n_d, n_4\n"
            "workers = 2\n"
            "name = demo\n"
        )
        spec = SweepSpec.from_config(str(path))
        assert spec.task == "qfi2"
        assert spec.n == (10, 20, 40)
        assert spec.omega_ratio == (0.5, 1.0, 2.0)
        assert spec.gamma_loc_ratio == (0.0, 0.1)
        assert spec.dt == (1e-4,)
        assert spec.t1 == "sy_max"
        assert spec.tau == "linspace:0.1:2.0:50"
        assert spec.dg == 1e-3
        assert spec.observables == ("n_d", "n_4")
        assert spec.workers == 2
        assert spec.output_name == "demo"

    def test_from_config_defaults(self, tmp_path):
        path = tmp_path / "min.ini"
        path.write_text("[sweep]\ntask = qfi1\nn = 6\nomega_ratio = 2.0\n")
        spec = SweepSpec.from_config(str(path))
        assert spec.dt is None
        assert spec.t1 == "stationary"
        assert spec.tau == "none"
        assert spec.dg is None
        assert spec.workers == 1

    def test_from_config_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            SweepSpec.from_config(str(tmp_path / "missing.ini"))
        bad = tmp_path / "bad.ini"
        bad.write_text("[other]\nx = 1\n")
        with pytest.raises(ValueError, match="sweep"):
            SweepSpec.from_config(str(bad))


class TestRunSweep:
    def test_single_point_matches_direct_call(self):
        spec = SweepSpec(task="qfi1", n=(6,), omega_ratio=(2.0,), dt=(1e-3,))
        result = run_sweep(spec)
        assert not result.partial
        assert len(result.table.rows) == 1
        row = result.table.rows[0]
        direct = qfi_one_bin(ModelParams(n=6, omega=6.0), 1e-3)
        assert row["qfi_per_time"] == pytest.approx(direct.per_time, rel=1e-12)
        assert row["status"] == "ok"
        assert row["index"] == 0
        assert row["n"] == 6
        assert row["source"] == "short_time_analytic"

    def test_lag_grid_rows_match_scan(self):
        spec = SweepSpec(task="qfi2", n=(6,), omega_ratio=(2.0,), dt=(1e-3,),
                         tau="linspace:0.1:0.5:3")
        result = run_sweep(spec)
        assert len(result.table.rows) == 3
        scan = qfi_vs_tau(ModelParams(n=6, omega=6.0), "stationary",
                          np.linspace(0.1, 0.5, 3), 1e-3)
        for i, row in enumerate(result.table.rows):
            assert row["tau"] == pytest.approx(scan.taus[i])
            assert row["qfi_per_time"] == pytest.approx(float(scan.per_time[i]),
                                                        rel=1e-12)

    def test_optimal_policy_emits_single_row(self):
        spec = SweepSpec(task="qfi2", n=(6,), omega_ratio=(2.0,), dt=(1e-3,),
                         tau="optimal:0.1:1.2:80")
        result = run_sweep(spec)
        assert len(result.table.rows) == 1
        row = result.table.rows[0]
        scan = qfi_vs_tau(ModelParams(n=6, omega=6.0), "stationary",
                          np.linspace(0.1, 1.2, 80), 1e-3)
        assert row["tau"] == pytest.approx(scan.tau_star)
        assert row["qfi_per_time"] == pytest.approx(scan.per_time_star, rel=1e-12)

    def test_counting_error_rows(self):
        spec = SweepSpec(task="mz_error", n=(4,), omega_ratio=(2.0,),
                         dt=(1e-3,), tau="list:0.2,0.3,0.4")
        result = run_sweep(spec)
        assert len(result.table.rows) == 9  # 3 lags x 3 observables
        row = result.table.rows[0]
        assert row["observable"] == "n_d"
        direct = estimation_error(ModelParams(n=4, omega=4.0), "stationary",
                                  0.2, 1e-3, observable="n_d")
        assert row["error"] == pytest.approx(direct.value, rel=1e-10)
        assert row["crb"] > 0

    def test_failed_points_stay_in_rows(self):
        # qfi2 without a lag policy is a per-point error, not a crash.
        spec = SweepSpec(task="qfi2", n=(4, 6), omega_ratio=(2.0,), dt=(1e-3,))
        result = run_sweep(spec)
        assert result.partial
        assert result.n_failed == 2
        assert all(r["status"] == "error:ValueError" for r in result.table.rows)
        assert [r["index"] for r in result.table.rows] == [0, 1]

    def test_worker_count_leaves_bytes_unchanged(self, tmp_path):
        spec = SweepSpec(task="qfi1", n=(4, 6), omega_ratio=(1.0, 2.0),
                         dt=(1e-3,))
        serial = run_sweep(spec)
        parallel = run_sweep(dataclasses.replace(spec, workers=8))
        p1 = tmp_path / "serial.csv"
        p8 = tmp_path / "parallel.csv"
        write_csv(str(p1), serial.table)
        write_csv(str(p8), parallel.table)
        assert p1.read_bytes() == p8.read_bytes()
        assert len(serial.table.rows) == 4

    def test_convergence_task(self):
        spec = SweepSpec(task="convergence", n=(4,), omega_ratio=(2.0,),
                         dt=(1e-3,), tau="list:0.3")
        result = run_sweep(spec)
        assert len(result.table.rows) == 1
        row = result.table.rows[0]
        assert row["dev_one_bin"] < 0.1
        assert row["dev_two_bin"] < 0.1
        assert row["occ1_exact"] == pytest.approx(row["occ1_analytic"], rel=0.05)

    def test_localdecay_task(self):
        spec = SweepSpec(task="localdecay", n=(4,), omega_ratio=(2.0,),
                         gamma_loc_ratio=(0.1,), dt=(1e-3,),
                         tau="optimal:0.1:1.0:60")
        result = run_sweep(spec)
        assert not result.partial
        row = result.table.rows[0]
        assert row["gamma_loc_ratio"] == 0.1
        assert row["qfi_per_time"] > 0
        for key in ("err_nd", "err_n4", "err_n5"):
            assert np.isfinite(row[key]) and row[key] > 0


class TestTableIo:
    def test_csv_round_trip_is_exact(self, tmp_path):
        table = Table(
            columns=("index", "status", "x", "note", "flag", "gap"),
            rows=[
                {"index": 0, "status": "ok", "x": 0.1 + 0.2, "note": "a b",
                 "flag": True, "gap": None},
                {"index": 1, "status": "error:ValueError", "x": -1.5e-300,
                 "note": "plain", "flag": False, "gap": 2.0},
            ],
            meta={"task": "qfi1", "code": "0.1.0"},
        )
        path = tmp_path / "t.csv"
        write_csv(str(path), table)
        back = read_table(str(path))
        assert back == table

    def test_column_accessor(self):
        t = Table(columns=("a", "b"), rows=[{"a": 1, "b": 2}, {"a": 3, "b": 4}])
        assert t.column("a") == [1, 3]

    def test_header_only_csv(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("a,b\n1,2.5\n")
        t = read_table(str(path))
        assert t.columns == ("a", "b")
        assert t.rows == [{"a": 1, "b": 2.5}]
        assert t.meta == {}

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b\n1,2,3\n")
        with pytest.raises(ValueError, match="cells"):
            read_table(str(path))

    def test_json_handles_numpy_values(self, tmp_path):
        path = tmp_path / "out.json"
        write_json(str(path), {
            "n": np.int64(6),
            "value": np.float64(1.5),
            "trace": np.linspace(0.0, 1.0, 3),
        })
        loaded = json.loads(path.read_text())
        assert loaded == {"n": 6, "value": 1.5, "trace": [0.0, 0.5, 1.0]}

    def test_plots_emit_svg(self, tmp_path):
        taus = np.linspace(0.1, 1.0, 10)
        p1 = tmp_path / "err.svg"
        plot_error_vs_tau(str(p1), taus,
                          {"n_d": np.exp(-taus), "n_4": 2.0 * np.exp(-taus)},
                          crb=0.1)
        p2 = tmp_path / "scale.svg"
        plot_loglog_scaling(str(p2), [10, 20, 40], [1.0, 4.0, 16.0],
                            exponent=2.0, prefactor=0.01)
        for p in (p1, p2):
            text = p.read_text()
            assert text.lstrip().startswith("<?xml")
            assert "<svg" in text
