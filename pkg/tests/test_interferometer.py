"""Tests for the balanced interferometer and counting-error machinery."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dicke_sense.dicke import ModelParams
from dicke_sense.dynamics import stationary_state
from dicke_sense.interferometer import (
    OBSERVABLES,
    MzConfig,
    counting_stats,
    error_scan,
    estimation_error,
    optimal_sensing_scan,
    output_modes,
)
from dicke_sense.metrology import qfi_two_bin, qfi_vs_tau
from dicke_sense.timebin import BinSchedule, two_bin_analytic


def vacuum4() -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = 1.0
    return m


class TestMzConfig:
    def test_phase_difference(self):
        c = MzConfig(delta_phi=0.7)
        assert c.phi_1 - c.phi_2 == pytest.approx(0.7)

    def test_schedule_must_hold_two_bins(self):
        with pytest.raises(ValueError, match="two bins"):
            MzConfig(schedule=BinSchedule(dt=1e-3, n1=1))

    def test_two_bin_schedule_accepted(self):
        c = MzConfig(schedule=BinSchedule(dt=1e-3, n1=1, n2=5))
        assert c.schedule.n2 == 5


class TestOutputModes:
    @given(st.floats(-10.0, 10.0))
    def test_unitary_for_any_phase(self, dphi):
        u = output_modes(MzConfig(delta_phi=dphi))
        assert np.max(np.abs(u @ u.conj().T - np.eye(4))) < 1e-12

    def test_balanced_amplitudes(self):
        u = output_modes(MzConfig())
        assert np.allclose(np.abs(u), 0.5, atol=1e-12)


class TestCountingStats:
    def test_vacuum_counts_nothing(self):
        s = counting_stats(vacuum4())
        assert s.mean_n4 == s.mean_n5 == s.mean_nd == 0.0
        assert s.var_n4 == s.var_n5 == s.var_nd == 0.0
        assert s.p11 == 0.0

    def test_needs_two_bin_state(self):
        with pytest.raises(ValueError, match="4x4"):
            counting_stats(np.eye(2, dtype=complex) / 2)

    def test_single_photon_in_first_bin(self):
        # One photon entering a balanced 4-port splits evenly: each counter
        # clicks with probability |u|^2 = 1/4, a Bernoulli with
        # variance (1/4)(3/4).
        m = np.zeros((4, 4), dtype=complex)
        m[2, 2] = 1.0  # index 2 b1 + b2 with b1 occupied
        s = counting_stats(m)
        assert s.occ_1 == pytest.approx(1.0)
        assert s.occ_2 == pytest.approx(0.0)
        assert s.mean_n4 == pytest.approx(0.25)
        assert s.mean_n5 == pytest.approx(0.25)
        assert s.var_n4 == pytest.approx(0.1875)
        assert s.var_n5 == pytest.approx(0.1875)

    def test_two_photon_interference(self):
        # |11>: each counter sees <n> = 1/2; the normal-ordered two-photon
        # term 4 |u_00 u_01|^2 = 1/4 gives <n4^2> = 3/4, so var = 1/2, and
        # the cross term <n4 n5> cancels exactly (the photons bunch), so
        # var(n_d) = 3/4 + 3/4 = 3/2.
        m = np.zeros((4, 4), dtype=complex)
        m[3, 3] = 1.0
        s = counting_stats(m)
        assert s.p11 == pytest.approx(1.0)
        assert s.mean_n4 == pytest.approx(0.5)
        assert s.mean_n5 == pytest.approx(0.5)
        assert s.mean_nd == pytest.approx(0.0)
        assert s.var_n4 == pytest.approx(0.5)
        assert s.var_n5 == pytest.approx(0.5)
        assert s.var_nd == pytest.approx(1.5)

    def test_difference_signal_reads_exchange_coherence(self):
        coh = 0.05 + 0.03j
        m = np.diag([0.8, 0.1, 0.1, 0.0]).astype(complex)
        m[1, 2] = coh
        m[2, 1] = np.conj(coh)
        s0 = counting_stats(m, MzConfig(delta_phi=0.0))
        assert s0.mean_nd == pytest.approx(coh.real, abs=1e-14)
        s90 = counting_stats(m, MzConfig(delta_phi=np.pi / 2))
        assert s90.mean_nd == pytest.approx(coh.imag, abs=1e-14)
        assert s90.delta_phi == pytest.approx(np.pi / 2)

    def test_total_counts_conserve_occupation(self):
        p = ModelParams(n=6, omega=6.0)
        mu = two_bin_analytic(p, stationary_state(p), 1e-3, 0.4)
        s = counting_stats(mu)
        assert s.mean_n4 + s.mean_n5 == pytest.approx(
            0.5 * (s.occ_1 + s.occ_2), abs=1e-12)
        assert 0.0 <= s.mean_n4 <= 1.0
        assert 0.0 <= s.mean_n5 <= 1.0
        assert s.var_n4 >= 0.0 and s.var_n5 >= 0.0 and s.var_nd >= 0.0


class TestEstimationError:
    @pytest.fixture(scope="class")
    def params(self):
        return ModelParams(n=6, omega=6.0)

    def test_error_is_variance_over_slope(self, params):
        e = estimation_error(params, "stationary", 0.3, 1e-3)
        assert not e.insensitive
        assert e.value == pytest.approx(e.variance_obs / e.derivative ** 2,
                                        rel=1e-12)
        assert e.error == pytest.approx(np.sqrt(e.value), rel=1e-12)
        assert e.convergence < 1e-3

    def test_counting_error_respects_quantum_bound(self, params):
        # Any counting strategy is a measurement on the two-bin state, so
        # its single-probe variance cannot beat 1/F_Q.
        q = qfi_two_bin(params, 1e-3, 0.3)
        for obs in OBSERVABLES:
            e = estimation_error(params, "stationary", 0.3, 1e-3,
                                 observable=obs)
            assert e.value >= (1.0 / q.value) * (1.0 - 1e-9)

    def test_exact_source_alias(self, params):
        e = estimation_error(params, "stationary", 0.3, 1e-3, source="exact")
        assert e.source == "exact_discrete"
        e_a = estimation_error(params, "stationary", 0.3, 1e-3)
        assert e.value == pytest.approx(e_a.value, rel=5e-2)

    def test_validation(self, params):
        with pytest.raises(ValueError, match="source"):
            estimation_error(params, "stationary", 0.3, 1e-3, source="magic")
        with pytest.raises(ValueError, match="observable"):
            estimation_error(params, "stationary", 0.3, 1e-3, observable="n_x")

    def test_phase_setting_is_recorded(self, params):
        e = estimation_error(params, "stationary", 0.3, 1e-3,
                             config=MzConfig(delta_phi=0.1))
        assert e.delta_phi == pytest.approx(0.1)
        assert e.tau == pytest.approx(0.3)
        assert e.dt == 1e-3
        assert e.t1 == "stationary"


class TestErrorScan:
    def test_matches_pointwise_evaluation(self):
        p = ModelParams(n=6, omega=6.0)
        taus = np.linspace(0.1, 1.2, 7)
        scan = error_scan(p, "stationary", taus, 1e-3)
        assert set(scan) == set(OBSERVABLES)
        for i, tau in enumerate(taus):
            for obs in OBSERVABLES:
                direct = estimation_error(p, "stationary", float(tau), 1e-3,
                                          observable=obs)
                assert scan[obs][i].value == pytest.approx(direct.value,
                                                           rel=1e-8)

    def test_observable_subset(self):
        p = ModelParams(n=6, omega=6.0)
        scan = error_scan(p, "stationary", [0.2, 0.4], 1e-3,
                          observables=("n_d",))
        assert list(scan) == ["n_d"]
        assert len(scan["n_d"]) == 2


class TestOptimalSensingScan:
    def test_finds_grid_minimum(self):
        p = ModelParams(n=6, omega=6.0)
        taus = np.linspace(0.05, 2.5, 120)
        scan = optimal_sensing_scan(p, "stationary", taus, 1e-3)
        finite = [e.value for e in scan.errors if not e.insensitive]
        assert scan.best.value == min(finite)
        assert scan.tau_star in taus
        assert scan.best.tau == pytest.approx(scan.tau_star)
        # The best counting error still sits above the best quantum bound.
        q = qfi_vs_tau(p, "stationary", taus, 1e-3)
        assert scan.best.value >= 1.0 / np.max(q.value)
        assert scan.best.value < 10.0 / np.max(q.value)

    def test_warns_on_short_span(self):
        p = ModelParams(n=6, omega=6.0)
        with pytest.warns(UserWarning, match="two mean-field periods"):
            optimal_sensing_scan(p, "stationary", np.linspace(0.05, 1.0, 40),
                                 1e-3)
