"""Collision model: Kraus maps, joint bin evolution, reduced bin states."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from dicke_sense import ModelParams
from dicke_sense.dicke import (
    DensityMatrix,
    build_collective_ops,
    build_liouvillian,
    unvec,
    vec,
)
from dicke_sense.dynamics import spectral_decomposition, stationary_state
from dicke_sense.harness import fit_scaling
from dicke_sense.timebin import (
    BinSchedule,
    evolve_retaining_bins,
    kraus_pair,
    one_bin_analytic,
    one_bin_from_moments,
    probing_time,
    reduce_to_bins,
    two_bin_analytic,
    two_bin_from_moments,
    unmonitored_step,
)
from dicke_sense.timebin import _kraus_from_rates

from conftest import assert_valid_density


def bin_marginal(joint):
    """Trace the system out of a JointBinState by hand."""
    d = joint.data.shape[0] // (2 ** joint.n_bins)
    b = 2 ** joint.n_bins
    resh = joint.data.reshape(d, b, d, b)
    return np.einsum("abac->bc", resh)


def system_marginal(joint):
    d = joint.data.shape[0] // (2 ** joint.n_bins)
    b = 2 ** joint.n_bins
    resh = joint.data.reshape(d, b, d, b)
    return np.einsum("abcb->ac", resh)


class TestBinSchedule:
    def test_lag_definition(self):
        sch = BinSchedule(dt=0.1, n1=3, n2=7)
        assert sch.t1 == pytest.approx(0.3)
        assert sch.tau == pytest.approx((7 - 3 - 1) * 0.1)
        assert sch.n_bins == 2

    def test_adjacent_bins_have_zero_lag(self):
        assert BinSchedule(dt=0.2, n1=2, n2=3).tau == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            BinSchedule(dt=0.0, n1=1)
        with pytest.raises(ValueError):
            BinSchedule(dt=0.1, n1=2, n2=2)
        with pytest.raises(ValueError):
            BinSchedule(dt=0.1, n1=0)


class TestKrausPair:
    @given(n=st.integers(min_value=1, max_value=12),
           log_dt=st.floats(min_value=-5.0, max_value=-2.0))
    def test_exact_unitary_completeness(self, n, log_dt):
        p = ModelParams(n=n, omega=0.8 * n)
        pair = kraus_pair(p, 10.0 ** log_dt, mode="exact_unitary")
        assert pair.completeness_defect() < 1e-12

    @given(n=st.integers(min_value=1, max_value=12),
           log_dt=st.floats(min_value=-5.0, max_value=-2.5))
    def test_first_order_completeness_scale(self, n, log_dt):
        # second-order remainder carries ||S_+S_-|| ~ n^2/4, so the natural
        # scale of the defect is (n^2 dt)^2
        dt = 10.0 ** log_dt
        p = ModelParams(n=n, omega=0.8 * n)
        pair = kraus_pair(p, dt, mode="first_order")
        assert pair.completeness_defect() < 0.5 * (n * n * dt) ** 2

    def test_first_order_defect_quadratic_in_dt(self):
        p = ModelParams(n=6, omega=4.0)
        d1 = kraus_pair(p, 1e-3, mode="first_order").completeness_defect()
        d2 = kraus_pair(p, 1e-4, mode="first_order").completeness_defect()
        assert d1 / d2 == pytest.approx(100.0, rel=0.05)

    def test_small_step_limits(self):
        p = ModelParams(n=4, omega=2.0)
        pair = kraus_pair(p, 1e-9)
        assert np.max(np.abs(pair.k0 - np.eye(5))) < 1e-4
        assert np.max(np.abs(pair.k1)) < 1e-4

    def test_k1_leading_order(self):
        p = ModelParams(n=20, omega=20.0)
        dt = 1e-4
        ops = build_collective_ops(20)
        lead = np.sqrt(dt) * np.asarray(ops.s_minus)

        exact = kraus_pair(p, dt, mode="exact_unitary")
        rel = np.linalg.norm(exact.k1 - lead) / np.linalg.norm(exact.k1)
        assert rel < 2e-2  # measured 1.33e-2, linear in dt

        first = kraus_pair(p, dt, mode="first_order")
        assert np.max(np.abs(first.k1 - lead)) == 0.0

    def test_modes_agree_at_small_dt(self):
        # k0 differs at O(dt^2); k1 differs at O(dt^(3/2)), i.e. O(dt)
        # relative to its own sqrt(dt) magnitude
        p = ModelParams(n=6, omega=4.0)
        for dt in (1e-3, 1e-4):
            a = kraus_pair(p, dt, mode="exact_unitary")
            b = kraus_pair(p, dt, mode="first_order")
            assert np.max(np.abs(a.k0 - b.k0)) < 2.0 * (p.n * dt) ** 2
            assert np.max(np.abs(a.k1 - b.k1)) < 100.0 * dt ** 1.5

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            kraus_pair(ModelParams(n=2, omega=1.0), 0.0)

    def test_zero_rate_gives_no_emission(self):
        # low-level rate hook: gamma = 0 must leave the bin channel empty
        ops = build_collective_ops(4)
        pair = _kraus_from_rates(ops, omega=2.0, gamma=0.0, dt=1e-3,
                                 mode="exact_unitary")
        assert np.max(np.abs(pair.k1)) == 0.0
        u = pair.k0
        assert np.max(np.abs(u.conj().T @ u - np.eye(5))) < 1e-12


class TestUnmonitoredStep:
    def test_matches_exponential_oracle(self):
        # independent oracle: dense expm of the generator
        p = ModelParams(n=10, omega=7.0)
        dt = 1e-4
        steps = int(round(1.0 / dt))
        pair = kraus_pair(p, dt)
        rho = DensityMatrix.ground_state(10)
        for _ in range(steps):
            rho = unmonitored_step(rho, pair)
        lmat = build_liouvillian(p).dense()
        target = unvec(expm(lmat * 1.0) @ vec(DensityMatrix.ground_state(10).data), 11)
        assert np.max(np.abs(rho.data - target)) < 1e-3

    def test_dark_state_fixed_point(self):
        p = ModelParams(n=5, omega=0.0)
        pair = kraus_pair(p, 1e-3)
        rho = DensityMatrix.ground_state(5)
        out = unmonitored_step(rho, pair)
        assert np.max(np.abs(out.data - rho.data)) < 1e-14

    def test_trace_stable_over_many_steps(self):
        p = ModelParams(n=4, omega=3.0)
        pair = kraus_pair(p, 2e-4, mode="exact_unitary")
        rho = DensityMatrix.ground_state(4)
        for _ in range(100_000):
            rho = unmonitored_step(rho, pair)
        assert abs(np.trace(rho.data).real - 1.0) < 1e-8


class TestEvolveRetainingBins:
    def test_bin_marginal_matches_unmonitored_system(self):
        p = ModelParams(n=6, omega=5.0)
        dt = 1e-3
        sch = BinSchedule(dt=dt, n1=4, n2=9)
        rho0 = DensityMatrix.ground_state(6)
        joint = evolve_retaining_bins(p, rho0, sch)

        pair = kraus_pair(p, dt)
        rho = rho0
        for _ in range(sch.n2):
            rho = unmonitored_step(rho, pair)
        assert np.max(np.abs(system_marginal(joint) - rho.data)) < 1e-10

    def test_horizon_independence(self):
        p = ModelParams(n=5, omega=4.0)
        sch = BinSchedule(dt=5e-4, n1=2, n2=5)
        rho0 = stationary_state(p)
        a = reduce_to_bins(evolve_retaining_bins(p, rho0, sch))
        b = reduce_to_bins(evolve_retaining_bins(p, rho0, sch, extra_steps=40))
        assert np.max(np.abs(a.data - b.data)) < 1e-12

    def test_long_lag_joint_state_factorizes(self):
        # after the second coupling plus a relaxation window, system-bin and
        # bin-bin correlations are gone; the marginals themselves still carry
        # the O(N dt) bias of the discrete map relative to continuum objects
        p = ModelParams(n=10, omega=10.0)
        dt = 2e-3
        dec = spectral_decomposition(build_liouvillian(p), want_modes=False)
        n_gap = int(round(8.0 / dec.gap / dt))
        sch = BinSchedule(dt=dt, n1=1, n2=1 + n_gap)
        rho_ss = stationary_state(p)
        joint = evolve_retaining_bins(p, rho_ss, sch, extra_steps=n_gap)

        j = joint.data.reshape(11, 2, 2, 11, 2, 2)
        sys_m = np.einsum("abcdbc->ad", j)
        b1_m = np.einsum("abcadc->bd", j)
        b2_m = np.einsum("abcabd->cd", j)
        product = np.kron(sys_m, np.kron(b1_m, b2_m))
        diff_eigs = np.linalg.eigvalsh(joint.data - product)
        assert 0.5 * np.sum(np.abs(diff_eigs)) < 1e-3

        assert np.max(np.abs(sys_m - rho_ss.data)) < 0.01
        mu1 = one_bin_analytic(p, rho_ss, dt)
        assert np.max(np.abs(b1_m - mu1.data)) < 0.01
        assert reduce_to_bins(joint).source == "exact_discrete"

    def test_rejects_local_decay(self):
        p = ModelParams(n=4, omega=3.0, gamma_loc=0.1)
        with pytest.raises(ValueError):
            evolve_retaining_bins(p, DensityMatrix.ground_state(4),
                                  BinSchedule(dt=1e-3, n1=1))


class TestReduceToBins:
    def test_reduction_is_partial_trace(self):
        p = ModelParams(n=5, omega=4.0)
        sch = BinSchedule(dt=1e-3, n1=2, n2=4)
        joint = evolve_retaining_bins(p, stationary_state(p), sch)
        mu = reduce_to_bins(joint)
        assert np.max(np.abs(mu.data - bin_marginal(joint))) < 1e-13
        assert_valid_density(mu.data)


class TestOneBinAnalytic:
    def test_dark_state_gives_vacuum(self):
        p = ModelParams(n=4, omega=0.0)
        mu = one_bin_analytic(p, stationary_state(p), 1e-3)
        assert mu.data[1, 1] == 0.0
        assert mu.data[0, 0] == 1.0

    def test_occupation_is_scaled_moment(self):
        p = ModelParams(n=10, omega=10.0)
        rho = stationary_state(p)
        ops = build_collective_ops(10)
        n_exc = np.trace(ops.s_plus @ ops.s_minus @ rho.data).real
        dt = 1e-4
        mu = one_bin_analytic(p, rho, dt)
        assert mu.data[1, 1].real == pytest.approx(dt * n_exc, rel=1e-12)
        assert np.trace(mu.data).real == pytest.approx(1.0, abs=1e-14)

    def test_coherence_is_scaled_mean(self):
        p = ModelParams(n=10, omega=10.0)
        rho = stationary_state(p)
        ops = build_collective_ops(10)
        sm = np.trace(ops.s_minus @ rho.data)
        dt = 1e-4
        mu = one_bin_analytic(p, rho, dt)
        assert mu.data[1, 0] == pytest.approx(np.sqrt(dt) * sm, rel=1e-12)

    @given(ratio=st.floats(min_value=0.3, max_value=2.5),
           n=st.integers(min_value=2, max_value=12))
    @settings(max_examples=15)
    def test_occupation_bound(self, ratio, n):
        p = ModelParams(n=n, omega=ratio * n / 2.0)
        dt = 1e-4
        mu = one_bin_analytic(p, stationary_state(p), dt)
        assert mu.data[1, 1].real <= dt * n * (n / 2.0 + 1.0) + 1e-10

    def test_occupancy_guard(self):
        with pytest.raises(ValueError, match="reduce dt"):
            one_bin_from_moments(gdt=1e-2, n_exc=50.0, sm=0.0,
                                 schedule=BinSchedule(dt=1e-2, n1=1),
                                 psd_floor=1e-12)

    def test_burst_state_accepted_with_moment_scaled_floor(self):
        # transient moments reach ~n^2/4, far above the stationary scale;
        # the validity floor must follow the actual moment
        from dicke_sense.engines import engine_for, find_first_sy_max

        p = ModelParams(n=16, omega=16.0)
        eng = engine_for(p)
        t1 = find_first_sy_max(p)
        rho_t1 = eng.evolve(eng.ground(), t1)
        mu = one_bin_analytic(p, rho_t1, 1e-4)
        assert_valid_density(mu.data, tol_psd=1e-2)


class TestTwoBinAnalytic:
    def test_long_lag_product_of_marginals(self):
        p = ModelParams(n=6, omega=6.0)
        rho = stationary_state(p)
        dec = spectral_decomposition(build_liouvillian(p), want_modes=False)
        tau = 30.0 / dec.gap
        # The kron product carries second-order terms (coherence times the
        # other bin's occupation, ~dt^{3/2}) that the first-order two-bin
        # construction drops, so the comparison needs a small enough dt.
        dt = 1e-5
        mu2 = two_bin_analytic(p, rho, dt, tau)
        mu1 = one_bin_analytic(p, rho, dt)
        assert np.max(np.abs(mu2.data - np.kron(mu1.data, mu1.data))) < 1e-6

    def test_cross_coherences_follow_regression_values(self):
        from dicke_sense.dynamics import two_time_correlation

        p = ModelParams(n=8, omega=8.0)
        lio = build_liouvillian(p)
        rho = stationary_state(p)
        tau = 0.25
        dt = 1e-4
        mu2 = two_bin_analytic(p, rho, dt, tau)
        corr_pm = two_time_correlation(lio, p, rho, np.array([tau]),
                                       kind="plus_tau_minus").values[0]
        corr_mm = two_time_correlation(lio, p, rho, np.array([tau]),
                                       kind="minus_tau_minus").values[0]
        # basis index 2 b1 + b2: |10><01| exchange and |11><00| pair terms
        assert mu2.data[2, 1] == pytest.approx(dt * corr_pm, rel=1e-10)
        assert mu2.data[3, 0] == pytest.approx(dt * corr_mm, rel=1e-10)

    def test_marginals_match_one_bin_formula(self):
        p = ModelParams(n=8, omega=8.0)
        rho = stationary_state(p)
        dt, tau = 1e-4, 0.3
        mu2 = two_bin_analytic(p, rho, dt, tau).data.reshape(2, 2, 2, 2)
        marg_first = np.einsum("abcb->ac", mu2)
        mu1 = one_bin_analytic(p, rho, dt).data
        assert np.max(np.abs(marg_first - mu1)) < 1e-8

    def test_normalized_exactly(self):
        p = ModelParams(n=8, omega=8.0)
        mu2 = two_bin_analytic(p, stationary_state(p), 1e-4, 0.1)
        assert np.trace(mu2.data).real == pytest.approx(1.0, abs=1e-14)

    def test_occupancy_guard_two_bin(self):
        with pytest.raises(ValueError, match="reduce dt"):
            two_bin_from_moments(gdt=5e-2, n_t1=30.0, sm_t1=0.0, n_t2=30.0,
                                 sm_t2=0.0, corr_pm=0.0, corr_mm=0.0,
                                 schedule=BinSchedule(dt=5e-2, n1=1, n2=3),
                                 psd_floor=1e-12)


class TestConvergenceOrder:
    def test_analytic_error_scales_as_three_halves(self):
        # spec invariant: exact vs analytic deviation ~ dt^(3/2); coherence
        # carries the leading error term
        p = ModelParams(n=10, omega=10.0)
        rho = stationary_state(p)
        dts = [1e-3, 1e-4, 1e-5]
        devs1, devs2 = [], []
        for dt in dts:
            sch1 = BinSchedule(dt=dt, n1=1)
            exact1 = reduce_to_bins(evolve_retaining_bins(p, rho, sch1))
            ana1 = one_bin_analytic(p, rho, dt)
            devs1.append(np.max(np.abs(exact1.data - ana1.data)))

            n2 = 2 + int(round(0.1 / dt))
            sch2 = BinSchedule(dt=dt, n1=1, n2=n2)
            exact2 = reduce_to_bins(evolve_retaining_bins(p, rho, sch2))
            ana2 = two_bin_analytic(p, rho, dt, sch2.tau)
            devs2.append(np.max(np.abs(exact2.data - ana2.data)))
        fit1 = fit_scaling(dts, devs1)
        fit2 = fit_scaling(dts, devs2)
        assert 1.3 <= fit1.exponent <= 1.7
        assert 1.3 <= fit2.exponent <= 1.7


class TestProbingTime:
    def test_values(self):
        assert probing_time(1.0, 2e-4) == 2e-4
        assert probing_time(0.01, 1e-4) == pytest.approx(1e-2)

    def test_rejects_bad_efficiency(self):
        for eta in (0.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                probing_time(eta, 1e-4)

    def test_inefficient_regime_flag(self):
        # tau_eta beyond the relaxation time marks the very inefficient regime
        p = ModelParams(n=6, omega=6.0)
        dec = spectral_decomposition(build_liouvillian(p), want_modes=False)
        assert probing_time(1e-6, 1e-4) > dec.relax_time
        assert probing_time(1.0, 1e-4) < dec.relax_time
