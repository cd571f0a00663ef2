"""Balanced two-bin interferometer and counting-based frequency estimation.

The two retained bins are mixed on a balanced beam splitter after phase
shifts phi_1, phi_2 (only the difference matters); the outputs are
photon-counted. Error propagation through the counts, or through the
difference signal, gives the frequency uncertainty of the scheme, either
from the exact 4x4 bin state or from the short-time analytic formulas.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dicke import ModelParams
from .timebin import BinReducedState, BinSchedule

__all__ = [
    "MzConfig",
    "output_modes",
    "CountingStats",
    "counting_stats",
    "EstimationError",
    "estimation_error",
    "error_scan",
    "SensingScan",
    "optimal_sensing_scan",
    "OBSERVABLES",
]

OBSERVABLES = ("n_d", "n_4", "n_5")


@dataclass(frozen=True)
class MzConfig:
    """Phase settings of the balanced interferometer.

    delta_phi = phi_1 - phi_2 is the working-point phase between the two bin
    paths; the default 0 sits at the difference-signal extremum. The optional
    schedule records which bin pair feeds the arms; its lag is the physical
    path delay, guaranteed non-negative and bin-aligned by construction.
    """

    delta_phi: float = 0.0
    schedule: BinSchedule | None = None

    def __post_init__(self):
        if self.schedule is not None and self.schedule.n2 is None:
            raise ValueError("an interferometer schedule needs two bins")

    @property
    def phi_1(self) -> float:
        return self.delta_phi

    @property
    def phi_2(self) -> float:
        return 0.0


def output_modes(config: MzConfig) -> np.ndarray:
    """Unitary mapping (b1, b2, c1, c2) -> (a4, a5, a4', a5').

    b are the signal bins, c their vacuum partner ports; a4 and a5 are the
    detected outputs, the primed rows complete the unitary on the partner
    ports.
    """
    p1 = np.exp(1j * config.phi_1)
    p2 = np.exp(1j * config.phi_2)
    u = 0.5 * np.array([
        [-p1, p2, 1j * p1, 1j * p2],
        [1j * p1, 1j * p2, p1, -p2],
        [p2, -p1, 1j * p2, 1j * p1],
        [1j * p2, 1j * p1, -p2, p1],
    ], dtype=complex)
    return u


@dataclass(frozen=True)
class CountingStats:
    """First and second moments of the detected photon numbers."""

    mean_n4: float
    mean_n5: float
    mean_nd: float
    var_n4: float
    var_n5: float
    var_nd: float
    occ_1: float
    occ_2: float
    p11: float
    delta_phi: float


def counting_stats(mu, config: MzConfig = MzConfig()) -> CountingStats:
    """Counting moments at the interferometer outputs for a two-bin state.

    Uses the single-photon structure of the bins: each bin holds at most one
    photon, so all moments reduce to the occupations, the exchange coherence
    <b1+ b2>, and the double-occupation weight P11.
    """
    a = mu.data if isinstance(mu, BinReducedState) else np.asarray(mu, dtype=complex)
    if a.shape != (4, 4):
        raise ValueError("counting statistics need a two-bin (4x4) state")
    occ_1 = float(a[2, 2].real + a[3, 3].real)
    occ_2 = float(a[1, 1].real + a[3, 3].real)
    p11 = float(a[3, 3].real)
    coh = complex(a[1, 2])  # <01| mu |10> = <b1+ b2>
    dphi = config.phi_1 - config.phi_2

    mean_nd = float(np.real(coh * np.exp(-1j * dphi)))
    mean_n4 = 0.25 * (occ_1 + occ_2) - 0.5 * mean_nd
    mean_n5 = 0.25 * (occ_1 + occ_2) + 0.5 * mean_nd

    # N4^2 = N4 + (two-photon term); <N4 N5> has vanishing normal-ordered
    # part on single-photon bins, so the covariance comes from the means.
    var_n4 = 0.25 * p11 + mean_n4 - mean_n4 ** 2
    var_n5 = 0.25 * p11 + mean_n5 - mean_n5 ** 2
    var_nd = 0.5 * p11 + mean_n4 + mean_n5 - mean_nd ** 2

    return CountingStats(
        mean_n4=mean_n4, mean_n5=mean_n5, mean_nd=mean_nd,
        var_n4=var_n4, var_n5=var_n5, var_nd=var_nd,
        occ_1=occ_1, occ_2=occ_2, p11=p11, delta_phi=dphi,
    )


@dataclass(frozen=True)
class EstimationError:
    """Single-probe frequency uncertainty of one counting observable.

    value is the squared-error form Var(A)/|d<A>/dw|^2; error is its square
    root. insensitive marks working points with vanishing signal derivative,
    where both are infinite.
    """

    observable: str
    value: float
    error: float
    variance_obs: float
    mean_obs: float
    derivative: float
    convergence: float
    insensitive: bool
    tau: float
    dt: float
    t1: float | str
    source: str
    delta_phi: float


_MEAN_FIELD = {
    "n_d": lambda s: s.mean_nd,
    "n_4": lambda s: s.mean_n4,
    "n_5": lambda s: s.mean_n5,
}
_VAR_FIELD = {
    "n_d": lambda s: s.var_nd,
    "n_4": lambda s: s.var_n4,
    "n_5": lambda s: s.var_n5,
}


def _error_from_stats(observable, stats0, means, dg, tau, dt, t1, source, dphi):
    """Assemble the uncertainty from center stats and offset means.

    means: mapping offset -> mean observable at omega + offset, for offsets
    (-dg, -dg/2, +dg/2, +dg).
    """
    d_full = (means[dg] - means[-dg]) / (2.0 * dg)
    d_half = (means[0.5 * dg] - means[-0.5 * dg]) / dg
    conv = abs(d_full - d_half) / max(abs(d_half), 1e-300)
    var = _VAR_FIELD[observable](stats0)
    mean0 = _MEAN_FIELD[observable](stats0)
    deriv = d_half
    signal_scale = abs(mean0) + float(np.sqrt(max(var, 0.0))) + 1e-300
    insensitive = abs(deriv) <= 1e-12 * signal_scale
    if insensitive:
        value = float("inf")
    else:
        value = float(max(var, 0.0) / deriv ** 2)
    return EstimationError(
        observable=observable, value=value, error=float(np.sqrt(value)),
        variance_obs=var, mean_obs=mean0,
        derivative=deriv, convergence=conv, insensitive=insensitive,
        tau=tau, dt=dt, t1=t1, source=source, delta_phi=dphi,
    )


_SOURCE_ALIASES = {"exact": "exact_discrete"}


def estimation_error(params: ModelParams, t1, tau: float, dt: float,
                     observable: str = "n_d",
                     source: str = "short_time_analytic",
                     config: MzConfig = MzConfig(),
                     dg: float | None = None) -> EstimationError:
    """Frequency uncertainty of one counting observable at lag tau."""
    scan = error_scan(params, t1, np.array([tau]), dt,
                      observables=(observable,), config=config,
                      source=source, dg=dg)
    return scan[observable][0]


def error_scan(params: ModelParams, t1, taus, dt: float,
               observables=OBSERVABLES, config: MzConfig = MzConfig(),
               source: str = "short_time_analytic",
               dg: float | None = None) -> dict[str, list[EstimationError]]:
    """Uncertainties across a grid of lags, sharing the correlation sweeps.

    One propagation per frequency offset (five in total, center included)
    serves every lag and every observable.
    """
    from .engines import engine_for
    from .metrology import BIN_SOURCES
    from .timebin import (
        BinSchedule,
        evolve_retaining_bins,
        reduce_to_bins,
        two_bin_from_moments,
        _analytic_psd_floor,
    )

    source = _SOURCE_ALIASES.get(source, source)
    if source not in BIN_SOURCES:
        raise ValueError(f"unknown source {source!r}; options: {BIN_SOURCES}")
    for obs in observables:
        if obs not in OBSERVABLES:
            raise ValueError(f"unknown observable {obs!r}; options: {OBSERVABLES}")
    if dg is None:
        dg = 1e-4 * params.omega_c
    taus = np.asarray(taus, dtype=float)

    offsets = (-dg, -0.5 * dg, 0.0, 0.5 * dg, dg)

    def states_for(off: float) -> list[BinReducedState]:
        p = params.with_omega(params.omega + off)
        eng = engine_for(p)
        rho = eng.stationary() if t1 == "stationary" else eng.evolve(eng.ground(), float(t1))
        if source == "short_time_analytic":
            b = eng.bundle(rho, taus, dt)
            floor = _analytic_psd_floor(p, dt, max(b.n_t1, float(np.max(b.n_t2))))
            out = []
            for i in range(len(taus)):
                sched = BinSchedule.from_times(dt, t1=dt, tau=float(taus[i]))
                out.append(two_bin_from_moments(
                    p.gamma_coll * dt, b.n_t1, b.sm_t1,
                    float(b.n_t2[i]), complex(b.sm_t2[i]),
                    complex(b.corr_pm[i]), complex(b.corr_mm[i]),
                    sched, floor))
            return out
        out = []
        for tau in taus:
            sched = BinSchedule.from_times(dt, t1=dt, tau=float(tau))
            out.append(reduce_to_bins(evolve_retaining_bins(p, rho, sched)))
        return out

    stats = {off: [counting_stats(s, config) for s in states_for(off)]
             for off in offsets}

    result: dict[str, list[EstimationError]] = {obs: [] for obs in observables}
    for i, tau in enumerate(taus):
        for obs in observables:
            means = {off: _MEAN_FIELD[obs](stats[off][i]) for off in offsets if off != 0.0}
            result[obs].append(_error_from_stats(
                obs, stats[0.0][i], means, dg, float(tau), dt, t1, source,
                config.phi_1 - config.phi_2))
    return result


@dataclass(frozen=True)
class SensingScan:
    """Best working point of one observable over a lag grid, plus the trace."""

    observable: str
    tau_star: float
    best: EstimationError
    taus: np.ndarray
    errors: tuple[EstimationError, ...]


def optimal_sensing_scan(params: ModelParams, t1, taus, dt: float,
                         observable: str = "n_d",
                         config: MzConfig = MzConfig(),
                         source: str = "short_time_analytic",
                         dg: float | None = None) -> SensingScan:
    """Minimize the estimation error of one observable over the lag grid.

    The grid should span at least two mean-field periods so adjacent minima
    are visible. An all-insensitive grid (no frequency signal anywhere) is an
    error.
    """
    taus = np.asarray(taus, dtype=float)
    from .dicke import mean_field_frequency

    if params.omega > params.omega_c:
        period = 2.0 * np.pi / mean_field_frequency(params)
        if taus[-1] - taus[0] < 2.0 * period:
            warnings.warn("lag grid spans less than two mean-field periods",
                          stacklevel=2)
    errs = error_scan(params, t1, taus, dt, observables=(observable,),
                      config=config, source=source, dg=dg)[observable]
    finite = [(i, e) for i, e in enumerate(errs) if not e.insensitive]
    if not finite:
        raise RuntimeError("every grid point is insensitive; no working point")
    i_best, best = min(finite, key=lambda pair: pair[1].value)
    return SensingScan(observable=observable, tau_star=float(taus[i_best]),
                       best=best, taus=taus, errors=tuple(errs))
