"""Uniform evolution/correlation interface over the two state representations.

MaxSectorEngine works in the maximal Dicke sector (collective decay only);
LadderEngine works on permutation-symmetric sector blocks and supports local
decay. Both expose the same handful of operations the estimation pipelines
need: ground/stationary states, propagation, excitation moments, two-time
correlation bundles, and expectation traces.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import dynamics
from .dicke import DensityMatrix, ModelParams, build_collective_ops, vec
from .dynamics import CorrelationBundle, expmv_grid
from .permsym import (
    N_GUARD_DEFAULT,
    DickeLadderState,
    PermsymLiouvillian,
    build_permsym_liouvillian,
    ground_ladder_state,
    _sector_ops,
)

__all__ = [
    "MaxSectorEngine",
    "LadderEngine",
    "engine_for",
    "find_first_sy_max",
]


class MaxSectorEngine:
    """Collective-only dynamics in the (n+1)-dimensional maximal sector."""

    def __init__(self, params: ModelParams):
        if params.gamma_loc != 0.0:
            raise ValueError("maximal-sector engine requires gamma_loc = 0")
        self.params = params
        self.ops = build_collective_ops(params.n)
        self.lio = dynamics.build_liouvillian(params)

    def ground(self) -> DensityMatrix:
        return DensityMatrix.ground_state(self.params.n)

    def stationary(self):
        return dynamics.stationary_state(self.params)

    def evolve(self, state: DensityMatrix, t: float) -> DensityMatrix:
        return dynamics.evolve(self.lio, state, t)

    def excitation_moments(self, state: DensityMatrix) -> tuple[float, complex]:
        n_exc = complex(np.trace(self.ops.s_plus @ self.ops.s_minus @ state.data)).real
        sm = complex(np.trace(self.ops.s_minus @ state.data))
        return n_exc, sm

    def expect_sy(self, state: DensityMatrix) -> float:
        return complex(np.trace(self.ops.s_y @ state.data)).real

    def bundle(self, rho_t1: DensityMatrix, taus, dt: float,
               t1: float = 0.0) -> CorrelationBundle:
        return dynamics.correlation_bundle(self.lio, self.params, rho_t1, taus, dt, t1)

    def sy_trace(self, state: DensityMatrix, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        f_sy = vec(np.asarray(self.ops.s_y).T)
        v = expmv_grid(self.lio.matrix, vec(state.data), ts)
        return (f_sy @ v).real

    def excitation_trace(self, state: DensityMatrix, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        f_n = vec(np.asarray(self.ops.s_plus @ self.ops.s_minus).T)
        v = expmv_grid(self.lio.matrix, vec(state.data), ts)
        return (f_n @ v).real


class LadderEngine:
    """Sector-block dynamics including single-atom decay."""

    def __init__(self, params: ModelParams, n_guard: int | None = None):
        if n_guard is None:
            n_guard = N_GUARD_DEFAULT
        self.params = params
        self.lio: PermsymLiouvillian = build_permsym_liouvillian(params, n_guard=n_guard)
        self.space = self.lio.space
        self._f_n = self.space.trace_functional(lambda tj: _sector_ops(tj)[2])
        self._f_sm = self.space.trace_functional(lambda tj: _sector_ops(tj)[1])
        self._f_sp = self.space.trace_functional(lambda tj: _sector_ops(tj)[1].conj().T)
        self._f_sy = self.space.trace_functional(self._sector_sy)
        self._f_tr = self.space.trace_functional(
            lambda tj: np.eye(tj + 1, dtype=complex))

    @staticmethod
    def _sector_sy(tj: int):
        if tj == 0:
            return np.zeros((1, 1))
        return np.asarray(build_collective_ops(tj).s_y)

    def ground(self) -> DickeLadderState:
        return ground_ladder_state(self.params.n)

    def stationary(self) -> DickeLadderState:
        tr_row = sp.csr_matrix(self._f_tr.reshape(1, -1))
        x = dynamics.null_state_vector(self.lio.matrix, tr_row)
        return self.lio.unpack(x)

    def evolve(self, state: DickeLadderState, t: float) -> DickeLadderState:
        x = dynamics.expmv(self.lio.matrix, self.lio.pack(state), t)
        return self.lio.unpack(x)

    def excitation_moments(self, state: DickeLadderState) -> tuple[float, complex]:
        x = self.lio.pack(state)
        return float((self._f_n @ x).real), complex(self._f_sm @ x)

    def expect_sy(self, state: DickeLadderState) -> float:
        return float((self._f_sy @ self.lio.pack(state)).real)

    def _apply_sector_op(self, state: DickeLadderState, side: str) -> np.ndarray:
        """Pack of S_- rho (side='left') or rho S_+ (side='right')."""
        blocks = []
        for tj, b in zip(state.twice_js, state.blocks):
            sm = _sector_ops(tj)[1]
            blocks.append(sm @ b if side == "left" else b @ sm.conj().T)
        return self.space.pack(blocks)

    def bundle(self, rho_t1: DickeLadderState, taus, dt: float,
               t1: float = 0.0) -> CorrelationBundle:
        taus = np.asarray(taus, dtype=float)
        x1 = self.lio.pack(rho_t1)
        n_t1 = float((self._f_n @ x1).real)
        sm_t1 = complex(self._f_sm @ x1)

        v_min = expmv_grid(self.lio.matrix, self._apply_sector_op(rho_t1, "left"), taus)
        corr_pm = self._f_sp @ v_min
        corr_mm = self._f_sm @ v_min

        v_rho = expmv_grid(self.lio.matrix, x1, taus + dt)
        n_t2 = (self._f_n @ v_rho).real
        sm_t2 = self._f_sm @ v_rho

        return CorrelationBundle(
            t1=t1, dt=dt, taus=taus, n_t1=n_t1, sm_t1=sm_t1,
            corr_pm=corr_pm, corr_mm=corr_mm,
            corr_mp=np.conj(corr_pm), corr_pp=np.conj(corr_mm),
            n_t2=n_t2, sm_t2=sm_t2,
        )

    def sy_trace(self, state: DickeLadderState, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        v = expmv_grid(self.lio.matrix, self.lio.pack(state), ts)
        return (self._f_sy @ v).real

    def excitation_trace(self, state: DickeLadderState, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        v = expmv_grid(self.lio.matrix, self.lio.pack(state), ts)
        return (self._f_n @ v).real


@lru_cache(maxsize=16)
def _engine_cached(params: ModelParams):
    if params.gamma_loc == 0.0:
        return MaxSectorEngine(params)
    return LadderEngine(params)


def engine_for(params: ModelParams):
    """Pick the representation the parameters require."""
    return _engine_cached(params)


def find_first_sy_max(params: ModelParams, t_max: float | None = None,
                      points: int = 1000) -> float:
    """First local maximum of <S_y>(t) from the all-down state.

    Scans a uniform grid (default up to t = 1/gamma) and refines the first
    interior maximum with a local parabola.
    """
    eng = engine_for(params)
    if t_max is None:
        t_max = 1.0 / params.gamma_coll
    ts = np.linspace(0.0, t_max, points + 1)
    sy = eng.sy_trace(eng.ground(), ts)
    for i in range(1, len(ts) - 1):
        if sy[i] >= sy[i + 1] and sy[i] > sy[i - 1]:
            y0, y1, y2 = sy[i - 1], sy[i], sy[i + 1]
            denom = y0 - 2.0 * y1 + y2
            shift = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
            shift = float(np.clip(shift, -1.0, 1.0))
            return float(ts[i] + shift * (ts[1] - ts[0]))
    raise RuntimeError(
        "no interior maximum of <S_y> found; enlarge t_max or check the regime"
    )
