"""Permutation-symmetric representation with collective and local decay.

A permutation-invariant density matrix is block diagonal over total-spin
sectors j, with every degenerate copy of a sector carrying the same block.
We store one aggregated block per sector (its trace is the sector
probability), on which collective terms act with the spin-j operators and
single-atom decay acts through sector-changing recycling coefficients built
from spin-coupling (Clebsch-Gordan) factors.

Basis inside each block follows the convention of the single-sector code:
index k corresponds to m = j - k, so m decreases along rows/columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .dicke import (
    DensityMatrix,
    ModelParams,
    build_collective_ops,
    lindblad_superoperator,
    vec,
)

__all__ = [
    "sector_twice_js",
    "sector_degeneracy",
    "LadderSpace",
    "DickeLadderState",
    "PermsymLiouvillian",
    "build_permsym_liouvillian",
    "evolve_permsym",
    "ground_ladder_state",
    "state_from_max_sector",
    "ladder_to_csv",
    "ladder_from_csv",
    "symmetric_basis",
    "ladder_to_full",
    "OracleMoments",
    "brute_force_oracle",
    "brute_force_liouvillian",
    "brute_force_collective_ops",
]

N_GUARD_DEFAULT = 60


def sector_twice_js(n: int) -> tuple[int, ...]:
    """2j for every total-spin sector of n spin-1/2, largest first."""
    if n < 1:
        raise ValueError(f"need at least one atom, got {n}")
    return tuple(range(n, -1, -2))


def sector_degeneracy(n: int, twice_j: int) -> int:
    """Number of copies of the spin-j irrep in (C^2)^(x n)."""
    if twice_j < 0 or twice_j > n or (n - twice_j) % 2:
        raise ValueError(f"no sector 2j={twice_j} for n={n}")
    half = (n - twice_j) // 2
    return math.comb(n, half) - (math.comb(n, half - 1) if half >= 1 else 0)


@dataclass(frozen=True)
class LadderSpace:
    """Index bookkeeping for the stacked per-sector blocks."""

    n: int
    twice_js: tuple[int, ...]
    dims: tuple[int, ...]
    offsets: tuple[int, ...]
    total: int

    @staticmethod
    def build(n: int) -> "LadderSpace":
        tjs = sector_twice_js(n)
        dims = tuple(tj + 1 for tj in tjs)
        offs = []
        acc = 0
        for d in dims:
            offs.append(acc)
            acc += d * d
        return LadderSpace(n=n, twice_js=tjs, dims=dims, offsets=tuple(offs), total=acc)

    def pack(self, blocks) -> np.ndarray:
        out = np.empty(self.total, dtype=complex)
        for off, d, b in zip(self.offsets, self.dims, blocks):
            out[off:off + d * d] = vec(b)
        return out

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(
            x[off:off + d * d].reshape((d, d), order="F")
            for off, d in zip(self.offsets, self.dims)
        )

    def trace_functional(self, op_for_sector) -> np.ndarray:
        """Row vector f with f @ x = sum_j Tr(op_j B_j).

        op_for_sector maps twice_j to the sector operator (or None for zero).
        """
        f = np.zeros(self.total, dtype=complex)
        for off, d, tj in zip(self.offsets, self.dims, self.twice_js):
            op = op_for_sector(tj)
            if op is not None:
                f[off:off + d * d] = vec(np.asarray(op).T)
        return f


@dataclass(frozen=True)
class DickeLadderState:
    """Aggregated sector blocks of a permutation-invariant state.

    Each block stores the total physical weight of its sector (degeneracy
    folded in), so the block traces are the sector probabilities and sum
    to one.
    """

    n: int
    blocks: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        tjs = sector_twice_js(self.n)
        if len(self.blocks) != len(tjs):
            raise ValueError(
                f"expected {len(tjs)} sector blocks for n={self.n}, got {len(self.blocks)}"
            )
        blocks = []
        for tj, b in zip(tjs, self.blocks):
            a = np.asarray(b, dtype=complex)
            if a.shape != (tj + 1, tj + 1):
                raise ValueError(f"sector 2j={tj} block must be {tj + 1}x{tj + 1}")
            if np.abs(a - a.conj().T).max() > 1e-8 * max(1.0, float(np.abs(a).max())):
                raise ValueError(f"sector 2j={tj} block is not Hermitian")
            blocks.append(a)
        tr = sum(float(np.trace(b).real) for b in blocks)
        if abs(tr - 1.0) > 1e-8:
            raise ValueError(f"sector probabilities sum to {tr}, expected 1")
        lo = min(float(np.linalg.eigvalsh(0.5 * (b + b.conj().T)).min()) for b in blocks)
        if lo < -1e-6:
            raise ValueError(f"sector block eigenvalue {lo} below -1e-6")
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def twice_js(self) -> tuple[int, ...]:
        return sector_twice_js(self.n)

    def sector_probabilities(self) -> np.ndarray:
        return np.array([float(np.trace(b).real) for b in self.blocks])

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(0.5 * (b + b.conj().T)).min())
                   for b in self.blocks)


def ground_ladder_state(n: int) -> DickeLadderState:
    """All atoms down: pure |j=n/2, m=-n/2> in the maximal sector."""
    blocks = []
    for tj in sector_twice_js(n):
        b = np.zeros((tj + 1, tj + 1), dtype=complex)
        blocks.append(b)
    blocks[0][n, n] = 1.0
    return DickeLadderState(n=n, blocks=tuple(blocks))


def state_from_max_sector(rho: DensityMatrix | np.ndarray, n: int) -> DickeLadderState:
    a = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if a.shape != (n + 1, n + 1):
        raise ValueError(f"maximal sector of n={n} has dimension {n + 1}")
    blocks = [np.array(a, dtype=complex)]
    for tj in sector_twice_js(n)[1:]:
        blocks.append(np.zeros((tj + 1, tj + 1), dtype=complex))
    return DickeLadderState(n=n, blocks=tuple(blocks))


# --- spin-coupling factors ----------------------------------------------------

def _cg_up(twice_big_j: int, twice_m: int, twice_j1: int) -> float:
    """<j1, (m - 1/2); up | J, m> for J = j1 +- 1/2 (doubled arguments)."""
    if abs(twice_m - 1) > twice_j1:
        return 0.0
    denom = twice_j1 + 1
    if twice_big_j == twice_j1 + 1:
        return math.sqrt((twice_j1 + twice_m + 1) / (2 * denom))
    if twice_big_j == twice_j1 - 1:
        return -math.sqrt((twice_j1 - twice_m + 1) / (2 * denom))
    return 0.0


def _cg_dn(twice_big_j: int, twice_m: int, twice_j1: int) -> float:
    """<j1, (m + 1/2); down | J, m> for J = j1 +- 1/2 (doubled arguments)."""
    if abs(twice_m + 1) > twice_j1:
        return 0.0
    denom = twice_j1 + 1
    if twice_big_j == twice_j1 + 1:
        return math.sqrt((twice_j1 - twice_m + 1) / (2 * denom))
    if twice_big_j == twice_j1 - 1:
        return math.sqrt((twice_j1 + twice_m + 1) / (2 * denom))
    return 0.0


def _sector_ops(twice_j: int):
    """Spin-(twice_j/2) matrices in the decreasing-m basis."""
    if twice_j == 0:
        z = np.zeros((1, 1))
        return z, z, z  # s_x, s_minus, s_plus_s_minus
    ops = build_collective_ops(twice_j)
    sm = np.asarray(ops.s_minus)
    return np.asarray(ops.s_x), sm, np.asarray(ops.s_plus @ ops.s_minus)


def _recycling_weight(n: int, twice_jp: int, twice_j: int, twice_m: int,
                      twice_mp: int) -> float:
    """Aggregated-block coefficient for B^j_{m,m'} -> B^j'_{m-1,m'-1}, unit rate.

    Sums over the (n-1)-atom sectors j1 reachable from both j and j', each
    path weighted by its multiplicity and spin-coupling amplitudes.
    """
    total = 0.0
    for twice_j1 in (twice_j - 1, twice_j + 1):
        if twice_j1 < 0 or twice_j1 > n - 1 or (n - 1 - twice_j1) % 2:
            continue
        if abs(twice_jp - twice_j1) != 1:
            continue
        amp_m = _cg_up(twice_j, twice_m, twice_j1) * _cg_dn(twice_jp, twice_m - 2, twice_j1)
        amp_mp = _cg_up(twice_j, twice_mp, twice_j1) * _cg_dn(twice_jp, twice_mp - 2, twice_j1)
        if amp_m == 0.0 or amp_mp == 0.0:
            continue
        total += sector_degeneracy(n - 1, twice_j1) * amp_m * amp_mp
    return n * total / sector_degeneracy(n, twice_j)


@dataclass(frozen=True)
class PermsymLiouvillian:
    """Generator on the stacked sector-block space."""

    params: ModelParams
    space: LadderSpace
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return self.space.total

    def pack(self, state: DickeLadderState) -> np.ndarray:
        return self.space.pack(state.blocks)

    def unpack(self, x: np.ndarray) -> DickeLadderState:
        blocks = [0.5 * (b + b.conj().T) for b in self.space.unpack(x)]
        return DickeLadderState(n=self.space.n, blocks=tuple(blocks))


@lru_cache(maxsize=8)
def _permsym_matrix_cached(params: ModelParams) -> tuple:
    space = LadderSpace.build(params.n)
    n = params.n
    gamma = params.gamma_coll
    gloc = params.gamma_loc

    blocks_ll: list = []
    coo_rows: list[int] = []
    coo_cols: list[int] = []
    coo_vals: list[float] = []

    for idx, (tj, d, off) in enumerate(zip(space.twice_js, space.dims, space.offsets)):
        sx, sm, _ = _sector_ops(tj)
        h = params.omega * sx
        sector_l = lindblad_superoperator(h, [math.sqrt(gamma) * sm])

        if gloc:
            # anticommutator part of the local channel: diagonal in (m, m')
            for k_col in range(d):
                for k_row in range(d):
                    p = off + k_row + d * k_col
                    weight = (n + tj) - k_row - k_col  # (n/2+m) + (n/2+m')
                    coo_rows.append(p)
                    coo_cols.append(p)
                    coo_vals.append(-0.5 * gloc * weight)
        blocks_ll.append((off, sector_l.tocoo()))

    if gloc:
        tj_index = {tj: i for i, tj in enumerate(space.twice_js)}
        for tj, d, off in zip(space.twice_js, space.dims, space.offsets):
            for tjp in (tj - 2, tj, tj + 2):
                if tjp not in tj_index:
                    continue
                dp = tjp + 1
                offp = space.offsets[tj_index[tjp]]
                # target m-1 must fit in sector j': j - k - 1 >= -j'
                for k_row in range(d):
                    twice_m = tj - 2 * k_row
                    if twice_m - 2 < -tjp:
                        continue
                    kp_row = (tjp - (twice_m - 2)) // 2
                    for k_col in range(d):
                        twice_mp = tj - 2 * k_col
                        if twice_mp - 2 < -tjp:
                            continue
                        w = _recycling_weight(n, tjp, tj, twice_m, twice_mp)
                        if w == 0.0:
                            continue
                        kp_col = (tjp - (twice_mp - 2)) // 2
                        coo_rows.append(offp + kp_row + dp * kp_col)
                        coo_cols.append(off + k_row + d * k_col)
                        coo_vals.append(gloc * w)

    total = space.total
    mats = [sp.coo_matrix(
        (m.data, (m.row + off, m.col + off)), shape=(total, total))
        for off, m in blocks_ll]
    if coo_vals:
        mats.append(sp.coo_matrix((coo_vals, (coo_rows, coo_cols)), shape=(total, total)))
    matrix = sum(mats[1:], start=mats[0]).tocsr()
    matrix.eliminate_zeros()
    return space, matrix


def build_permsym_liouvillian(params: ModelParams,
                              n_guard: int = N_GUARD_DEFAULT) -> PermsymLiouvillian:
    """Generator including collective decay, drive, and local decay.

    n_guard protects against accidentally huge sector spaces; raise it
    explicitly for larger runs.
    """
    if params.n > n_guard:
        raise ValueError(
            f"n={params.n} exceeds the sector-space guard ({n_guard}); "
            "pass a larger n_guard to proceed"
        )
    space, matrix = _permsym_matrix_cached(params)
    return PermsymLiouvillian(params=params, space=space, matrix=matrix)


def evolve_permsym(gen: PermsymLiouvillian, state0: DickeLadderState,
                   t: float) -> DickeLadderState:
    """Propagate sector blocks for time t under the combined generator."""
    from .dynamics import expmv

    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return gen.unpack(expmv(gen.matrix, gen.pack(state0), t))


def ladder_to_csv(state: DickeLadderState, stream) -> None:
    """Write sector blocks as rows (j, m, m', re, im); j, m in halves."""
    stream.write("twice_j,twice_m,twice_mp,re,im\n")
    for tj, block in zip(state.twice_js, state.blocks):
        d = tj + 1
        for k_row in range(d):
            for k_col in range(d):
                v = block[k_row, k_col]
                stream.write(f"{tj},{tj - 2 * k_row},{tj - 2 * k_col},"
                             f"{float(v.real)!r},{float(v.imag)!r}\n")


def ladder_from_csv(stream, n: int) -> DickeLadderState:
    header = stream.readline().strip()
    if header != "twice_j,twice_m,twice_mp,re,im":
        raise ValueError(f"unexpected ladder CSV header: {header!r}")
    blocks = {tj: np.zeros((tj + 1, tj + 1), dtype=complex)
              for tj in sector_twice_js(n)}
    for line in stream:
        line = line.strip()
        if not line:
            continue
        tj_s, tm_s, tmp_s, re_s, im_s = line.split(",")
        tj = int(tj_s)
        k_row = (tj - int(tm_s)) // 2
        k_col = (tj - int(tmp_s)) // 2
        blocks[tj][k_row, k_col] = float(re_s) + 1j * float(im_s)
    return DickeLadderState(n=n, blocks=tuple(blocks[tj] for tj in sector_twice_js(n)))


# --- exact full-register constructions (small n) ------------------------------

def _local_op(n: int, k: int, op: np.ndarray) -> sp.csr_matrix:
    mats = [sp.identity(2, format="csr", dtype=complex)] * n
    mats[k] = sp.csr_matrix(op.astype(complex))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def brute_force_collective_ops(n: int):
    """Collective S_x, S_y, S_z, S_-, S_+ on the full 2^n register."""
    sx1 = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
    sy1 = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz1 = 0.5 * np.array([[1, 0], [0, -1]], dtype=complex)
    sm1 = np.array([[0, 0], [1, 0]], dtype=complex)  # lowers m
    dim = 2 ** n
    sx = sp.csr_matrix((dim, dim), dtype=complex)
    sy = sp.csr_matrix((dim, dim), dtype=complex)
    sz = sp.csr_matrix((dim, dim), dtype=complex)
    sm = sp.csr_matrix((dim, dim), dtype=complex)
    for k in range(n):
        sx = sx + _local_op(n, k, sx1)
        sy = sy + _local_op(n, k, sy1)
        sz = sz + _local_op(n, k, sz1)
        sm = sm + _local_op(n, k, sm1)
    return sx, sy, sz, sm, sm.conj().T.tocsr()


def brute_force_liouvillian(params: ModelParams, max_atoms: int = 8) -> sp.csr_matrix:
    """Unsimplified generator on the full register, for cross-validation."""
    if params.n > max_atoms:
        raise ValueError(f"full-register oracle limited to n<={max_atoms}")
    sx, _, _, sm, _ = brute_force_collective_ops(params.n)
    h = params.omega * sx.toarray()
    jumps = [math.sqrt(params.gamma_coll) * sm.toarray()]
    sm1 = np.array([[0, 0], [1, 0]], dtype=complex)
    if params.gamma_loc:
        for k in range(params.n):
            jumps.append(math.sqrt(params.gamma_loc) * _local_op(params.n, k, sm1).toarray())
    return lindblad_superoperator(h, jumps)


@dataclass(frozen=True)
class OracleMoments:
    """Collective observables from the full-register evolution."""

    t: float
    sx: float
    sy: float
    sz: float
    n_exc: float
    sm: complex
    taus: np.ndarray | None = None
    corr_pm: np.ndarray | None = None


def brute_force_oracle(params: ModelParams, rho0: np.ndarray, t: float,
                       taus=None) -> OracleMoments:
    """Full 2^n Lindblad evolution reduced to collective observables.

    rho0 is a full-register density matrix (any permutation-symmetric state).
    When taus is given, also returns <S_+(tau) S_-> at time t via the
    regression theorem.
    """
    from .dynamics import expmv, expmv_grid

    lio = brute_force_liouvillian(params)
    sx, sy, sz, sm, sp = (m.toarray() for m in brute_force_collective_ops(params.n))
    v = expmv(lio, vec(np.asarray(rho0, dtype=complex)), t)
    dim = 2 ** params.n
    rho_t = v.reshape((dim, dim), order="F")
    rho_t = 0.5 * (rho_t + rho_t.conj().T)

    def ex(op):
        return complex(np.trace(op @ rho_t))

    result = OracleMoments(
        t=t, sx=ex(sx).real, sy=ex(sy).real, sz=ex(sz).real,
        n_exc=ex(sp @ sm).real, sm=ex(sm),
    )
    if taus is None:
        return result
    taus = np.asarray(taus, dtype=float)
    f_plus = vec(sp.T.copy())
    v_corr = expmv_grid(lio, vec(sm @ rho_t), taus)
    corr = f_plus @ v_corr
    return OracleMoments(
        t=result.t, sx=result.sx, sy=result.sy, sz=result.sz,
        n_exc=result.n_exc, sm=result.sm, taus=taus, corr_pm=corr,
    )


@lru_cache(maxsize=4)
def symmetric_basis(n: int):
    """Orthonormal total-spin basis of the full register, grouped by sector copy.

    Returns a dict mapping (twice_j, path) to a (2^n, twice_j+1) array whose
    columns are |j, m> for m = j, j-1, ..., -j.  path records the coupling
    history (one entry per added atom after the first), distinguishing the
    degenerate copies of each sector.
    """
    if n < 1:
        raise ValueError("need at least one atom")
    if n > 12:
        raise ValueError("full-register basis is for small n only")
    up = np.array([1.0, 0.0], dtype=complex)
    dn = np.array([0.0, 1.0], dtype=complex)
    # start: one atom, sector 2j=1, columns m=+1/2, -1/2
    basis = {(1, ()): np.column_stack([up, dn])}
    for _ in range(1, n):
        grown: dict = {}
        for (tj1, path), cols in basis.items():
            d1 = tj1 + 1
            full_dim = cols.shape[0] * 2
            for tj in (tj1 + 1, tj1 - 1):
                if tj < 0:
                    continue
                d = tj + 1
                out = np.zeros((full_dim, d), dtype=complex)
                for k in range(d):
                    twice_m = tj - 2 * k
                    cu = _cg_up(tj, twice_m, tj1)
                    cd = _cg_dn(tj, twice_m, tj1)
                    # |j1, m - 1/2> (x) |up>: index of m-1/2 in sector j1
                    if cu and abs(twice_m - 1) <= tj1:
                        k1 = (tj1 - (twice_m - 1)) // 2
                        out[:, k] += cu * np.kron(cols[:, k1], up)
                    if cd and abs(twice_m + 1) <= tj1:
                        k1 = (tj1 - (twice_m + 1)) // 2
                        out[:, k] += cd * np.kron(cols[:, k1], dn)
                grown[(tj, path + (tj,))] = out
        basis = grown
    return basis


def ladder_to_full(state: DickeLadderState) -> np.ndarray:
    """Embed aggregated blocks as a full-register density matrix.

    Valid when all degenerate copies of each sector carry the same block,
    which the collective + local dynamics preserves.
    """
    basis = symmetric_basis(state.n)
    dim = 2 ** state.n
    rho = np.zeros((dim, dim), dtype=complex)
    for tj, block in zip(state.twice_js, state.blocks):
        copies = [cols for (tjb, _path), cols in basis.items() if tjb == tj]
        if not copies:
            continue
        per_copy = block / len(copies)
        for cols in copies:
            rho += cols @ per_copy @ cols.conj().T
    return rho
