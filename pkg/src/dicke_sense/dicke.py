"""Collective-spin model of N driven two-level emitters decaying into a shared mode.

Everything acts in the maximal-spin Dicke sector S = N/2, dimension N + 1.
Basis convention throughout the package: index k = 0 .. N corresponds to
|S, m> with m = S - k, i.e. m decreasing from +S (fully excited) to -S
(all atoms in the ground state).

Superoperators use column-stacking vectorization, vec(A X B) = (B^T kron A) vec(X),
with vec(X) = X.flatten(order='F').
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ValidityWarning",
    "ModelParams",
    "CollectiveSpinOps",
    "DensityMatrix",
    "SuperOperator",
    "build_collective_ops",
    "build_liouvillian",
    "lindblad_superoperator",
    "omega_c",
    "mean_field_frequency",
    "vec",
    "unvec",
    "operator_to_csv",
    "operator_from_csv",
]


class ValidityWarning(UserWarning):
    """Raised when parameters leave a regime where an approximation is controlled."""


HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the driven collective-emission model.

    n           number of two-level emitters
    omega       drive (Rabi) frequency
    gamma_coll  collective emission rate, sets the unit of time
    gamma_loc   local (single-atom) decay rate; 0 keeps dynamics in the
                maximal-spin sector
    """

    n: int
    omega: float
    gamma_coll: float = 1.0
    gamma_loc: float = 0.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise TypeError(f"n must be an integer, got {self.n!r}")
        if self.n < 1:
            raise ValueError(f"need at least one emitter, got n={self.n}")
        for name in ("omega", "gamma_coll", "gamma_loc"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val!r}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.gamma_coll <= 0:
            raise ValueError(f"gamma_coll must be > 0, got {self.gamma_coll}")
        if self.gamma_loc < 0:
            raise ValueError(f"gamma_loc must be >= 0, got {self.gamma_loc}")

    @property
    def dim(self) -> int:
        """Hilbert-space dimension of the maximal-spin sector."""
        return self.n + 1

    @property
    def omega_c(self) -> float:
        return 0.5 * self.n * self.gamma_coll

    @property
    def omega_ratio(self) -> float:
        return self.omega / self.omega_c

    def with_omega(self, omega: float) -> "ModelParams":
        return ModelParams(self.n, float(omega), self.gamma_coll, self.gamma_loc)

    def key(self) -> tuple:
        """Hashable identity used by caches."""
        return (self.n, float(self.omega), float(self.gamma_coll), float(self.gamma_loc))


def omega_c(params: ModelParams) -> float:
    """Critical drive strength N * gamma_coll / 2 separating the two phases."""
    return params.omega_c


def mean_field_frequency(params: ModelParams) -> float:
    """Oscillation frequency sqrt(omega^2 - omega_c^2) of the time-crystal phase.

    Only defined above the critical point; raises otherwise.
    """
    wc = params.omega_c
    if params.omega <= wc:
        raise ValueError(
            f"mean-field frequency requires omega > omega_c ({params.omega} <= {wc})"
        )
    return math.sqrt(params.omega**2 - wc**2)


@dataclass(frozen=True)
class CollectiveSpinOps:
    """Dense matrix representations of the collective spin operators for N atoms."""

    n: int
    s_x: np.ndarray = field(repr=False)
    s_y: np.ndarray = field(repr=False)
    s_z: np.ndarray = field(repr=False)
    s_plus: np.ndarray = field(repr=False)
    s_minus: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.n + 1


def _ladder_plus(twice_s: int) -> np.ndarray:
    """S_+ for total spin S = twice_s / 2 in the decreasing-m basis."""
    s = twice_s / 2.0
    dim = twice_s + 1
    out = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        m = s - k  # S_+ |s, m> = c |s, m + 1>, target row k - 1
        out[k - 1, k] = math.sqrt(s * (s + 1) - m * (m + 1))
    return out


@lru_cache(maxsize=None)
def _collective_ops_cached(n: int) -> CollectiveSpinOps:
    s_plus = _ladder_plus(n)
    s_minus = s_plus.conj().T.copy()
    s_x = 0.5 * (s_plus + s_minus)
    s_y = -0.5j * (s_plus - s_minus)
    s = n / 2.0
    s_z = np.diag([s - k for k in range(n + 1)]).astype(complex)
    for arr in (s_x, s_y, s_z, s_plus, s_minus):
        arr.flags.writeable = False
    return CollectiveSpinOps(n=n, s_x=s_x, s_y=s_y, s_z=s_z, s_plus=s_plus, s_minus=s_minus)


def build_collective_ops(n: int) -> CollectiveSpinOps:
    """Collective spin matrices in the maximal sector S = n/2.

    Cached per n; the returned arrays are read-only.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return _collective_ops_cached(int(n))


@dataclass(frozen=True)
class DensityMatrix:
    """Validated density matrix on the maximal-spin sector.

    Construction checks hermiticity, unit trace and positivity (up to
    documented tolerances). Internal hot loops work on bare arrays and wrap
    results at API boundaries.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.data, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {a.shape}")
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if np.abs(a - a.conj().T).max(initial=0.0) > HERMITICITY_ATOL * scale:
            raise ValueError("density matrix is not Hermitian within 1e-12")
        tr = complex(np.trace(a))
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {tr} deviates from 1 beyond 1e-10")
        evals = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
        if evals.min(initial=0.0) < -POSITIVITY_ATOL:
            raise ValueError(
                f"density matrix has negative eigenvalue {evals.min()} beyond -1e-10"
            )
        object.__setattr__(self, "data", a)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @staticmethod
    def ground_state(n: int) -> "DensityMatrix":
        """All atoms in the ground state, |S, -S><S, -S|."""
        a = np.zeros((n + 1, n + 1), dtype=complex)
        a[n, n] = 1.0
        return DensityMatrix(a)

    @staticmethod
    def excited_state(n: int) -> "DensityMatrix":
        """All atoms excited, |S, +S><S, +S|."""
        a = np.zeros((n + 1, n + 1), dtype=complex)
        a[0, 0] = 1.0
        return DensityMatrix(a)

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(op @ self.data))


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on operators, stored as a sparse d^2 x d^2 matrix.

    `dim` is the Hilbert-space dimension d. The matrix acts on
    column-stacked operators.
    """

    dim: int
    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        d2 = self.dim * self.dim
        if self.matrix.shape != (d2, d2):
            raise ValueError(
                f"superoperator matrix shape {self.matrix.shape} does not match dim {self.dim}"
            )

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, op: np.ndarray) -> np.ndarray:
        """Apply the map to an operator given as a d x d matrix."""
        return unvec(self.matrix @ vec(op), self.dim)


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x, dtype=complex).flatten(order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape((dim, dim), order="F")


def lindblad_superoperator(h: np.ndarray, jumps: list[np.ndarray]) -> sp.csr_matrix:
    """Column-stacked matrix of rho -> -i[h, rho] + sum_k D[j_k] rho.

    D[j] rho = j rho j^dag - (1/2){j^dag j, rho}. Rates are absorbed into the
    jump operators.
    """
    d = h.shape[0]
    eye = sp.identity(d, format="csr", dtype=complex)
    hs = sp.csr_matrix(np.asarray(h, dtype=complex))
    lio = -1j * (sp.kron(eye, hs, format="csr") - sp.kron(hs.T, eye, format="csr"))
    for j in jumps:
        js = sp.csr_matrix(np.asarray(j, dtype=complex))
        jdj = (js.conj().T @ js).tocsr()
        lio = lio + sp.kron(js.conj(), js, format="csr")
        lio = lio - 0.5 * sp.kron(eye, jdj, format="csr")
        lio = lio - 0.5 * sp.kron(jdj.T, eye, format="csr")
    return lio.tocsr()


def build_liouvillian(params: ModelParams) -> SuperOperator:
    """Generator of the collective dynamics in the maximal-spin sector.

    d rho / dt = -i omega [S_x, rho]
                 + gamma_coll (S_- rho S_+ - (1/2){S_+ S_-, rho})

    Local decay breaks total-spin conservation and cannot be represented
    here; use the permutation-symmetric generator for gamma_loc > 0.
    """
    if params.gamma_loc != 0.0:
        raise ValueError(
            "build_liouvillian covers the maximal-spin sector only; "
            "gamma_loc > 0 requires permsym.build_permsym_liouvillian"
        )
    ops = build_collective_ops(params.n)
    h = params.omega * ops.s_x
    jump = math.sqrt(params.gamma_coll) * ops.s_minus
    return SuperOperator(dim=params.dim, matrix=lindblad_superoperator(h, [jump]))


# --- plain-text operator serialization -------------------------------------

def operator_to_csv(matrix: np.ndarray, stream) -> None:
    """Write a complex matrix as `dim,row,col,re,im` rows, row-major, all entries.

    Floats are written with repr so the round trip is exact.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    d = a.shape[0]
    stream.write("dim,row,col,re,im\n")
    for i in range(d):
        for j in range(d):
            z = a[i, j]
            stream.write(f"{d},{i},{j},{float(z.real)!r},{float(z.imag)!r}\n")


def operator_from_csv(stream) -> np.ndarray:
    header = stream.readline().strip()
    if header != "dim,row,col,re,im":
        raise ValueError(f"unexpected operator CSV header: {header!r}")
    out = None
    for line in stream:
        line = line.strip()
        if not line:
            continue
        dim_s, row_s, col_s, re_s, im_s = line.split(",")
        d = int(dim_s)
        if out is None:
            out = np.zeros((d, d), dtype=complex)
        elif out.shape[0] != d:
            raise ValueError("inconsistent dim fields in operator CSV")
        out[int(row_s), int(col_s)] = float(re_s) + 1j * float(im_s)
    if out is None:
        raise ValueError("empty operator CSV")
    return out


def warn_if_coarse(params: ModelParams, dt: float, threshold: float = 0.1) -> None:
    """Emit ValidityWarning when N * gamma_coll * dt is no longer small."""
    x = params.n * params.gamma_coll * dt
    if x > threshold:
        warnings.warn(
            f"N*gamma_coll*dt = {x:.3g} exceeds {threshold}; time-bin expansions "
            "are outside their validity regime",
            ValidityWarning,
            stacklevel=3,
        )
