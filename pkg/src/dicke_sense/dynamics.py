"""Evolution, stationary states, Liouvillian spectra and two-time correlations.

Propagation of vectorized operators uses a deterministic scaled-and-truncated
Taylor evaluation of the exponential action. This keeps results bit
reproducible (no randomized norm estimates) and never forms the dense
exponential of a large superoperator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import cache
from .dicke import (
    DensityMatrix,
    ModelParams,
    SuperOperator,
    build_collective_ops,
    build_liouvillian,
    mean_field_frequency,
    unvec,
    vec,
)

__all__ = [
    "DegenerateSteadyStateError",
    "SpectralDecomposition",
    "TwoTimeCorrelation",
    "AnsatzParams",
    "expmv",
    "expmv_grid",
    "evolve",
    "steady_state",
    "stationary_state",
    "spectral_decomposition",
    "two_time_correlation",
    "correlation_bundle",
    "incoherent_intensity",
    "ansatz_params",
    "ansatz_correlation",
    "ansatz_derivative",
    "dominant_frequency",
    "clear_caches",
]


class DegenerateSteadyStateError(RuntimeError):
    """The generator has more than one stationary state."""


# --- exponential action ------------------------------------------------------

_THETA = 3.5          # max 1-norm of A*t handled per Taylor substep
_KMAX = 60            # hard cap on Taylor order per substep


def _one_norm(a) -> float:
    if sp.issparse(a):
        return float(np.abs(a).sum(axis=0).max()) if a.nnz else 0.0
    return float(np.abs(a).sum(axis=0).max(initial=0.0))


def expmv(a, v: np.ndarray, t: float) -> np.ndarray:
    """exp(a*t) @ v without forming the exponential.

    Splits a*t into substeps of 1-norm <= _THETA and sums the Taylor series of
    each substep until terms fall below relative 1e-16 (order capped at _KMAX,
    far beyond what the substep size requires). Fully deterministic.
    """
    if t == 0.0:
        return np.array(v, dtype=complex, copy=True)
    norm = _one_norm(a) * abs(t)
    steps = max(1, int(math.ceil(norm / _THETA)))
    dt = t / steps
    w = np.array(v, dtype=complex, copy=True)
    for _ in range(steps):
        term = w.copy()
        acc = w.copy()
        for k in range(1, _KMAX + 1):
            term = a @ term
            term *= dt / k
            acc += term
            if np.abs(term).max(initial=0.0) <= 1e-16 * max(np.abs(acc).max(initial=0.0), 1e-300):
                break
        w = acc
    return w


def expmv_grid(a, v: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """Column j holds exp(a*taus[j]) @ v. taus must be non-decreasing, >= 0."""
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("tau grid must be a non-empty 1d array")
    if taus[0] < 0 or np.any(np.diff(taus) < 0):
        raise ValueError("tau grid must be non-negative and non-decreasing")
    out = np.empty((v.size, taus.size), dtype=complex)
    cur = np.array(v, dtype=complex, copy=True)
    prev = 0.0
    for j, t in enumerate(taus):
        if t > prev:
            cur = expmv(a, cur, t - prev)
            prev = t
        out[:, j] = cur
    return out


# --- states ------------------------------------------------------------------

def evolve(lio: SuperOperator, rho: DensityMatrix, t: float) -> DensityMatrix:
    """Propagate a state for time t >= 0 and re-symmetrize the result."""
    if t < 0:
        raise ValueError(f"evolution time must be >= 0, got {t}")
    if t == 0.0:
        return rho
    w = expmv(lio.matrix, vec(rho.data), t)
    out = unvec(w, lio.dim)
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out)


def _trace_row(dim: int) -> sp.csr_matrix:
    """Row vector r with r @ vec(X) = tr(X) in column stacking."""
    cols = np.arange(dim) * (dim + 1)
    data = np.ones(dim, dtype=complex)
    return sp.csr_matrix((data, (np.zeros(dim, dtype=int), cols)), shape=(1, dim * dim))


def null_state_vector(matrix: sp.csr_matrix, trace_row: sp.csr_matrix,
                      residual_tol: float = 1e-10) -> np.ndarray:
    """Solve matrix @ x = 0 with trace_row @ x = 1 via a row-replacement LU solve.

    Falls back to an SVD null-space analysis when the replaced system is
    singular or inaccurate, and raises DegenerateSteadyStateError if the null
    space has more than one dimension.
    """
    n = matrix.shape[0]
    m = sp.vstack([trace_row, matrix.tocsr()[1:]]).tocsc()
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    x = None
    try:
        lu = spla.splu(m)
        x = lu.solve(rhs)
    except RuntimeError:
        x = None
    if x is not None and np.all(np.isfinite(x)):
        scale = max(float(np.abs(x).max()), 1e-300)
        resid = float(np.abs(matrix @ x).max()) / scale
        if resid <= residual_tol:
            return x
    # singular or inaccurate: count the null space explicitly
    if n > 6000:
        raise RuntimeError(
            "stationary solve failed and the operator is too large for a dense "
            f"null-space analysis (dim {n})"
        )
    dense = matrix.toarray()
    u, s, vh = np.linalg.svd(dense)
    tol = max(s[0], 1.0) * n * np.finfo(float).eps * 100
    null_dim = int(np.sum(s <= tol))
    if null_dim > 1:
        raise DegenerateSteadyStateError(
            f"generator has a {null_dim}-dimensional stationary subspace"
        )
    if null_dim == 0:
        raise RuntimeError("generator has no stationary state within tolerance")
    x = vh[-1].conj()
    w = complex(trace_row @ x)
    if abs(w) < 1e-12:
        raise RuntimeError("stationary null vector is traceless; cannot normalize")
    return x / w


def steady_state(lio: SuperOperator) -> DensityMatrix:
    """Unique stationary state of the generator.

    Raises DegenerateSteadyStateError when the stationary subspace is not
    one-dimensional. The returned state satisfies ||L rho||_max <= 1e-10
    relative to the state scale.
    """
    x = null_state_vector(lio.matrix, _trace_row(lio.dim))
    rho = unvec(x, lio.dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    return DensityMatrix(rho)


def stationary_state(params: ModelParams) -> DensityMatrix:
    """Cached stationary state of the collective generator for these parameters."""
    key = cache.content_key("steady", params.key())
    hit = cache.get_arrays(key)
    if hit is not None:
        return DensityMatrix(hit[0])
    rho = steady_state(build_liouvillian(params))
    cache.put_arrays(key, rho.data)
    return rho


# --- spectral analysis --------------------------------------------------------

_OSC_IMAG_FACTOR = 1e-8  # |Im(lambda)| below this (in units of gamma_coll) counts as non-oscillatory


@dataclass
class SpectralDecomposition:
    """Eigendata of a Liouvillian, sorted by descending real part.

    Ties at equal real part order non-oscillatory modes first. right/left
    hold the eigenmatrices r_j / l_j with tr(l_j^dag r_k) = delta_jk when
    modes were requested; r_0 is the stationary state (unit trace) and l_0
    the identity.
    """

    dim: int
    eigenvalues: np.ndarray
    gamma_scale: float
    right: np.ndarray | None = field(default=None, repr=False)
    left: np.ndarray | None = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return abs(self.eigenvalues[1].real)

    @property
    def relax_time(self) -> float:
        return 1.0 / abs(self.eigenvalues[1])

    def _rate(self, oscillatory: bool) -> float:
        thresh = _OSC_IMAG_FACTOR * self.gamma_scale
        lams = self.eigenvalues[1:]
        mask = (np.abs(lams.imag) >= thresh) if oscillatory else (np.abs(lams.imag) < thresh)
        if not np.any(mask):
            raise ValueError(
                f"no {'oscillatory' if oscillatory else 'non-oscillatory'} decaying mode found"
            )
        return float(-lams[mask].real.max())

    @property
    def gamma_1(self) -> float:
        """Decay rate of the slowest non-oscillatory mode."""
        return self._rate(oscillatory=False)

    @property
    def gamma_2(self) -> float:
        """Decay rate of the slowest oscillatory mode pair."""
        return self._rate(oscillatory=True)

    def evolve(self, rho: np.ndarray, t: float) -> np.ndarray:
        """Reconstruct exp(Lt) rho from the eigenmodes."""
        if self.right is None or self.left is None:
            raise ValueError("decomposition was computed without modes")
        weights = np.einsum("jab,ab->j", self.left.conj(), rho)
        phases = np.exp(self.eigenvalues * t)
        return np.einsum("j,jab->ab", weights * phases, self.right)


def spectral_decomposition(lio: SuperOperator, want_modes: bool = True,
                           gamma_scale: float = 1.0) -> SpectralDecomposition:
    """Full eigendecomposition of the generator.

    Left modes are obtained from the inverse of the right eigenvector matrix,
    which enforces biorthonormality even inside near-degenerate clusters.
    gamma_scale sets the rate unit for the oscillatory/non-oscillatory split
    (pass the collective decay rate).
    """
    d = lio.dim
    n2 = d * d
    if n2 > 4000:
        warnings.warn(
            f"dense eigendecomposition of a {n2}x{n2} superoperator is expensive",
            stacklevel=2,
        )
    dense = lio.dense()
    lams, rmat = scipy.linalg.eig(dense)
    order = np.lexsort((np.where(lams.imag < 0, 1, 0), np.abs(lams.imag), -lams.real))
    lams = lams[order]
    rmat = rmat[:, order]
    if abs(lams[0]) > 1e-8 * max(1.0, _one_norm(dense)):
        raise RuntimeError(f"leading eigenvalue {lams[0]} is not zero; not a Lindblad generator?")
    # scale r_0 to unit trace so l_0 becomes the identity
    tr0 = np.sum(rmat[:: d + 1, 0])
    if abs(tr0) < 1e-14:
        raise RuntimeError("stationary right mode is traceless")
    rmat[:, 0] /= tr0
    right = left = None
    if want_modes:
        lmat = np.linalg.inv(rmat)  # rows are biorthonormal left modes
        right = np.transpose(rmat.reshape(d, d, n2, order="F"), (2, 0, 1)).copy()
        left = np.transpose(lmat.conj().T.reshape(d, d, n2, order="F"), (2, 0, 1)).copy()
    return SpectralDecomposition(
        dim=d, eigenvalues=lams, gamma_scale=gamma_scale, right=right, left=left
    )


def spectral_rates(params: ModelParams) -> SpectralDecomposition:
    """Cached eigenvalue-only decomposition with the physical gamma_coll scale."""
    key = cache.content_key("spectrum", params.key())
    hit = cache.get_arrays(key)
    if hit is not None:
        return SpectralDecomposition(dim=params.dim, eigenvalues=hit[0],
                                     gamma_scale=params.gamma_coll)
    dec = spectral_decomposition(build_liouvillian(params), want_modes=False,
                                 gamma_scale=params.gamma_coll)
    cache.put_arrays(key, dec.eigenvalues)
    return dec


# --- two-time correlations -----------------------------------------------------

_KINDS = {
    # kind: (initial insertion, trace operator attribute)
    "plus_tau_minus": ("left_minus", "s_plus"),    # <S_+(tau) S_->
    "minus_tau_minus": ("left_minus", "s_minus"),  # <S_-(tau) S_->
    "plus_minus_tau": ("right_plus", "s_minus"),   # <S_+ S_-(tau)>
    "plus_plus_tau": ("right_plus", "s_plus"),     # <S_+ S_+(tau)>
}


@dataclass(frozen=True)
class TwoTimeCorrelation:
    """Correlation values over a lag grid, via the quantum regression theorem."""

    kind: str
    t1: float
    taus: np.ndarray
    values: np.ndarray


def _trace_functional(op: np.ndarray) -> np.ndarray:
    """Vector w with w @ vec(X) = tr(op @ X)."""
    return vec(op.T)


def two_time_correlation(lio: SuperOperator, params: ModelParams, rho_t1: DensityMatrix,
                         taus: np.ndarray, kind: str = "plus_tau_minus",
                         t1: float = 0.0) -> TwoTimeCorrelation:
    """<A(tau) B> style stationary/transient correlations of collective operators.

    kinds: plus_tau_minus  <S_+(tau) S_->   = tr{S_+ e^(L tau)[S_- rho]}
           minus_tau_minus <S_-(tau) S_->   = tr{S_- e^(L tau)[S_- rho]}
           plus_minus_tau  <S_+ S_-(tau)>   = tr{S_- e^(L tau)[rho S_+]}
           plus_plus_tau   <S_+ S_+(tau)>   = tr{S_+ e^(L tau)[rho S_+]}
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown correlation kind {kind!r}; options: {sorted(_KINDS)}")
    ops = build_collective_ops(params.n)
    insertion, trace_attr = _KINDS[kind]
    if insertion == "left_minus":
        v0 = vec(ops.s_minus @ rho_t1.data)
    else:
        v0 = vec(rho_t1.data @ ops.s_plus)
    taus = np.asarray(taus, dtype=float)
    cols = expmv_grid(lio.matrix, v0, taus)
    w = _trace_functional(np.asarray(getattr(ops, trace_attr)))
    values = w @ cols
    return TwoTimeCorrelation(kind=kind, t1=t1, taus=taus, values=values)


@dataclass(frozen=True)
class CorrelationBundle:
    """Everything the short-time bin states need, over one lag grid.

    corr_pm[j] = <S_+(tau_j) S_->_t1, corr_mm[j] = <S_-(tau_j) S_->_t1,
    corr_mp / corr_pp are the adjoint partners. n_t2 / sm_t2 are <S_+ S_-> and
    <S_-> at the second interaction time t1 + tau_j + dt.
    """

    t1: float
    dt: float
    taus: np.ndarray
    n_t1: float
    sm_t1: complex
    corr_pm: np.ndarray
    corr_mm: np.ndarray
    corr_mp: np.ndarray
    corr_pp: np.ndarray
    n_t2: np.ndarray
    sm_t2: np.ndarray


def correlation_bundle(lio: SuperOperator, params: ModelParams, rho_t1: DensityMatrix,
                       taus: np.ndarray, dt: float, t1: float = 0.0) -> CorrelationBundle:
    """Propagate S_- rho and rho once and read off all correlation channels.

    The adjoint channels follow from hermiticity of rho_t1 and are not
    propagated separately: <S_+ S_-(tau)> = conj(<S_+(tau) S_->) and
    <S_+ S_+(tau)> = conj(<S_-(tau) S_->).
    """
    ops = build_collective_ops(params.n)
    taus = np.asarray(taus, dtype=float)
    sp_sm = np.asarray(ops.s_plus @ ops.s_minus)
    w_plus = _trace_functional(np.asarray(ops.s_plus))
    w_minus = _trace_functional(np.asarray(ops.s_minus))
    w_n = _trace_functional(sp_sm)

    cols = expmv_grid(lio.matrix, vec(ops.s_minus @ rho_t1.data), taus)
    corr_pm = w_plus @ cols
    corr_mm = w_minus @ cols

    state_cols = expmv_grid(lio.matrix, vec(rho_t1.data), taus + dt)
    n_t2 = np.real(w_n @ state_cols)
    sm_t2 = w_minus @ state_cols

    n_t1 = float(np.real(np.trace(sp_sm @ rho_t1.data)))
    sm_t1 = complex(np.trace(np.asarray(ops.s_minus) @ rho_t1.data))
    return CorrelationBundle(
        t1=t1, dt=dt, taus=taus, n_t1=n_t1, sm_t1=sm_t1,
        corr_pm=corr_pm, corr_mm=corr_mm,
        corr_mp=np.conj(corr_pm), corr_pp=np.conj(corr_mm),
        n_t2=n_t2, sm_t2=sm_t2,
    )


# --- stationary emission structure ---------------------------------------------

def incoherent_intensity(params: ModelParams) -> float:
    """gamma_coll * (<S_+ S_->_ss - |<S_+>_ss|^2), the incoherently emitted part."""
    rho = stationary_state(params)
    ops = build_collective_ops(params.n)
    n = np.real(np.trace(ops.s_plus @ ops.s_minus @ rho.data))
    s = np.trace(ops.s_plus @ rho.data)
    val = params.gamma_coll * float(n - abs(s) ** 2)
    if val < -1e-10 * max(1.0, abs(val)):
        raise RuntimeError(f"incoherent intensity came out negative: {val}")
    return max(val, 0.0)


@dataclass(frozen=True)
class AnsatzParams:
    """Coefficients of the three-mode stationary correlation ansatz.

    <S_+(tau) S_->_ss ~ coherent_bg + c1 e^(-gamma_1 tau)
                        + 2 c2 cos(omega_osc tau) e^(-gamma_2 tau)
    with c1 = i_inc / (2 gamma_coll) and c2 = i_inc / (4 gamma_coll).
    """

    i_inc: float
    omega_osc: float
    gamma_1: float
    gamma_2: float
    coherent_bg: float
    gamma_coll: float
    omega: float

    @property
    def c1(self) -> float:
        return self.i_inc / (2.0 * self.gamma_coll)

    @property
    def c2(self) -> float:
        return self.i_inc / (4.0 * self.gamma_coll)

    @property
    def domega_osc(self) -> float:
        """d omega_osc / d omega = omega / omega_osc."""
        return self.omega / self.omega_osc


def ansatz_params(params: ModelParams) -> AnsatzParams:
    """Assemble the correlation ansatz from stationary and spectral data.

    Requires the oscillatory phase (omega > omega_c) so the mean-field
    frequency is defined.
    """
    omega_osc = mean_field_frequency(params)
    rho = stationary_state(params)
    ops = build_collective_ops(params.n)
    s = np.trace(ops.s_plus @ rho.data)
    dec = spectral_rates(params)
    return AnsatzParams(
        i_inc=incoherent_intensity(params),
        omega_osc=omega_osc,
        gamma_1=dec.gamma_1,
        gamma_2=dec.gamma_2,
        coherent_bg=float(abs(s) ** 2),
        gamma_coll=params.gamma_coll,
        omega=params.omega,
    )


def ansatz_correlation(ap: AnsatzParams, tau) -> np.ndarray:
    """Evaluate the stationary correlation ansatz at lag(s) tau."""
    tau = np.asarray(tau, dtype=float)
    return (
        ap.coherent_bg
        + ap.c1 * np.exp(-ap.gamma_1 * tau)
        + 2.0 * ap.c2 * np.cos(ap.omega_osc * tau) * np.exp(-ap.gamma_2 * tau)
    )


def ansatz_derivative(ap: AnsatzParams, tau, rate: float | None = None) -> np.ndarray:
    """Leading drive-derivative of the ansatz correlation.

    d<S_+(tau)S_->/d omega ~ -(i_inc tau / (2 gamma_coll)) (omega/omega_osc)
                             sin(omega_osc tau) e^(-rate tau)
    The decay rate defaults to gamma_2 (the oscillatory-pair rate); pass
    `rate` to explore the alternative readings.
    """
    tau = np.asarray(tau, dtype=float)
    r = ap.gamma_2 if rate is None else rate
    return (
        -(ap.i_inc * tau * ap.domega_osc / (2.0 * ap.gamma_coll))
        * np.sin(ap.omega_osc * tau)
        * np.exp(-r * tau)
    )


# --- small analysis helpers -----------------------------------------------------

def dominant_frequency(ts: np.ndarray, values: np.ndarray) -> float:
    """Angular frequency of the strongest non-DC Fourier component.

    The mean is removed, the signal zero-padded 8x, and the peak refined with
    a three-point parabolic fit. Assumes a uniform time grid.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.size < 8:
        raise ValueError("need at least 8 samples")
    steps = np.diff(ts)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("time grid must be uniform")
    x = values - values.mean()
    n = int(2 ** math.ceil(math.log2(x.size * 8)))
    spec = np.abs(np.fft.rfft(x, n=n))
    k = int(np.argmax(spec[1:]) + 1)
    if 1 <= k < spec.size - 1:
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        denom = a - 2 * b + c
        shift = 0.0 if denom == 0 else 0.5 * (a - c) / denom
    else:
        shift = 0.0
    freq = (k + shift) / (n * steps[0])
    return 2.0 * math.pi * freq


def clear_caches() -> None:
    cache.clear_memory()
