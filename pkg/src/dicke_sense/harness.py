"""Deterministic parameter sweeps, scaling fits, and output emission.

A sweep is described by an INI file (or a SweepSpec built in code). The grid
is the cartesian product of the parameter axes; every grid point yields
exactly one output row, rows are ordered by grid index whatever the worker
scheduling, and numerical work runs under single-threaded BLAS so the output
bytes do not depend on the worker count.

All times and rates are quoted in collective-decay units: the collective
rate is fixed to 1, so dt means the dimensionless product of rate and bin
length, t1 and tau are dimensionless times, and omega is given as the ratio
to the critical drive.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .dicke import ModelParams
from .io import Table
from .version import VERSION

__all__ = [
    "TASKS",
    "SweepSpec",
    "SweepResult",
    "run_sweep",
    "FitResult",
    "fit_scaling",
    "default_dt",
]

TASKS = ("qfi1", "qfi2", "mz_error", "localdecay", "convergence")

_BASE_COLUMNS = ("index", "status", "n", "omega_ratio", "gamma_loc_ratio",
                 "t1", "tau", "dt", "dg", "source", "version")

_TASK_COLUMNS = {
    "qfi1": _BASE_COLUMNS + ("qfi_per_time", "convergence"),
    "qfi2": _BASE_COLUMNS + ("qfi_per_time", "convergence"),
    "localdecay": _BASE_COLUMNS + ("qfi_per_time", "convergence",
                                   "err_nd", "err_n4", "err_n5"),
    "mz_error": _BASE_COLUMNS + ("observable", "mean", "var", "error", "crb"),
    "convergence": _BASE_COLUMNS + ("occ1_exact", "occ1_analytic",
                                    "cross_re_exact", "cross_re_analytic",
                                    "dev_one_bin", "dev_two_bin"),
}


def default_dt(n: int) -> float:
    """Per-size default bin length keeping n * dt well below 1."""
    return min(2.5e-5, 1e-3 / n)


@dataclass(frozen=True)
class SweepSpec:
    """Declarative description of one sweep.

    tau policies: "none", "list:v1,v2,...", "linspace:start:stop:num", or
    "optimal:start:stop:num" (scan internally, emit only the best lag).
    t1 policies: "stationary", "sy_max", or a number (dimensionless time).
    dt: explicit tuple of values, or None for the per-size default.
    dg: None for the default step (1e-4 of the critical drive) or a number
    interpreted as a fraction of the critical drive.
    """

    task: str
    n: tuple[int, ...]
    omega_ratio: tuple[float, ...]
    gamma_loc_ratio: tuple[float, ...] = (0.0,)
    dt: tuple[float, ...] | None = None
    t1: str = "stationary"
    tau: str = "none"
    dg: float | None = None
    source: str = "short_time_analytic"
    observables: tuple[str, ...] = ("n_d", "n_4", "n_5")
    workers: int = 1
    name: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; options: {TASKS}")
        if not self.n or not self.omega_ratio or not self.gamma_loc_ratio:
            raise ValueError("grid axes must be non-empty")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def output_name(self) -> str:
        return self.name or self.task

    @staticmethod
    def from_config(path: str) -> "SweepSpec":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        read = cp.read(path)
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
        if "sweep" not in cp:
            raise ValueError(f"{path}: missing [sweep] section")
        s = cp["sweep"]

        def floats(key, default=None):
            if key not in s:
                return default
            return tuple(float(x) for x in s[key].replace(",", " ").split())

        def ints(key):
            return tuple(int(x) for x in s[key].replace(",", " ").split())

        dt_raw = s.get("dt", "auto").strip()
        dt = None if dt_raw == "auto" else tuple(
            float(x) for x in dt_raw.replace(",", " ").split())
        dg_raw = s.get("dg", "auto").strip()
        dg = None if dg_raw == "auto" else float(dg_raw)
        obs_raw = s.get("observables", "n_d, n_4, n_5")
        observables = tuple(x.strip() for x in obs_raw.split(",") if x.strip())
        return SweepSpec(
            task=s.get("task", "").strip(),
            n=ints("n"),
            omega_ratio=floats("omega_ratio"),
            gamma_loc_ratio=floats("gamma_loc_ratio", (0.0,)),
            dt=dt,
            t1=s.get("t1", "stationary").strip(),
            tau=s.get("tau", "none").strip(),
            dg=dg,
            source=s.get("source", "short_time_analytic").strip(),
            observables=observables,
            workers=s.getint("workers", 1),
            name=s.get("name", None),
        )


@dataclass(frozen=True)
class _Group:
    """One (n, omega, gamma_loc, dt) cell of the grid."""

    n: int
    omega_ratio: float
    gamma_loc_ratio: float
    dt: float


def _groups(spec: SweepSpec) -> list[_Group]:
    out = []
    for n in spec.n:
        dts = spec.dt if spec.dt is not None else (default_dt(n),)
        for omr in spec.omega_ratio:
            for glr in spec.gamma_loc_ratio:
                for dt in dts:
                    out.append(_Group(n=n, omega_ratio=omr,
                                      gamma_loc_ratio=glr, dt=dt))
    return out


def _params_for(group: _Group) -> ModelParams:
    omega_c = group.n / 2.0
    return ModelParams(n=group.n, omega=group.omega_ratio * omega_c,
                       gamma_coll=1.0, gamma_loc=group.gamma_loc_ratio)


def _parse_tau_policy(policy: str):
    """Returns (kind, grid). kind in {none, grid, optimal}."""
    if policy == "none":
        return "none", None
    if policy.startswith("list:"):
        vals = np.array([float(x) for x in policy[5:].replace(",", " ").split()])
        return "grid", vals
    for prefix, kind in (("linspace:", "grid"), ("optimal:", "optimal")):
        if policy.startswith(prefix):
            a, b, num = policy[len(prefix):].split(":")
            return kind, np.linspace(float(a), float(b), int(num))
    raise ValueError(f"unknown tau policy {policy!r}")


def _resolve_t1(spec: SweepSpec, params: ModelParams):
    if spec.t1 == "stationary":
        return "stationary"
    if spec.t1 == "sy_max":
        from .engines import find_first_sy_max

        return find_first_sy_max(params)
    return float(spec.t1)


def _rows_per_group(spec: SweepSpec) -> int:
    kind, grid = _parse_tau_policy(spec.tau)
    n_tau = 1 if kind in ("none", "optimal") else len(grid)
    if spec.task == "mz_error":
        return n_tau * len(spec.observables)
    return n_tau


def _dg_for(spec: SweepSpec, params: ModelParams) -> float:
    frac = 1e-4 if spec.dg is None else spec.dg
    return frac * params.omega_c


def _base_row(spec: SweepSpec, group: _Group, t1, tau) -> dict:
    return {
        "status": "ok",
        "n": group.n,
        "omega_ratio": group.omega_ratio,
        "gamma_loc_ratio": group.gamma_loc_ratio,
        "t1": t1 if isinstance(t1, str) else float(t1),
        "tau": None if tau is None else float(tau),
        "dt": group.dt,
        "dg": None,
        "source": spec.source,
        "version": VERSION,
    }


def _compute_group(spec: SweepSpec, group: _Group) -> list[dict]:
    """All rows of one grid cell; pure and deterministic."""
    from .interferometer import error_scan
    from .metrology import qfi_one_bin, qfi_vs_tau

    params = _params_for(group)
    t1 = _resolve_t1(spec, params)
    dg = _dg_for(spec, params)
    kind, grid = _parse_tau_policy(spec.tau)

    if spec.task == "qfi1":
        res = qfi_one_bin(params, group.dt, t1=t1, dg=dg, source=spec.source)
        row = _base_row(spec, group, t1, None)
        row.update(dg=dg, qfi_per_time=res.per_time, convergence=res.convergence)
        return [row]

    if spec.task == "qfi2":
        if kind == "none":
            raise ValueError("qfi2 needs a tau policy")
        scan = qfi_vs_tau(params, t1, grid, group.dt, dg=dg, source=spec.source)
        if kind == "optimal":
            row = _base_row(spec, group, t1, scan.tau_star)
            row.update(dg=dg, qfi_per_time=scan.per_time_star,
                       convergence=float(scan.convergence[int(np.argmax(scan.per_time))]))
            return [row]
        rows = []
        for i, tau in enumerate(grid):
            row = _base_row(spec, group, t1, tau)
            row.update(dg=dg, qfi_per_time=float(scan.per_time[i]),
                       convergence=float(scan.convergence[i]))
            rows.append(row)
        return rows

    if spec.task == "localdecay":
        if kind == "none":
            raise ValueError("localdecay needs a tau policy")
        scan = qfi_vs_tau(params, t1, grid, group.dt, dg=dg, source=spec.source)
        errs = error_scan(params, t1, grid, group.dt, observables=spec.observables,
                          source=spec.source, dg=dg)
        if kind == "optimal":
            row = _base_row(spec, group, t1, scan.tau_star)
            best = {obs: min((e.value for e in errs[obs] if not e.insensitive),
                             default=float("inf"))
                    for obs in spec.observables}
            row.update(dg=dg, qfi_per_time=scan.per_time_star,
                       convergence=float(scan.convergence[int(np.argmax(scan.per_time))]),
                       err_nd=best.get("n_d"), err_n4=best.get("n_4"),
                       err_n5=best.get("n_5"))
            return [row]
        rows = []
        for i, tau in enumerate(grid):
            row = _base_row(spec, group, t1, tau)
            row.update(
                dg=dg, qfi_per_time=float(scan.per_time[i]),
                convergence=float(scan.convergence[i]),
                err_nd=errs["n_d"][i].value if "n_d" in errs else None,
                err_n4=errs["n_4"][i].value if "n_4" in errs else None,
                err_n5=errs["n_5"][i].value if "n_5" in errs else None,
            )
            rows.append(row)
        return rows

    if spec.task == "mz_error":
        if kind == "none":
            raise ValueError("mz_error needs a tau policy")
        if kind == "optimal":
            from .interferometer import optimal_sensing_scan

            qfi = qfi_vs_tau(params, t1, grid, group.dt, dg=dg, source=spec.source)
            crb = 1.0 / (group.dt * qfi.per_time_star)
            rows = []
            for obs in spec.observables:
                scan = optimal_sensing_scan(params, t1, grid, group.dt,
                                            observable=obs, source=spec.source, dg=dg)
                row = _base_row(spec, group, t1, scan.tau_star)
                row.update(dg=dg, observable=obs, mean=scan.best.mean_obs,
                           var=scan.best.variance_obs, error=scan.best.value,
                           crb=crb)
                rows.append(row)
            return rows
        errs = error_scan(params, t1, grid, group.dt, observables=spec.observables,
                          source=spec.source, dg=dg)
        qfi = qfi_vs_tau(params, t1, grid, group.dt, dg=dg, source=spec.source)
        rows = []
        for i, tau in enumerate(grid):
            crb = (1.0 / (group.dt * qfi.per_time[i])
                   if qfi.per_time[i] > 0 else float("inf"))
            for obs in spec.observables:
                e = errs[obs][i]
                row = _base_row(spec, group, t1, tau)
                row.update(dg=dg, observable=obs, mean=e.mean_obs,
                           var=e.variance_obs, error=e.value, crb=crb)
                rows.append(row)
        return rows

    if spec.task == "convergence":
        return _convergence_rows(spec, group, params, t1, dg, kind, grid)

    raise ValueError(f"unhandled task {spec.task!r}")


def _convergence_rows(spec, group, params, t1, dg, kind, grid) -> list[dict]:
    """Exact-discrete vs analytic bin observables for one grid cell."""
    from .engines import engine_for
    from .timebin import (
        BinSchedule,
        evolve_retaining_bins,
        one_bin_analytic,
        reduce_to_bins,
        two_bin_analytic,
    )

    if kind == "none":
        taus = [None]
    else:
        taus = list(grid)
    eng = engine_for(params)
    rho = eng.stationary() if t1 == "stationary" else eng.evolve(eng.ground(), float(t1))

    mu1_a = one_bin_analytic(params, rho, group.dt)
    mu1_e = reduce_to_bins(evolve_retaining_bins(params, rho, BinSchedule(dt=group.dt, n1=1)))
    occ_a = float(mu1_a.data[1, 1].real)
    occ_e = float(mu1_e.data[1, 1].real)
    coh_a = complex(mu1_a.data[1, 0])
    coh_e = complex(mu1_e.data[1, 0])
    dev_one = max(
        abs(occ_e - occ_a) / max(abs(occ_a), 1e-300),
        abs(coh_e - coh_a) / max(abs(coh_a), 1e-300),
    )

    rows = []
    for tau in taus:
        row = _base_row(spec, group, t1, tau)
        row.update(dg=dg, occ1_exact=occ_e, occ1_analytic=occ_a,
                   dev_one_bin=dev_one)
        if tau is None:
            row.update(cross_re_exact=None, cross_re_analytic=None,
                       dev_two_bin=None)
        else:
            mu2_a = two_bin_analytic(params, rho, group.dt, float(tau))
            sched = BinSchedule.from_times(group.dt, t1=group.dt, tau=float(tau))
            mu2_e = reduce_to_bins(evolve_retaining_bins(params, rho, sched))
            cross_a = complex(mu2_a.data[2, 1])
            cross_e = complex(mu2_e.data[2, 1])
            scale = max(abs(cross_a), abs(occ_a), 1e-300)
            dev_two = max(
                abs(cross_e - cross_a) / scale,
                abs(float(mu2_e.data[1, 1].real) - float(mu2_a.data[1, 1].real))
                / max(abs(float(mu2_a.data[1, 1].real)), 1e-300),
            )
            row.update(cross_re_exact=cross_e.real, cross_re_analytic=cross_a.real,
                       dev_two_bin=dev_two)
        rows.append(row)
    return rows


def _compute_group_limited(args) -> list[dict]:
    spec, group = args
    with threadpool_limits(limits=1):
        try:
            return _compute_group(spec, group)
        except Exception as exc:  # per-point failures stay in-row
            n_rows = _rows_per_group(spec)
            rows = []
            for _ in range(n_rows):
                row = _base_row(spec, group, spec.t1, None)
                row["status"] = f"error:{type(exc).__name__}"
                rows.append(row)
            return rows


@dataclass(frozen=True)
class SweepResult:
    table: Table
    n_failed: int

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate the grid and assemble the ordered provenance table."""
    groups = _groups(spec)
    jobs = [(spec, g) for g in groups]
    if spec.workers == 1:
        results = [_compute_group_limited(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_compute_group_limited, jobs))

    columns = _TASK_COLUMNS[spec.task]
    rows: list[dict] = []
    n_failed = 0
    idx = 0
    for group_rows in results:
        for row in group_rows:
            row["index"] = idx
            idx += 1
            if row["status"] != "ok":
                n_failed += 1
            rows.append({c: row.get(c) for c in columns})
    table = Table(columns=columns, rows=rows,
                  meta={"task": spec.task, "code": VERSION})
    return SweepResult(table=table, n_failed=n_failed)


@dataclass(frozen=True)
class FitResult:
    """Power-law exponent from a log-log least-squares fit."""

    exponent: float
    stderr: float
    points_used: int
    restriction: str
    prefactor: float


def fit_scaling(xs, ys, restrict_largest: int | None = None) -> FitResult:
    """Slope of log(y) against log(x), optionally on the largest-x points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise ValueError("log-log fit needs strictly positive data")
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    restriction = "all points"
    if restrict_largest is not None:
        if restrict_largest < 2:
            raise ValueError("need at least 2 points after restriction")
        k = min(restrict_largest, len(xs))
        xs, ys = xs[-k:], ys[-k:]
        restriction = f"largest {k}"
    if len(xs) < 2:
        raise ValueError("need at least 2 points to fit")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    dof = max(len(xs) - 2, 1)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx)) if sxx > 0 else float("nan")
    return FitResult(exponent=float(slope), stderr=stderr, points_used=len(xs),
                     restriction=restriction, prefactor=float(math.exp(intercept)))
