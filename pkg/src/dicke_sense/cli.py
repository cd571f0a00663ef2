"""Command-line entry point.

Subcommands cover single evaluations (ops, steady, spectrum, bins, qfi1,
qfi2, mz), sweep execution from INI files (sweep, localdecay), and scaling
fits over previously written tables (fit). Exit codes: 0 on success, 2 when
a sweep completed with per-point failures, 1 on fatal errors.

All quantities are in collective-decay units (rate fixed to 1): omega is
given as a ratio to the critical drive, times are dimensionless.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import io as io_mod
from .dicke import ModelParams, build_collective_ops, operator_to_csv
from .harness import SweepSpec, default_dt, fit_scaling, run_sweep
from .io import Table
from .version import VERSION


def _params_from_args(args) -> ModelParams:
    omega_c = args.n / 2.0
    gloc = getattr(args, "gamma_loc_ratio", 0.0) or 0.0
    return ModelParams(n=args.n, omega=args.omega_ratio * omega_c,
                       gamma_coll=1.0, gamma_loc=gloc)


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _formats(args) -> tuple[str, ...]:
    return tuple(x.strip() for x in args.format.split(",") if x.strip())


def _t1_arg(value: str):
    return value if value in ("stationary", "sy_max") else float(value)


def _resolve_t1(params, t1):
    if t1 == "sy_max":
        from .engines import find_first_sy_max

        return find_first_sy_max(params)
    return t1


def _tau_grid(arg: str) -> np.ndarray:
    a, b, num = arg.split(":")
    return np.linspace(float(a), float(b), int(num))


def _cmd_ops(args) -> int:
    ops = build_collective_ops(args.n)
    names = ["s_x", "s_y", "s_z", "s_plus", "s_minus"] if args.which == "all" \
        else [args.which]
    out = _out_dir(args)
    for name in names:
        path = os.path.join(out, f"ops_{name}_n{args.n}.csv")
        with open(path, "w") as fh:
            operator_to_csv(np.asarray(getattr(ops, name)), fh)
        print(path)
    return 0


def _cmd_steady(args) -> int:
    from .engines import engine_for
    from .permsym import DickeLadderState, ladder_to_csv

    params = _params_from_args(args)
    eng = engine_for(params)
    state = eng.stationary()
    n_exc, sm = eng.excitation_moments(state)
    out = _out_dir(args)
    tag = f"n{args.n}_w{args.omega_ratio:g}_g{params.gamma_loc:g}"
    csv_path = os.path.join(out, f"steady_{tag}.csv")
    with open(csv_path, "w") as fh:
        if isinstance(state, DickeLadderState):
            ladder_to_csv(state, fh)
        else:
            operator_to_csv(state.data, fh)
    io_mod.write_json(os.path.join(out, f"steady_{tag}.json"), {
        "n": args.n, "omega_ratio": args.omega_ratio,
        "gamma_loc_ratio": params.gamma_loc,
        "excitation": n_exc, "sm_re": sm.real, "sm_im": sm.imag,
        "version": VERSION,
    })
    print(csv_path)
    return 0


def _cmd_spectrum(args) -> int:
    from .dynamics import build_liouvillian, spectral_decomposition

    params = _params_from_args(args)
    if params.gamma_loc:
        raise ValueError("spectrum covers the collective generator; "
                         "gamma_loc must be 0")
    dec = spectral_decomposition(build_liouvillian(params), want_modes=False,
                                 gamma_scale=params.gamma_coll)
    out = _out_dir(args)
    tag = f"n{args.n}_w{args.omega_ratio:g}"
    table = Table(
        columns=("index", "re", "im"),
        rows=[{"index": i, "re": float(ev.real), "im": float(ev.imag)}
              for i, ev in enumerate(dec.eigenvalues)],
        meta={"task": "spectrum"},
    )
    csv_path = os.path.join(out, f"spectrum_{tag}.csv")
    io_mod.write_csv(csv_path, table)
    io_mod.write_json(os.path.join(out, f"spectrum_{tag}.json"), {
        "gap": dec.gap, "relax_time": dec.relax_time,
        "gamma_1": dec.gamma_1, "gamma_2": dec.gamma_2,
        "version": VERSION,
    })
    print(csv_path)
    return 0


def _cmd_bins(args) -> int:
    from .engines import engine_for
    from .timebin import (
        BinSchedule,
        evolve_retaining_bins,
        one_bin_analytic,
        reduce_to_bins,
        two_bin_analytic,
    )

    params = _params_from_args(args)
    t1 = _resolve_t1(params, _t1_arg(args.t1))
    eng = engine_for(params)
    rho = eng.stationary() if t1 == "stationary" else eng.evolve(eng.ground(), t1)
    if args.source == "short_time_analytic":
        state = (one_bin_analytic(params, rho, args.dt) if args.tau is None
                 else two_bin_analytic(params, rho, args.dt, args.tau))
    else:
        sched = (BinSchedule(dt=args.dt, n1=1) if args.tau is None
                 else BinSchedule.from_times(args.dt, t1=args.dt, tau=args.tau))
        state = reduce_to_bins(evolve_retaining_bins(params, rho, sched))
    out = _out_dir(args)
    tag = f"n{args.n}_w{args.omega_ratio:g}_b{state.n_bins}"
    path = os.path.join(out, f"bins_{tag}.csv")
    sched = state.schedule
    with open(path, "w") as fh:
        fh.write(f"# dicke-sense v={io_mod.CSV_VERSION} dt={sched.dt!r} "
                 f"n1={sched.n1} n2={sched.n2} source={state.source}\n")
        fh.write("n_bins,row,col,re,im\n")
        d = state.data.shape[0]
        for r in range(d):
            for c in range(d):
                v = state.data[r, c]
                fh.write(f"{state.n_bins},{r},{c},{v.real!r},{v.imag!r}\n")
    print(path)
    return 0


def _qfi_table_row(args, params, res, t1) -> dict:
    return {
        "n": args.n, "omega_ratio": args.omega_ratio,
        "gamma_loc_ratio": params.gamma_loc,
        "t1": t1 if isinstance(t1, str) else float(t1),
        "tau": res.tau, "dt": res.dt,
        "qfi_per_time": res.per_time, "dg": res.dg,
        "convergence": res.convergence,
    }


_QFI_COLUMNS = ("n", "omega_ratio", "gamma_loc_ratio", "t1", "tau", "dt",
                "qfi_per_time", "dg", "convergence")


def _cmd_qfi1(args) -> int:
    from .metrology import qfi_one_bin

    params = _params_from_args(args)
    dt = args.dt if args.dt is not None else default_dt(args.n)
    t1 = _t1_arg(args.t1)
    resolved = _resolve_t1(params, t1)
    dg = None if args.dg is None else args.dg * params.omega_c
    res = qfi_one_bin(params, dt, t1=resolved, dg=dg, source=args.source)
    table = Table(columns=_QFI_COLUMNS,
                  rows=[_qfi_table_row(args, params, res, resolved)],
                  meta={"task": "qfi1"})
    out = _out_dir(args)
    path = os.path.join(out, "qfi1.csv")
    io_mod.write_csv(path, table)
    print(path)
    return 0


def _cmd_qfi2(args) -> int:
    from .metrology import qfi_two_bin, qfi_vs_tau

    params = _params_from_args(args)
    dt = args.dt if args.dt is not None else default_dt(args.n)
    t1 = _resolve_t1(params, _t1_arg(args.t1))
    dg = None if args.dg is None else args.dg * params.omega_c
    out = _out_dir(args)
    rows = []
    summary: dict = {"version": VERSION}
    if args.tau_grid is not None:
        grid = _tau_grid(args.tau_grid)
        scan = qfi_vs_tau(params, t1, grid, dt, dg=dg, source=args.source)
        for tau, res in scan.as_pairs():
            rows.append(_qfi_table_row(args, params, res, t1))
        summary.update(tau_star=scan.tau_star, per_time_star=scan.per_time_star)
    elif args.tau is not None:
        res = qfi_two_bin(params, dt, args.tau, t1=t1, dg=dg, source=args.source)
        rows.append(_qfi_table_row(args, params, res, t1))
    else:
        raise ValueError("qfi2 needs --tau or --tau-grid")
    table = Table(columns=_QFI_COLUMNS, rows=rows, meta={"task": "qfi2"})
    path = os.path.join(out, "qfi2.csv")
    io_mod.write_csv(path, table)
    formats = _formats(args)
    if "json" in formats:
        io_mod.write_json(os.path.join(out, "qfi2.json"), summary)
    if "svg" in formats and args.tau_grid is not None:
        io_mod.plot_error_vs_tau(
            os.path.join(out, "qfi2.svg"),
            [r["tau"] for r in rows],
            {"QFI per time": [r["qfi_per_time"] for r in rows]},
            ylabel="QFI per unit time",
        )
    print(path)
    return 0


def _cmd_mz(args) -> int:
    from .interferometer import error_scan
    from .metrology import qfi_vs_tau

    params = _params_from_args(args)
    dt = args.dt if args.dt is not None else default_dt(args.n)
    t1 = _resolve_t1(params, _t1_arg(args.t1))
    dg = None if args.dg is None else args.dg * params.omega_c
    grid = _tau_grid(args.tau_grid)
    errs = error_scan(params, t1, grid, dt, source=args.source, dg=dg)
    qfi = qfi_vs_tau(params, t1, grid, dt, dg=dg, source=args.source)
    columns = ("observable", "t1", "tau", "mean", "var", "error", "crb")
    rows = []
    for i, tau in enumerate(grid):
        crb = 1.0 / (dt * qfi.per_time[i]) if qfi.per_time[i] > 0 else float("inf")
        for obs, trace in errs.items():
            e = trace[i]
            rows.append({
                "observable": obs,
                "t1": t1 if isinstance(t1, str) else float(t1),
                "tau": float(tau), "mean": e.mean_obs, "var": e.variance_obs,
                "error": e.value, "crb": crb,
            })
    table = Table(columns=columns, rows=rows, meta={"task": "mz"})
    out = _out_dir(args)
    path = os.path.join(out, "mz.csv")
    io_mod.write_csv(path, table)
    formats = _formats(args)
    if "json" in formats:
        best = {obs: min((e.value for e in trace if not e.insensitive),
                         default=float("inf"))
                for obs, trace in errs.items()}
        io_mod.write_json(os.path.join(out, "mz.json"),
                          {"min_error": best, "version": VERSION})
    if "svg" in formats:
        traces = {obs: [e.value for e in trace] for obs, trace in errs.items()}
        crb_trace = [1.0 / (dt * q) if q > 0 else float("nan")
                     for q in qfi.per_time]
        io_mod.plot_error_vs_tau(os.path.join(out, "mz.svg"), grid, traces,
                                 crb=crb_trace)
    print(path)
    return 0


def _run_spec(spec: SweepSpec, args) -> int:
    result = run_sweep(spec)
    out = _out_dir(args)
    formats = _formats(args)
    base = os.path.join(out, spec.output_name)
    io_mod.write_csv(base + ".csv", result.table)
    print(base + ".csv")
    if "json" in formats:
        io_mod.write_json(base + ".json", {
            "task": spec.task, "rows": len(result.table.rows),
            "failed": result.n_failed, "version": VERSION,
        })
    if "svg" in formats and spec.task in ("qfi1", "qfi2"):
        ok = [r for r in result.table.rows if r["status"] == "ok"]
        if ok:
            io_mod.plot_loglog_scaling(
                base + ".svg",
                [r["n"] for r in ok],
                [r["qfi_per_time"] for r in ok],
                ylabel="QFI per unit time",
            )
    return 2 if result.partial else 0


def _cmd_sweep(args) -> int:
    if not args.config:
        raise ValueError("sweep requires --config")
    spec = SweepSpec.from_config(args.config)
    if args.workers is not None:
        spec = dataclasses.replace(spec, workers=args.workers)
    return _run_spec(spec, args)


def _cmd_localdecay(args) -> int:
    if not args.config:
        raise ValueError("localdecay requires --config")
    spec = SweepSpec.from_config(args.config)
    if spec.task != "localdecay":
        raise ValueError(f"config task is {spec.task!r}, expected 'localdecay'")
    if args.workers is not None:
        spec = dataclasses.replace(spec, workers=args.workers)
    return _run_spec(spec, args)


def _cmd_fit(args) -> int:
    table = io_mod.read_table(args.table)
    rows = [r for r in table.rows
            if r.get("status", "ok") == "ok" and r.get(args.y) is not None]
    groups: dict = {}
    for r in rows:
        key = r.get(args.group) if args.group else "all"
        groups.setdefault(key, []).append(r)
    payload = {"version": VERSION, "x": args.x, "y": args.y, "fits": {}}
    for key in sorted(groups, key=str):
        pts = groups[key]
        xs = [float(r[args.x]) for r in pts]
        ys = [float(r[args.y]) for r in pts]
        fit = fit_scaling(xs, ys, restrict_largest=args.restrict_largest)
        payload["fits"][str(key)] = {
            "exponent": fit.exponent, "stderr": fit.stderr,
            "points_used": fit.points_used, "restriction": fit.restriction,
            "prefactor": fit.prefactor,
        }
    out = _out_dir(args)
    path = os.path.join(out, "fit.json")
    io_mod.write_json(path, payload)
    print(path)
    for key, f in payload["fits"].items():
        print(f"{key}: exponent={f['exponent']:.4f} +- {f['stderr']:.4f} "
              f"({f['restriction']}, {f['points_used']} pts)")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="INI spec file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.add_argument("--format", default="csv,json",
                   help="comma-separated: csv,json,svg")


def _add_point(p: argparse.ArgumentParser, tau: bool = False) -> None:
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--omega-ratio", type=float, required=True,
                   help="drive over critical drive")
    p.add_argument("--gamma-loc-ratio", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t1", default="stationary",
                   help="'stationary', 'sy_max', or a time")
    p.add_argument("--dg", type=float, default=None,
                   help="finite-difference step over the critical drive")
    p.add_argument("--source", default="short_time_analytic",
                   choices=("short_time_analytic", "exact_discrete"))
    if tau:
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--tau-grid", default=None, help="start:stop:num")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dicke-sense",
        description="Collective-emission sensing toolkit",
    )
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ops", help="dump collective spin operators as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--which", default="all",
                   choices=("all", "s_x", "s_y", "s_z", "s_plus", "s_minus"))
    _add_common(p)
    p.set_defaults(func=_cmd_ops)

    p = sub.add_parser("steady", help="stationary state and its moments")
    _add_point(p)
    _add_common(p)
    p.set_defaults(func=_cmd_steady)

    p = sub.add_parser("spectrum", help="Liouvillian eigenvalues and rates")
    _add_point(p)
    _add_common(p)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("bins", help="one- or two-bin reduced state")
    _add_point(p, tau=True)
    _add_common(p)
    p.set_defaults(func=_cmd_bins)

    p = sub.add_parser("qfi1", help="one-bin Fisher information")
    _add_point(p)
    _add_common(p)
    p.set_defaults(func=_cmd_qfi1)

    p = sub.add_parser("qfi2", help="two-bin Fisher information")
    _add_point(p, tau=True)
    _add_common(p)
    p.set_defaults(func=_cmd_qfi2)

    p = sub.add_parser("mz", help="interferometer counting errors vs lag")
    _add_point(p, tau=True)
    _add_common(p)
    p.set_defaults(func=_cmd_mz)

    p = sub.add_parser("localdecay", help="run a localdecay sweep spec")
    _add_common(p)
    p.set_defaults(func=_cmd_localdecay)

    p = sub.add_parser("sweep", help="run a sweep spec")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="power-law fit over a table column")
    p.add_argument("--table", required=True)
    p.add_argument("--x", default="n")
    p.add_argument("--y", required=True)
    p.add_argument("--restrict-largest", type=int, default=None)
    p.add_argument("--group", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:  # pragma: no cover
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
