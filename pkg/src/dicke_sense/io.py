"""Tabular output: versioned CSV, JSON summaries, and SVG line plots.

The CSV layout is one comment line of metadata, a header row, then data
rows. Floats are written with repr so parsing returns the exact values,
which the determinism and round-trip guarantees rely on.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

__all__ = [
    "CSV_VERSION",
    "Table",
    "write_csv",
    "read_table",
    "write_json",
    "plot_error_vs_tau",
    "plot_loglog_scaling",
]

CSV_VERSION = 1

_INT_RE = re.compile(r"^-?\d+$")


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return (self.columns == other.columns and self.rows == other.rows
                and self.meta == other.meta)


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_cell(s: str):
    if s == "":
        return None
    if s == "true":
        return True
    if s == "false":
        return False
    if _INT_RE.match(s):
        return int(s)
    try:
        return float(s)
    except ValueError:
        return s


def write_csv(path: str, table: Table) -> None:
    meta = {"v": CSV_VERSION, **table.meta}
    meta_str = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
    lines = [f"# dicke-sense {meta_str}", ",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(_format_cell(row.get(c)) for c in table.columns))
    tmp = path + ".tmp"
    with open(tmp, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_table(path: str) -> Table:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        meta: dict = {}
        if first.startswith("#"):
            body = first.lstrip("# ").removeprefix("dicke-sense ").strip()
            for part in body.split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k] = _parse_cell(v)
            header = fh.readline().rstrip("\n")
        else:
            header = first
        columns = tuple(header.split(","))
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(columns):
                raise ValueError(
                    f"{path}: row with {len(cells)} cells, expected {len(columns)}")
            rows.append({c: _parse_cell(x) for c, x in zip(columns, cells)})
    meta.pop("v", None)
    return Table(columns=columns, rows=rows, meta=meta)


def write_json(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(obj):
    try:
        import numpy as np
    except ImportError:  # pragma: no cover
        raise TypeError(f"not JSON serializable: {type(obj)}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _mpl():
    import matplotlib

    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "dicke-sense"
    import matplotlib.pyplot as plt

    return plt


def plot_error_vs_tau(path: str, taus, traces: dict, crb=None,
                      xlabel: str = "gamma * tau",
                      ylabel: str = "squared error") -> None:
    """Line plot of estimation-error traces with an optional bound overlay.

    traces maps a label to an array of squared errors over taus; crb, when
    given, is an array (or scalar) drawn as a dashed reference line.
    """
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys in traces.items():
        ax.plot(taus, ys, label=label, linewidth=1.2)
    if crb is not None:
        import numpy as np

        crb_arr = np.broadcast_to(np.asarray(crb, dtype=float), (len(taus),))
        ax.plot(taus, crb_arr, "k--", label="CRB", linewidth=1.0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_loglog_scaling(path: str, xs, ys, exponent: float | None = None,
                        prefactor: float | None = None,
                        xlabel: str = "N", ylabel: str = "value") -> None:
    """Log-log scatter with an optional fitted power-law line."""
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(xs, ys, "o", markersize=5)
    if exponent is not None and prefactor is not None:
        import numpy as np

        xs_f = np.asarray(xs, dtype=float)
        line = prefactor * xs_f ** exponent
        ax.loglog(xs_f, line, "--",
                  label=f"slope {exponent:.2f}")
        ax.legend(frameon=False, fontsize=9)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
