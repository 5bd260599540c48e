"""Batch figure generation from the solver CLI's delimited outputs.

Every figure kind consumes one CSV schema and nothing else: the tables
are the interface, and nothing numerical is recomputed here.  Rendering
is read-only over its inputs and overwrites the output image in place,
so rerunning a report directory is idempotent.

Kinds and the columns each one requires:

    h_vs_D         d, alpha, D, h         one curve per (d, alpha)
    H_vs_u         d, alpha, D, u, H      one curve per (d, alpha, D)
    bifurcation    d, alpha, D, branch, u one curve per (d, alpha, branch)
    entropy_decay  time, free_energy_gap  semi-log decay history
    gap_vs_D       D, c_opt               rate constants against noise

Optional columns are picked up when present: ``rel_entropy`` overlays
the decay history, and ``c_variance_scaled`` / ``c_poincare_scaled`` /
``predicted_rate`` overlay the gap sweep (grouped by d, alpha, branch
when those columns exist).

Zero crossings of the h_vs_D and H_vs_u curves are located by linear
interpolation between sign changes and handed back in the render
summary, so callers can check threshold locations against the table
without re-reading pixels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "flockplots"  # deterministic SVG ids

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("h_vs_D", "H_vs_u", "bifurcation", "entropy_decay", "gap_vs_D")

REQUIRED_COLUMNS = {
    "h_vs_D": ("d", "alpha", "D", "h"),
    "H_vs_u": ("d", "alpha", "D", "u", "H"),
    "bifurcation": ("d", "alpha", "D", "branch", "u"),
    "entropy_decay": ("time", "free_energy_gap"),
    "gap_vs_D": ("D", "c_opt"),
}

# columns used opportunistically when the writer included them
_OPTIONAL_COLUMNS = {
    "entropy_decay": ("rel_entropy",),
    "gap_vs_D": ("d", "alpha", "branch", "c_variance_scaled",
                 "c_poincare_scaled", "predicted_rate"),
}

_TEXT_COLUMNS = frozenset({"branch", "grid"})

_STYLE_KEYS = frozenset({"title", "xlabel", "ylabel", "figsize", "dpi",
                         "legend"})

_AXIS_LABELS = {
    "h_vs_D": ("D", "h(D)"),
    "H_vs_u": ("u", "H(u)"),
    "bifurcation": ("D", "|u|"),
    "entropy_decay": ("t", "free energy gap"),
    "gap_vs_D": ("D", "rate constant"),
}


class PlotDataError(ValueError):
    """Input table missing, empty, or unusable for the requested kind."""


class MissingColumnError(PlotDataError):
    """A required column is absent from an input table."""

    def __init__(self, column: str, path):
        self.column = column
        self.path = str(path)
        super().__init__(f"missing column {column!r} in {self.path}")


@dataclass(frozen=True)
class PlotSpec:
    """One figure request: kind, input table(s), output path, styling."""

    kind: str
    inputs: tuple
    output: str
    style: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")
        inputs = tuple(str(p) for p in (
            (self.inputs,) if isinstance(self.inputs, (str, Path))
            else self.inputs))
        if not inputs:
            raise ValueError("at least one input CSV is required")
        object.__setattr__(self, "inputs", inputs)
        unknown = set(self.style) - _STYLE_KEYS
        if unknown:
            raise ValueError(f"unknown style option {sorted(unknown)[0]!r}; "
                             f"allowed: {', '.join(sorted(_STYLE_KEYS))}")


@dataclass(frozen=True)
class RenderSummary:
    """What a render produced, for scripted checks on top of the image."""

    kind: str
    output: str
    n_curves: int
    labels: tuple
    crossings: Mapping  # label -> tuple of interpolated zero locations
    extras: Mapping = field(default_factory=dict)


def _read_table(path, required):
    p = Path(path)
    if not p.is_file():
        raise PlotDataError(f"no such input: {p}")
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotDataError(f"empty input (no header): {p}")
        for col in required:
            if col not in reader.fieldnames:
                raise MissingColumnError(col, p)
        columns = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in columns:
                raw = row.get(name)
                if name in _TEXT_COLUMNS:
                    columns[name].append("" if raw is None else raw)
                else:
                    columns[name].append(
                        math.nan if raw in (None, "") else float(raw))
    if not columns[required[0]]:
        raise PlotDataError(f"no data rows in {p}")
    return columns


def _read_inputs(spec: PlotSpec):
    """Concatenate the input tables, keeping columns common to all."""
    required = REQUIRED_COLUMNS[spec.kind]
    tables = [_read_table(p, required) for p in spec.inputs]
    common = set(tables[0])
    for t in tables[1:]:
        common &= set(t)
    merged = {name: [] for name in common}
    for t in tables:
        for name in common:
            merged[name].extend(t[name])
    return merged


def _crossings(x, y, skip_origin=False):
    """Zero locations by linear interpolation between sign changes.

    An exact zero counts once.  With skip_origin the sample at x == 0
    is excluded from sign detection altogether: odd integrands are
    pinned there by symmetry, and the tabulated value is typically a
    roundoff-scale residual whose sign is noise.
    """
    def usable(i):
        if math.isnan(y[i]):
            return False
        return not (skip_origin and abs(x[i]) <= 1e-12)

    out = []
    for i in range(len(x) - 1):
        if not (usable(i) and usable(i + 1)):
            continue
        y0, y1 = y[i], y[i + 1]
        if y0 == 0.0:
            out.append(x[i])
        elif y0 * y1 < 0.0:
            out.append(x[i] + (x[i + 1] - x[i]) * y0 / (y0 - y1))
    if x and usable(len(x) - 1) and y[-1] == 0.0:
        out.append(x[-1])
    return tuple(out)


def _group(table, key_cols, x_col, y_col, label_fn):
    """Split rows into per-label (x, y) series sorted along x."""
    groups = {}
    n = len(table[x_col])
    for i in range(n):
        key = tuple(table[c][i] for c in key_cols)
        groups.setdefault(key, []).append((table[x_col][i], table[y_col][i]))
    out = {}
    for key in groups:  # insertion order follows the table
        pairs = sorted(groups[key])
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        out[label_fn(key)] = (xs, ys)
    return out


def _fmt_num(v) -> str:
    return f"{v:g}"


def _build_h_vs_D(ax, table):
    curves = _group(table, ("d", "alpha"), "D", "h",
                    lambda k: f"d={_fmt_num(k[0])} alpha={_fmt_num(k[1])}")
    crossings = {}
    for label, (xs, ys) in curves.items():
        ax.plot(xs, ys, label=label)
        crossings[label] = _crossings(xs, ys)
    ax.axhline(0.0, color="black", linewidth=0.8)
    return curves, crossings, {}


def _build_H_vs_u(ax, table):
    curves = _group(
        table, ("d", "alpha", "D"), "u", "H",
        lambda k: (f"d={_fmt_num(k[0])} alpha={_fmt_num(k[1])} "
                   f"D={_fmt_num(k[2])}"))
    crossings = {}
    for label, (xs, ys) in curves.items():
        ax.plot(xs, ys, label=label)
        # the origin is a symmetry zero, not a consistency root
        crossings[label] = _crossings(xs, ys, skip_origin=True)
    ax.axhline(0.0, color="black", linewidth=0.8)
    return curves, crossings, {}


def _build_bifurcation(ax, table):
    curves = _group(
        table, ("d", "alpha", "branch"), "D", "u",
        lambda k: f"d={_fmt_num(k[0])} alpha={_fmt_num(k[1])} {k[2]}")
    for label, (xs, ys) in curves.items():
        style = {"linestyle": "--"} if label.endswith("isotropic") else {}
        ax.plot(xs, ys, label=label, **style)
    return curves, {}, {}


def _build_entropy_decay(ax, table):
    t = table["time"]
    gap = table["free_energy_gap"]
    curves = {"free_energy_gap": (t, gap)}
    ax.plot(t, gap, label="free energy gap")
    if "rel_entropy" in table:
        curves["rel_entropy"] = (t, table["rel_entropy"])
        ax.plot(t, table["rel_entropy"], "--", label="relative entropy")
    ax.set_yscale("log")
    extras = {"decay_rate": None}
    pos = [(ti, gi) for ti, gi in zip(t, gap) if gi > 0.0]
    if len(pos) >= 2:
        ts = np.array([p[0] for p in pos])
        ls = np.log([p[1] for p in pos])
        slope = np.polyfit(ts, ls, 1)[0]
        extras["decay_rate"] = float(-slope)
        ax.annotate(f"fitted rate {-slope:.4g}", xy=(0.05, 0.05),
                    xycoords="axes fraction")
    return curves, {}, extras


def _build_gap_vs_D(ax, table):
    grouped = all(c in table for c in ("d", "alpha", "branch"))
    overlays = [c for c in ("c_variance_scaled", "c_poincare_scaled",
                            "predicted_rate") if c in table]
    curves = {}
    if grouped:
        keys = {}
        for i in range(len(table["D"])):
            keys.setdefault((table["d"][i], table["alpha"][i],
                             table["branch"][i]), []).append(i)
    else:
        keys = {(): list(range(len(table["D"])))}
    for key, idx in keys.items():
        prefix = (f"d={_fmt_num(key[0])} alpha={_fmt_num(key[1])} {key[2]} "
                  if key else "")
        order = sorted(idx, key=lambda i: table["D"][i])
        xs = [table["D"][i] for i in order]
        label = f"{prefix}c_opt".strip()
        ys = [table["c_opt"][i] for i in order]
        curves[label] = (xs, ys)
        ax.plot(xs, ys, marker="o", label=label)
        for col in overlays:
            olabel = f"{prefix}{col}".strip()
            oys = [table[col][i] for i in order]
            curves[olabel] = (xs, oys)
            ax.plot(xs, oys, "--", label=olabel)
    return curves, {}, {"overlays": tuple(overlays)}


_BUILDERS = {
    "h_vs_D": _build_h_vs_D,
    "H_vs_u": _build_H_vs_u,
    "bifurcation": _build_bifurcation,
    "entropy_decay": _build_entropy_decay,
    "gap_vs_D": _build_gap_vs_D,
}


def build(spec: PlotSpec):
    """Construct the figure; returns (matplotlib Figure, RenderSummary).

    The caller owns the figure (use render() for the save-and-close
    path).  The summary is complete before anything touches disk.
    """
    table = _read_inputs(spec)
    style = dict(spec.style)
    fig, ax = plt.subplots(figsize=style.get("figsize", (6.4, 4.8)))
    try:
        curves, crossings, extras = _BUILDERS[spec.kind](ax, table)
        xlabel, ylabel = _AXIS_LABELS[spec.kind]
        ax.set_xlabel(style.get("xlabel", xlabel))
        ax.set_ylabel(style.get("ylabel", ylabel))
        if "title" in style:
            ax.set_title(style["title"])
        ax.grid(True, alpha=0.3)
        if style.get("legend", len(curves) > 1):
            ax.legend(fontsize="small")
        summary = RenderSummary(kind=spec.kind, output=spec.output,
                                n_curves=len(curves),
                                labels=tuple(curves),
                                crossings=crossings, extras=extras)
    except Exception:
        plt.close(fig)
        raise
    return fig, summary


def render(spec: PlotSpec) -> RenderSummary:
    """Validate inputs, draw, and write the image file."""
    fig, summary = build(spec)
    try:
        out = Path(spec.output)
        if out.parent != Path("."):
            out.parent.mkdir(parents=True, exist_ok=True)
        # drop timestamps so reruns are byte-identical
        metadata = {".svg": {"Date": None},
                    ".pdf": {"CreationDate": None},
                    ".ps": {"CreationDate": None}}.get(out.suffix.lower())
        fig.savefig(out, dpi=spec.style.get("dpi", 150), metadata=metadata)
    finally:
        plt.close(fig)
    return summary
