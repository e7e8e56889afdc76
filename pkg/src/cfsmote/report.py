"""Sweep report files: tidy CSV, per-slice MAE matrices, Wilcoxon table, manifest and SVG plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .data import format_float
from .errors import DataError
from .evaluation import TWO_SIDED, Comparison, EvalResult, SweepReport, compare_cells, significance_stars

TIDY_COLUMNS = ("dataset_id", "ir", "method", "slice", "mae", "runtime_s")
WILCOXON_COLUMNS = ("reference", "method", "slice", "n", "w_statistic", "p_value", "significant", "stars", "note")


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format_float(v)


def _write_rows(path, header, rows):
    """Write CSV rows to a path or an open text stream."""
    if hasattr(path, "write"):
        w = csv.writer(path, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_tidy(cells: Iterable[EvalResult], path):
    _write_rows(
        path,
        TIDY_COLUMNS,
        ([c.dataset_id, _num(c.ir), c.method, c.slice, _num(c.mae), _num(c.runtime_seconds)] for c in cells),
    )


def read_tidy(path) -> list[EvalResult]:
    """Parse a tidy report; a blank ``mae`` marks a failed cell."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not rows or [h.strip() for h in rows[0]] != list(TIDY_COLUMNS):
        raise DataError(f"{path}: expected header {','.join(TIDY_COLUMNS)}")
    cells, seen = [], set()
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(TIDY_COLUMNS):
            raise DataError(f"{path}: row {n}: expected {len(TIDY_COLUMNS)} fields, got {len(row)}")
        dataset_id, ir, method, slice_, mae_text, runtime = row
        key = (dataset_id, method, slice_)
        if key in seen:
            raise DataError(f"{path}: row {n}: duplicate cell {key}")
        seen.add(key)
        try:
            ir_v = float(ir) if ir else math.nan
            mae_v = float(mae_text) if mae_text else math.nan
            rt = float(runtime) if runtime else None
        except ValueError:
            raise DataError(f"{path}: row {n}: non-numeric value") from None
        if mae_text and (not math.isfinite(mae_v) or mae_v < 0):
            raise DataError(f"{path}: row {n}: mae must be a finite non-negative number")
        status = "ok" if mae_text else "failed"
        cells.append(EvalResult(method, dataset_id, slice_, mae_v, 1, rt, ir_v, status))
    if not cells:
        raise DataError(f"{path}: report has no cells")
    _check_grid(cells, path)
    return cells


def _check_grid(cells, path):
    datasets = {c.dataset_id for c in cells}
    methods = {c.method for c in cells}
    slices = {c.slice for c in cells}
    if len(cells) != len(datasets) * len(methods) * len(slices):
        raise DataError(f"{path}: report is not a complete dataset x method x slice grid")


def comparisons_from_cells(cells, reference: str, sided: str = TWO_SIDED) -> list[Comparison]:
    methods = list(dict.fromkeys(c.method for c in cells))
    if reference not in methods:
        raise DataError(f"reference method {reference!r} not in report (methods: {', '.join(methods)})")
    slices = list(dict.fromkeys(c.slice for c in cells))
    return compare_cells(list(cells), reference, methods, slices, sided)


def write_wilcoxon(comparisons: Iterable[Comparison], path, alpha: float = 0.05):
    rows = []
    for c in comparisons:
        o = c.outcome
        if o is None:
            rows.append([c.reference, c.other, c.slice, c.n_datasets, "", "", "False", "NS", c.note or ""])
        else:
            rows.append(
                [
                    c.reference,
                    c.other,
                    c.slice,
                    c.n_datasets,
                    _num(o.w_statistic),
                    _num(o.p_value),
                    str(o.p_value < alpha),
                    significance_stars(o.p_value),
                    "" if o.exact else "normal approximation",
                ]
            )
    _write_rows(path, WILCOXON_COLUMNS, rows)


def mae_matrix(cells, slice_: str) -> tuple[list[str], list[str], np.ndarray, dict[str, float]]:
    """Datasets x methods MAE for one slice (NaN for failed cells)."""
    cells = [c for c in cells if c.slice == slice_]
    datasets = list(dict.fromkeys(c.dataset_id for c in cells))
    methods = list(dict.fromkeys(c.method for c in cells))
    M = np.full((len(datasets), len(methods)), np.nan)
    ir = {}
    for c in cells:
        M[datasets.index(c.dataset_id), methods.index(c.method)] = c.mae
        ir[c.dataset_id] = c.ir
    return datasets, methods, M, ir


def write_matrix(cells, slice_: str, path):
    datasets, methods, M, ir = mae_matrix(cells, slice_)
    rows = [[d, _num(ir[d]), *(_num(v) for v in M[i])] for i, d in enumerate(datasets)]
    _write_rows(path, ["dataset_id", "ir", *methods], rows)


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def _figure():
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "cfsmote"
    from matplotlib.figure import Figure

    return Figure(figsize=(7, 4))


def _save_svg(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_mae_vs_ir(cells, path):
    """One panel per slice, MAE against IR (log scale) per method."""
    slices = list(dict.fromkeys(c.slice for c in cells))
    fig = _figure()
    fig.set_size_inches(4.0 * len(slices), 3.6)
    axes = fig.subplots(1, len(slices), squeeze=False)[0]
    for ax, s in zip(axes, slices):
        datasets, methods, M, ir = mae_matrix(cells, s)
        x = np.array([ir[d] for d in datasets])
        order = np.argsort(x, kind="stable")
        for j, m in enumerate(methods):
            ax.plot(x[order], M[order, j], marker="o", ms=3, label=m)
        if np.all(np.isfinite(x)) and np.all(x > 0):
            ax.set_xscale("log")
        ax.set_title(s)
        ax.set_xlabel("imbalance ratio")
    axes[0].set_ylabel("MAE")
    axes[-1].legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)


def plot_runtime(runtimes: Mapping[str, float], path):
    fig = _figure()
    ax = fig.subplots()
    names = list(runtimes)
    ax.bar(names, [runtimes[n] for n in names], color="tab:blue")
    ax.set_ylabel("seconds (mean)")
    ax.set_title("augmentation runtime")
    ax.tick_params(axis="x", labelsize=8)
    fig.tight_layout()
    _save_svg(fig, path)


def mean_runtimes(cells) -> dict[str, float]:
    out = {}
    for m in dict.fromkeys(c.method for c in cells):
        t = [c.runtime_seconds for c in cells if c.method == m and c.runtime_seconds is not None]
        if t:
            out[m] = float(np.mean(t))
    return out


def write_report(report: SweepReport, out_dir, plots: bool = True) -> list[Path]:
    """Write every report artifact into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def track(p):
        written.append(p)
        return p

    write_tidy(report.cells, track(out / "report.csv"))
    for s in report.slices:
        write_matrix(report.cells, s, track(out / f"mae_{_safe(s)}.csv"))
    write_wilcoxon(report.comparisons, track(out / "wilcoxon.csv"))
    write_json(report.manifest, track(out / "manifest.json"))
    if plots:
        plot_mae_vs_ir(report.cells, track(out / "mae_vs_ir.svg"))
        runtimes = mean_runtimes(report.cells)
        if runtimes:
            plot_runtime(runtimes, track(out / "runtime.svg"))
    return written
