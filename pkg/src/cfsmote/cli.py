"""``cfsmote`` command line: gen, label, augment, train-eval, sweep, stats, bench.

Settings resolve as flags > ``--config`` JSON > ``CFSMOTE_SEED`` (seed only)
> built-in defaults. Every command writes a JSON manifest whose ``settings``
block can be passed back through ``--config`` to reproduce the run.

Exit codes: 0 success (including a partially failed sweep), 1 usage error,
2 data error, 3 method failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import BoundaryMode, Dataset, class_stats, compute_boundary, label_classes, read_csv, write_csv
from .errors import CFSmoteError, DataError, MethodError
from .evaluation import (
    TWO_SIDED,
    MethodSpec,
    PredictorConfig,
    SweepDataset,
    bench_runtime_raw,
    mae,
    run_sweep,
    split_slices,
)
from .neighbors import KNNRegressor, fit_normalizer
from .oversampling import PARITY, PROVENANCE_COLUMNS, AugmenterConfig, Method, augment_with_result
from .report import comparisons_from_cells, plot_runtime, read_tidy, write_json, write_report, write_wilcoxon
from .synthgen import SynthConfig, generate, generate_test, make_ir_grid, table1_grid

log = logging.getLogger("cfsmote")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_METHOD = 0, 1, 2, 3
SEED_ENV = "CFSMOTE_SEED"
ALL_METHODS = [m.value for m in Method]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


AUGMENT_DEFAULTS = {
    "method": "cfa-smote",
    "target_count": PARITY,
    "k": 5,
    "normalization": "zscore",
    "borderline_m": 5,
    "truncation": 1.0,
    "deformation": 0.0,
    "mode": "seasonal",
    "multiplier": 2.0,
}

DEFAULTS = {
    "gen": {"preset": None, "scale": 0.1, "majority": 3272, "minority": 381, "test_per_slice": 200, "synth": {}, "out": None},
    "label": {"input": None, "out": None, "boundary_from": None, "boundary_out": None, "mode": "seasonal", "multiplier": 2.0,
              "target": "growth", "climate": None},
    "augment": {"input": None, "out": None, "diagnostics": None, "target": "growth", "climate": None, "timing": False,
                **AUGMENT_DEFAULTS},
    "train-eval": {"train": None, "test": None, "out": None, "predictor_k": 5, "target": "growth", "climate": None,
                   **AUGMENT_DEFAULTS},
    "sweep": {"data_dir": None, "preset": None, "scale": 0.1, "synth": {}, "methods": ALL_METHODS, "reference": "cfa-smote",
              "sided": TWO_SIDED, "predictor_k": 5, "jobs": 1, "timing": False, "plots": True, "out": None,
              "target": "growth", "climate": None, "augmenter": {}},
    "stats": {"report": None, "reference": "cfa-smote", "sided": TWO_SIDED, "alpha": 0.05, "out": None},
    "bench": {"input": None, "preset": None, "dataset": "D5", "scale": 0.1, "synth": {}, "methods": ALL_METHODS,
              "repetitions": 5, "out": None, "plots": True, "target": "growth", "climate": None, "augmenter": {}},
}
REQUIRED = {
    "gen": ["out"],
    "label": ["input", "out"],
    "augment": ["input", "out"],
    "train-eval": ["train", "test"],
    "sweep": ["out"],
    "stats": ["report"],
    "bench": ["out"],
}


# --- parser ---------------------------------------------------------------------


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _target_count(text: str):
    if text == PARITY:
        return PARITY
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'parity' or a non-negative integer") from None
    if v < 0:
        raise argparse.ArgumentTypeError("target count must be >= 0")
    return v


def _add_common(p):
    p.add_argument("--config", help="JSON settings file (or a manifest written by a previous run)")
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_schema(p):
    p.add_argument("--target", help="target column (default growth)")
    p.add_argument("--climate", type=_csv_list, help="comma-separated climate columns (default rainfall,temperature,solar)")


def _add_augmenter(p, single=True):
    if single:
        p.add_argument("--method", choices=ALL_METHODS, help="oversampler (default cfa-smote)")
    p.add_argument("--target-count", dest="target_count", type=_target_count, help="synthetic rows to add, or 'parity'")
    p.add_argument("--k", type=int, help="SMOTE neighbour count (default 5)")
    p.add_argument("--normalization", choices=["zscore", "minmax", "none"])
    p.add_argument("--borderline-m", dest="borderline_m", type=int, help="B-SMOTE danger neighbourhood (default 5)")
    p.add_argument("--truncation", type=float, help="G-SMOTE truncation factor in [-1, 1]")
    p.add_argument("--deformation", type=float, help="G-SMOTE deformation factor in [0, 1]")
    _add_boundary(p)


def _add_boundary(p):
    p.add_argument("--mode", choices=[m.value for m in BoundaryMode], help="boundary statistics (default seasonal)")
    p.add_argument("--multiplier", type=float, help="boundary width in standard deviations (default 2.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfsmote", description="Counterfactual oversampling for outlier-regime regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    kw = {"argument_default": argparse.SUPPRESS}

    p = sub.add_parser("gen", help="write synthetic datasets", **kw)
    p.add_argument("--preset", choices=["table1"], help="the twelve-row imbalance grid")
    p.add_argument("--scale", type=float, help="grid scale factor (default 0.1)")
    p.add_argument("--majority", type=int)
    p.add_argument("--minority", type=int)
    p.add_argument("--test-per-slice", dest="test_per_slice", type=int)
    p.add_argument("--out", help="output directory")
    _add_common(p)

    p = sub.add_parser("label", help="label rows with the sigma boundary", **kw)
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--boundary-from", dest="boundary_from", help="CSV to fit the boundary on (default: --input)")
    p.add_argument("--boundary-out", dest="boundary_out", help="where to write the fitted boundary JSON")
    _add_boundary(p)
    _add_schema(p)
    _add_common(p)

    p = sub.add_parser("augment", help="oversample a labeled CSV with one method", **kw)
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--diagnostics", help="diagnostics JSON path (default: <out>.diagnostics.json)")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in diagnostics")
    _add_augmenter(p)
    _add_schema(p)
    _add_common(p)

    p = sub.add_parser("train-eval", help="augment, fit k-NN and score MAE per test slice", **kw)
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--out", help="JSON results path")
    p.add_argument("--predictor-k", dest="predictor_k", type=int, help="k of the k-NN regressor (default 5)")
    _add_augmenter(p)
    _add_schema(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="run every method on every dataset", **kw)
    p.add_argument("--data-dir", dest="data_dir", help="directory of training CSVs plus a shared test.csv")
    p.add_argument("--preset", choices=["table1"], help="generate the imbalance grid in memory")
    p.add_argument("--scale", type=float)
    p.add_argument("--methods", type=_csv_list, help="comma-separated method list (default: all six)")
    p.add_argument("--reference", help="method compared against the others (default cfa-smote)")
    p.add_argument("--sided", choices=[TWO_SIDED, "less", "greater"])
    p.add_argument("--predictor-k", dest="predictor_k", type=int)
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--timing", action="store_true", help="record augmentation runtimes (not byte-reproducible)")
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.add_argument("--manifest", help="rerun from a previous sweep manifest (same as --config)")
    p.add_argument("--out", help="report directory")
    _add_schema(p)
    _add_common(p)

    p = sub.add_parser("stats", help="pairwise Wilcoxon table from a tidy report", **kw)
    p.add_argument("--report")
    p.add_argument("--reference")
    p.add_argument("--sided", choices=[TWO_SIDED, "less", "greater"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", help="CSV path (default: print to stdout)")
    _add_common(p)

    p = sub.add_parser("bench", help="time the augmentation step per method", **kw)
    p.add_argument("--input", help="labeled CSV (default: a generated grid dataset)")
    p.add_argument("--preset", choices=["table1"])
    p.add_argument("--dataset", help="grid row to benchmark (default D5)")
    p.add_argument("--scale", type=float)
    p.add_argument("--methods", type=_csv_list)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.add_argument("--out", help="output directory")
    _add_schema(p)
    _add_common(p)
    return parser


# --- settings -------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return dict(obj.get("settings", obj))


def env_seed() -> int | None:
    text = os.environ.get(SEED_ENV)
    if text is None or text.strip() == "":
        return None
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {text!r}") from None


def resolve_settings(command: str, ns: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS[command])
    settings["seed"] = 0
    seed = env_seed()
    if seed is not None:
        settings["seed"] = seed
    config_path = getattr(ns, "manifest", None) or getattr(ns, "config", None)
    if config_path:
        cfg = load_config(config_path)
        unknown = set(cfg) - set(settings)
        if unknown:
            raise UsageError(f"unknown {command} setting(s) in {config_path}: {', '.join(sorted(unknown))}")
        settings.update(cfg)
    for key, value in vars(ns).items():
        if key in ("command", "config", "manifest", "verbose"):
            continue
        settings[key] = value
    missing = [k for k in REQUIRED[command] if settings.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return settings


def augmenter_config(settings: dict, method=None, seed=None) -> AugmenterConfig:
    method = Method.parse(method if method is not None else settings["method"])
    normalization = settings["normalization"]
    base = {
        "method": method,
        "smote_k": int(settings["k"]),
        "target_count": settings["target_count"],
        "seed": int(settings["seed"] if seed is None else seed),
        "normalization": None if normalization == "none" else normalization,
        "borderline_m": int(settings["borderline_m"]),
        "truncation": float(settings["truncation"]),
        "deformation": float(settings["deformation"]),
        "boundary_mode": settings["mode"],
        "boundary_multiplier": float(settings["multiplier"]),
    }
    try:
        return AugmenterConfig(**base)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sweep_augmenter(settings: dict, method) -> AugmenterConfig:
    merged = {**AUGMENT_DEFAULTS, **settings.get("augmenter", {})}
    unknown = set(settings.get("augmenter", {})) - set(AUGMENT_DEFAULTS)
    if unknown:
        raise UsageError(f"unknown augmenter setting(s): {', '.join(sorted(unknown))}")
    merged["seed"] = settings["seed"]
    return augmenter_config(merged, method)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(command: str, settings: dict, **extra) -> dict:
    return {"command": command, "version": __version__, "settings": _jsonable(settings), **extra}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value"):
        return obj.value
    return obj


def _read(path, settings) -> Dataset:
    return read_csv(path, target=settings.get("target", "growth"), climate=settings.get("climate"))


def _synth_config(settings) -> SynthConfig:
    try:
        cfg = SynthConfig.from_dict(settings.get("synth") or {})
    except TypeError as exc:
        raise UsageError(f"invalid synth settings: {exc}") from None
    return replace(cfg, seed=int(settings["seed"]))


def _grid(settings) -> list[tuple[str, Dataset]]:
    base = _synth_config(settings)
    names = [name for name, _, _ in table1_grid(settings["scale"])]
    return list(zip(names, make_ir_grid(base, scale=settings["scale"])))


def _echo(text=""):
    print(text)


# --- commands -------------------------------------------------------------------


def cmd_gen(settings) -> int:
    out = Path(settings["out"])
    base = _synth_config(settings)
    base = replace(base, test_per_slice=int(settings["test_per_slice"]))
    files = {}
    if settings["preset"] == "table1":
        if settings["scale"] <= 0:
            raise UsageError("--scale must be positive")
        for name, data in _grid(settings):
            write_csv(data, out / f"{name}.csv")
            files[f"{name}.csv"] = out / f"{name}.csv"
    else:
        data = generate(replace(base, majority_count=int(settings["majority"]), minority_count=int(settings["minority"])))
        write_csv(data, out / "train.csv")
        files["train.csv"] = out / "train.csv"
    test = generate_test(base)
    write_csv(test, out / "test.csv")
    files["test.csv"] = out / "test.csv"
    write_json(
        _manifest("gen", settings, synth=base.to_dict(), files={k: _sha256(v) for k, v in files.items()}),
        out / "manifest.json",
    )
    for name, path in files.items():
        _echo(f"wrote {path}")
    return EXIT_OK


def cmd_label(settings) -> int:
    data = _read(settings["input"], settings)
    fit_on = _read(settings["boundary_from"], settings) if settings["boundary_from"] else data
    boundary = compute_boundary(fit_on, settings["mode"], float(settings["multiplier"]))
    labeled = label_classes(data, boundary)
    out = Path(settings["out"])
    write_csv(labeled, out)
    boundary_out = Path(settings["boundary_out"] or out.with_suffix(".boundary.json"))
    write_json(boundary.to_dict(), boundary_out)
    write_json(_manifest("label", settings), out.with_suffix(".manifest.json"))
    stats = class_stats(labeled)
    _echo(f"{out}: {stats.majority_count} majority, {stats.minority_count} minority, IR {stats.imbalance_ratio:.3f}")
    return EXIT_OK


def _ensure_labeled(data: Dataset, settings) -> Dataset:
    if data.is_labeled:
        return data
    mode = settings["mode"]
    if mode == BoundaryMode.SEASONAL.value and data.schema.seasonal_index is None:
        mode = BoundaryMode.GLOBAL.value
    log.info("input has no labels; fitting a %s boundary on it", mode)
    return label_classes(data, compute_boundary(data, mode, float(settings["multiplier"])))


def cmd_augment(settings) -> int:
    config = augmenter_config(settings)
    out = Path(settings["out"])
    diagnostics_path = Path(settings["diagnostics"] or out.with_suffix(".diagnostics.json"))
    data = _ensure_labeled(_read(settings["input"], settings), settings)
    if config.method is Method.BASELINE:
        out.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(settings["input"], out)
        diagnostics = {"n_synthetic": 0}
    else:
        augmented, result = augment_with_result(data, config)
        n_orig = len(data)
        prov = result.provenance_columns()
        extra = {"synthetic": [0] * n_orig + [1] * len(result)}
        for col in PROVENANCE_COLUMNS:
            values = prov[col]
            extra[col] = [math.nan if col == "delta" else None] * n_orig + list(values)
        write_csv(augmented, out, extra)
        diagnostics = dict(result.diagnostics)
        if not settings["timing"]:
            diagnostics.pop("seconds", None)
    write_json(_jsonable({"method": config.method.value, "config": config.to_dict(), "diagnostics": diagnostics}), diagnostics_path)
    write_json(_manifest("augment", settings), out.with_suffix(".manifest.json"))
    _echo(f"{out}: {diagnostics.get('n_synthetic', 0)} synthetic rows added by {config.method.display}")
    return EXIT_OK


def cmd_train_eval(settings) -> int:
    config = augmenter_config(settings)
    train = _ensure_labeled(_read(settings["train"], settings), settings)
    test = _read(settings["test"], settings)
    augmented, result = augment_with_result(train, config)
    predictor = PredictorConfig(int(settings["predictor_k"]), config.normalization or "none")
    normalizer = fit_normalizer(train.X, predictor.normalization)
    model = KNNRegressor(predictor.k, predictor.normalization, normalizer=normalizer).fit(augmented)
    pred = model.predict(test.X)
    rows = [{"slice": s, "n_test": int(idx.size), "mae": mae(test.y[idx], pred[idx])} for s, idx in split_slices(test)]
    for r in rows:
        _echo(f"{config.method.display}\t{r['slice']}\tn={r['n_test']}\tMAE={r['mae']:.4f}")
    if settings["out"]:
        out = Path(settings["out"])
        write_json(
            _manifest(
                "train-eval",
                settings,
                method=config.method.value,
                n_synthetic=len(result),
                results=rows,
                ir=_jsonable(class_stats(train).imbalance_ratio),
            ),
            out,
        )
    return EXIT_OK


def _sweep_datasets(settings) -> tuple[list[SweepDataset], dict]:
    if settings["data_dir"] and settings["preset"]:
        raise UsageError("use either --data-dir or --preset, not both")
    if settings["data_dir"]:
        root = Path(settings["data_dir"])
        test_path = root / "test.csv"
        if not test_path.is_file():
            raise DataError(f"{root}: expected a shared test.csv")
        train_paths = sorted(p for p in root.glob("*.csv") if p.name != "test.csv")
        if not train_paths:
            raise DataError(f"{root}: no training CSVs found")
        hashes = {p.name: _sha256(p) for p in [*train_paths, test_path]}
        test = _read(test_path, settings)
        datasets = [SweepDataset(p.stem, _ensure_labeled(_read(p, settings), settings), test) for p in train_paths]
        return datasets, {"kind": "directory", "path": str(root), "sha256": hashes}
    if settings["preset"] == "table1":
        base = _synth_config(settings)
        test = generate_test(base)
        datasets = [SweepDataset(name, data, test) for name, data in _grid(settings)]
        return datasets, {"kind": "preset", "preset": "table1", "scale": settings["scale"], "synth": base.to_dict()}
    raise UsageError("sweep needs --data-dir or --preset")


def cmd_sweep(settings) -> int:
    datasets, source = _sweep_datasets(settings)
    try:
        methods = [Method.parse(m) for m in settings["methods"]]
        reference = Method.parse(settings["reference"]).display
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    specs = [MethodSpec(m.display, _sweep_augmenter(settings, m)) for m in methods]
    predictor = PredictorConfig(int(settings["predictor_k"]), specs[0].config.normalization or "none")
    try:
        report = run_sweep(
            datasets,
            specs,
            predictor,
            int(settings["seed"]),
            reference=reference,
            sided=settings["sided"],
            timing=bool(settings["timing"]),
            jobs=int(settings["jobs"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report.manifest = _manifest("sweep", settings, data=source, run=report.manifest)
    write_report(report, settings["out"], plots=bool(settings["plots"]))
    failed = [c for c in report.cells if not c.ok]
    _echo(f"{len(report.cells)} cells ({len(failed)} failed) written to {settings['out']}")
    for c in report.comparisons:
        if c.outcome is not None:
            _echo(f"{c.reference} vs {c.other}\t{c.slice}\tp={c.outcome.p_value:.4g}")
    if failed and len(failed) == len(report.cells):
        log.error("every cell failed")
        return EXIT_METHOD
    return EXIT_OK


def cmd_stats(settings) -> int:
    cells = read_tidy(settings["report"])
    try:
        reference = Method.parse(settings["reference"]).display
    except ValueError:
        reference = settings["reference"]
    comparisons = comparisons_from_cells(cells, reference, settings["sided"])
    if settings["out"]:
        write_wilcoxon(comparisons, settings["out"], float(settings["alpha"]))
        _echo(f"wrote {settings['out']}")
    else:
        write_wilcoxon(comparisons, sys.stdout, float(settings["alpha"]))
    return EXIT_OK


def cmd_bench(settings) -> int:
    if settings["input"]:
        data = _ensure_labeled(_read(settings["input"], settings), settings)
        source = {"kind": "file", "path": settings["input"], "sha256": _sha256(settings["input"])}
    else:
        grid = dict(_grid(settings))
        if settings["dataset"] not in grid:
            raise UsageError(f"unknown grid dataset {settings['dataset']!r}; expected one of {', '.join(grid)}")
        data = grid[settings["dataset"]]
        source = {"kind": "preset", "dataset": settings["dataset"], "scale": settings["scale"]}
    specs = [MethodSpec(Method.parse(m).display, _sweep_augmenter(settings, m)) for m in settings["methods"]]
    raw = bench_runtime_raw(data, specs, int(settings["repetitions"]), int(settings["seed"]))
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    means = {k: float(np.mean(v)) for k, v in raw.items()}
    with open(out / "bench.csv", "w") as fh:
        fh.write("method,repetitions,mean_s,min_s,max_s\n")
        for k, v in raw.items():
            fh.write(f"{k},{len(v)},{means[k]!r},{min(v)!r},{max(v)!r}\n")
    if settings["plots"]:
        plot_runtime(means, out / "runtime.svg")
    write_json(_manifest("bench", settings, data=source), out / "manifest.json")
    for k, v in means.items():
        _echo(f"{k}\t{v:.4f} s")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "label": cmd_label,
    "augment": cmd_augment,
    "train-eval": cmd_train_eval,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(ns.command, ns)
        return COMMANDS[ns.command](settings)
    except UsageError as exc:
        print(f"cfsmote {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MethodError as exc:
        print(f"cfsmote {ns.command}: method failed: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except (DataError, OSError) as exc:
        print(f"cfsmote {ns.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CFSmoteError as exc:
        print(f"cfsmote {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_METHOD


if __name__ == "__main__":
    sys.exit(main())
