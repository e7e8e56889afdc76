"""Scoring, significance testing, runtime benchmarking and sweep orchestration."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._rng import derive_seed
from .data import Dataset, class_stats
from .errors import CFSmoteError, DataError, DegenerateTestError
from .neighbors import KNNRegressor, fit_normalizer
from .oversampling import AugmentationResult, AugmenterConfig, Method, augment_with_result

log = logging.getLogger(__name__)

TWO_SIDED = "two-sided"
ONE_SIDED_LESS = "less"
ONE_SIDED_GREATER = "greater"
EXACT_MAX_N = 25
ALL_SLICE = "all"


def mae(actual, predicted) -> float:
    """Mean absolute error."""
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if a.shape != p.shape:
        raise DataError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise DataError("mae of an empty sequence")
    return float(np.mean(np.abs(a - p)))


# --- Wilcoxon signed-rank -----------------------------------------------------


@dataclass(frozen=True)
class WilcoxonOutcome:
    w_statistic: float
    n_effective: int
    p_value: float
    sided: str
    w_plus: float
    w_minus: float
    exact: bool


def midranks(values) -> np.ndarray:
    """1-based ranks with ties replaced by the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def signed_rank_counts(doubled_ranks: Sequence[int]) -> np.ndarray:
    """``counts[s]`` = number of sign assignments whose doubled positive rank sum is ``s``."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b, sided: str = TWO_SIDED, exact_max_n: int = EXACT_MAX_N) -> WilcoxonOutcome:
    """Paired Wilcoxon signed-rank test on ``d = a - b``.

    Zero differences are dropped and tied magnitudes get mid-ranks. Up to
    ``exact_max_n`` non-zero pairs the p-value is exact (the null
    distribution of the positive rank sum, counted over all sign
    assignments); above that a tie-corrected normal approximation without
    continuity correction is used. ``"less"`` tests whether ``a`` tends to be
    smaller than ``b``.
    """
    if sided not in (TWO_SIDED, ONE_SIDED_LESS, ONE_SIDED_GREATER):
        raise ValueError(f"unknown alternative {sided!r}")
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size == 0:
        raise DataError("wilcoxon needs two equal-length, non-empty sequences")
    d = a - b
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())

    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = signed_rank_counts(doubled)
        obs = int(doubled[d > 0].sum())
        total = float(2**n)
        lower = counts[: obs + 1].sum() / total
        upper = counts[obs:].sum() / total
        exact = True
    else:
        _, tie_counts = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
        z = (w_plus - mean) / math.sqrt(var)
        lower = 0.5 * math.erfc(-z / math.sqrt(2))
        upper = 0.5 * math.erfc(z / math.sqrt(2))
        exact = False
    if sided == TWO_SIDED:
        p = min(1.0, 2.0 * min(lower, upper))
    elif sided == ONE_SIDED_LESS:
        p = lower
    else:
        p = upper
    return WilcoxonOutcome(min(w_plus, w_minus), n, float(min(max(p, 0.0), 1.0)), sided, w_plus, w_minus, exact)


def significance_stars(p: float | None) -> str:
    """``***``/``**``/``*`` for p below 0.001/0.01/0.05, ``NS`` otherwise."""
    if p is None or not math.isfinite(p):
        return "NS"
    for level, stars in ((0.001, "***"), (0.01, "**"), (0.05, "*")):
        if p < level:
            return stars
    return "NS"


# --- sweep ----------------------------------------------------------------------


@dataclass(frozen=True)
class PredictorConfig:
    k: int = 5
    normalization: str = "zscore"

    def to_dict(self) -> dict:
        return {"k": self.k, "normalization": self.normalization}


@dataclass(frozen=True)
class MethodSpec:
    """A sweep entry: report label plus augmenter configuration."""

    label: str
    config: AugmenterConfig

    @classmethod
    def of(cls, method, **overrides) -> "MethodSpec":
        m = Method.parse(method)
        return cls(m.display, AugmenterConfig(method=m, **overrides))


def method_specs(methods) -> list[MethodSpec]:
    specs, seen = [], {}
    for m in methods:
        spec = m if isinstance(m, MethodSpec) else MethodSpec.of(m)
        count = seen.get(spec.label, 0)
        seen[spec.label] = count + 1
        if count:
            spec = replace(spec, label=f"{spec.label}#{count + 1}")
        specs.append(spec)
    return specs


@dataclass(frozen=True)
class SweepDataset:
    dataset_id: str
    train: Dataset
    test: Dataset


@dataclass(frozen=True)
class EvalResult:
    method: str
    dataset_id: str
    slice: str
    mae: float
    n_test: int
    runtime_seconds: float | None
    ir: float
    status: str = "ok"
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class Comparison:
    reference: str
    other: str
    slice: str
    n_datasets: int
    outcome: WilcoxonOutcome | None
    note: str | None = None

    @property
    def p_value(self) -> float | None:
        return None if self.outcome is None else self.outcome.p_value


@dataclass
class SweepReport:
    cells: list[EvalResult]
    comparisons: list[Comparison]
    manifest: dict
    results: dict = field(default_factory=dict, repr=False)

    def cell(self, dataset_id: str, method: str, slice_: str) -> EvalResult:
        for c in self.cells:
            if (c.dataset_id, c.method, c.slice) == (dataset_id, method, slice_):
                return c
        raise KeyError((dataset_id, method, slice_))

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(c.method for c in self.cells))

    @property
    def dataset_ids(self) -> list[str]:
        return list(dict.fromkeys(c.dataset_id for c in self.cells))

    @property
    def slices(self) -> list[str]:
        return list(dict.fromkeys(c.slice for c in self.cells))


def split_slices(test: Dataset) -> list[tuple[str, np.ndarray]]:
    if test.slices is None:
        return [(ALL_SLICE, np.arange(len(test)))]
    names = list(dict.fromkeys(test.slices))
    arr = np.array(test.slices)
    return [(s, np.flatnonzero(arr == s)) for s in names]


def cell_seed(master_seed: int, dataset_id: str, method: Method) -> int:
    # Keyed by method kind, not label, so a duplicated entry reproduces its twin.
    return derive_seed(master_seed, "cell", dataset_id, method.value)


def _run_cell(ds: SweepDataset, spec: MethodSpec, predictor: PredictorConfig, seed: int, timing: bool, keep: bool):
    stats = class_stats(ds.train)
    config = replace(spec.config, seed=cell_seed(seed, ds.dataset_id, spec.config.method))
    slices = split_slices(ds.test)
    try:
        started = time.perf_counter()
        train, result = augment_with_result(ds.train, config)
        elapsed = time.perf_counter() - started
        normalizer = fit_normalizer(ds.train.X, predictor.normalization)
        model = KNNRegressor(predictor.k, predictor.normalization, normalizer=normalizer).fit(train)
        pred = model.predict(ds.test.X)
    except CFSmoteError as exc:
        log.warning("%s on %s failed: %s", spec.label, ds.dataset_id, exc)
        cells = [
            EvalResult(spec.label, ds.dataset_id, name, math.nan, int(idx.size), None, stats.imbalance_ratio, "failed", str(exc))
            for name, idx in slices
        ]
        return cells, None
    cells = [
        EvalResult(
            spec.label,
            ds.dataset_id,
            name,
            mae(ds.test.y[idx], pred[idx]),
            int(idx.size),
            elapsed if timing else None,
            stats.imbalance_ratio,
        )
        for name, idx in slices
    ]
    return cells, (result if keep else None)


def compare_cells(cells: list[EvalResult], reference: str, methods: list[str], slices: list[str], sided: str) -> list[Comparison]:
    by_key = {(c.dataset_id, c.method, c.slice): c for c in cells}
    datasets = list(dict.fromkeys(c.dataset_id for c in cells))
    out = []
    for other in methods:
        if other == reference:
            continue
        for s in slices:
            pairs = [
                (by_key[(d, reference, s)].mae, by_key[(d, other, s)].mae)
                for d in datasets
                if by_key[(d, reference, s)].ok and by_key[(d, other, s)].ok
            ]
            if not pairs:
                out.append(Comparison(reference, other, s, 0, None, "no paired successful cells"))
                continue
            a, b = zip(*pairs)
            try:
                outcome = wilcoxon_signed_rank(a, b, sided)
                out.append(Comparison(reference, other, s, len(pairs), outcome))
            except DegenerateTestError as exc:
                out.append(Comparison(reference, other, s, len(pairs), None, f"degenerate: {exc}"))
    return out


def run_sweep(
    datasets: Sequence[SweepDataset],
    methods,
    predictor_config: PredictorConfig = PredictorConfig(),
    seed: int = 0,
    *,
    reference: str = Method.CFA_SMOTE.display,
    sided: str = TWO_SIDED,
    timing: bool = False,
    jobs: int = 1,
    keep_results: bool = False,
) -> SweepReport:
    """Augment, fit and score every (dataset, method) pair; compare ``reference`` to the rest.

    Each cell derives its own seed from ``seed``, the dataset id and the
    method kind, so the report does not depend on execution order or ``jobs``.
    Runtimes are recorded only when ``timing`` is set, which keeps the
    report byte-reproducible otherwise.
    """
    datasets = list(datasets)
    specs = method_specs(methods)
    if not datasets or not specs:
        raise ValueError("run_sweep needs at least one dataset and one method")
    if not any(s.config.method is Method.BASELINE for s in specs):
        raise ValueError("methods must include a baseline (no augmentation) entry")
    ids = [d.dataset_id for d in datasets]
    if len(set(ids)) != len(ids):
        raise ValueError("dataset ids must be unique")

    tasks = [(ds, spec) for ds in datasets for spec in specs]
    if timing and jobs > 1:
        log.info("timing requested: running cells serially to avoid contention")
        jobs = 1
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, ds, spec, predictor_config, seed, timing, keep_results) for ds, spec in tasks]
            outputs = [f.result() for f in futures]
    else:
        outputs = [_run_cell(ds, spec, predictor_config, seed, timing, keep_results) for ds, spec in tasks]

    cells: list[EvalResult] = []
    results = {}
    for (ds, spec), (cell_rows, result) in zip(tasks, outputs):
        cells.extend(cell_rows)
        if result is not None:
            results[(ds.dataset_id, spec.label)] = result
    slices = list(dict.fromkeys(c.slice for c in cells))
    labels = [s.label for s in specs]
    comparisons = compare_cells(cells, reference, labels, slices, sided) if reference in labels else []

    manifest = {
        "seed": int(seed),
        "reference": reference,
        "sided": sided,
        "timing": bool(timing),
        "predictor": predictor_config.to_dict(),
        "methods": [{"label": s.label, "config": s.config.to_dict()} for s in specs],
        "datasets": [
            {
                "dataset_id": d.dataset_id,
                "n_train": len(d.train),
                "n_test": len(d.test),
                "majority": class_stats(d.train).majority_count,
                "minority": class_stats(d.train).minority_count,
                "normalization": _normalizer_dict(d.train, predictor_config),
                "cell_seeds": {s.label: cell_seed(seed, d.dataset_id, s.config.method) for s in specs},
            }
            for d in datasets
        ],
    }
    return SweepReport(cells, comparisons, manifest, results)


def _normalizer_dict(train: Dataset, predictor: PredictorConfig) -> dict | None:
    normalizer = fit_normalizer(train.X, predictor.normalization)
    return None if normalizer is None else normalizer.to_dict()


def bench_runtime(dataset: Dataset, methods, repetitions: int = 5, seed: int = 0) -> dict[str, float]:
    """Mean wall-clock seconds of the augmentation step per method."""
    return {label: float(np.mean(times)) for label, times in bench_runtime_raw(dataset, methods, repetitions, seed).items()}


def bench_runtime_raw(dataset: Dataset, methods, repetitions: int = 5, seed: int = 0) -> dict[str, list[float]]:
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    out = {}
    for spec in method_specs(methods):
        config = replace(spec.config, seed=cell_seed(seed, "bench", spec.config.method))
        times = []
        for _ in range(repetitions):
            started = time.perf_counter()
            augment_with_result(dataset, config)
            times.append(time.perf_counter() - started)
        out[spec.label] = times
    return out
