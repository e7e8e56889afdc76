"""Synthetic farm-week data with a planted extreme-weather regime.

Rows carry ``week, cover, rainfall, temperature, solar`` and a daily grass
growth target. Normal-weather (majority) rows draw every climate value
uniformly within ``sqrt(3)`` weekly standard deviations of the seasonal mean,
which keeps them inside a fitted 2-sigma band. Outlier (minority) rows push one
or two climate variables ``outlier_multiplier`` to
``outlier_multiplier + outlier_spread`` deviations out and collapse growth:
hot, dry, bright weeks burn grass off and cold weeks stall it.

A ``twin_fraction`` of outlier rows copies a normal row of the same farm-week
(up to tiny jitter) in everything but the disrupted variables, so natively
paired counterfactuals exist in the data the way they do across seasons of the
same farm.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ._rng import derive_rng, derive_seed
from .data import BoundaryMode, Dataset, FeatureSchema, Label, compute_boundary, label_classes
from .errors import DataError

FEATURES = ("week", "cover", "rainfall", "temperature", "solar")
SCHEMA = FeatureSchema(FEATURES, climate_feature_indices=(2, 3, 4), seasonal_index=0, target_name="growth")
WEEKS = 52
_BAND = math.sqrt(3.0)

# Rows of the reference imbalance-ratio grid: (name, majority, minority).
TABLE1 = (
    ("D1", 6000, 3810),
    ("D2", 8000, 3810),
    ("D3", 13000, 3810),
    ("D4", 15000, 3810),
    ("D5", 32719, 3810),
    ("D6", 32719, 3000),
    ("D7", 32719, 1800),
    ("D8", 32719, 1000),
    ("D9", 32719, 600),
    ("D10", 32719, 400),
    ("D11", 32719, 275),
    ("D12", 32719, 200),
)

# Disrupted test weeks and the regime that dominates each of them.
TEST_SLICES = (
    ("march", (9, 10, 11, 12, 13), "cold"),
    ("july", (27, 28, 29, 30, 31), "hot"),
    ("october", (40, 41, 42, 43, 44), "cold"),
)

HOT_WEEKS = range(18, 39)
REGIME_SHIFTS = {
    # feature -> direction of the excursion
    "hot": {"temperature": 1.0, "solar": 1.0, "rainfall": -1.0},
    "cold": {"temperature": -1.0, "solar": -1.0},
}


def scaled_count(n: int, scale: float) -> int:
    return int(math.floor(n * scale + 0.5))


def table1_grid(scale: float = 0.1) -> list[tuple[str, int, int]]:
    return [(name, scaled_count(a, scale), scaled_count(b, scale)) for name, a, b in TABLE1]


@dataclass(frozen=True)
class ClimateCurve:
    """Weekly mean ``base + amplitude * cos(2 pi (week - peak_week) / 52)`` with spread ``std``."""

    base: float
    amplitude: float
    peak_week: float
    std: float

    def mean(self, week):
        return self.base + self.amplitude * np.cos(2 * np.pi * (np.asarray(week) - self.peak_week) / WEEKS)


@dataclass(frozen=True)
class SeasonalProfile:
    temperature: ClimateCurve = ClimateCurve(10.0, 5.0, 30.0, 1.5)
    rainfall: ClimateCurve = ClimateCurve(3.0, 0.8, 50.0, 0.45)
    solar: ClimateCurve = ClimateCurve(12.0, 7.0, 25.0, 1.0)
    cover: ClimateCurve = ClimateCurve(800.0, 200.0, 20.0, 100.0)
    growth_floor: float = 6.0
    growth_peak: float = 60.0
    growth_peak_week: float = 20.0
    growth_width: float = 14.0
    # growth response to within-band weather, per standardised deviation
    temperature_effect: float = 0.06
    rainfall_effect: float = 0.05
    solar_effect: float = 0.04
    cover_effect: float = 0.05

    def curve(self, name: str) -> ClimateCurve:
        return getattr(self, name)

    def growth(self, week):
        w = np.asarray(week, dtype=np.float64)
        return self.growth_floor + self.growth_peak * np.exp(-(((w - self.growth_peak_week) / self.growth_width) ** 2))

    def weekly_table(self) -> list[dict]:
        """The profile materialised per week (documentation and plotting)."""
        rows = []
        for w in range(1, WEEKS + 1):
            row = {"week": w, "growth": float(self.growth(w))}
            for name in ("temperature", "rainfall", "solar", "cover"):
                c = self.curve(name)
                row[f"{name}_mean"] = float(c.mean(w))
                row[f"{name}_std"] = c.std
            rows.append(row)
        return rows


@dataclass(frozen=True)
class SynthConfig:
    majority_count: int = 3272
    minority_count: int = 381
    seed: int = 0
    noise_std: float = 2.0
    outlier_multiplier: float = 3.0
    outlier_spread: float = 1.5
    collapse_factor: float = 0.35
    cold_factor: float = 0.55
    twin_fraction: float = 0.5
    twin_jitter: float = 0.02
    test_per_slice: int = 200
    test_outlier_fraction: float = 0.6
    profile: SeasonalProfile = field(default_factory=SeasonalProfile)

    def __post_init__(self):
        if self.majority_count < 0 or self.minority_count < 0:
            raise DataError("class counts must be >= 0")
        if self.majority_count + self.minority_count == 0:
            raise DataError("at least one class must be non-empty")
        if not 0.0 <= self.collapse_factor < 1.0 or not 0.0 <= self.cold_factor < 1.0:
            raise DataError("collapse factors must lie in [0, 1)")
        if self.outlier_multiplier <= 2.0:
            raise DataError("outlier_multiplier must exceed 2")
        if not 0.0 <= self.twin_fraction <= 1.0 or not 0.0 <= self.test_outlier_fraction <= 1.0:
            raise DataError("fractions must lie in [0, 1]")
        if self.noise_std < 0 or self.outlier_spread < 0 or self.twin_jitter < 0:
            raise DataError("noise, spread and jitter must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SynthConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown SynthConfig keys: {sorted(unknown)}")
        if "profile" in d:
            p = dict(d["profile"])
            for name in ("temperature", "rainfall", "solar", "cover"):
                if name in p and isinstance(p[name], dict):
                    p[name] = ClimateCurve(**p[name])
            d["profile"] = SeasonalProfile(**p)
        return cls(**d)


class _Sampler:
    CLIMATE = ("rainfall", "temperature", "solar")

    def __init__(self, config: SynthConfig, rng: np.random.Generator):
        self.cfg = config
        self.p = config.profile
        self.rng = rng

    def band(self, n):
        return self.rng.uniform(-_BAND, _BAND, size=n)

    def normal_rows(self, weeks: np.ndarray) -> dict[str, np.ndarray]:
        """Standardised deviations (z) for cover and every climate variable."""
        return {name: self.band(weeks.size) for name in ("cover", *self.CLIMATE)}

    def outlier_rows(self, weeks: np.ndarray, regimes: list[str], base_z: dict[str, np.ndarray]):
        z = {k: v.copy() for k, v in base_z.items()}
        shifted = np.zeros((weeks.size, len(self.CLIMATE)), dtype=bool)
        for i, regime in enumerate(regimes):
            options = list(REGIME_SHIFTS[regime])
            n_shift = min(len(options), 1 + int(self.rng.random() < 0.5))
            chosen = self.rng.choice(len(options), size=n_shift, replace=False)
            for c in sorted(chosen):
                name = options[c]
                mag = self.rng.uniform(self.cfg.outlier_multiplier, self.cfg.outlier_multiplier + self.cfg.outlier_spread)
                z[name][i] = REGIME_SHIFTS[regime][name] * mag
                shifted[i, self.CLIMATE.index(name)] = True
        return z, shifted

    def features(self, weeks: np.ndarray, z: dict[str, np.ndarray]) -> np.ndarray:
        cols = [weeks.astype(np.float64)]
        for name in ("cover", "rainfall", "temperature", "solar"):
            c = self.p.curve(name)
            cols.append(c.mean(weeks) + c.std * z[name])
        X = np.column_stack(cols)
        X[:, 2] = np.maximum(X[:, 2], 0.0)  # rainfall
        X[:, 4] = np.maximum(X[:, 4], 0.0)  # solar
        return X

    def growth(self, weeks: np.ndarray, z: dict[str, np.ndarray], factor: np.ndarray) -> np.ndarray:
        p = self.p
        clip = {k: np.clip(v, -_BAND, _BAND) for k, v in z.items()}
        h = (
            1.0
            + p.temperature_effect * clip["temperature"]
            + p.rainfall_effect * clip["rainfall"]
            + p.solar_effect * clip["solar"]
            + p.cover_effect * clip["cover"]
        )
        g = p.growth(weeks) * h * factor + self.rng.normal(0.0, self.cfg.noise_std, size=weeks.size)
        return np.maximum(g, 0.0)

    def regime_factor(self, regimes) -> np.ndarray:
        return np.array([self.cfg.collapse_factor if r == "hot" else self.cfg.cold_factor for r in regimes])


def _regime_for(week: int) -> str:
    return "hot" if week in HOT_WEEKS else "cold"


def generate(config: SynthConfig = SynthConfig()) -> Dataset:
    """Labeled training data with the configured class counts."""
    rng = derive_rng(config.seed, "synthgen", "train")
    s = _Sampler(config, rng)
    n_maj, n_min = config.majority_count, config.minority_count

    maj_weeks = rng.integers(1, WEEKS + 1, size=n_maj)
    maj_z = s.normal_rows(maj_weeks)
    X_maj = s.features(maj_weeks, maj_z)
    y_maj = s.growth(maj_weeks, maj_z, np.ones(n_maj))

    n_twin = min(int(round(config.twin_fraction * n_min)), n_maj)
    min_weeks = np.empty(n_min, dtype=np.int64)
    min_weeks[:n_twin] = maj_weeks[:n_twin]
    min_weeks[n_twin:] = rng.integers(1, WEEKS + 1, size=n_min - n_twin)
    base_z = s.normal_rows(min_weeks)
    for name in base_z:
        base_z[name][:n_twin] = maj_z[name][:n_twin] + config.twin_jitter * rng.standard_normal(n_twin)
    regimes = [_regime_for(int(w)) for w in min_weeks]
    min_z, _ = s.outlier_rows(min_weeks, regimes, base_z)
    X_min = s.features(min_weeks, min_z)
    y_min = s.growth(min_weeks, min_z, s.regime_factor(regimes))

    X = np.vstack([X_maj, X_min])
    y = np.concatenate([y_maj, y_min])
    labels = np.concatenate([np.full(n_maj, Label.MAJORITY), np.full(n_min, Label.MINORITY)]).astype(np.int8)
    order = rng.permutation(X.shape[0])
    ids = [f"r{i:06d}" for i in range(X.shape[0])]
    return Dataset(SCHEMA, X[order], y[order], ids=ids, labels=labels[order])


def generate_test(config: SynthConfig = SynthConfig()) -> Dataset:
    """Held-out disrupted weeks, one slice per entry of ``TEST_SLICES``."""
    rng = derive_rng(config.seed, "synthgen", "test")
    s = _Sampler(config, rng)
    parts_X, parts_y, labels, slices, ids = [], [], [], [], []
    for name, weeks, regime in TEST_SLICES:
        n = config.test_per_slice
        w = rng.choice(np.array(weeks), size=n)
        z = s.normal_rows(w)
        outlier = rng.random(n) < config.test_outlier_fraction
        idx = np.flatnonzero(outlier)
        z_out, _ = s.outlier_rows(w[idx], [regime] * idx.size, {k: v[idx] for k, v in z.items()})
        for k in z:
            z[k][idx] = z_out[k]
        factor = np.ones(n)
        factor[idx] = s.regime_factor([regime])[0]
        parts_X.append(s.features(w, z))
        parts_y.append(s.growth(w, z, factor))
        labels.append(np.where(outlier, Label.MINORITY, Label.MAJORITY))
        slices.extend([name] * n)
        ids.extend(f"t-{name}-{i:04d}" for i in range(n))
    return Dataset(
        SCHEMA,
        np.vstack(parts_X),
        np.concatenate(parts_y),
        ids=ids,
        labels=np.concatenate(labels).astype(np.int8),
        slices=slices,
    )


def label_agreement(data: Dataset, mode=BoundaryMode.SEASONAL, multiplier: float = 2.0) -> float:
    """Fraction of rows whose construction label matches the fitted boundary rule."""
    relabeled = label_classes(data, compute_boundary(data, mode, multiplier))
    return float(np.mean(relabeled.labels == data.labels))


def make_ir_grid(base: SynthConfig = SynthConfig(), grid=None, scale: float = 0.1) -> list[Dataset]:
    """One dataset per ``(majority, minority)`` row, each from its own derived seed.

    The default grid is the twelve-row reference grid scaled by ``scale``.
    """
    if grid is None:
        grid = [(a, b) for _, a, b in table1_grid(scale)]
    grid = list(grid)
    if not grid:
        raise DataError("grid must not be empty")
    return [
        generate(replace(base, majority_count=int(a), minority_count=int(b), seed=derive_seed(base.seed, "grid", i)))
        for i, (a, b) in enumerate(grid)
    ]
