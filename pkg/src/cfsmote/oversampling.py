"""Minority oversamplers behind one interface, plus the balance-to-parity policy.

All methods return an :class:`AugmentationResult` holding only the new
instances; :func:`augment` appends them to the original data. Neighbour
searches run in the z-score space of the input data unless
``AugmenterConfig.normalization`` is ``None``; interpolation happens on raw
values, which is equivalent because the scaling is affine.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ._rng import derive_rng
from .counterfactuals import (
    DiceConfig,
    DiceLite,
    PairValidity,
    filter_unpaired,
    generate_cfa,
    mine_native_pairs,
)
from .data import BoundaryMode, Dataset, Label, class_stats, compute_boundary
from .errors import DataError, MethodError
from .neighbors import Normalizer, fit_normalizer, knn_search

PARITY = "parity"


class Method(str, enum.Enum):
    BASELINE = "baseline"
    SMOTE = "smote"
    B_SMOTE = "b-smote"
    G_SMOTE = "g-smote"
    DICE_SMOTE = "dice-smote"
    CFA_SMOTE = "cfa-smote"

    @classmethod
    def parse(cls, text) -> "Method":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "-")
        aliases = {"borderline-smote": "b-smote", "bsmote": "b-smote", "gsmote": "g-smote", "geometric-smote": "g-smote"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown method {text!r}; expected one of {choices}") from None

    @property
    def display(self) -> str:
        return {
            "baseline": "Baseline",
            "smote": "SMOTE",
            "b-smote": "B-SMOTE",
            "g-smote": "G-SMOTE",
            "dice-smote": "DiCE-SMOTE",
            "cfa-smote": "CFA-SMOTE",
        }[self.value]


AUGMENTERS = (Method.SMOTE, Method.B_SMOTE, Method.G_SMOTE, Method.DICE_SMOTE, Method.CFA_SMOTE)


@dataclass(frozen=True)
class AugmenterConfig:
    method: Method = Method.CFA_SMOTE
    smote_k: int = 5
    target_count: Any = PARITY
    seed: int = 0
    normalization: str | None = "zscore"
    borderline_m: int = 5
    truncation: float = 1.0
    deformation: float = 0.0
    pair_validity: PairValidity = field(default_factory=PairValidity)
    dice: DiceConfig = field(default_factory=DiceConfig)
    boundary_mode: BoundaryMode = BoundaryMode.SEASONAL
    boundary_multiplier: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "boundary_mode", BoundaryMode(self.boundary_mode))
        if self.smote_k < 1:
            raise ValueError("smote_k must be >= 1")
        if self.target_count != PARITY and (not isinstance(self.target_count, (int, np.integer)) or self.target_count < 0):
            raise ValueError("target_count must be 'parity' or a non-negative integer")
        if not -1.0 <= self.truncation <= 1.0:
            raise ValueError("truncation must lie in [-1, 1]")
        if not 0.0 <= self.deformation <= 1.0:
            raise ValueError("deformation must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "smote_k": self.smote_k,
            "target_count": self.target_count if self.target_count == PARITY else int(self.target_count),
            "seed": int(self.seed),
            "normalization": self.normalization,
            "borderline_m": self.borderline_m,
            "truncation": self.truncation,
            "deformation": self.deformation,
            "pair_validity": self.pair_validity.to_dict(),
            "dice": self.dice.to_dict(),
            "boundary_mode": self.boundary_mode.value,
            "boundary_multiplier": self.boundary_multiplier,
        }

    @classmethod
    def from_dict(cls, d) -> "AugmenterConfig":
        d = dict(d)
        if "pair_validity" in d:
            d["pair_validity"] = PairValidity.from_dict(d["pair_validity"])
        if "dice" in d:
            d["dice"] = DiceConfig.from_dict(d["dice"])
        return cls(**d)


@dataclass(frozen=True)
class Provenance:
    """Where one synthetic instance came from.

    SMOTE-family rows record ``seed_id``/``neighbor_id`` and ``delta`` so the
    point can be rebuilt as ``seed + delta * (neighbor - seed)``; counterfactual
    rows record their source and template pair.
    """

    generator: str
    source_id: str | None = None
    template_majority_id: str | None = None
    template_minority_id: str | None = None
    seed_id: str | None = None
    neighbor_id: str | None = None
    delta: float = math.nan


PROVENANCE_COLUMNS = ("generator", "source_id", "template_majority_id", "template_minority_id", "seed_id", "neighbor_id", "delta")


@dataclass(frozen=True)
class AugmentationResult:
    method: Method
    synthetic: Dataset
    provenance: tuple[Provenance, ...]
    diagnostics: dict

    def __len__(self) -> int:
        return len(self.synthetic)

    def provenance_columns(self) -> dict[str, list]:
        return {c: [getattr(p, c) for p in self.provenance] for c in PROVENANCE_COLUMNS}


# --- internals ----------------------------------------------------------------


@dataclass
class _Pool:
    """Points SMOTE may seed from and interpolate towards."""

    X: np.ndarray
    y: np.ndarray
    ids: tuple[str, ...]


def _pool_from(data: Dataset, indices) -> _Pool:
    indices = np.asarray(indices, dtype=np.intp)
    return _Pool(data.X[indices], data.y[indices], tuple(data.ids[i] for i in indices))


def _minority_neighbors(pool: _Pool, rows: np.ndarray, k: int, normalizer: Normalizer | None) -> np.ndarray:
    """k nearest pool neighbours (excluding self) of the given pool rows."""
    Z = pool.X if normalizer is None else normalizer.transform(pool.X)
    _, nn = knn_search(Z, Z[rows], k, exclude=rows)
    return nn


def _clamp_k(k: int, pool_size: int, diagnostics: dict, what: str) -> int:
    if pool_size < k + 1:
        diagnostics[f"{what}_k_clamped"] = {"requested": k, "used": pool_size - 1}
        return pool_size - 1
    return k


def _smote_step(
    pool: _Pool,
    n: int,
    k: int,
    rng: np.random.Generator,
    normalizer: Normalizer | None,
    diagnostics: dict,
    seed_rows=None,
    what: str = "smote",
    id_prefix: str = "smote",
):
    """``n`` points ``p + delta * (m' - p)`` with ``m'`` among ``p``'s k pool neighbours."""
    size = pool.X.shape[0]
    if n == 0:
        return np.empty((0, pool.X.shape[1])), np.empty(0), [], []
    if size == 1:
        diagnostics[f"{what}_degenerate_single_point"] = True
        seeds = np.zeros(n, dtype=np.intp)
        nbrs = seeds
        delta = rng.random(n)
    else:
        k = _clamp_k(k, size, diagnostics, what)
        if seed_rows is None:
            seed_rows = np.arange(size)
        seed_rows = np.asarray(seed_rows, dtype=np.intp)
        seeds = seed_rows[rng.integers(seed_rows.size, size=n)]
        pick = rng.integers(k, size=n)
        delta = rng.random(n)
        used = np.unique(seeds)
        table = np.empty((size, k), dtype=np.intp)
        table[used] = _minority_neighbors(pool, used, k, normalizer)
        nbrs = table[seeds, pick]
    P, M = pool.X[seeds], pool.X[nbrs]
    X_new = P + delta[:, None] * (M - P)
    y_new = pool.y[seeds] + delta * (pool.y[nbrs] - pool.y[seeds])
    prov = [
        Provenance("smote", source_id=pool.ids[s], seed_id=pool.ids[s], neighbor_id=pool.ids[m], delta=float(d))
        for s, m, d in zip(seeds, nbrs, delta)
    ]
    ids = [f"{id_prefix}:{i}" for i in range(n)]
    return X_new, y_new, prov, ids


def _result(method: Method, data: Dataset, X, y, ids, prov, diagnostics, started) -> AugmentationResult:
    X = np.asarray(X, dtype=np.float64).reshape(-1, data.schema.n_features)
    syn = Dataset(data.schema, X, y, ids=ids, labels=np.full(X.shape[0], Label.MINORITY, dtype=np.int8))
    diagnostics["n_synthetic"] = len(syn)
    diagnostics["seconds"] = time.perf_counter() - started
    return AugmentationResult(method, syn, tuple(prov), diagnostics)


def _normalizer(data: Dataset, config: AugmenterConfig) -> Normalizer | None:
    return fit_normalizer(data.X, config.normalization)


def _requested(data: Dataset, target_count) -> int:
    if target_count == PARITY:
        return class_stats(data).deficit
    return int(target_count)


def _minority_pool(data: Dataset, what: str) -> tuple[np.ndarray, _Pool]:
    data.require_labeled()
    mino = data.minority_indices
    if mino.size < 2:
        raise MethodError(f"{what} needs at least 2 minority instances, got {mino.size}")
    return mino, _pool_from(data, mino)


def _validity_boundary(data: Dataset, config: AugmenterConfig):
    mode = config.boundary_mode
    if mode is BoundaryMode.SEASONAL and data.schema.seasonal_index is None:
        mode = BoundaryMode.GLOBAL
    return compute_boundary(data, mode, config.boundary_multiplier)


def _minority_validity(boundary, data: Dataset, X: np.ndarray) -> float | None:
    if X.shape[0] == 0:
        return None
    keys = None
    if boundary.mode is BoundaryMode.SEASONAL:
        si = data.schema.seasonal_index
        keys = np.rint(X[:, si]).astype(np.int64)
        known = set(boundary.season_keys)
        ok = np.array([k in known for k in keys])
        if not ok.all():
            valid = np.zeros(X.shape[0], dtype=bool)
            valid[ok] = boundary.is_outlier(X[ok], keys[ok])
            return float(valid.mean())
    return float(boundary.is_outlier(X, keys).mean())


# --- methods --------------------------------------------------------------------


def smote(data: Dataset, n: int, k: int = 5, seed=0, normalization: str | None = "zscore") -> AugmentationResult:
    """Classic SMOTE: seeds drawn uniformly from the minority class."""
    started = time.perf_counter()
    if n < 0:
        raise ValueError("n must be >= 0")
    _, pool = _minority_pool(data, "SMOTE")
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "smote")
    diagnostics: dict = {"smote_stage": n}
    X, y, prov, ids = _smote_step(pool, n, k, rng, fit_normalizer(data.X, normalization), diagnostics)
    return _result(Method.SMOTE, data, X, y, ids, prov, diagnostics, started)


def danger_set(data: Dataset, m: int = 5, normalizer: Normalizer | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Minority indices in DANGER plus the majority-neighbour count of every minority instance.

    A minority instance is in DANGER when ``m/2 <= majority neighbours < m``
    among its ``m`` nearest neighbours in the whole dataset.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    mino = data.minority_indices
    Z = data.X if normalizer is None else normalizer.transform(data.X)
    m_eff = min(m, len(data) - 1)
    _, nn = knn_search(Z, Z[mino], m_eff, exclude=mino)
    n_maj = (data.labels[nn] == Label.MAJORITY).sum(axis=1)
    in_danger = (n_maj >= m / 2) & (n_maj < m)
    return mino[in_danger], n_maj


def borderline_smote(data: Dataset, n: int, m: int = 5, k: int = 5, seed=0, normalization: str | None = "zscore") -> AugmentationResult:
    """Borderline-SMOTE: seeds only from the DANGER set, neighbours from all minority."""
    started = time.perf_counter()
    mino, pool = _minority_pool(data, "Borderline-SMOTE")
    normalizer = fit_normalizer(data.X, normalization)
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "b-smote")
    danger, n_maj = danger_set(data, m, normalizer)
    diagnostics: dict = {
        "danger": int(danger.size),
        "noise": int(np.sum(n_maj >= m)),
        "safe": int(np.sum(n_maj < m / 2)),
        "smote_stage": n,
    }
    if danger.size == 0:
        diagnostics["danger_empty_fallback_smote"] = True
        seed_rows = None
    else:
        seed_rows = np.searchsorted(mino, danger)
    X, y, prov, ids = _smote_step(pool, n, k, rng, normalizer, diagnostics, seed_rows=seed_rows, id_prefix="b-smote")
    prov = [replace(p, generator="b_smote") for p in prov]
    return _result(Method.B_SMOTE, data, X, y, ids, prov, diagnostics, started)


def _unit_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    r = rng.random((n, 1)) ** (1.0 / d)
    return r * v / norm


def gsmote(
    data: Dataset,
    n: int,
    k: int = 5,
    truncation: float = 1.0,
    deformation: float = 0.0,
    seed=0,
    normalization: str | None = "zscore",
) -> AugmentationResult:
    """Geometric SMOTE, simplified to a truncated and deformed hypersphere.

    The sphere is centred on a minority seed ``c`` with radius equal to the
    distance to one of its ``k`` minority neighbours ``m'``. Points whose
    component along ``c -> m'`` satisfies ``|truncation - x_par| > 1`` are
    reflected, and the perpendicular component is shrunk by
    ``(1 - deformation)``. Targets are copied from the seed.
    """
    started = time.perf_counter()
    if not -1.0 <= truncation <= 1.0 or not 0.0 <= deformation <= 1.0:
        raise ValueError("truncation must lie in [-1, 1] and deformation in [0, 1]")
    _, pool = _minority_pool(data, "G-SMOTE")
    normalizer = fit_normalizer(data.X, normalization)
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "g-smote")
    diagnostics: dict = {"smote_stage": n}
    d = data.schema.n_features
    if n == 0:
        return _result(Method.G_SMOTE, data, np.empty((0, d)), [], [], [], diagnostics, started)
    size = pool.X.shape[0]
    k = _clamp_k(k, size, diagnostics, "gsmote")
    seeds = rng.integers(size, size=n)
    pick = rng.integers(k, size=n)
    used = np.unique(seeds)
    table = np.empty((size, k), dtype=np.intp)
    table[used] = _minority_neighbors(pool, used, k, normalizer)
    nbrs = table[seeds, pick]

    scale = np.ones(d) if normalizer is None else normalizer.scale
    C = pool.X[seeds] / scale
    direction = pool.X[nbrs] / scale - C
    R = np.linalg.norm(direction, axis=1)
    u = _unit_ball(rng, n, d)
    nz = R > 0
    e = np.zeros_like(direction)
    e[nz] = direction[nz] / R[nz, None]
    par = np.sum(u * e, axis=1)
    flip = np.abs(truncation - par) > 1.0
    u = u - (2.0 * flip * par)[:, None] * e
    par = np.sum(u * e, axis=1)
    perp = u - par[:, None] * e
    u = u - deformation * perp
    X_new = pool.X[seeds] + (R[:, None] * u) * scale
    y_new = pool.y[seeds].copy()
    prov = [Provenance("g_smote", source_id=pool.ids[s], seed_id=pool.ids[s], neighbor_id=pool.ids[m]) for s, m in zip(seeds, nbrs)]
    ids = [f"g-smote:{i}" for i in range(n)]
    return _result(Method.G_SMOTE, data, X_new, y_new, ids, prov, diagnostics, started)


def _two_stage(method: Method, data: Dataset, n: int, config: AugmenterConfig, stage1, started, diagnostics, normalizer) -> AugmentationResult:
    """Stage 1 rows plus SMOTE over stage 1 rows only, up to ``n`` in total."""
    X1, y1, ids1, prov1 = stage1
    remaining = n - len(ids1)
    diagnostics["syn_cf"] = len(ids1)
    diagnostics["smote_stage"] = max(remaining, 0)
    X, y, ids, prov = [X1], [y1], list(ids1), list(prov1)
    if remaining > 0:
        if len(ids1) == 0:
            raise MethodError(f"{method.display}: stage 1 produced no counterfactuals to oversample")
        pool = _Pool(np.asarray(X1), np.asarray(y1), tuple(ids1))
        rng = derive_rng(config.seed, method.value, "stage2")
        X2, y2, prov2, ids2 = _smote_step(pool, remaining, config.smote_k, rng, normalizer, diagnostics, what="stage2", id_prefix=f"{method.value}:smote")
        X.append(X2)
        y.append(y2)
        ids.extend(ids2)
        prov.extend(prov2)
    X_all = np.vstack(X) if X else np.empty((0, data.schema.n_features))
    boundary = _validity_boundary(data, config)
    diagnostics["syn_cf_minority_validity"] = _minority_validity(boundary, data, np.asarray(X1).reshape(-1, data.schema.n_features))
    diagnostics["minority_validity"] = _minority_validity(boundary, data, X_all)
    return _result(method, data, X_all, np.concatenate(y) if y else [], ids, prov, diagnostics, started)


def cfa_smote(data: Dataset, config: AugmenterConfig = AugmenterConfig(), n: int | None = None) -> AugmentationResult:
    """Counterfactual-based SMOTE.

    Stage 1 mines native pairs, filters unpaired majority instances and
    builds synthetic counterfactuals (budget-capped at ``n``); stage 2 runs
    SMOTE with seeds and neighbours drawn only from those counterfactuals to
    make up any shortfall.
    """
    started = time.perf_counter()
    data.require_labeled()
    n = _requested(data, config.target_count) if n is None else n
    diagnostics: dict = {}
    if n == 0:
        diagnostics.update(natives=0, unpaired=0, syn_cf=0, smote_stage=0)
        return _result(Method.CFA_SMOTE, data, np.empty((0, data.schema.n_features)), [], [], [], diagnostics, started)
    if data.minority_indices.size == 0 or data.majority_indices.size == 0:
        raise MethodError("CFA-SMOTE needs both classes to be non-empty")
    normalizer = _normalizer(data, config)
    pairs = mine_native_pairs(data, config.pair_validity, normalizer)
    if not pairs:
        raise MethodError("CFA-SMOTE found no valid native counterfactual pairs")
    unpaired = filter_unpaired(data, pairs)
    syn = generate_cfa(data, pairs, unpaired, n, normalizer)
    diagnostics.update(natives=len(pairs), unpaired=int(unpaired.size))
    d = data.schema.n_features
    X1 = np.array([s.instance.features for s in syn], dtype=np.float64).reshape(-1, d)
    y1 = np.array([s.instance.target for s in syn], dtype=np.float64)
    ids1 = [s.instance.id for s in syn]
    prov1 = [
        Provenance(
            "cfa",
            source_id=data.ids[s.source_unpaired_index],
            template_majority_id=data.ids[s.template_pair.majority_index],
            template_minority_id=data.ids[s.template_pair.minority_index],
        )
        for s in syn
    ]
    return _two_stage(Method.CFA_SMOTE, data, n, config, (X1, y1, ids1, prov1), started, diagnostics, normalizer)


def dice_smote(data: Dataset, config: AugmenterConfig = AugmenterConfig(), n: int | None = None) -> AugmentationResult:
    """Perturbation counterfactuals (one per majority query) followed by SMOTE over them.

    Majority queries are visited in a seeded random order until ``n``
    counterfactuals exist or the majority class is exhausted.
    """
    started = time.perf_counter()
    data.require_labeled()
    n = _requested(data, config.target_count) if n is None else n
    diagnostics: dict = {}
    d = data.schema.n_features
    if n == 0:
        diagnostics.update(syn_cf=0, smote_stage=0, queries=0)
        return _result(Method.DICE_SMOTE, data, np.empty((0, d)), [], [], [], diagnostics, started)
    if data.minority_indices.size == 0 or data.majority_indices.size == 0:
        raise MethodError("DiCE-SMOTE needs both classes to be non-empty")
    normalizer = _normalizer(data, config)
    boundary = _validity_boundary(data, config)
    gen = DiceLite(data, boundary, config.dice, normalizer)
    rng = derive_rng(config.seed, Method.DICE_SMOTE.value, "stage1")
    order = data.majority_indices[rng.permutation(data.majority_indices.size)]
    rows, queries, tried = [], [], 0
    for q in order:
        if len(rows) >= n:
            break
        tried += 1
        F = gen.counterfactual_features(int(q), 1, rng)
        if F.shape[0]:
            rows.append(F[0])
            queries.append(int(q))
    diagnostics.update(queries=tried, no_crossing=tried - len(rows))
    if not rows:
        raise MethodError("DiCE-SMOTE: no perturbation crossed the class boundary")
    X1 = np.vstack(rows)
    templates = gen.nearest_minority(X1)
    y1 = data.y[templates].copy()
    ids1 = [f"dice:{data.ids[q]}" for q in queries]
    prov1 = [
        Provenance("dice_lite", source_id=data.ids[q], template_majority_id=data.ids[q], template_minority_id=data.ids[t])
        for q, t in zip(queries, templates)
    ]
    return _two_stage(Method.DICE_SMOTE, data, n, config, (X1, y1, ids1, prov1), started, diagnostics, normalizer)


def run_method(data: Dataset, config: AugmenterConfig) -> AugmentationResult:
    """Dispatch ``config.method`` with ``n`` set by ``config.target_count``."""
    data.require_labeled()
    method = config.method
    n = _requested(data, config.target_count)
    if method is Method.BASELINE:
        started = time.perf_counter()
        return _result(method, data, np.empty((0, data.schema.n_features)), [], [], [], {}, started)
    if method is Method.SMOTE:
        return smote(data, n, config.smote_k, derive_rng(config.seed, method.value), config.normalization)
    if method is Method.B_SMOTE:
        rng = derive_rng(config.seed, method.value)
        return borderline_smote(data, n, config.borderline_m, config.smote_k, rng, config.normalization)
    if method is Method.G_SMOTE:
        rng = derive_rng(config.seed, method.value)
        return gsmote(data, n, config.smote_k, config.truncation, config.deformation, rng, config.normalization)
    if method is Method.CFA_SMOTE:
        return cfa_smote(data, config, n)
    if method is Method.DICE_SMOTE:
        return dice_smote(data, config, n)
    raise ValueError(f"unsupported method {method}")


def augment_with_result(data: Dataset, config: AugmenterConfig) -> tuple[Dataset, AugmentationResult]:
    result = run_method(data, config)
    if len(result) == 0:
        return data, result
    taken = set(data.ids)
    clash = [i for i in result.synthetic.ids if i in taken]
    if clash:
        raise DataError(f"synthetic ids collide with input ids: {clash[:3]}")
    return data.concat(result.synthetic), result


def augment(data: Dataset, config: AugmenterConfig) -> Dataset:
    """Original instances followed by the configured method's synthetic minority rows."""
    return augment_with_result(data, config)[0]
