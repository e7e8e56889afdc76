"""Counterfactual generators.

Two routes to synthetic minority instances live here:

* the instance-based route (CFA): mine *native* counterfactual pairs
  ``(x, p)`` of a majority and a minority instance that differ in only a few
  features, then re-use each pair as a template for majority instances that
  are not themselves paired;
* a perturbation route (``DiceLite``): sample perturbations of a majority
  query, keep those the class boundary calls minority, and pick a proximal,
  diverse subset under a MAD-scaled L1 distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import as_rng
from .data import BoundaryMode, ClassBoundary, Dataset, Instance, Label
from .errors import DataError, MethodError
from .neighbors import Normalizer, knn_search


@dataclass(frozen=True)
class PairValidity:
    """When a nearest cross-class pair counts as a native counterfactual.

    Feature ``i`` is a *difference* feature when ``|x_i - p_i| > eps_i``.
    ``feature_tolerance`` fixes ``eps`` explicitly; otherwise
    ``eps_i = tolerance_scale * std_i`` over the training data.
    """

    max_difference_features: int = 2
    feature_tolerance: tuple[float, ...] | None = None
    tolerance_scale: float = 0.1
    max_pair_distance: float | None = None

    def __post_init__(self):
        if self.max_difference_features < 0:
            raise ValueError("max_difference_features must be >= 0")
        if self.feature_tolerance is not None:
            object.__setattr__(self, "feature_tolerance", tuple(float(t) for t in self.feature_tolerance))
            if any(t < 0 for t in self.feature_tolerance):
                raise ValueError("tolerances must be >= 0")
        if self.tolerance_scale < 0:
            raise ValueError("tolerance_scale must be >= 0")

    def tolerances(self, data: Dataset) -> np.ndarray:
        if self.feature_tolerance is not None:
            tol = np.asarray(self.feature_tolerance)
            if tol.shape[0] != data.schema.n_features:
                raise DataError(f"{tol.shape[0]} tolerances for {data.schema.n_features} features")
            return tol
        return self.tolerance_scale * data.X.std(axis=0)

    def to_dict(self) -> dict:
        return {
            "max_difference_features": self.max_difference_features,
            "feature_tolerance": None if self.feature_tolerance is None else list(self.feature_tolerance),
            "tolerance_scale": self.tolerance_scale,
            "max_pair_distance": self.max_pair_distance,
        }

    @classmethod
    def from_dict(cls, d) -> "PairValidity":
        tol = d.get("feature_tolerance")
        return cls(
            max_difference_features=int(d.get("max_difference_features", 2)),
            feature_tolerance=None if tol is None else tuple(tol),
            tolerance_scale=float(d.get("tolerance_scale", 0.1)),
            max_pair_distance=d.get("max_pair_distance"),
        )


@dataclass(frozen=True)
class NativePair:
    majority_index: int
    minority_index: int
    match_features: frozenset[int]
    difference_features: frozenset[int]
    pair_distance: float


@dataclass(frozen=True)
class SyntheticCounterfactual:
    instance: Instance
    source_unpaired_index: int
    template_pair: NativePair


def _space(data: Dataset, normalizer: Normalizer | None) -> np.ndarray:
    return data.X if normalizer is None else normalizer.transform(data.X)


def _check_two_classes(data: Dataset):
    data.require_labeled()
    if data.majority_indices.size == 0 or data.minority_indices.size == 0:
        raise DataError("both classes must be non-empty")


def mine_native_pairs(data: Dataset, validity: PairValidity = PairValidity(), normalizer: Normalizer | None = None) -> list[NativePair]:
    """Pair every majority instance with its nearest minority instance and keep valid pairs.

    Distances are computed in ``normalizer`` space (raw features when
    ``None``); the match/difference split always uses raw feature values.
    Returned pairs are ordered by majority index.
    """
    _check_two_classes(data)
    maj, mino = data.majority_indices, data.minority_indices
    Z = _space(data, normalizer)
    dist, nn = knn_search(Z[mino], Z[maj], 1)
    partner = mino[nn[:, 0]]
    dist = dist[:, 0]
    tol = validity.tolerances(data)
    diff_mask = np.abs(data.X[maj] - data.X[partner]) > tol
    n_diff = diff_mask.sum(axis=1)
    ok = n_diff <= validity.max_difference_features
    if validity.max_pair_distance is not None:
        ok &= dist <= validity.max_pair_distance
    all_feats = frozenset(range(data.schema.n_features))
    pairs = []
    for j in np.flatnonzero(ok):
        diff = frozenset(int(f) for f in np.flatnonzero(diff_mask[j]))
        pairs.append(NativePair(int(maj[j]), int(partner[j]), all_feats - diff, diff, float(dist[j])))
    return pairs


def filter_unpaired(data: Dataset, pairs) -> np.ndarray:
    """Majority indices that take part in no valid pair, ascending."""
    paired = {p.majority_index for p in pairs}
    for p in pairs:
        if data.labels[p.majority_index] != Label.MAJORITY:
            raise DataError(f"pair cites instance {p.majority_index} which is not MAJORITY")
    return np.array([i for i in data.majority_indices if int(i) not in paired], dtype=np.intp)


def generate_cfa(data: Dataset, pairs, unpaired, budget: int, normalizer: Normalizer | None = None) -> list[SyntheticCounterfactual]:
    """Build synthetic minority instances from unpaired majority instances.

    Each unpaired ``x'`` takes its nearest *paired* majority instance ``x``
    as template: difference features are copied from the partner ``p``,
    match features from ``x'``, and the growth target from ``p``. When the
    budget is smaller than the unpaired set, the ``x'`` closest to their
    template are used first (ties by index).
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    unpaired = np.asarray(unpaired, dtype=np.intp)
    if budget == 0 or unpaired.size == 0:
        return []
    if not pairs:
        raise MethodError("no valid native pairs to use as templates")
    pairs = sorted(pairs, key=lambda p: p.majority_index)
    paired_idx = np.array([p.majority_index for p in pairs], dtype=np.intp)
    Z = _space(data, normalizer)
    dist, nn = knn_search(Z[paired_idx], Z[unpaired], 1)
    order = np.lexsort((unpaired, dist[:, 0]))[:budget]

    out = []
    X, y = data.X, data.y
    for j in order:
        xs = int(unpaired[j])
        pair = pairs[int(nn[j, 0])]
        feats = X[xs].copy()
        diff = sorted(pair.difference_features)
        feats[diff] = X[pair.minority_index, diff]
        inst = Instance(
            id=f"cfa:{data.ids[xs]}",
            features=tuple(float(v) for v in feats),
            target=float(y[pair.minority_index]),
            label=Label.MINORITY,
        )
        out.append(SyntheticCounterfactual(inst, xs, pair))
    return out


# --- perturbation counterfactuals ---------------------------------------------


@dataclass(frozen=True)
class DiceConfig:
    """Perturbation search settings.

    ``sampling="random"`` draws ``n_candidates`` perturbations, each
    resampling 1..``max_features_varied`` features uniformly inside their
    training range. ``sampling="grid"`` instead moves one feature at a time
    along a regular grid (``grid_step`` apart, or ``grid_points`` points).
    """

    n_candidates: int = 200
    sampling: str = "random"
    features_to_vary: tuple[str, ...] | None = None
    max_features_varied: int = 2
    grid_step: float | None = None
    grid_points: int = 41
    diversity_pool: int = 20
    feature_ranges: dict[str, tuple[float, float]] | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.sampling not in ("random", "grid"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.n_candidates < 1 or self.max_features_varied < 1 or self.diversity_pool < 1:
            raise ValueError("candidate, feature and pool counts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "sampling": self.sampling,
            "features_to_vary": None if self.features_to_vary is None else list(self.features_to_vary),
            "max_features_varied": self.max_features_varied,
            "grid_step": self.grid_step,
            "grid_points": self.grid_points,
            "diversity_pool": self.diversity_pool,
            "feature_ranges": None if self.feature_ranges is None else {k: list(v) for k, v in self.feature_ranges.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "DiceConfig":
        d = dict(d)
        if d.get("features_to_vary") is not None:
            d["features_to_vary"] = tuple(d["features_to_vary"])
        if d.get("feature_ranges") is not None:
            d["feature_ranges"] = {k: tuple(v) for k, v in d["feature_ranges"].items()}
        return cls(**d)


def mad_scale(X: np.ndarray) -> np.ndarray:
    """Median absolute deviation per column; zero MADs become 1."""
    med = np.median(X, axis=0)
    mad = np.median(np.abs(X - med), axis=0)
    return np.where(mad > 0, mad, 1.0)


class DiceLite:
    """Perturbation counterfactual generator fitted on one training set.

    The class oracle is the boundary rule itself, so every returned
    candidate is MINORITY by construction.
    """

    def __init__(self, data: Dataset, boundary: ClassBoundary, config: DiceConfig = DiceConfig(), normalizer: Normalizer | None = None):
        _check_two_classes(data)
        self.data = data
        self.boundary = boundary
        self.config = config
        self.normalizer = normalizer
        schema = data.schema
        names = config.features_to_vary or schema.climate_names
        unknown = [n for n in names if n not in schema.feature_names]
        if unknown:
            raise DataError(f"features_to_vary not in schema: {unknown}")
        self.vary = np.array([schema.feature_names.index(n) for n in names], dtype=np.intp)
        if schema.seasonal_index is not None and schema.seasonal_index in self.vary:
            raise DataError("the seasonal feature cannot be perturbed")
        lo, hi = data.X.min(axis=0).copy(), data.X.max(axis=0).copy()
        for name, (a, b) in (config.feature_ranges or {}).items():
            f = schema.feature_names.index(name)
            lo[f], hi[f] = float(a), float(b)
        self.lo, self.hi = lo, hi
        self.mad = mad_scale(data.X)
        self._weeks = None if boundary.mode is BoundaryMode.GLOBAL else data.season_keys()
        self._minority = data.minority_indices
        self._minority_space = _space(data, normalizer)[self._minority]

    def _candidates(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        if cfg.sampling == "grid":
            blocks = []
            for f in self.vary:
                if cfg.grid_step:
                    grid = np.arange(self.lo[f], self.hi[f] + cfg.grid_step / 2, cfg.grid_step)
                else:
                    grid = np.linspace(self.lo[f], self.hi[f], cfg.grid_points)
                block = np.repeat(x[None, :], grid.size, axis=0)
                block[:, f] = grid
                blocks.append(block)
            return np.vstack(blocks)
        n, v = cfg.n_candidates, self.vary.size
        n_varied = rng.integers(1, min(cfg.max_features_varied, v) + 1, size=n)
        ranks = np.argsort(rng.random((n, v)), axis=1)
        chosen = ranks < n_varied[:, None]
        values = self.lo[self.vary] + rng.random((n, v)) * (self.hi[self.vary] - self.lo[self.vary])
        C = np.repeat(x[None, :], n, axis=0)
        sub = C[:, self.vary]
        C[:, self.vary] = np.where(chosen, values, sub)
        return C

    def counterfactual_features(self, query_index: int, n_cf: int, rng: np.random.Generator) -> np.ndarray:
        """Feature rows of up to ``n_cf`` counterfactuals for one majority query."""
        if n_cf < 1:
            raise ValueError("n_cf must be >= 1")
        if self.data.labels[query_index] != Label.MAJORITY:
            raise DataError(f"query {query_index} is not a MAJORITY instance")
        x = self.data.X[query_index]
        C = self._candidates(x, rng)
        keys = None if self._weeks is None else np.full(C.shape[0], self._weeks[query_index])
        valid = self.boundary.is_outlier(C, keys)
        C = C[valid]
        if C.shape[0] == 0:
            return C
        prox = (np.abs(C - x) / self.mad).sum(axis=1)
        order = np.argsort(prox, kind="stable")[: max(n_cf, self.config.diversity_pool)]
        C = C[order]
        chosen = [0]
        if n_cf > 1 and C.shape[0] > 1:
            S = C / self.mad
            mind = np.abs(S - S[0]).sum(axis=1)
            mind[0] = -np.inf
            while len(chosen) < min(n_cf, C.shape[0]):
                j = int(np.argmax(mind))
                chosen.append(j)
                mind = np.minimum(mind, np.abs(S - S[j]).sum(axis=1))
                mind[chosen] = -np.inf
        return C[chosen]

    def nearest_minority(self, F: np.ndarray) -> np.ndarray:
        """Dataset index of the nearest true minority instance for each row of ``F``."""
        Q = F if self.normalizer is None else self.normalizer.transform(F)
        _, nn = knn_search(self._minority_space, Q, 1)
        return self._minority[nn[:, 0]]


def generate_dice_lite(
    data: Dataset,
    boundary: ClassBoundary,
    query_index: int,
    n_cf: int,
    config: DiceConfig = DiceConfig(),
    rng=None,
    normalizer: Normalizer | None = None,
) -> list[Instance]:
    """Up to ``n_cf`` perturbation counterfactuals of one majority instance.

    An empty list means no sampled candidate crossed the boundary.
    """
    gen = DiceLite(data, boundary, config, normalizer)
    F = gen.counterfactual_features(query_index, n_cf, as_rng(rng))
    if F.shape[0] == 0:
        return []
    templates = gen.nearest_minority(F)
    qid = data.ids[query_index]
    return [
        Instance(f"dice:{qid}:{j}", tuple(float(v) for v in row), float(data.y[t]), Label.MINORITY)
        for j, (row, t) in enumerate(zip(F, templates))
    ]
