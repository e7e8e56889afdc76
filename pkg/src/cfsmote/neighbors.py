"""Exact brute-force nearest-neighbour search and the k-NN growth regressor.

Distances are accumulated feature by feature in schema order, so the
vectorised kernel produces exactly the same bits as the scalar
:func:`distance`. Ties are broken by ascending index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import DataError

_CHUNK_ELEMENTS = 2_000_000


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two feature vectors."""
    if len(a) != len(b):
        raise DataError(f"length mismatch: {len(a)} vs {len(b)}")
    s = 0.0
    for x, y in zip(a, b):
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError("non-finite coordinate")
        d = x - y
        s += d * d
    return math.sqrt(s)


@dataclass(frozen=True)
class NeighborHit:
    instance_index: int
    distance: float


class Normalizer:
    """Per-feature affine scaling fitted on training data.

    ``kind`` is ``"zscore"`` (mean/std), ``"minmax"`` or ``"none"``. Constant
    features get a scale of 1 so they contribute zero distance.
    """

    KINDS = ("zscore", "minmax", "none")

    def __init__(self, kind: str = "zscore", offset=None, scale=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown normalization {kind!r}; expected one of {self.KINDS}")
        self.kind = kind
        self.offset = None if offset is None else np.asarray(offset, dtype=np.float64)
        self.scale = None if scale is None else np.asarray(scale, dtype=np.float64)
        if self.scale is not None and (not np.all(np.isfinite(self.scale)) or np.any(self.scale <= 0)):
            raise DataError("normalization scale must be finite and positive")

    def fit(self, X) -> "Normalizer":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise DataError("cannot fit normalization on zero rows")
        if self.kind == "zscore":
            offset, scale = X.mean(axis=0), X.std(axis=0)
        elif self.kind == "minmax":
            offset, scale = X.min(axis=0), X.max(axis=0) - X.min(axis=0)
        else:
            offset, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
        scale = np.where(scale > 0, scale, 1.0)
        return Normalizer(self.kind, offset, scale)

    @property
    def fitted(self) -> bool:
        return self.scale is not None

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.kind == "none" and not self.fitted:
            return X
        if not self.fitted:
            raise RuntimeError("normalizer is not fitted")
        return (X - self.offset) / self.scale

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "offset": None if self.offset is None else self.offset.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        return cls(d["kind"], d.get("offset"), d.get("scale"))


def fit_normalizer(X, kind: str | None) -> Normalizer | None:
    if kind is None or kind == "none":
        return None
    return Normalizer(kind).fit(X)


def pairwise_distances(Q: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Dense ``(len(Q), len(P))`` distance matrix (feature-ordered accumulation)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if Q.shape[1] != P.shape[1]:
        raise DataError(f"dimension mismatch: {Q.shape[1]} vs {P.shape[1]}")
    D2 = np.zeros((Q.shape[0], P.shape[0]))
    for f in range(Q.shape[1]):
        diff = Q[:, f, None] - P[None, :, f]
        D2 += diff * diff
    return np.sqrt(D2, out=D2)


def _topk(D: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    m, n = D.shape
    if k >= n:
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
    else:
        kth = np.partition(D, k - 1, axis=1)[:, k - 1 : k]
        rows, cols = np.nonzero(D <= kth)
        o = np.lexsort((cols, D[rows, cols], rows))
        rows, cols = rows[o], cols[o]
        starts = np.searchsorted(rows, np.arange(m))
        keep = (np.arange(rows.size) - starts[rows]) < k
        order = cols[keep].reshape(m, k)
    return np.take_along_axis(D, order, axis=1), order


def knn_search(P: np.ndarray, Q: np.ndarray, k: int, exclude=None) -> tuple[np.ndarray, np.ndarray]:
    """Batched exact k-NN of each row of ``Q`` among rows of ``P``.

    Parameters
    ----------
    P, Q : ndarray
        Reference and query points, already in the comparison space.
    k : int
    exclude : array of int, optional
        Per query, a row of ``P`` to skip (``-1`` for none).

    Returns
    -------
    dist, idx : ndarray of shape (len(Q), k)
        Ascending distance; equal distances ordered by index.
    """
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    n = P.shape[0]
    if k < 1:
        raise DataError("k must be >= 1")
    available = n - (0 if exclude is None else 1)
    if n == 0 or k > available:
        raise DataError(f"k={k} exceeds the {max(available, 0)} available points")
    m = Q.shape[0]
    dist = np.empty((m, k))
    idx = np.empty((m, k), dtype=np.intp)
    step = max(1, _CHUNK_ELEMENTS // max(n, 1))
    for start in range(0, m, step):
        stop = min(start + step, m)
        D = pairwise_distances(Q[start:stop], P)
        if exclude is not None:
            ex = np.asarray(exclude[start:stop], dtype=np.intp)
            rows = np.flatnonzero(ex >= 0)
            D[rows, ex[rows]] = np.inf
        dist[start:stop], idx[start:stop] = _topk(D, k)
    return dist, idx


class NeighborIndex:
    """Immutable brute-force index over a set of points.

    ``positions`` maps index rows back to the caller's instance indices, so an
    index restricted to one class still reports dataset-level indices.
    """

    def __init__(self, points, normalizer: Normalizer | None = None, positions=None):
        raw = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if raw.shape[0] == 0:
            raise DataError("cannot build an index over zero points")
        self.normalizer = normalizer
        self._points = raw if normalizer is None else normalizer.transform(raw)
        self._points.flags.writeable = False
        if positions is None:
            positions = np.arange(raw.shape[0])
        self.positions = np.asarray(positions, dtype=np.intp)
        if self.positions.shape[0] != raw.shape[0]:
            raise DataError("positions length does not match points")

    @classmethod
    def from_dataset(cls, data: Dataset, subset=None, normalizer: Normalizer | None = None) -> "NeighborIndex":
        if subset is None:
            return cls(data.X, normalizer)
        subset = np.asarray(subset, dtype=np.intp)
        return cls(data.X[subset], normalizer, positions=subset)

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._points

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X if self.normalizer is None else self.normalizer.transform(X)

    def search(self, queries, k: int, exclude=None) -> tuple[np.ndarray, np.ndarray]:
        """Batched search; returned indices are rows of this index."""
        return knn_search(self._points, self.transform(queries), k, exclude)

    def search_rows(self, rows, k: int, exclude_self: bool = True):
        """Search using indexed rows themselves as queries."""
        rows = np.asarray(rows, dtype=np.intp)
        exclude = rows if exclude_self else None
        return knn_search(self._points, self._points[rows], k, exclude)


def knn(index: NeighborIndex, query, k: int, exclude_self: bool = False) -> list[NeighborHit]:
    """The ``k`` nearest indexed points to ``query``.

    With ``exclude_self`` the query must be an integer row of ``index``, and
    that row is left out of the result.
    """
    if exclude_self:
        if not isinstance(query, (int, np.integer)):
            raise DataError("exclude_self requires the query to be a row of the index")
        dist, idx = index.search_rows([int(query)], k, exclude_self=True)
    else:
        q = np.asarray(query, dtype=np.float64).reshape(1, -1)
        if q.shape[1] != index.points.shape[1]:
            raise DataError(f"query has {q.shape[1]} features, index has {index.points.shape[1]}")
        if not np.all(np.isfinite(q)):
            raise DataError("non-finite query")
        dist, idx = index.search(q, k)
    return [NeighborHit(int(index.positions[j]), float(d)) for j, d in zip(idx[0], dist[0])]


class KNNRegressor:
    """Unweighted k-NN mean of training targets.

    >>> model = KNNRegressor(k=5).fit(train)   # doctest: +SKIP
    >>> model.predict(test.X)                  # doctest: +SKIP
    """

    def __init__(self, k: int = 5, normalization: str = "zscore", normalizer: Normalizer | None = None):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.normalization = normalization
        self.normalizer = normalizer
        self._index = None
        self._y = None

    def fit(self, train: Dataset) -> "KNNRegressor":
        if len(train) < self.k:
            raise DataError(f"k={self.k} needs at least {self.k} training instances, got {len(train)}")
        if self.normalizer is None:
            self.normalizer = fit_normalizer(train.X, self.normalization)
        self._index = NeighborIndex(train.X, self.normalizer)
        self._y = np.asarray(train.y)
        return self

    def predict(self, X) -> np.ndarray:
        if self._index is None:
            raise RuntimeError("regressor is not fitted")
        _, idx = self._index.search(X, self.k)
        return self._y[idx].mean(axis=1)


def knn_regress(train: Dataset, query, k: int = 5, normalization: str = "zscore") -> float:
    """Predict one query's target as the mean of its ``k`` nearest training targets."""
    model = KNNRegressor(k, normalization).fit(train)
    return float(model.predict(np.asarray(query, dtype=np.float64).reshape(1, -1))[0])
