import numpy as np
import pytest
from hypothesis import settings

from cfsmote.data import Dataset, FeatureSchema, Label
from cfsmote.synthgen import SynthConfig, generate, generate_test

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_dataset(X, y=None, labels=None, climate=None, seasonal=None, ids=None, slices=None):
    """Small in-memory dataset with features ``f0..f{d-1}``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    names = tuple(f"f{i}" for i in range(d))
    if climate is None:
        climate = tuple(i for i in range(d) if i != seasonal)
    schema = FeatureSchema(names, climate, seasonal, "growth")
    if y is None:
        y = np.arange(n, dtype=np.float64)
    return Dataset(schema, X, y, ids=ids, labels=labels, slices=slices)


def random_labeled(rng, n_major, n_minor, d=3, integer=False, spread=1.0):
    """Two overlapping blobs; ``integer=True`` produces many exact ties."""
    if integer:
        X = rng.integers(0, 4, size=(n_major + n_minor, d)).astype(np.float64)
    else:
        X = np.vstack([rng.normal(0, 1, (n_major, d)), rng.normal(spread, 1, (n_minor, d))])
    labels = np.array([Label.MAJORITY] * n_major + [Label.MINORITY] * n_minor, dtype=np.int8)
    perm = rng.permutation(n_major + n_minor)
    y = rng.normal(20, 5, n_major + n_minor)
    return make_dataset(X[perm], y[perm], labels[perm])


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(majority_count=400, minority_count=40, seed=11))


@pytest.fixture(scope="session")
def small_test():
    return generate_test(SynthConfig(seed=11, test_per_slice=30))
