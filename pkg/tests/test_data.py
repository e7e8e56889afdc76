import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cfsmote.data import (
    BoundaryMode,
    ClassBoundary,
    ClassStats,
    Dataset,
    FeatureSchema,
    Instance,
    Label,
    class_stats,
    compute_boundary,
    infer_schema,
    label_classes,
    read_csv,
    write_csv,
)
from cfsmote.errors import DataError
from conftest import make_dataset


# --- schema / dataset --------------------------------------------------------


def test_schema_rejects_duplicate_names():
    with pytest.raises(DataError):
        FeatureSchema(("a", "a"), (0,))


@pytest.mark.parametrize("climate", [(), (3,), (-1,)])
def test_schema_rejects_bad_climate_indices(climate):
    with pytest.raises(DataError):
        FeatureSchema(("a", "b", "c"), climate)


def test_schema_rejects_seasonal_out_of_range():
    with pytest.raises(DataError):
        FeatureSchema(("a", "b"), (0,), seasonal_index=2)


def test_schema_round_trip():
    s = FeatureSchema(("week", "rain", "temp"), (1, 2), 0, "growth")
    assert FeatureSchema.from_dict(s.to_dict()) == s
    assert s.climate_names == ("rain", "temp")


def test_dataset_arrays_are_read_only():
    d = make_dataset([[1.0], [2.0]])
    with pytest.raises(ValueError):
        d.X[0, 0] = 5.0


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(DataError):
        make_dataset([[1.0], [2.0]], ids=["a", "a"])


def test_dataset_rejects_non_finite():
    with pytest.raises(DataError):
        make_dataset([[1.0], [np.nan]])


def test_instances_round_trip():
    d = make_dataset([[1.0, 2.0], [3.0, 4.0]], [5.0, 6.0], labels=[0, 1])
    rebuilt = Dataset.from_instances(d.schema, list(d))
    assert np.array_equal(rebuilt.X, d.X)
    assert rebuilt.ids == d.ids
    assert d[1] == Instance(d.ids[1], (3.0, 4.0), 6.0, Label.MINORITY)


def test_subset_and_concat():
    d = make_dataset(np.arange(8.0).reshape(4, 2), labels=[0, 1, 0, 1])
    s = d.subset([3, 1])
    assert s.ids == (d.ids[3], d.ids[1])
    both = d.subset([0]).concat(d.subset([2]))
    assert len(both) == 2 and list(both.labels) == [0, 0]


def test_require_labeled():
    d = make_dataset([[1.0], [2.0]])
    assert not d.is_labeled
    with pytest.raises(DataError):
        class_stats(d)


@pytest.mark.parametrize("text,label", [("majority", Label.MAJORITY), ("MINORITY", Label.MINORITY), (" minority ", Label.MINORITY)])
def test_label_parse(text, label):
    assert Label.parse(text) is label


def test_label_parse_rejects_garbage():
    with pytest.raises(DataError):
        Label.parse("outlier")


# --- class statistics ---------------------------------------------------------


@pytest.mark.parametrize(
    "maj,mino,ir",
    [(800, 100, 8.0), (6000, 3810, 6000 / 3810), (1, 1, 1.0)],
)
def test_imbalance_ratio(maj, mino, ir):
    assert ClassStats(maj, mino).imbalance_ratio == pytest.approx(ir)


def test_zero_minority_is_degenerate():
    s = ClassStats(10, 0)
    assert s.degenerate and math.isinf(s.imbalance_ratio)
    assert s.deficit == 10


def test_class_stats_counts():
    d = make_dataset(np.zeros((5, 1)), labels=[0, 0, 1, 0, 1])
    s = class_stats(d)
    assert (s.majority_count, s.minority_count) == (3, 2)
    assert s.deficit == 1


# --- boundary -----------------------------------------------------------------


def test_global_boundary_hand_values():
    d = make_dataset([[0.0], [0.0], [0.0], [0.0], [10.0]])
    b = compute_boundary(d, BoundaryMode.GLOBAL)
    mean, std = b.stats[(0, None)]
    assert (mean, std) == (2.0, 4.0)


def test_boundary_is_strict():
    d = make_dataset([[0.0], [0.0], [0.0], [0.0], [10.0]])
    b = compute_boundary(d, BoundaryMode.GLOBAL)
    q = make_dataset([[10.0], [11.0], [-6.0], [-6.5]], ids=["a", "b", "c", "d"])
    labels = label_classes(q, b).labels
    assert list(labels) == [Label.MAJORITY, Label.MINORITY, Label.MAJORITY, Label.MINORITY]


def test_any_climate_feature_triggers_minority():
    X = np.zeros((20, 2))
    X[:10, 0] = np.linspace(-1, 1, 10)
    X[10:, 1] = np.linspace(-1, 1, 10)
    d = make_dataset(X)
    b = compute_boundary(d, BoundaryMode.GLOBAL)
    q = make_dataset([[0.0, 5.0], [5.0, 0.0], [0.0, 0.0]])
    assert list(label_classes(q, b).labels) == [1, 1, 0]


def test_non_climate_features_ignored():
    X = np.column_stack([np.zeros(10), np.arange(10.0)])
    d = make_dataset(X, climate=(0,))
    b = compute_boundary(d, BoundaryMode.GLOBAL)
    q = make_dataset([[0.0, 1e6]], climate=(0,))
    assert label_classes(q, b).labels[0] == Label.MAJORITY


def test_seasonal_boundary_per_week():
    # week 1 is tight around 0, week 2 tight around 100
    X = np.array([[1, 0.0], [1, 1.0], [1, -1.0], [2, 100.0], [2, 101.0], [2, 99.0]])
    d = make_dataset(X, climate=(1,), seasonal=0)
    b = compute_boundary(d, BoundaryMode.SEASONAL)
    assert b.stats[(1, 1)][0] == pytest.approx(0.0)
    assert b.stats[(1, 2)][0] == pytest.approx(100.0)
    q = make_dataset([[1, 100.0], [2, 100.0]], climate=(1,), seasonal=0)
    assert list(label_classes(q, b).labels) == [1, 0]


def test_seasonal_needs_week_feature():
    with pytest.raises(DataError):
        compute_boundary(make_dataset([[1.0], [2.0]]), BoundaryMode.SEASONAL)


def test_seasonal_unknown_week_is_an_error():
    d = make_dataset([[1, 0.0], [1, 1.0]], climate=(1,), seasonal=0)
    b = compute_boundary(d, BoundaryMode.SEASONAL)
    with pytest.raises(DataError, match="week"):
        label_classes(make_dataset([[3, 0.0]], climate=(1,), seasonal=0), b)


def test_constant_feature_flags_any_deviation():
    d = make_dataset(np.full((4, 1), 7.0))
    b = compute_boundary(d, BoundaryMode.GLOBAL)
    q = make_dataset([[7.0], [7.0 + 1e-9]])
    assert list(label_classes(q, b).labels) == [0, 1]


def test_label_classes_leaves_input_unchanged():
    d = make_dataset([[0.0], [10.0]], labels=[1, 1])
    out = label_classes(d, compute_boundary(d, BoundaryMode.GLOBAL))
    assert list(d.labels) == [1, 1]
    assert list(out.labels) == [0, 0]


def test_boundary_round_trip():
    X = np.array([[1, 0.0, 3.0], [1, 1.0, 4.0], [2, 5.0, 1.0], [2, 6.0, 2.0]])
    d = make_dataset(X, climate=(1, 2), seasonal=0)
    b = compute_boundary(d, BoundaryMode.SEASONAL, 1.5)
    b2 = ClassBoundary.from_dict(b.to_dict())
    assert b2 == b
    assert np.array_equal(b2.is_outlier(d.X, d.season_keys()), b.is_outlier(d.X, d.season_keys()))


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 3)), elements=st.floats(-1e3, 1e3)), st.randoms())
def test_boundary_permutation_invariant(X, rnd):
    d = make_dataset(X)
    perm = list(range(len(d)))
    rnd.shuffle(perm)
    b1 = compute_boundary(d, BoundaryMode.GLOBAL)
    b2 = compute_boundary(d.subset(perm), BoundaryMode.GLOBAL)
    for key in b1.stats:
        assert b1.stats[key] == pytest.approx(b2.stats[key], rel=1e-12, abs=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 3)), elements=st.floats(-50, 50)))
def test_labels_match_scalar_rule(X):
    d = make_dataset(X)
    b = compute_boundary(d, BoundaryMode.GLOBAL)
    labels = label_classes(d, b).labels
    for i in range(len(d)):
        expect = any(abs(X[i, f] - b.stats[(f, None)][0]) > 2.0 * b.stats[(f, None)][1] for f in range(X.shape[1]))
        assert labels[i] == int(expect)


# --- CSV ----------------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.integers(1, 53, 20), rng.normal(size=(20, 3)) * 1e3])
    d = Dataset(
        FeatureSchema(("week", "rainfall", "temperature", "solar"), (1, 2, 3), 0),
        X,
        rng.normal(size=20) / 3,
        labels=rng.integers(0, 2, 20),
        slices=["a"] * 10 + ["b"] * 10,
    )
    write_csv(d, tmp_path / "d.csv")
    back = read_csv(tmp_path / "d.csv")
    assert back.schema == d.schema
    assert back.X.tobytes() == d.X.tobytes()
    assert back.y.tobytes() == d.y.tobytes()
    assert np.array_equal(back.labels, d.labels)
    assert back.slices == d.slices


def test_csv_reports_row_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,week,rainfall,growth\na,1,2.0,3\nb,1,oops,3\nc,1,inf,3\n")
    with pytest.raises(DataError) as exc:
        read_csv(p)
    assert "row 3" in str(exc.value) and "row 4" in str(exc.value)


def test_csv_requires_id_and_target(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("week,rainfall,growth\n1,2,3\n")
    with pytest.raises(DataError, match="id"):
        read_csv(p)
    p.write_text("id,week,rainfall\na,1,2\n")
    with pytest.raises(DataError, match="growth"):
        read_csv(p)


def test_infer_schema_defaults():
    s = infer_schema(["id", "week", "cover", "rainfall", "temperature", "solar", "growth", "label"])
    assert s.feature_names == ("week", "cover", "rainfall", "temperature", "solar")
    assert s.climate_names == ("rainfall", "temperature", "solar")
    assert s.seasonal_index == 0


def test_infer_schema_explicit_climate():
    s = infer_schema(["id", "a", "b", "y"], target="y", climate=["b"])
    assert s.climate_feature_indices == (1,)
    with pytest.raises(DataError):
        infer_schema(["id", "a", "y"], target="y", climate=["zz"])


def test_csv_blank_label_reads_as_unlabeled(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("id,rainfall,growth,label\na,1,2,majority\nb,1,2,\n")
    d = read_csv(p)
    assert not d.is_labeled
