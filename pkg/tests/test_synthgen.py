import json
import math

import numpy as np
import pytest

from cfsmote.data import BoundaryMode, Label, class_stats, compute_boundary, label_classes
from cfsmote.errors import DataError
from cfsmote.synthgen import (
    HOT_WEEKS,
    SCHEMA,
    TABLE1,
    TEST_SLICES,
    SynthConfig,
    generate,
    generate_test,
    label_agreement,
    make_ir_grid,
    scaled_count,
    table1_grid,
)

# Reference grid: (name, majority, minority, IR truncated to one decimal)
REFERENCE_GRID = [
    ("D1", 6000, 3810, 1.5),
    ("D2", 8000, 3810, 2.0),
    ("D3", 13000, 3810, 3.4),
    ("D4", 15000, 3810, 3.9),
    ("D5", 32719, 3810, 8.5),
    ("D6", 32719, 3000, 10.9),
    ("D7", 32719, 1800, 18.1),
    ("D8", 32719, 1000, 32.7),
    ("D9", 32719, 600, 54.5),
    ("D10", 32719, 400, 81.7),
    ("D11", 32719, 275, 118.9),
    ("D12", 32719, 200, 163.5),
]


def test_grid_matches_reference_counts():
    assert [(n, a, b) for n, a, b, _ in REFERENCE_GRID] == list(TABLE1)


@pytest.mark.parametrize("name,maj,mino,ir", REFERENCE_GRID)
def test_grid_ir_matches_reference_value(name, maj, mino, ir):
    assert math.floor(maj / mino * 10) / 10 == ir


def test_desk_scale_grid():
    rows = dict((n, (a, b)) for n, a, b in table1_grid(0.1))
    assert rows["D1"] == (600, 381)
    assert rows["D5"] == (3272, 381)
    assert rows["D12"] == (3272, 20)
    assert 3272 / 20 == pytest.approx(163.6)


@pytest.mark.parametrize("n,scale,expected", [(32719, 0.1, 3272), (275, 0.1, 28), (25, 0.1, 3), (5, 1.0, 5)])
def test_scaled_count_rounds_half_up(n, scale, expected):
    assert scaled_count(n, scale) == expected


def test_generate_counts_and_ir():
    d = generate(SynthConfig(majority_count=800, minority_count=100, seed=3))
    s = class_stats(d)
    assert (s.majority_count, s.minority_count) == (800, 100)
    assert s.imbalance_ratio == 8.0
    assert d.schema == SCHEMA


@pytest.mark.parametrize(
    "kwargs",
    [
        {"majority_count": 0, "minority_count": 0},
        {"majority_count": -1},
        {"collapse_factor": 1.0},
        {"outlier_multiplier": 2.0},
        {"twin_fraction": 1.5},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(DataError):
        SynthConfig(**kwargs)


def test_config_json_round_trip():
    cfg = SynthConfig(majority_count=10, minority_count=3, seed=5, noise_std=1.0)
    text = json.dumps(cfg.to_dict())
    assert SynthConfig.from_dict(json.loads(text)) == cfg
    assert all(k == k.lower() for k in cfg.to_dict())


def test_config_rejects_unknown_keys():
    with pytest.raises(DataError):
        SynthConfig.from_dict({"majority": 3})


def test_same_seed_same_bytes():
    a, b = generate(SynthConfig(seed=9, majority_count=200, minority_count=20)), generate(SynthConfig(seed=9, majority_count=200, minority_count=20))
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes() and a.ids == b.ids


def test_no_minority_means_little_leakage():
    leak = []
    for seed in range(20):
        d = generate(SynthConfig(majority_count=800, minority_count=0, seed=seed))
        relabeled = label_classes(d, compute_boundary(d, BoundaryMode.SEASONAL))
        leak.append(class_stats(relabeled).minority_count / len(d))
    assert max(leak) <= 0.05


def test_construction_labels_agree_with_boundary():
    agreement = [label_agreement(generate(SynthConfig(seed=s))) for s in range(20)]
    assert min(agreement) >= 0.95


def test_minority_growth_collapses_within_same_weeks():
    d = generate(SynthConfig(majority_count=3000, minority_count=600, seed=4))
    weeks = d.season_keys()
    gaps = []
    for w in np.unique(weeks):
        maj = d.y[(weeks == w) & (d.labels == Label.MAJORITY)]
        mino = d.y[(weeks == w) & (d.labels == Label.MINORITY)]
        if maj.size and mino.size:
            gaps.append(maj.mean() - mino.mean())
    assert np.mean(gaps) > 0
    mask = d.labels == Label.MINORITY
    assert d.y[mask].mean() < d.y[~mask].mean()


def test_growth_is_finite_and_non_negative():
    d = generate(SynthConfig(seed=2, noise_std=10.0))
    assert np.all(np.isfinite(d.y)) and np.all(d.y >= 0)


def test_minority_rows_cross_a_band():
    cfg = SynthConfig(seed=1, majority_count=500, minority_count=200)
    d = generate(cfg)
    p = cfg.profile
    mino = d.X[d.labels == Label.MINORITY]
    week = mino[:, 0]
    z = np.column_stack(
        [(mino[:, 2 + i] - p.curve(n).mean(week)) / p.curve(n).std for i, n in enumerate(("rainfall", "temperature", "solar"))]
    )
    # rainfall and solar are clipped at 0, which can pull a dry excursion inside the band
    assert np.mean(np.any(np.abs(z) > 2.0, axis=1)) > 0.95


def test_test_slices():
    t = generate_test(SynthConfig(seed=0, test_per_slice=50))
    assert len(t) == 150
    names = [s for s, _, _ in TEST_SLICES]
    assert list(dict.fromkeys(t.slices)) == names
    for name, weeks, regime in TEST_SLICES:
        rows = np.array(t.slices) == name
        assert set(np.unique(t.X[rows, 0]).astype(int)) <= set(weeks)
        assert all((w in HOT_WEEKS) == (regime == "hot") for w in weeks)


def test_three_disrupted_slices():
    assert [s for s, _, _ in TEST_SLICES] == ["march", "july", "october"]


def test_test_ids_do_not_clash_with_train():
    assert not set(generate(SynthConfig(majority_count=50, minority_count=5)).ids) & set(generate_test(SynthConfig()).ids)


def test_ir_grid_is_reproducible_per_row():
    grid = [(100, 10), (200, 10), (300, 30)]
    a = make_ir_grid(SynthConfig(seed=5), grid)
    b = make_ir_grid(SynthConfig(seed=5), grid)
    assert [class_stats(d).imbalance_ratio for d in a] == [10.0, 20.0, 10.0]
    for x, y in zip(a, b):
        assert x.X.tobytes() == y.X.tobytes()
    # rows differ because each has its own derived seed
    assert a[0].X[:10].tobytes() != a[2].X[:10].tobytes()


def test_default_grid_shape():
    grid = make_ir_grid(SynthConfig(seed=0), scale=0.02)
    assert len(grid) == 12
    assert class_stats(grid[-1]).minority_count == 4


def test_empty_grid_is_an_error():
    with pytest.raises(DataError):
        make_ir_grid(SynthConfig(), [])
