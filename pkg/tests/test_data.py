from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ieq_occupancy.data import (
    CHANNELS,
    CSV_HEADER,
    AvailabilityError,
    DataError,
    FeatureMatrix,
    LabelError,
    SchemaError,
    SensorSample,
    available_channels,
    build_matrix,
    canonical_features,
    complete_rows,
    fit_standardizer,
    load_csv,
    resample,
    split_folds,
    write_csv,
)

T0 = datetime(2020, 1, 15, 8, 0, tzinfo=timezone.utc)


def sample(minutes=0, occupied=0, **values):
    return SensorSample(T0 + timedelta(minutes=minutes), occupied, **values)


def write_rows(path, rows, header=CSV_HEADER):
    path.write_text(",".join(header) + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


# ---------------------------------------------------------------------------
# SensorSample


def test_sample_rejects_bad_values():
    with pytest.raises(LabelError):
        sample(occupied=2)
    with pytest.raises(DataError):
        sample(co2_bg=-1.0)
    with pytest.raises(DataError):
        sample(humidity=101.0)
    with pytest.raises(DataError):
        sample(voc=float("nan"))
    assert sample(temperature=-5.0).temperature == -5.0


def test_canonical_feature_order():
    assert canonical_features(["voc", "co2_inhale"]) == ("co2_inhale", "voc")
    with pytest.raises(ValueError):
        canonical_features([])
    with pytest.raises(ValueError):
        canonical_features(["voc", "voc"])
    with pytest.raises(ValueError):
        canonical_features(["pm25"])


# ---------------------------------------------------------------------------
# CSV


def test_load_three_rows_in_order(tmp_path):
    path = write_rows(tmp_path / "z.csv", [
        ("2020-01-15T08:00:00Z", 500, 450, 60, 300, 21.5, 40, 1),
        ("2020-01-15T08:05:00Z", "", 455, 61, "", 21.6, 41, 1),
        ("2020-01-15T08:10:00Z", 520, 460, 62, 310, 21.7, 42, 0),
    ])
    rows = load_csv(path)
    assert len(rows) == 3
    assert [r.timestamp.minute for r in rows] == [0, 5, 10]
    assert rows[1].co2_inhale is None and rows[1].light is None
    assert rows[0].co2_inhale == 500.0 and rows[2].occupied == 0


def test_missing_column_is_named(tmp_path):
    header = [h for h in CSV_HEADER if h != "voc_ppb"]
    path = write_rows(tmp_path / "z.csv", [("2020-01-15T08:00:00Z", 1, 1, 1, 1, 1, 0)], header)
    with pytest.raises(SchemaError, match="voc_ppb"):
        load_csv(path)


def test_label_domain_error_names_row(tmp_path):
    path = write_rows(tmp_path / "z.csv", [
        ("2020-01-15T08:00:00Z", 500, 450, 60, 300, 21.5, 40, 1),
        ("2020-01-15T08:05:00Z", 500, 450, 60, 300, 21.5, 40, 2),
    ])
    with pytest.raises(LabelError, match="row 3.*occupied"):
        load_csv(path)


@pytest.mark.parametrize(
    "row, pattern",
    [
        (("yesterday", 1, 1, 1, 1, 1, 1, 0), "timestamp"),
        (("2020-01-15T08:00:00Z", "abc", 1, 1, 1, 1, 1, 0), "co2_inhale_ppm"),
        (("2020-01-15T08:00:00Z", "inf", 1, 1, 1, 1, 1, 0), "non-finite"),
        (("2020-01-15T08:00:00+02:00", 1, 1, 1, 1, 1, 1, 0), "UTC"),
    ],
)
def test_malformed_cells(tmp_path, row, pattern):
    path = write_rows(tmp_path / "z.csv", [row])
    with pytest.raises(DataError, match=pattern):
        load_csv(path)


def test_non_monotone_timestamps(tmp_path):
    path = write_rows(tmp_path / "z.csv", [
        ("2020-01-15T08:05:00Z", 1, 1, 1, 1, 1, 1, 0),
        ("2020-01-15T08:00:00Z", 1, 1, 1, 1, 1, 1, 0),
    ])
    with pytest.raises(DataError, match="increasing"):
        load_csv(path)


def test_unknown_column(tmp_path):
    path = write_rows(tmp_path / "z.csv", [("2020-01-15T08:00:00Z", 1, 1, 1, 1, 1, 1, 0, 3)],
                      (*CSV_HEADER, "pm25"))
    with pytest.raises(SchemaError, match="pm25"):
        load_csv(path)


def test_csv_round_trip(tmp_path):
    samples = [sample(5 * i, i % 2, co2_bg=400.25 + i, voc=55.5, humidity=40.0) for i in range(4)]
    path = tmp_path / "z.csv"
    write_csv(samples, path)
    back = load_csv(path)
    assert back == samples
    assert available_channels(back) == ("co2_bg", "voc", "humidity")


def test_write_csv_masks_channels(tmp_path):
    path = tmp_path / "z.csv"
    write_csv([sample(co2_bg=400.0, light=20.0)], path, channels=("co2_bg",))
    assert load_csv(path)[0].light is None


# ---------------------------------------------------------------------------
# Resampling


def test_resample_occupancy_threshold():
    low = [sample(i, occ) for i, occ in enumerate([1, 1, 0, 0, 0])]
    assert [s.occupied for s in resample(low, 300)] == [0]
    tie = [sample(0, 1), sample(1, 0)]
    assert [s.occupied for s in resample(tie, 300)] == [1]


def test_resample_means_and_buckets():
    rows = [sample(0, co2_bg=400.0), sample(2, co2_bg=600.0), sample(7, co2_bg=100.0, voc=3.0)]
    out = resample(rows, 300)
    assert [s.co2_bg for s in out] == [500.0, 100.0]
    assert out[0].voc is None and out[1].voc == 3.0
    assert out[1].timestamp == T0 + timedelta(minutes=5)


def test_resample_rejects_bad_input():
    with pytest.raises(ValueError):
        resample([sample()], 0)
    with pytest.raises(ValueError):
        resample([sample(5), sample(0)], 60)
    assert resample([], 300) == []


# ---------------------------------------------------------------------------
# Feature matrices


def test_build_matrix_shapes_and_order():
    rows = [sample(5 * i, i % 2, co2_inhale=500.0 + i, voc=60.0 - i) for i in range(10)]
    m = build_matrix(rows, ["voc", "co2_inhale"])
    assert m.features == ("co2_inhale", "voc")
    assert m.values.shape == (10, 2)
    assert m.values[3].tolist() == [503.0, 57.0]
    assert m.labels.tolist() == [i % 2 for i in range(10)]


def test_missing_light_is_availability_error():
    rows = [sample(5 * i, co2_bg=400.0) for i in range(5)]
    with pytest.raises(AvailabilityError) as info:
        build_matrix(rows, ["light"])
    assert info.value.channel == "light"


def test_forward_fill_and_drop():
    values = [1.0, None, None, None, None, 6.0, 7.0, 8.0, 9.0, 10.0]
    rows = [sample(5 * i, co2_bg=v) for i, v in enumerate(values)]
    m = build_matrix(rows, ["co2_bg"])
    # three buckets are bridged by the last reading, the fourth is dropped
    assert m.values[:, 0].tolist() == [1.0, 1.0, 1.0, 1.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    assert complete_rows(rows, ["co2_bg"]).tolist() == [0, 1, 2, 3, 5, 6, 7, 8, 9]


def test_too_many_dropped_rows():
    rows = [sample(5 * i, co2_bg=(1.0 if i < 2 else None)) for i in range(12)]
    with pytest.raises(AvailabilityError, match="co2_bg"):
        build_matrix(rows, ["co2_bg"])


def test_feature_matrix_validation():
    with pytest.raises(ValueError):
        FeatureMatrix(("voc",), np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        FeatureMatrix(("voc",), np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        FeatureMatrix(("voc",), np.full((1, 1), np.inf), np.zeros(1))


# ---------------------------------------------------------------------------
# Standardizer


def test_standardizer_arithmetic():
    m = FeatureMatrix(("voc", "light"), np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), np.zeros(3))
    std = fit_standardizer(m)
    assert std.mean.tolist() == [2.0, 5.0]
    assert std.scale[0] == pytest.approx(math.sqrt(2 / 3), rel=1e-15)
    out = std.apply(m).values
    assert out[:, 0].mean() == pytest.approx(0.0, abs=1e-12)
    assert out[:, 0].var() == pytest.approx(1.0, abs=1e-12)
    assert out[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_standardizer_uses_training_statistics():
    train = FeatureMatrix(("voc",), np.array([[0.0], [2.0]]), np.zeros(2))
    test = FeatureMatrix(("voc",), np.array([[10.0], [12.0]]), np.zeros(2))
    assert fit_standardizer(train).apply(test).values[:, 0].tolist() == [9.0, 11.0]
    with pytest.raises(ValueError):
        fit_standardizer(FeatureMatrix(("voc",), np.array([[1.0]]), np.zeros(1)))


@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_standardizer_round_trip(rows, cols, seed):
    r = np.random.default_rng(seed)
    values = r.normal(0, 10, (rows, cols)) * r.choice([0.0, 1.0, 1e3], cols)
    m = FeatureMatrix(CHANNELS[:cols], values + 7.0, np.zeros(rows))
    std = fit_standardizer(m)
    z = std.apply(m).values
    assert np.all(np.abs(z.mean(axis=0)) <= 1e-9)
    spread = m.values.std(axis=0) > 1e-9
    assert np.allclose(z.var(axis=0)[spread], 1.0, atol=1e-9)
    assert np.allclose(std.inverse(z), m.values, rtol=0, atol=1e-9 * max(1.0, np.abs(m.values).max()))


# ---------------------------------------------------------------------------
# Folds


def test_folds_balanced_partition():
    folds = split_folds(np.array([0, 1] * 50), 10, seed=3)
    assert np.bincount(folds.assignment).tolist() == [10] * 10


def test_folds_stratified_counts():
    labels = np.array([0] * 60 + [1] * 40)
    folds = split_folds(labels, 10, seed=9)
    for _, test in folds:
        assert np.bincount(labels[test], minlength=2).tolist() == [6, 4]


def test_folds_uneven_sizes():
    folds = split_folds(np.array([0] * 6 + [1] * 6), 5, seed=0)
    assert sorted(np.bincount(folds.assignment).tolist()) == [2, 2, 2, 3, 3]


def test_folds_errors():
    with pytest.raises(ValueError):
        split_folds([0, 1, 0, 1], 1, 0)
    with pytest.raises(ValueError):
        split_folds([0] * 10 + [1] * 2, 3, 0)


@given(
    st.integers(2, 10),
    st.integers(0, 60),
    st.integers(0, 60),
    st.integers(0, 2**63 - 1),
)
def test_fold_invariants(k, extra0, extra1, seed):
    labels = np.array([0] * (k + extra0) + [1] * (k + extra1))
    np.random.default_rng(seed).shuffle(labels)
    folds = split_folds(labels, k, seed)
    again = split_folds(labels, k, seed)
    assert np.array_equal(folds.assignment, again.assignment)
    sizes = np.bincount(folds.assignment, minlength=k)
    assert sizes.min() >= 1 and sizes.max() - sizes.min() <= 1
    for cls in (0, 1):
        per = np.bincount(folds.assignment[labels == cls], minlength=k)
        assert per.max() - per.min() <= 1
    seen = np.concatenate([test for _, test in folds])
    assert sorted(seen.tolist()) == list(range(len(labels)))


@given(st.lists(st.tuples(st.integers(0, 50), st.booleans(), st.floats(0, 5000)), min_size=1, max_size=40))
def test_resample_then_build_is_finite(events):
    minutes = sorted({m for m, _, _ in events})
    by_minute = {m: (o, v) for m, o, v in events}
    rows = [sample(m, int(by_minute[m][0]), co2_bg=by_minute[m][1]) for m in minutes]
    out = resample(rows, 300)
    m = build_matrix(out, ["co2_bg"])
    assert np.all(np.isfinite(m.values))
    assert m.rows == len(out)
