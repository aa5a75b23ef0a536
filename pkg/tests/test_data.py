import numpy as np
import pytest

from nacart.data import (
    append_mask,
    as_target,
    complete,
    make_incomplete,
    observed_stats,
    read_csv,
    read_target_csv,
    write_csv,
    write_target_csv,
)


def test_make_incomplete_complete_case():
    m = make_incomplete([[1.0, 2.0], [3.0, 4.0]], [[False, False], [False, False]])
    assert m.n == 2 and m.d == 2
    assert m.n_missing() == 0


def test_masked_cells_never_read():
    garbage = np.array([[1.0, 1e308], [-1e308, 4.0]])
    mask = np.array([[False, True], [True, False]])
    a = make_incomplete(garbage, mask)
    b = make_incomplete(np.array([[1.0, 0.0], [0.0, 4.0]]), mask)
    assert np.array_equal(a.values, b.values, equal_nan=True)
    assert np.array_equal(a.mask, b.mask)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        make_incomplete(np.zeros((2, 2)), np.zeros((2, 3), dtype=bool))


def test_nonfinite_unmasked_cell_rejected():
    with pytest.raises(ValueError):
        make_incomplete([[np.inf, 1.0]], [[False, False]])


def test_nan_values_imply_mask():
    m = make_incomplete([[np.nan, 2.0]])
    assert m.mask[0, 0] and not m.mask[0, 1]


def test_immutability():
    m = complete(np.ones((2, 2)))
    with pytest.raises(AttributeError):
        m.n = 5
    with pytest.raises(ValueError):
        m.values[0, 0] = 7.0


def test_round_trip_values_mask():
    rng = np.random.default_rng(0)
    values = rng.normal(size=(20, 4))
    mask = rng.random((20, 4)) < 0.3
    m = make_incomplete(values, mask)
    assert np.array_equal(m.values[~m.mask], values[~mask])
    assert np.array_equal(m.mask, mask)


def test_observed_stats_two_point_mean():
    m = make_incomplete([[1.0], [np.nan], [3.0]])
    s = observed_stats(m, 0)
    assert s.mean == 2.0 and s.min == 1.0 and s.max == 3.0
    assert s.observed_count == 2


def test_observed_stats_empty_column():
    m = make_incomplete([[np.nan], [np.nan]])
    s = observed_stats(m, 0)
    assert s.observed_count == 0
    assert s.mean is None and s.min is None and s.max is None


def test_observed_stats_uniform_mean():
    # Monte-Carlo: mean of 10^4 U(0,1) draws lies within 0.02 of 1/2
    rng = np.random.default_rng(7)
    m = complete(rng.random((10_000, 1)))
    s = observed_stats(m, 0)
    assert abs(s.mean - 0.5) < 0.02


def test_observed_stats_placeholder_invariance():
    rng = np.random.default_rng(3)
    values = rng.normal(size=(50, 3))
    mask = rng.random((50, 3)) < 0.4
    base = make_incomplete(values, mask)
    fuzzed_vals = values.copy()
    fuzzed_vals[mask] = rng.normal(size=int(mask.sum())) * 1e6
    fuzzed = make_incomplete(fuzzed_vals, mask)
    for j in range(3):
        a, b = observed_stats(base, j), observed_stats(fuzzed, j)
        assert a == b


def test_observed_stats_bounds_invariant():
    rng = np.random.default_rng(11)
    for trial in range(20):
        values = rng.normal(size=(30, 2))
        mask = rng.random((30, 2)) < 0.5
        if mask.all(axis=0).any():
            continue
        m = make_incomplete(values, mask)
        for j in range(2):
            s = observed_stats(m, j)
            if s.observed_count:
                assert s.min <= s.mean <= s.max


def test_append_mask_single_row():
    m = make_incomplete([[np.nan, 2.0]])
    out = append_mask(m)
    assert out.d == 4
    assert np.array_equal(out.mask[0], [True, False, False, False])
    assert out.values[0, 2] == 1.0 and out.values[0, 3] == 0.0


def test_append_mask_complete_matrix():
    m = complete(np.ones((3, 2)))
    out = append_mask(m)
    assert np.all(out.values[:, 2:] == 0.0)


def test_append_mask_all_missing_column():
    m = make_incomplete(np.column_stack([np.full(4, np.nan), np.ones(4)]))
    out = append_mask(m)
    assert np.all(out.values[:, 2] == 1.0)


def test_append_mask_twice():
    rng = np.random.default_rng(5)
    values = rng.normal(size=(10, 3))
    mask = rng.random((10, 3)) < 0.4
    m = make_incomplete(values, mask)
    twice = append_mask(append_mask(m))
    assert twice.d == 12
    assert not twice.mask[:, 3:].any()
    # indicators of the first append reappear as data, their own indicators zero
    assert np.array_equal(twice.values[:, 3:6], mask.astype(float))
    assert np.all(twice.values[:, 9:12] == 0.0)


def test_as_target_validation():
    with pytest.raises(ValueError):
        as_target([1.0, np.nan])
    with pytest.raises(ValueError):
        as_target([[1.0], [2.0]])


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    values = rng.normal(size=(15, 3))
    mask = rng.random((15, 3)) < 0.3
    m = make_incomplete(values, mask)
    path = tmp_path / "m.csv"
    write_csv(path, m, ["a", "b", "c"])
    back, names = read_csv(path)
    assert names == ["a", "b", "c"]
    assert np.array_equal(back.mask, m.mask)
    assert np.array_equal(back.values[~back.mask], m.values[~m.mask])


def test_csv_always_writes_na_token(tmp_path):
    m = make_incomplete([[np.nan, 1.0]])
    path = tmp_path / "m.csv"
    write_csv(path, m)
    text = path.read_text()
    assert "NA" in text.splitlines()[1]


def test_csv_reads_empty_field_as_missing(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("x1,x2\n,1.5\n2.5,NA\n")
    m, _ = read_csv(path)
    assert m.mask[0, 0] and m.mask[1, 1]
    assert m.values[0, 1] == 1.5 and m.values[1, 0] == 2.5


def test_target_csv_round_trip(tmp_path):
    y = np.array([1.5, -2.25, 0.0])
    path = tmp_path / "y.csv"
    write_target_csv(path, y)
    assert np.array_equal(read_target_csv(path), y)
