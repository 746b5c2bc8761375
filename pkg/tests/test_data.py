import numpy as np
import pytest

from dean.data import (
    Dataset,
    LabeledDataset,
    ScalerParams,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    make_synthetic,
    split,
    write_csv,
)
from dean.errors import DataFormatError


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_label_column_extracted(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n0,0,0\n1,1,0\n5,0,1\n")
        ds = load_csv(path, label_col="y")
        assert ds.data.values.shape == (3, 2)
        assert ds.data.feature_names == ["a", "b"]
        np.testing.assert_array_equal(ds.labels, [0, 0, 1])
        assert ds.groups is None

    def test_no_label_column(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n0,0,0\n1,1,0\n5,0,1\n")
        ds = load_csv(path)
        assert ds.data.values.shape == (3, 3)
        assert ds.labels is None

    def test_bad_cell_reports_row_and_column(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n0,0,0\n1,abc,0\n5,0,1\n")
        with pytest.raises(DataFormatError, match=r"row 2.*'b'"):
            load_csv(path, label_col="y")

    def test_ragged_row(self, tmp_path):
        path = _write(tmp_path, "a,b\n0,0\n1\n")
        with pytest.raises(DataFormatError, match="row 2"):
            load_csv(path)

    def test_label_outside_binary(self, tmp_path):
        path = _write(tmp_path, "a,y\n0,2\n")
        with pytest.raises(DataFormatError, match="0 or 1"):
            load_csv(path, label_col="y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_csv(tmp_path / "nope.csv")

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path, "a,b\n0,0\n")
        with pytest.raises(DataFormatError, match="no column"):
            load_csv(path, label_col="y")

    def test_roundtrip_is_exact(self, tmp_path, rng):
        values = rng.normal(size=(20, 3)) * np.array([1e-7, 1.0, 1e9])
        labels = rng.integers(0, 2, 20)
        groups = rng.integers(0, 2, 20)
        original = LabeledDataset(Dataset(values, ["u", "v", "w"]), labels, groups)
        path = tmp_path / "rt.csv"
        write_csv(path, original, label_col="y", group_col="g")
        back = load_csv(path, label_col="y", group_col="g")
        np.testing.assert_array_equal(back.data.values, original.data.values)
        np.testing.assert_array_equal(back.labels, labels)
        np.testing.assert_array_equal(back.groups, groups)


class TestStandardizer:
    def test_two_point_column(self):
        params = fit_standardizer(Dataset(np.array([[1.0], [3.0]])))
        assert params.mean[0] == 2.0
        assert params.std[0] == 1.0

    def test_constant_column_floored(self):
        params = fit_standardizer(Dataset(np.array([[5.0], [5.0], [5.0]])))
        assert params.mean[0] == 5.0
        assert params.std[0] == 1e-12

    def test_population_std_by_hand(self):
        # column [0,0,3,3]: mean 1.5, population std sqrt(mean((x-1.5)^2)) = 1.5
        params = fit_standardizer(Dataset(np.array([[0.0], [0.0], [3.0], [3.0]])))
        assert params.mean[0] == 1.5
        assert params.std[0] == 1.5

    def test_apply_known_params(self):
        params = ScalerParams(np.array([2.0]), np.array([1.0]))
        out = apply_standardizer(params, np.array([[1.0], [3.0]]))
        np.testing.assert_array_equal(out[:, 0], [-1.0, 1.0])

    def test_self_application_centers_and_scales(self, rng):
        values = rng.normal(loc=3.0, scale=[0.5, 2.0, 7.0], size=(500, 3))
        params = fit_standardizer(Dataset(values))
        out = apply_standardizer(params, values)
        assert np.all(np.abs(out.mean(axis=0)) <= 1e-9)
        assert np.all(np.abs(out.std(axis=0) - 1.0) <= 1e-9)

    def test_constant_column_maps_to_zero(self):
        values = np.array([[4.0], [4.0], [4.0]])
        out = apply_standardizer(fit_standardizer(Dataset(values)), values)
        np.testing.assert_array_equal(out, np.zeros((3, 1)))

    def test_dimension_mismatch(self):
        params = ScalerParams(np.zeros(2), np.ones(2))
        with pytest.raises(ValueError):
            apply_standardizer(params, np.zeros((1, 3)))

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            fit_standardizer(Dataset(np.empty((0, 2))))


class TestMakeSynthetic:
    def test_linear_pattern_noise_bound(self):
        ds = make_synthetic("linear-pattern", 4, 0, 2, seed=7)
        v = ds.data.values
        assert v.shape == (4, 2)
        assert np.all(np.abs(v[:, 1] - v[:, 0]) <= 0.05)

    def test_linear_pattern_anomalies_break_pattern(self):
        ds = make_synthetic("linear-pattern", 200, 200, 2, seed=3)
        diffs = np.abs(ds.data.values[:, 1] - ds.data.values[:, 0])
        assert diffs[ds.labels == 1].mean() > 10 * diffs[ds.labels == 0].mean()

    def test_counts_honored_without_normals(self):
        ds = make_synthetic("gauss-blob", 0, 1, 3, seed=1)
        assert ds.data.values.shape == (1, 3)
        np.testing.assert_array_equal(ds.labels, [1])

    def test_sine_demo_exact(self):
        ds = make_synthetic("sine-demo", 100, 0, 2, seed=99)
        v = ds.data.values
        assert np.max(np.abs(v[:, 1] - np.sin(v[:, 0]))) == 0.0
        assert ds.labels is None

    def test_pure_function_of_arguments(self):
        a = make_synthetic("biased-groups", 50, 10, 4, seed=5)
        b = make_synthetic("biased-groups", 50, 10, 4, seed=5)
        np.testing.assert_array_equal(a.data.values, b.data.values)
        np.testing.assert_array_equal(a.groups, b.groups)

    def test_biased_groups_has_both_groups_everywhere(self):
        ds = make_synthetic("biased-groups", 40, 10, 3, seed=2)
        for g in (0, 1):
            assert ((ds.groups == g) & (ds.labels == 0)).any()
            assert ((ds.groups == g) & (ds.labels == 1)).any()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_synthetic("mystery", 10, 0, 2, seed=0)

    def test_linear_pattern_needs_two_dims(self):
        with pytest.raises(ValueError):
            make_synthetic("linear-pattern", 10, 0, 1, seed=0)


class TestSplit:
    def _toy(self):
        values = np.arange(20.0).reshape(10, 2)
        labels = np.array([0] * 8 + [1] * 2)
        return LabeledDataset(Dataset(values), labels)

    def test_normal_only_train(self):
        train, test = split(self._toy(), 0.5, seed=3, normal_only_train=True)
        assert train.rows <= 5
        assert np.all(train.labels == 0)
        assert int(test.labels.sum()) == 2
        assert train.rows + test.rows == 10

    def test_full_fraction_no_anomalies(self):
        data = LabeledDataset(Dataset(np.arange(12.0).reshape(6, 2)),
                              np.zeros(6, dtype=int))
        train, test = split(data, 1.0, seed=1)
        assert test.rows == 0
        assert sorted(train.data.values[:, 0]) == sorted(data.data.values[:, 0])

    def test_deterministic(self):
        a1, b1 = split(self._toy(), 0.6, seed=11, normal_only_train=True)
        a2, b2 = split(self._toy(), 0.6, seed=11, normal_only_train=True)
        np.testing.assert_array_equal(a1.data.values, a2.data.values)
        np.testing.assert_array_equal(b1.data.values, b2.data.values)

    def test_never_trains_on_anomaly(self, rng):
        values = rng.normal(size=(30, 2))
        labels = rng.integers(0, 2, 30)
        data = LabeledDataset(Dataset(values), labels)
        for seed in range(10):
            train, _ = split(data, 0.5, seed=seed, normal_only_train=True)
            assert np.all(train.labels == 0)


class TestInvariants:
    def test_dataset_rejects_nan(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[np.nan]]))

    def test_feature_names_must_match(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((1, 2)), ["only-one"])

    def test_labels_binary(self):
        with pytest.raises(ValueError):
            LabeledDataset(Dataset(np.zeros((2, 1))), np.array([0, 2]))
