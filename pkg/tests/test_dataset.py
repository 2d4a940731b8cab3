import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfsel.dataset import (MIN_SHADOWS, Dataset, DatasetError, augment_with_shadows,
                           bootstrap_resample, ingest_csv, shadow_sources, substream,
                           write_csv)


class ForcedDraws:
    def __init__(self, draws):
        self.draws = np.asarray(draws)

    def integers(self, low, high, size):
        assert size == len(self.draws)
        return self.draws


def small(n=6, p=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, p)), np.array(["a", "b"] * (n // 2)))


class TestDataset:
    def test_codes_follow_sorted_classes(self):
        d = Dataset(np.zeros((3, 1)), np.array(["b", "a", "b"]))
        assert d.classes.tolist() == ["a", "b"]
        assert d.y.tolist() == [1, 0, 1]

    def test_features_read_only(self):
        d = small()
        with pytest.raises(ValueError):
            d.features[0, 0] = 1.0

    @pytest.mark.parametrize("X,labels", [
        (np.zeros((1, 2)), ["a"]),
        (np.zeros((3, 0)), ["a", "b", "a"]),
        (np.array([[1.0], [np.nan]]), ["a", "b"]),
        (np.array([[1.0], [np.inf]]), ["a", "b"]),
    ])
    def test_rejects_bad_shapes_and_values(self, X, labels):
        with pytest.raises(DatasetError):
            Dataset(X, np.array(labels))

    def test_rejects_duplicate_names(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((2, 2)), np.array([0, 1]), ("g", "g"))

    def test_take_keeps_class_order(self):
        d = small()
        sub = d.take(rows=[1, 1, 3], columns=[2, 0])
        assert sub.classes.tolist() == ["a", "b"]
        assert sub.y.tolist() == [1, 1, 1]
        assert sub.feature_names == (d.feature_names[2], d.feature_names[0])


class TestCsv:
    def test_three_by_three(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("g1,g2,label\n1.0,2.0,a\n3.5,-1.0,a\n0.0,0.25,b\n")
        d = ingest_csv(f, "label")
        assert (d.n_objects, d.n_features, d.n_classes) == (3, 2, 2)
        assert d.feature_names == ("g1", "g2")

    def test_nan_cell_is_named(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("g1,g2,label\n1.0,2.0,a\n3.5,NaN,b\n")
        with pytest.raises(DatasetError, match=r"3.*g2"):
            ingest_csv(f)

    def test_missing_value(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("g1,g2,label\n1.0,,a\n3.5,2.0,b\n")
        with pytest.raises(DatasetError, match="missing"):
            ingest_csv(f)

    def test_single_class_file_rejected(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("g1,label\n1.0,a\n2.0,a\n")
        with pytest.raises(DatasetError):
            ingest_csv(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            ingest_csv(tmp_path / "none.csv")

    def test_wide_microarray_shape(self, tmp_path):
        rng = np.random.default_rng(0)
        d = Dataset(rng.normal(size=(62, 2000)), rng.integers(0, 2, 62).astype(str),
                    tuple(f"g{i}" for i in range(2000)))
        f = tmp_path / "wide.csv"
        write_csv(d, f)
        back = ingest_csv(f, "class")
        assert (back.n_objects, back.n_features) == (62, 2000)
        np.testing.assert_array_equal(back.features, d.features)
        assert back.labels.tolist() == d.labels.tolist()

    def test_semicolon_delimiter(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("label;g1\nx;1.5\ny;2.5\n")
        d = ingest_csv(f, 0, delimiter=";")
        assert d.features[:, 0].tolist() == [1.5, 2.5]


class TestBootstrap:
    def test_forced_draws(self):
        rs = bootstrap_resample(4, ForcedDraws([2, 2, 0, 3]))
        assert rs.train_indices.tolist() == [0, 2, 2, 3]
        assert rs.oob_indices.tolist() == [1]

    def test_n_one_rejected(self):
        with pytest.raises(ValueError):
            bootstrap_resample(1, np.random.default_rng(0))

    def test_mean_oob_size(self):
        rng = np.random.default_rng(12)
        sizes = [len(bootstrap_resample(100, rng).oob_indices) for _ in range(1000)]
        assert abs(np.mean(sizes) - 100 * (1 - 1 / 100) ** 100) <= 3

    @given(st.integers(2, 200), st.integers(0, 2**32 - 1))
    def test_union_property(self, n, seed):
        rs = bootstrap_resample(n, np.random.default_rng(seed))
        assert len(rs.train_indices) == n
        train = set(rs.train_indices.tolist())
        oob = set(rs.oob_indices.tolist())
        assert not train & oob
        assert train | oob == set(range(n))

    def test_same_seed_identical(self):
        a = bootstrap_resample(50, substream(9, "resample", 3))
        b = bootstrap_resample(50, substream(9, "resample", 3))
        assert a.train_indices.tobytes() == b.train_indices.tobytes()

    def test_frozen_stream(self):
        # pins the seed -> sub-stream mapping against silent drift across versions
        rs = bootstrap_resample(8, substream(0, "resample", 0))
        assert rs.train_indices.tolist() == [1, 2, 2, 3, 3, 6, 6, 7]
        assert rs.oob_indices.tolist() == [0, 4, 5]


class TestShadows:
    def test_counts(self):
        assert augment_with_shadows(small(p=10), np.random.default_rng(0)).n_shadows == 10
        sd = augment_with_shadows(small(p=2), np.random.default_rng(0))
        assert sd.n_shadows == MIN_SHADOWS
        assert sd.shadow_origin.tolist() == [0, 1, 0, 1, 0]

    def test_constant_column(self):
        d = Dataset(np.column_stack([np.full(6, 2.5), np.arange(6.0)]), np.array([0, 1] * 3))
        sd = augment_with_shadows(d, np.random.default_rng(1))
        for j in np.flatnonzero(sd.shadow_origin == 0):
            assert np.all(sd.shadow_columns[:, j] == 2.5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(2, 30), st.integers(0, 10**6))
    def test_exact_permutations(self, p, n, seed):
        X = np.random.default_rng(seed).normal(size=(n, p)).round(1)
        d = Dataset(X, np.arange(n) % 2)
        sd = augment_with_shadows(d, np.random.default_rng(seed + 1))
        assert sd.n_shadows == max(p, MIN_SHADOWS)
        for j, src in enumerate(sd.shadow_origin):
            assert np.array_equal(np.sort(sd.shadow_columns[:, j]), np.sort(X[:, src]))

    def test_combined_layout(self):
        d = small(p=3)
        c = augment_with_shadows(d, np.random.default_rng(0)).combined()
        assert c.n_features == 3 + MIN_SHADOWS
        assert c.feature_names[:3] == d.feature_names
        assert shadow_sources(7).tolist() == list(range(7))
