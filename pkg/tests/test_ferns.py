import time

import numpy as np
import pytest

from rfsel.dataset import Dataset
from rfsel.ferns import (FernsModel, FernsParams, ferns_importance, ferns_oob_error,
                         fit_ferns_arrays, predict_ferns, train_ferns)


def xor_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    return Dataset(X, ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int))


def label_copy_data(n=60, p=30, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, p))
    X[:, 4] = y
    return Dataset(X, y)


class TestTraining:
    def test_constant_feature_single_fern(self):
        y = np.array([0, 0, 1, 0, 1, 0, 0, 0])
        d = Dataset(np.full((8, 1), 3.0), y)
        m = train_ferns(d, FernsParams(depth=1, n_ferns=1), np.random.default_rng(0))
        counts = np.bincount(d.y[m.bag(0).train_indices], minlength=2)
        # x < thr never holds for a constant column, so every row lands in leaf 0
        np.testing.assert_allclose(np.exp(m.log_probs[0, 0]), (counts + 1) / (counts.sum() + 2))
        np.testing.assert_allclose(np.exp(m.log_probs[0, 1]), [0.5, 0.5])

    def test_leaves_are_distributions(self):
        m = train_ferns(label_copy_data(), FernsParams(depth=4, n_ferns=50),
                        np.random.default_rng(0))
        assert np.all(np.isfinite(m.log_probs))
        np.testing.assert_allclose(np.exp(m.log_probs).sum(axis=2), 1.0, atol=1e-12)
        assert m.features.shape == (50, 4)

    def test_single_class(self):
        d = Dataset(np.random.default_rng(0).normal(size=(10, 3)), np.zeros(10, dtype=int))
        m = train_ferns(d, FernsParams(3, 20), np.random.default_rng(0))
        assert np.all(np.argmax(m.log_probs, axis=2) == 0)

    def test_same_seed_same_ferns(self):
        d = label_copy_data()
        a = train_ferns(d, FernsParams(3, 40), np.random.default_rng(9))
        b = train_ferns(d, FernsParams(3, 40), np.random.default_rng(9))
        for name in ("features", "thresholds", "log_probs", "inbag"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_xor_depth_two(self):
        # single datasets scatter between 0.05 and 0.26, so the bound is on the mean
        errs = []
        for seed in range(20):
            d = xor_data(seed=seed)
            m = train_ferns(d, FernsParams(depth=2, n_ferns=1000),
                            np.random.default_rng(100 + seed))
            errs.append(ferns_oob_error(m, d.features, d.y))
        assert np.mean(errs) < 0.2

    @pytest.mark.parametrize("depth", [0, 17])
    def test_depth_bounds(self, depth):
        with pytest.raises(ValueError):
            FernsParams(depth=depth)

    def test_cost_roughly_linear(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 100))
        y = rng.integers(0, 2, 200)
        fit_ferns_arrays(X, y, 2, FernsParams(5, 10), rng)  # warm the jit cache

        def best_time(n, rows):
            out = []
            for _ in range(5):
                t0 = time.perf_counter()
                fit_ferns_arrays(X[:rows], y[:rows], 2, FernsParams(5, n), rng)
                out.append(time.perf_counter() - t0)
            return min(out)

        base = best_time(2000, 100)
        assert 1.0 <= best_time(4000, 100) / base <= 4.0
        assert 1.0 <= best_time(2000, 200) / base <= 4.0


def stub(log_vectors):
    lp = np.array(log_vectors, dtype=float)[:, None, :]  # depth 0 not allowed, so use 1
    lp = np.repeat(lp, 2, axis=1)
    n = lp.shape[0]
    return FernsModel(np.zeros((n, 1), np.int64), np.zeros((n, 1)), lp,
                      np.ones((n, 2), np.int64), 1, np.array(["a", "b"]))


class TestPrediction:
    def test_one_fern(self):
        m = stub([np.log([0.2, 0.8])])
        assert predict_ferns(m, np.zeros((3, 1))).tolist() == ["b"] * 3

    def test_tie_goes_to_first_class(self):
        m = stub([np.log([0.2, 0.8]), np.log([0.8, 0.2])])
        assert predict_ferns(m, np.zeros((1, 1))).tolist() == ["a"]


class TestImportance:
    def test_label_copy_is_top_at_depth_one(self):
        d = label_copy_data()
        m = train_ferns(d, FernsParams(depth=1, n_ferns=3000), np.random.default_rng(0))
        s = ferns_importance(m, d, np.random.default_rng(1)).scores
        assert np.argmax(s) == 4
        assert s[4] > np.sort(s)[-2]

    def test_undrawn_feature_is_zero(self):
        d = label_copy_data(p=200)
        m = train_ferns(d, FernsParams(depth=2, n_ferns=5), np.random.default_rng(0))
        s = ferns_importance(m, d, np.random.default_rng(0)).scores
        unused = np.setdiff1d(np.arange(200), m.features)
        assert len(unused) > 0 and np.all(s[unused] == 0.0)

    @pytest.mark.parametrize("scale", ["log", "linear"])
    def test_identity_gives_zero(self, scale):
        d = label_copy_data()
        m = train_ferns(d, FernsParams(3, 200), np.random.default_rng(0))
        s = ferns_importance(m, d, np.random.default_rng(0), scale=scale, identity=True).scores
        assert np.all(s == 0.0)

    def test_average_switch(self):
        d = label_copy_data()
        m = train_ferns(d, FernsParams(2, 300), np.random.default_rng(0))
        using = ferns_importance(m, d, np.random.default_rng(5)).scores
        every = ferns_importance(m, d, np.random.default_rng(5), average="all").scores
        uses = np.array([np.sum(np.any(m.features == f, axis=1)) for f in range(d.n_features)])
        np.testing.assert_allclose(every * m.n_ferns, using * uses, atol=1e-12)

    def test_bad_switch(self):
        d = label_copy_data()
        m = train_ferns(d, FernsParams(2, 10), np.random.default_rng(0))
        with pytest.raises(ValueError):
            ferns_importance(m, d, np.random.default_rng(0), scale="sqrt")
