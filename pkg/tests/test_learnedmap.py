"""Soft cluster map: forward pass, exact gradients, and training."""

import math

import numpy as np
import pytest

from routekit import (
    LearnedMapEstimator,
    LlmFeature,
    MapParams,
    TrainConfig,
    learned_estimator,
    loss_and_grad,
    route,
    soft_assign,
    train_map,
)
from routekit.learned_map import HIDDEN_WIDTH, soft_assign_batch

from conftest import make_labels


def cfeat(values, llm_id="m"):
    values = np.asarray(values, dtype=np.float64)
    return LlmFeature(
        llm_id=llm_id, kind="cluster_error", values=values, support=np.ones(values.size, dtype=np.int64)
    )


def linear_params(w, b, d=None):
    w = np.asarray(w, dtype=np.float64)
    return MapParams(
        arch="linear_softmax",
        layers=((w, np.asarray(b, dtype=np.float64)),),
        feature_mean=np.zeros(w.shape[0]),
        feature_scale=np.ones(w.shape[0]),
        seed=0,
    )


class TestForward:
    def test_zero_weights_mean_uniform(self):
        params = linear_params(np.zeros((3, 4)), np.zeros(4))
        probs = soft_assign(params, np.array([1.0, -2.0, 0.5]))
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_large_logit_saturates(self):
        params = linear_params(np.zeros((2, 3)), np.array([50.0, 0.0, 0.0]))
        probs = soft_assign(params, np.zeros(2))
        assert probs[0] == pytest.approx(1.0, abs=1e-12)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rows_sum_to_one(self, rng):
        params = linear_params(rng.standard_normal((5, 6)), rng.standard_normal(6))
        probs = soft_assign_batch(params, rng.standard_normal((40, 5)))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert probs.min() >= 0

    def test_shared_bias_shift_changes_nothing(self, rng):
        w = rng.standard_normal((4, 3))
        b = rng.standard_normal(3)
        x = rng.standard_normal(4)
        a = soft_assign(linear_params(w, b), x)
        c = soft_assign(linear_params(w, b + 7.25), x)
        assert np.allclose(a, c, atol=1e-14)

    def test_input_dim_checked(self):
        params = linear_params(np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            soft_assign(params, np.zeros(4))


class TestLossAndGrad:
    def test_uninformative_features_cost_log_two(self, rng):
        # every estimate is exactly one half, so the loss is ln 2 regardless
        # of labels or weights
        params = linear_params(rng.standard_normal((3, 4)), rng.standard_normal(4))
        feats = [cfeat([0.5] * 4, llm_id=f"m{j}") for j in range(2)]
        x = rng.standard_normal((10, 3))
        y = (rng.random((10, 2)) < 0.5).astype(float)
        loss, grads = loss_and_grad(params, x, y, np.ones_like(y, dtype=bool), feats)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_matches_central_differences(self):
        for seed in range(3):
            gen = np.random.Generator(np.random.PCG64(seed))
            k, d, m, n = 4, 3, 3, 12
            params = linear_params(0.3 * gen.standard_normal((d, k)), 0.3 * gen.standard_normal(k))
            feats = [cfeat(gen.uniform(0.1, 0.9, k), llm_id=f"m{j}") for j in range(m)]
            x = gen.standard_normal((n, d))
            y = (gen.random((n, m)) < 0.4).astype(float)
            obs = gen.random((n, m)) < 0.8
            obs[0] = True
            loss, grads = loss_and_grad(params, x, y, obs, feats)
            h = 1e-6
            w = params.layers[0][0]
            for idx in [(0, 0), (1, 2), (2, 3)]:
                wp = w.copy()
                wp[idx] += h
                lp, _ = loss_and_grad(linear_params(wp, params.layers[0][1]), x, y, obs, feats)
                wm = w.copy()
                wm[idx] -= h
                lm, _ = loss_and_grad(linear_params(wm, params.layers[0][1]), x, y, obs, feats)
                num = (lp - lm) / (2 * h)
                assert grads[0][0][idx] == pytest.approx(num, abs=1e-6)

    def test_masked_entries_do_not_contribute(self, rng):
        params = linear_params(rng.standard_normal((2, 3)), np.zeros(3))
        feats = [cfeat([0.2, 0.5, 0.8])]
        x = rng.standard_normal((6, 2))
        y = np.zeros((6, 1))
        obs = np.array([[True], [True], [True], [False], [False], [True]])
        garbage = y.copy()
        garbage[3:5] = 1.0
        la, ga = loss_and_grad(params, x, y, obs, feats)
        lb, gb = loss_and_grad(params, x, garbage, obs, feats)
        assert la == lb
        for (dwa, dba), (dwb, dbb) in zip(ga, gb):
            assert np.array_equal(dwa, dwb) and np.array_equal(dba, dbb)

    def test_bias_gradient_sums_to_zero(self, rng):
        # shifting every logit equally cannot change the loss
        params = linear_params(rng.standard_normal((3, 5)), rng.standard_normal(5))
        feats = [cfeat(rng.uniform(0.1, 0.9, 5), llm_id=f"m{j}") for j in range(2)]
        x = rng.standard_normal((15, 3))
        y = (rng.random((15, 2)) < 0.5).astype(float)
        _, grads = loss_and_grad(params, x, y, np.ones_like(y, dtype=bool), feats)
        assert grads[0][1].sum() == pytest.approx(0.0, abs=1e-12)

    def test_estimates_are_affine_in_the_feature_table(self, rng):
        params = linear_params(rng.standard_normal((3, 4)), np.zeros(4))
        x = rng.standard_normal((8, 3))
        t1 = rng.uniform(0.2, 0.8, (2, 4))
        t2 = rng.uniform(0.2, 0.8, (2, 4))
        est = LearnedMapEstimator(params)
        for alpha in (0.0, 0.5, 1.0):
            mix = alpha * t1 + (1 - alpha) * t2
            feats = [cfeat(mix[j], llm_id=f"m{j}") for j in range(2)]
            f1 = [cfeat(t1[j], llm_id=f"m{j}") for j in range(2)]
            f2 = [cfeat(t2[j], llm_id=f"m{j}") for j in range(2)]
            got = est.estimate_matrix(x, feats)
            want = alpha * est.estimate_matrix(x, f1) + (1 - alpha) * est.estimate_matrix(x, f2)
            assert np.allclose(got, want, atol=1e-12)

    def test_no_observed_labels_rejected(self, rng):
        params = linear_params(np.zeros((2, 2)), np.zeros(2))
        feats = [cfeat([0.5, 0.5])]
        with pytest.raises(ValueError):
            loss_and_grad(params, rng.standard_normal((3, 2)), np.zeros((3, 1)), np.zeros((3, 1), dtype=bool), feats)


class TestTraining:
    def _blob_problem(self, seed=0, n=300):
        gen = np.random.Generator(np.random.PCG64(seed))
        half = n // 2
        x = np.vstack([
            gen.standard_normal((half, 2)) + [-4.0, 0.0],
            gen.standard_normal((n - half, 2)) + [4.0, 0.0],
        ])
        true = np.array([0] * half + [1] * (n - half))
        # llm0 is good on blob 0, llm1 on blob 1
        table = np.array([[0.1, 0.8], [0.9, 0.15]])
        y = gen.random((n, 2)) < table.T[true]
        labels = make_labels(y.astype(float))
        feats = [cfeat(table[j], llm_id=f"m{j}") for j in range(2)]
        return x, labels, feats, true

    def test_loss_descends_and_epochs_are_recorded(self):
        x, labels, feats, _ = self._blob_problem()
        history: list[float] = []
        train_map(x, labels, feats, 2, config=TrainConfig(epochs=6, seed=1), epoch_losses=history)
        assert len(history) == 6  # one full-data loss per epoch
        assert history[-1] <= history[0] + 1e-12

    def test_learned_routing_matches_the_blobs(self):
        x, labels, feats, true = self._blob_problem(seed=3, n=400)
        params = train_map(x, labels, feats, 2, config=TrainConfig(epochs=10, seed=2))
        est = learned_estimator(params, feats[0])
        pool = [(feats[0], 1.0), (feats[1], 1.0)]
        picks = np.array([route(est, xi, pool, 0.0).llm_index for xi in x])
        assert (picks == true).mean() >= 0.95

    def test_retraining_is_bit_identical(self):
        x, labels, feats, _ = self._blob_problem(seed=5)
        a = train_map(x, labels, feats, 2, config=TrainConfig(seed=7))
        b = train_map(x, labels, feats, 2, config=TrainConfig(seed=7))
        assert a == b

    def test_two_hidden_architecture_shapes(self):
        x, labels, feats, _ = self._blob_problem(seed=6)
        params = train_map(x, labels, feats, 2, arch="two_hidden", config=TrainConfig(epochs=2, seed=0))
        assert len(params.layers) == 3
        assert params.layers[0][0].shape == (2, HIDDEN_WIDTH)
        assert params.layers[1][0].shape == (HIDDEN_WIDTH, HIDDEN_WIDTH)
        assert params.layers[2][0].shape == (HIDDEN_WIDTH, 2)
        # standardization is frozen from the training inputs
        assert np.allclose(params.feature_mean, x.mean(axis=0))
        probs = soft_assign_batch(params, x[:5])
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_linear_arch_stores_identity_standardization(self):
        x, labels, feats, _ = self._blob_problem(seed=8)
        params = train_map(x, labels, feats, 2, config=TrainConfig(epochs=1, seed=0))
        assert np.array_equal(params.feature_mean, np.zeros(2))
        assert np.array_equal(params.feature_scale, np.ones(2))

    def test_sgd_optimizer_also_descends(self):
        x, labels, feats, _ = self._blob_problem(seed=9)
        history: list[float] = []
        train_map(
            x, labels, feats, 2,
            config=TrainConfig(epochs=4, seed=0, optimizer="sgd", learning_rate=0.1),
            epoch_losses=history,
        )
        assert history[-1] <= history[0] + 1e-12

    def test_masked_labels_change_nothing(self):
        x, labels, feats, _ = self._blob_problem(seed=10)
        mask = np.ones(labels.losses.shape, dtype=bool)
        mask[::3, 0] = False
        flipped = labels.losses.copy()
        flipped[::3, 0] = 1.0 - flipped[::3, 0]
        a = train_map(x, make_labels(labels.losses, mask), feats, 2, config=TrainConfig(seed=4))
        b = train_map(x, make_labels(flipped, mask), feats, 2, config=TrainConfig(seed=4))
        assert a == b

    def test_feature_validation(self):
        x, labels, feats, _ = self._blob_problem(seed=11)
        with pytest.raises(ValueError):
            train_map(x, labels, feats, 3)  # k disagrees with feature length
        bad = [LlmFeature(llm_id="m", kind="raw_error", values=np.full(300, 0.5), support=np.ones(300, dtype=np.int64))] * 2
        with pytest.raises(ValueError):
            train_map(x, labels, bad, 300)


class TestConfigAndPersistence:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(optimizer="momentum")
        with pytest.raises(ValueError):
            TrainConfig(clamp_eps=0.5)

    def test_params_round_trip(self, tmp_path, rng):
        params = linear_params(rng.standard_normal((3, 4)), rng.standard_normal(4))
        params.save(tmp_path / "map.json")
        back = MapParams.load(tmp_path / "map.json")
        assert back == params

    def test_params_validation(self):
        with pytest.raises(ValueError):
            MapParams(arch="bogus", layers=((np.zeros((2, 2)), np.zeros(2)),),
                      feature_mean=np.zeros(2), feature_scale=np.ones(2), seed=0)
        with pytest.raises(ValueError):
            MapParams(arch="two_hidden", layers=((np.zeros((2, 2)), np.zeros(2)),),
                      feature_mean=np.zeros(2), feature_scale=np.ones(2), seed=0)
        with pytest.raises(ValueError):
            MapParams(arch="linear_softmax", layers=((np.zeros((2, 2)), np.zeros(2)),),
                      feature_mean=np.zeros(2), feature_scale=np.zeros(2), seed=0)
