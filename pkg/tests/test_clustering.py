"""k-means behavior: convergence, determinism, repair, and persistence."""

import numpy as np
import pytest

from routekit import ClusterModel, assign, assign_all, embeddings_of, fit_kmeans
from routekit.datamodel import PromptRecord
from routekit.kernels import pairwise_sq_dists


def test_two_obvious_groups():
    x = np.array([[0.0], [0.1], [5.0], [5.1]])
    model = fit_kmeans(x, 2, seed=0, n_restarts=4)
    got = np.sort(model.centroids[:, 0])
    want = np.array([np.mean([0.0, 0.1]), np.mean([5.0, 5.1])])
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    assert model.inertia == pytest.approx(
        ((x[:, 0] - got[np.array([0, 0, 1, 1])]) ** 2).sum(), rel=1e-12
    )


def test_k_equals_one_gives_the_mean(rng):
    x = rng.standard_normal((37, 4))
    model = fit_kmeans(x, 1, seed=3)
    assert np.allclose(model.centroids[0], x.mean(axis=0), rtol=1e-12, atol=1e-12)


def test_assign_tie_goes_to_lower_cluster_index():
    model = ClusterModel(k=2, seed=0, inertia=0.0, centroids=np.array([[0.0], [2.0]]))
    assert assign(model, [1.0]) == 0


def test_same_seed_same_model(rng):
    x = rng.standard_normal((80, 3))
    a = fit_kmeans(x, 4, seed=11, n_restarts=3)
    b = fit_kmeans(x, 4, seed=11, n_restarts=3)
    assert a == b
    assert np.array_equal(a.centroids, b.centroids)


def test_inertia_matches_recomputation(rng):
    x = rng.standard_normal((60, 5))
    model = fit_kmeans(x, 3, seed=7)
    d2 = pairwise_sq_dists(x, model.centroids)
    assert model.inertia == pytest.approx(d2.min(axis=1).sum(), rel=1e-12)


def test_converged_centroids_are_cluster_means(rng):
    x = rng.standard_normal((50, 2))
    model = fit_kmeans(x, 3, seed=5, max_iter=500, rel_tol=0.0)
    idx = assign_all(model, x)
    for j in range(3):
        members = x[idx == j]
        assert members.size > 0
        assert np.allclose(model.centroids[j], members.mean(axis=0), atol=1e-9)


def test_more_restarts_never_hurt(rng):
    # restart 0 shares the rng stream with the single run, so the best of
    # ten can only match or beat it
    x = np.concatenate([rng.standard_normal((30, 2)) + off for off in (0, 6, 12)])
    one = fit_kmeans(x, 3, seed=2, n_restarts=1)
    ten = fit_kmeans(x, 3, seed=2, n_restarts=10)
    assert ten.inertia <= one.inertia


def test_heavy_duplication_still_converges():
    # only two distinct locations: a third centroid must duplicate one and
    # the optimum is zero inertia
    x = np.array([[0.0, 0.0]] * 6 + [[9.0, 9.0]])
    model = fit_kmeans(x, 3, seed=1, n_restarts=5)
    assert model.inertia == 0.0

    # three distinct locations: the repair path must leave all three used
    y = np.array([[0.0, 0.0]] * 5 + [[9.0, 9.0]] * 5 + [[20.0, 20.0]])
    model = fit_kmeans(y, 3, seed=1, n_restarts=5)
    assert model.inertia == 0.0
    assert len(set(assign_all(model, y).tolist())) == 3


def test_argument_validation(rng):
    x = rng.standard_normal((5, 2))
    with pytest.raises(ValueError):
        fit_kmeans(x, 0, seed=0)
    with pytest.raises(ValueError):
        fit_kmeans(x, 6, seed=0)
    with pytest.raises(ValueError):
        fit_kmeans(x, 2, seed=0, max_iter=0)
    with pytest.raises(ValueError):
        fit_kmeans(x, 2, seed=0, n_restarts=0)
    with pytest.raises(ValueError):
        fit_kmeans(np.array([[np.nan, 0.0]]), 1, seed=0)


def test_assign_all_accepts_records_and_arrays(rng):
    x = rng.standard_normal((12, 3))
    prompts = [PromptRecord(id=str(i), embedding=row) for i, row in enumerate(x)]
    model = fit_kmeans(x, 2, seed=4)
    assert np.array_equal(assign_all(model, prompts), assign_all(model, x))
    assert assign_all(model, []).shape == (0,)
    assert np.array_equal(embeddings_of(prompts), x)


def test_json_round_trip(tmp_path, rng):
    model = fit_kmeans(rng.standard_normal((30, 4)), 3, seed=9)
    model.save(tmp_path / "m.json")
    back = ClusterModel.load(tmp_path / "m.json")
    assert back == model
    assert np.array_equal(back.centroids, model.centroids)
    assert back.inertia == model.inertia


def test_dimension_mismatch_on_assign(rng):
    model = fit_kmeans(rng.standard_normal((10, 3)), 2, seed=0)
    with pytest.raises(ValueError):
        assign(model, [1.0, 2.0])
