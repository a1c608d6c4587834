import numpy as np
import pytest

from gradcoreset import BlobSpec, generate_blobs, kmeans, nearest_centroid
from gradcoreset.cluster import ClusterAssignment, load_assignment, save_assignment


def blobs(n_clusters=3, size=100, dim=8, sigma=0.1, scale=20.0, seed=0):
    spec = BlobSpec(n_clusters=n_clusters, samples_per_cluster=(size,) * n_clusters,
                    dim=dim, center_scale=scale, noise_sigma=sigma, seed=seed)
    return generate_blobs(spec)


def partition_of(ids, labels):
    groups = {}
    for i, lab in zip(ids, labels):
        groups.setdefault(int(lab), set()).add(int(i))
    return frozenset(frozenset(g) for g in groups.values())


class TestKmeans:
    def test_k1_centroid_is_column_mean(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 6))
        a = kmeans(X, 1, seed=3)
        np.testing.assert_allclose(a.centroids[0], X.mean(axis=0), rtol=1e-12)
        want_inertia = float(np.sum((X - X.mean(axis=0)) ** 2))
        assert a.inertia == pytest.approx(want_inertia, rel=1e-12)
        assert a.sizes.tolist() == [50]

    def test_four_separable_points(self):
        X = np.array([[10.0, 0.0], [-10.0, 0.0], [0.0, 10.0], [0.0, -10.0]])
        a = kmeans(X, 4, seed=1)
        assert sorted(a.sizes.tolist()) == [1, 1, 1, 1]
        assert a.inertia == pytest.approx(0.0, abs=1e-20)

    def test_recovers_generating_blobs(self):
        # three tight gaussian blobs, centers well apart: labels must match
        # the generator partition exactly (up to cluster renumbering)
        matrix, _, truth = blobs(n_clusters=3, size=100, sigma=0.1, scale=20.0, seed=5)
        a = kmeans(matrix, 3, seed=9)
        assert partition_of(range(300), a.labels) == partition_of(range(300), truth)

    def test_determinism(self):
        matrix, _, _ = blobs(seed=2)
        a = kmeans(matrix, 5, seed=7)
        b = kmeans(matrix, 5, seed=7)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)
        assert a.inertia == b.inertia

    def test_different_seed_may_differ_but_valid(self):
        matrix, _, _ = blobs(seed=2)
        for seed in range(3):
            a = kmeans(matrix, 4, seed=seed)
            assert a.sizes.sum() == matrix.n_samples
            assert np.all(a.sizes >= 1)

    def test_centroids_are_member_means(self):
        matrix, _, _ = blobs(n_clusters=4, size=60, sigma=0.8, scale=10.0, seed=3)
        a = kmeans(matrix, 4, seed=0)
        X = matrix.data.astype(np.float64)
        for k in range(4):
            members = X[a.labels == k]
            np.testing.assert_allclose(a.centroids[k], members.mean(axis=0),
                                       rtol=1e-5, atol=1e-12)

    def test_lloyd_monotonicity_internal_assert(self):
        # the implementation raises if inertia ever increases; a spread of
        # random instances exercises that assertion
        rng = np.random.default_rng(11)
        for trial in range(20):
            X = rng.standard_normal((int(rng.integers(20, 80)), int(rng.integers(2, 10))))
            kmeans(X, int(rng.integers(1, 8)), seed=trial)

    def test_permutation_equivariance_with_explicit_init(self):
        matrix, _, _ = blobs(n_clusters=3, size=40, sigma=0.2, scale=15.0, seed=8)
        X = matrix.data.astype(np.float64)
        n = X.shape[0]
        ids = np.arange(n)
        # canonical start: centroids at the rows holding ids 0, 40, 80,
        # located by id rather than by position
        canonical_ids = [0, 40, 80]
        rng = np.random.default_rng(123)
        perm = rng.permutation(n)
        Xp, idsp = X[perm], ids[perm]

        init_a = np.vstack([X[np.flatnonzero(ids == c)[0]] for c in canonical_ids])
        init_b = np.vstack([Xp[np.flatnonzero(idsp == c)[0]] for c in canonical_ids])
        assert np.array_equal(init_a, init_b)

        a = kmeans(X, 3, seed=0, init_centroids=init_a)
        b = kmeans(Xp, 3, seed=0, init_centroids=init_b)
        assert partition_of(ids, a.labels) == partition_of(idsp, b.labels)

    def test_empty_cluster_reseeded(self):
        # duplicate-heavy data forces k-means++ to seed duplicate centroids;
        # every output cluster must still own at least one point
        X = np.vstack([np.zeros((20, 3)), np.ones((2, 3)) * 100.0])
        a = kmeans(X, 4, seed=0)
        assert np.all(a.sizes >= 1)
        assert a.sizes.sum() == 22

    def test_k_validation(self):
        X = np.zeros((5, 2))
        with pytest.raises(ValueError):
            kmeans(X, 0, seed=0)
        with pytest.raises(ValueError):
            kmeans(X, 6, seed=0)

    def test_normalize_flag(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((60, 4))
        scales = np.exp(rng.standard_normal(60) * 2)
        a = kmeans(X * scales[:, None], 3, seed=1, normalize=True)
        b = kmeans(X, 3, seed=1, normalize=True)
        # scaling rows cannot change normalized clustering
        assert np.array_equal(a.labels, b.labels) or (
            partition_of(range(60), a.labels) == partition_of(range(60), b.labels))


class TestNearestCentroid:
    def assignment(self):
        centroids = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
        labels = np.array([0, 1, 2])
        return ClusterAssignment(labels, centroids, np.array([1, 1, 1]), 0.0)

    def test_exact_centroid(self):
        a = self.assignment()
        assert nearest_centroid(a, np.array([0.0, 4.0])) == 2

    def test_tie_breaks_low_index(self):
        a = self.assignment()
        assert nearest_centroid(a, np.array([2.0, 0.0])) == 0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(6)
        centroids = rng.standard_normal((10, 5))
        a = ClusterAssignment(np.arange(10), centroids, np.ones(10, dtype=int), 0.0)
        for _ in range(50):
            p = rng.standard_normal(5)
            want = min(range(10), key=lambda k: float(np.sum((p - centroids[k]) ** 2)))
            assert nearest_centroid(a, p) == want

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            nearest_centroid(self.assignment(), np.zeros(3))


class TestAssignmentIO:
    def test_round_trip(self, tmp_path):
        matrix, _, _ = blobs(seed=4)
        a = kmeans(matrix, 3, seed=2)
        save_assignment(a, tmp_path / "a.json", tmp_path / "c.gradf")
        back = load_assignment(tmp_path / "a.json")
        assert np.array_equal(back.labels, a.labels)
        assert np.array_equal(back.sizes, a.sizes)
        np.testing.assert_allclose(back.centroids, a.centroids, rtol=1e-6)

    def test_load_with_features_recomputes_exact_centroids(self, tmp_path):
        matrix, _, _ = blobs(seed=4)
        a = kmeans(matrix, 3, seed=2)
        save_assignment(a, tmp_path / "a.json", tmp_path / "c.gradf")
        back = load_assignment(tmp_path / "a.json", features=matrix)
        assert np.array_equal(back.centroids, a.centroids)
