import numpy as np
import pytest

from gradcoreset import (
    BlobSpec,
    OmpConfig,
    SingularSystemError,
    allocate_budget,
    clustered_select,
    generate_blobs,
    global_omp_select,
    kmeans,
    matching_error,
    omp_select,
    solve_weights,
)


class TestAllocateBudget:
    def test_exact_quotas(self):
        assert allocate_budget([60, 40], 10).tolist() == [6, 4]

    def test_hand_applied_largest_remainder(self):
        # quotas [0.9, 0.9, 1.2] -> floors [0, 0, 1], two extra units go to
        # the 0.9 remainders
        assert allocate_budget([3, 3, 4], 3).tolist() == [1, 1, 1]

    def test_single_cluster(self):
        assert allocate_budget([1000], 50).tolist() == [50]

    def test_remainder_tie_favors_smaller_cluster(self):
        # quotas [45, 4.5, 0.5]: the 0.5-remainder tie between the 90- and
        # 10-sized clusters resolves toward the smaller one, so the rare
        # group keeps representation
        assert allocate_budget([900, 90, 10], 50).tolist() == [45, 4, 1]

    def test_sum_exact_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            k = int(rng.integers(1, 40))
            sizes = rng.integers(1, 1000, size=k)
            n = int(sizes.sum())
            m = int(rng.integers(0, n + 1))
            r = allocate_budget(sizes, m)
            assert int(r.sum()) == m
            assert np.all(r <= sizes)
            assert np.all(r >= 0)

    def test_shares_within_one_of_quota(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            k = int(rng.integers(2, 30))
            sizes = rng.integers(1, 500, size=k)
            n = int(sizes.sum())
            m = int(rng.integers(1, n + 1))
            r = allocate_budget(sizes, m)
            quotas = m * sizes / n
            assert np.all(np.abs(r - quotas) < 1.0 + 1e-9)

    def test_budget_exceeds_population(self):
        with pytest.raises(ValueError):
            allocate_budget([5, 5], 11)

    def test_zero_size_rejected(self):
        with pytest.raises(ValueError):
            allocate_budget([5, 0], 3)


class TestMatchingError:
    def test_exact_match_single_row(self):
        t = np.array([1.0, 2.0, 3.0])
        assert matching_error([1.0], t[None, :], t) == 0.0

    def test_zero_weights_give_target_norm(self):
        t = np.array([3.0, 4.0])
        rows = np.ones((2, 2))
        assert matching_error([0.0, 0.0], rows, t) == pytest.approx(5.0, rel=1e-15)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            rows = rng.standard_normal((3, 8))
            w = rng.standard_normal(3)
            t = rng.standard_normal(8)
            naive = 0.0
            acc = [0.0] * 8
            for i in range(3):
                for j in range(8):
                    acc[j] += w[i] * rows[i, j]
            for j in range(8):
                naive += (acc[j] - t[j]) ** 2
            naive = naive ** 0.5
            assert matching_error(w, rows, t) == pytest.approx(naive, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            matching_error([1.0], np.ones((2, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            matching_error([1.0, 1.0], np.ones((2, 3)), np.zeros(4))


def objective(rows, t, w, lam):
    resid = np.asarray(w) @ rows - t
    return float(resid @ resid + lam * np.asarray(w) @ np.asarray(w))


class TestSolveWeights:
    def test_single_column_equal_target_unregularized(self):
        t = np.array([2.0, -1.0, 0.5])
        w = solve_weights(t[None, :], t, lam=0.0, nonnegative=False)
        assert w[0] == pytest.approx(1.0, rel=1e-12)

    def test_single_column_closed_form(self):
        rng = np.random.default_rng(3)
        c = rng.standard_normal(6)
        t = rng.standard_normal(6)
        lam = 0.37
        want = float(c @ t) / (float(c @ c) + lam)
        got = solve_weights(c[None, :], t, lam=lam, nonnegative=False)
        assert got[0] == pytest.approx(want, rel=1e-12)
        clamped = solve_weights(c[None, :], -np.sign(want) * t if want != 0 else t,
                                lam=lam, nonnegative=True)
        assert clamped[0] >= 0.0

    def test_nonneg_beats_random_search(self):
        # optimality oracle: no random feasible point may improve on the
        # active-set solution
        rng = np.random.default_rng(4)
        rows = rng.standard_normal((5, 8))
        t = rng.standard_normal(8)
        lam = 0.01
        w = solve_weights(rows, t, lam=lam, nonnegative=True)
        assert np.all(w >= 0.0)
        best = objective(rows, t, w, lam)
        samples = rng.uniform(0.0, 2.0, size=(10000, 5))
        vals = np.einsum("ij,ij->i", samples @ rows - t, samples @ rows - t) \
            + lam * np.einsum("ij,ij->i", samples, samples)
        assert best <= vals.min() + 1e-9

    def test_kkt_conditions(self):
        rng = np.random.default_rng(5)
        for trial in range(40):
            m = int(rng.integers(1, 12))
            d = int(rng.integers(2, 10))
            rows = rng.standard_normal((m, d))
            t = rng.standard_normal(d)
            lam = float(rng.choice([1e-4, 0.01, 0.5]))
            w = solve_weights(rows, t, lam=lam, nonnegative=True)
            G = rows.T
            grad = 2.0 * (G.T @ (G @ w - t) + lam * w)
            scale = max(1.0, 2.0 * float(np.max(np.abs(G.T @ t))))
            active = w > 0
            assert np.all(np.abs(grad[active]) < 1e-8 * scale)
            assert np.all(grad[~active] >= -1e-8 * scale)

    def test_unconstrained_matches_normal_equations(self):
        rng = np.random.default_rng(6)
        for m, d in [(3, 8), (8, 3), (5, 5)]:
            rows = rng.standard_normal((m, d))
            t = rng.standard_normal(d)
            lam = 0.05
            w = solve_weights(rows, t, lam=lam, nonnegative=False)
            G = rows.T
            want = np.linalg.solve(G.T @ G + lam * np.eye(m), G.T @ t)
            np.testing.assert_allclose(w, want, rtol=1e-9, atol=1e-12)

    def test_primal_dual_routes_agree(self):
        # m > d exercises the dual route; compare against the primal result
        rng = np.random.default_rng(7)
        rows = rng.standard_normal((12, 4))
        t = rng.standard_normal(4)
        lam = 0.3
        G = rows.T
        want = np.linalg.solve(G.T @ G + lam * np.eye(12), G.T @ t)
        got = solve_weights(rows, t, lam=lam, nonnegative=False)
        np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-10)

    def test_singular_unregularized_raises(self):
        rows = np.array([[1.0, 2.0], [1.0, 2.0]])
        with pytest.raises(SingularSystemError):
            solve_weights(rows, np.array([1.0, 1.0]), lam=0.0, nonnegative=False)

    def test_empty_subset_rejected(self):
        with pytest.raises(ValueError):
            solve_weights(np.zeros((0, 3)), np.zeros(3), lam=0.1)


class TestOmpSelect:
    def test_duplicate_cluster_stops_after_one_pick(self):
        t = np.array([0.6, 0.8])  # unit norm
        rows = np.tile(t, (5, 1))
        lam = 0.05
        res = omp_select(rows, t, OmpConfig(lam=lam, tol=0.3, max_size=5))
        assert res.indices.tolist() == [0]
        # single duplicate column: w = 1/(1+lam), reported error
        # lam/(1+lam) + lam/(1+lam)^2
        w = 1.0 / (1.0 + lam)
        want = lam / (1.0 + lam) + lam * w * w
        assert res.final_error == pytest.approx(want, rel=1e-10)

    def test_duplicate_cluster_unregularized_exact(self):
        t = np.array([0.6, 0.8])
        rows = np.tile(t, (5, 1))
        res = omp_select(rows, t, OmpConfig(lam=0.0, tol=1e-9, max_size=5))
        assert res.indices.tolist() == [0]
        assert res.final_error == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_recovery(self):
        e1 = np.array([2.0, 0.0, 0.0])
        e2 = np.array([0.0, 1.5, 0.0])
        e3 = np.array([0.0, 0.0, 3.0])
        rows = np.vstack([e3, e1, e2])  # shuffled order
        t = 0.7 * e1 / 2.0 + 0.3 * e2 / 1.5
        res = omp_select(rows, t, OmpConfig(lam=0.0, tol=1e-12, max_size=2))
        assert res.indices.tolist() == [1, 2]  # e1 direction first, then e2
        assert res.trace[-1] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(res.weights, [0.35, 0.2], rtol=1e-10)

    def test_trace_starts_at_target_norm_and_never_increases(self):
        rng = np.random.default_rng(8)
        for trial in range(50):
            n = int(rng.integers(4, 25))
            d = int(rng.integers(3, 10))
            rows = rng.standard_normal((n, d))
            t = rows.mean(axis=0)
            lam = float(rng.choice([0.0, 1e-4, 0.01]))
            budget = int(rng.integers(1, min(n, d) + 1))
            res = omp_select(rows, t, OmpConfig(lam=lam, tol=0.0, max_size=budget,
                                                nonnegative_weights=bool(trial % 2)))
            assert res.trace[0] == pytest.approx(float(np.linalg.norm(t)), rel=1e-12)
            assert np.all(np.diff(res.trace) <= 1e-9 * max(1.0, res.trace[0]))
            assert len(res.trace) == len(res.indices) + 1

    def test_ties_break_to_lowest_index(self):
        row = np.array([1.0, 0.0])
        rows = np.vstack([row, row, row])
        res = omp_select(rows, np.array([2.0, 0.0]), OmpConfig(lam=0.1, tol=0.0, max_size=1))
        assert res.indices.tolist() == [0]

    def test_selects_whole_cluster_when_budget_allows(self):
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((4, 6))
        res = omp_select(rows, rows.mean(axis=0), OmpConfig(lam=1e-4, tol=0.0, max_size=10))
        assert sorted(res.indices.tolist()) == [0, 1, 2, 3]

    def test_budget_larger_than_needed_stops_on_tol(self):
        t = np.array([1.0, 1.0])
        rows = np.vstack([t, [5.0, -3.0], [0.1, 0.2]])
        res = omp_select(rows, t, OmpConfig(lam=0.0, tol=1e-6, max_size=3))
        assert res.indices.tolist() == [0]

    def test_forced_insertion_cannot_increase_min_error(self):
        # the solved augmented error is monotone in the support
        rng = np.random.default_rng(10)
        for _ in range(100):
            n, d = 10, 6
            rows = rng.standard_normal((n, d))
            t = rng.standard_normal(d)
            lam = float(rng.choice([1e-4, 0.1, 1.0]))
            base = list(rng.choice(n, size=3, replace=False))
            extra = int(rng.choice([i for i in range(n) if i not in base]))
            for nonneg in (False, True):
                w0 = solve_weights(rows[base], t, lam, nonneg)
                w1 = solve_weights(rows[base + [extra]], t, lam, nonneg)
                e0 = objective(rows[base], t, w0, lam)
                e1 = objective(rows[base + [extra]], t, w1, lam)
                assert e1 <= e0 + 1e-9 * max(1.0, e0)

    def test_scale_invariance_of_selection(self):
        rng = np.random.default_rng(11)
        rows = rng.standard_normal((15, 7))
        t = rng.standard_normal(7)
        lam = 0.01
        c = 3.7
        a = omp_select(rows, t, OmpConfig(lam=lam, tol=0.0, max_size=5))
        b = omp_select(c * rows, c * t, OmpConfig(lam=lam * c * c, tol=0.0, max_size=5))
        assert a.indices.tolist() == b.indices.tolist()
        ma = matching_error(a.weights, rows[a.indices], t)
        mb = matching_error(b.weights, (c * rows)[b.indices], c * t)
        assert mb == pytest.approx(c * ma, rel=1e-9)

    def test_nonnegative_weights_respected(self):
        rng = np.random.default_rng(12)
        rows = rng.standard_normal((20, 5))
        t = rng.standard_normal(5)
        res = omp_select(rows, t, OmpConfig(lam=1e-3, tol=0.0, max_size=8))
        assert np.all(res.weights >= 0.0)

    def test_final_error_recomputable(self):
        rng = np.random.default_rng(13)
        rows = rng.standard_normal((12, 6))
        t = rows.mean(axis=0)
        lam = 0.01
        res = omp_select(rows, t, OmpConfig(lam=lam, tol=0.0, max_size=4))
        recomputed = matching_error(res.weights, rows[res.indices], t) \
            + lam * float(res.weights @ res.weights)
        assert res.final_error == pytest.approx(recomputed, rel=1e-10)

    def test_empty_cluster_rejected(self):
        with pytest.raises(ValueError):
            omp_select(np.zeros((0, 3)), np.zeros(3), OmpConfig(max_size=1))


class TestClusteredSelect:
    def test_single_cluster_equals_global_pursuit(self):
        rng = np.random.default_rng(14)
        for trial in range(10):
            X = rng.standard_normal((30, 6))
            assignment = kmeans(X, 1, seed=trial)
            a = clustered_select(X, assignment, 8, lam=1e-4, tol=0.0)
            b = global_omp_select(X, 8, lam=1e-4, tol=0.0)
            assert a.indices.tolist() == b.indices.tolist()
            assert a.weights.tolist() == b.weights.tolist()
            assert a.global_error == b.global_error

    def test_full_budget_selects_everything(self):
        matrix, _, _ = generate_blobs(BlobSpec(
            n_clusters=3, samples_per_cluster=(20, 15, 10), dim=6,
            center_scale=15.0, noise_sigma=0.3, seed=1))
        assignment = kmeans(matrix, 3, seed=0)
        res = clustered_select(matrix, assignment, 45, lam=1e-4, tol=0.0)
        assert sorted(res.indices.tolist()) == list(range(45))
        assert res.indices.size == len(set(res.indices.tolist()))

    def test_ten_blob_proportional_counts(self):
        spec = BlobSpec(n_clusters=10, samples_per_cluster=(200,) * 10, dim=16,
                        center_scale=40.0, noise_sigma=0.5, seed=7)
        matrix, _, truth = generate_blobs(spec)
        assignment = kmeans(matrix, 10, seed=3)
        res = clustered_select(matrix, assignment, 100, lam=1e-4, tol=0.0)
        assert res.indices.size == 100
        # exact 200-sized clusters quota to 10 picks each; every generating
        # blob is hit within largest-remainder slack
        counts = np.bincount(truth[res.indices], minlength=10)
        assert np.all(np.abs(counts - 10) <= 1)

    def test_zero_share_cluster_contributes_nothing(self):
        matrix, _, truth = generate_blobs(BlobSpec(
            n_clusters=2, samples_per_cluster=(99, 1), dim=4,
            center_scale=20.0, noise_sigma=0.1, seed=2))
        assignment = kmeans(matrix, 2, seed=1)
        res = clustered_select(matrix, assignment, 3, lam=1e-4, tol=0.0)
        # quota [2.97, 0.03] -> all three on the big cluster
        assert res.indices.size == 3
        big = np.argmax(assignment.sizes)
        assert np.all(assignment.labels[res.indices] == big)

    def test_budget_conservation_under_tolerance_stops(self):
        matrix, _, _ = generate_blobs(BlobSpec(
            n_clusters=4, samples_per_cluster=(50,) * 4, dim=8,
            center_scale=10.0, noise_sigma=0.05, seed=3))
        assignment = kmeans(matrix, 4, seed=0)
        # loose tolerance: tight blobs satisfy the target early, so fewer
        # than the budget may return, but never more
        res = clustered_select(matrix, assignment, 40, lam=1e-4, tol=0.5)
        assert res.indices.size <= 40
        tight = clustered_select(matrix, assignment, 40, lam=1e-4, tol=0.0)
        assert tight.indices.size == 40

    def test_determinism(self):
        matrix, _, _ = generate_blobs(BlobSpec(
            n_clusters=5, samples_per_cluster=(40,) * 5, dim=8,
            center_scale=12.0, noise_sigma=0.4, seed=4))
        assignment = kmeans(matrix, 5, seed=2)
        a = clustered_select(matrix, assignment, 25, lam=1e-4, tol=0.0)
        b = clustered_select(matrix, assignment, 25, lam=1e-4, tol=0.0)
        assert a.indices.tolist() == b.indices.tolist()
        assert a.weights.tolist() == b.weights.tolist()

    def test_per_cluster_error_consistency(self):
        matrix, _, _ = generate_blobs(BlobSpec(
            n_clusters=3, samples_per_cluster=(30,) * 3, dim=6,
            center_scale=10.0, noise_sigma=0.5, seed=5))
        X = matrix.data.astype(np.float64)
        assignment = kmeans(X, 3, seed=1)
        res = clustered_select(X, assignment, 12, lam=0.01, tol=0.0)
        for entry in res.per_cluster:
            idx = np.asarray(entry["indices"])
            w = np.asarray(entry["weights"])
            target = assignment.centroids[entry["cluster"]]
            want = matching_error(w, X[idx], target) + 0.01 * float(w @ w)
            assert entry["final_error"] == pytest.approx(want, rel=1e-5)

    def test_budget_exceeding_population_rejected(self):
        X = np.zeros((5, 2)); X[0, 0] = 1.0
        assignment = kmeans(X, 1, seed=0)
        with pytest.raises(ValueError):
            clustered_select(X, assignment, 6)
