import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asg import KmeansParams, ShapeError, ValidationError, assign, exact_kmeans_small, kmeans_pp_init, lloyd
from asg.kmeans import DegenerateSeedingWarning, kmeans


def brute_nearest(points, centroids):
    labels, total = [], 0.0
    for p in np.asarray(points, float):
        best_j, best_d = 0, None
        for j, c in enumerate(np.asarray(centroids, float)):
            d = sum((a - b) ** 2 for a, b in zip(p, c))
            if best_d is None or d < best_d:
                best_j, best_d = j, d
        labels.append(best_j)
        total += best_d
    return np.array(labels), total


def brute_optimum(points, k):
    """Every labelling in k^n, skipping ones with an empty group."""
    x = np.asarray(points, float)
    best = np.inf
    count = 0
    for lab in itertools.product(range(k), repeat=len(x)):
        lab = np.array(lab)
        if len(set(lab.tolist())) != k or lab[0] != 0:
            continue
        count += 1
        cost = sum(((x[lab == g] - x[lab == g].mean(0)) ** 2).sum() for g in range(k))
        best = min(best, cost)
    return best, count


# -- assign -------------------------------------------------------------

def test_assign_tie_goes_to_lowest_index():
    a = assign([[1.0]], [[0.0], [2.0]])
    assert a.labels.tolist() == [0]
    a = assign([[1.0]], [[2.0], [0.0], [2.0]])
    assert a.labels.tolist() == [0]


def test_assign_point_on_centroid():
    a = assign([[3.0, 4.0]], [[0.0, 0.0], [3.0, 4.0]])
    assert a.labels.tolist() == [1] and a.objective == 0.0


def test_assign_matches_brute_force(rng):
    pts = rng.standard_normal((50, 4))
    cen = rng.standard_normal((8, 4))
    a = assign(pts, cen)
    labels, total = brute_nearest(pts, cen)
    np.testing.assert_array_equal(a.labels, labels)
    assert a.objective == pytest.approx(total, rel=1e-12)


def test_assign_dimension_mismatch():
    with pytest.raises(ShapeError):
        assign(np.zeros((3, 2)), np.zeros((2, 3)))


def test_assign_threads_chunking(rng, monkeypatch):
    import asg.kmeans as km
    monkeypatch.setattr(km, "CHUNK_ROWS", 7)
    pts = rng.standard_normal((100, 3))
    cen = rng.standard_normal((5, 3))
    a1, a4 = assign(pts, cen, threads=1), assign(pts, cen, threads=4)
    np.testing.assert_array_equal(a1.labels, a4.labels)
    assert a1.objective == a4.objective
    np.testing.assert_array_equal(a1.labels, brute_nearest(pts, cen)[0])


# -- k-means++ ------------------------------------------------------------

def test_pp_two_points():
    for seed in range(10):
        c = kmeans_pp_init([[0.0], [10.0]], 2, seed)
        assert sorted(c.ravel().tolist()) == [0.0, 10.0]


def test_pp_k_equals_n_is_permutation(rng):
    pts = rng.standard_normal((9, 3))
    for seed in range(5):
        c = kmeans_pp_init(pts, 9, seed)
        assert sorted(map(tuple, c)) == sorted(map(tuple, pts))


def test_pp_deterministic(rng):
    pts = rng.standard_normal((40, 2))
    assert np.array_equal(kmeans_pp_init(pts, 5, 3), kmeans_pp_init(pts, 5, 3))


def test_pp_separated_blobs():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (50, 2)), rng.normal(20, 0.1, (50, 2))])
    hits = 0
    for seed in range(100):
        c = kmeans_pp_init(pts, 2, seed)
        hits += (c[:, 0] < 10).sum() == 1
    assert hits >= 95


def test_pp_errors_and_degenerate():
    with pytest.raises(ValidationError):
        kmeans_pp_init([[0.0], [1.0]], 3)
    with pytest.warns(DegenerateSeedingWarning):
        c = kmeans_pp_init([[1.0]] * 5, 3, 0)
    assert (c == 1.0).all()


def test_pp_distinct_when_enough_distinct_points():
    pts = np.array([[0.0]] * 5 + [[1.0]] * 5 + [[2.0]] * 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for seed in range(20):
            assert len(np.unique(kmeans_pp_init(pts, 3, seed))) == 3


# -- Lloyd ------------------------------------------------------------------

def test_lloyd_fixed_point():
    c, a, trace = lloyd([[0.0], [2.0]], [[0.0], [2.0]], KmeansParams(k=2))
    assert trace == [0.0]
    assert a.objective == 0.0


def test_lloyd_hand_computed_step():
    c, a, trace = lloyd([[0.0], [1.0], [9.0], [10.0]], [[0.0], [10.0]], KmeansParams(k=2))
    np.testing.assert_array_equal(c.ravel(), [0.5, 9.5])
    # 4 points each 0.5 from its centroid: 4 * 0.25
    assert a.objective == 1.0
    assert trace == [2.0, 1.0]


def test_lloyd_empty_cluster_reseeded_at_farthest_point():
    pts = [[0.0], [1.0], [10.0]]
    c, a, _ = lloyd(pts, [[0.0], [100.0]], KmeansParams(k=2))
    assert sorted(c.ravel().tolist()) == [0.5, 10.0]
    assert a.objective == 0.5


def test_lloyd_dimension_mismatch():
    with pytest.raises(ShapeError):
        lloyd(np.zeros((4, 2)), np.zeros((2, 3)), KmeansParams(k=2))


def test_lloyd_max_iters_respected(rng):
    pts = rng.standard_normal((200, 2))
    _, _, trace = lloyd(pts, pts[:10], KmeansParams(k=10, max_iters=3, tol=0.0))
    assert len(trace) <= 3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 60), st.integers(1, 4), st.integers(1, 6))
def test_lloyd_properties(seed, n, d, k):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, d)) * rng.uniform(0.1, 5)
    c, a, trace = kmeans(pts, KmeansParams(k=k, seed=seed, tol=0.0))
    assert all(b <= t for t, b in zip(trace, trace[1:]))
    assert a.objective == trace[-1]
    assert a.labels.max() < k and a.objective >= 0
    # assignment optimality
    d2 = ((pts[:, None, :] - c[None]) ** 2).sum(-1)
    assert np.all(d2[np.arange(n), a.labels] <= d2.min(axis=1) + 1e-12)


def test_lloyd_thread_invariance(monkeypatch):
    import asg.kmeans as km
    monkeypatch.setattr(km, "CHUNK_ROWS", 64)
    pts = np.random.default_rng(7).standard_normal((1000, 5))
    p = KmeansParams(k=12, seed=4)
    c1, a1, t1 = kmeans(pts, p, threads=1)
    c4, a4, t4 = kmeans(pts, p, threads=4)
    assert c1.tobytes() == c4.tobytes() and t1 == t4
    np.testing.assert_array_equal(a1.labels, a4.labels)


def test_exact_recovery_with_duplicates():
    rng = np.random.default_rng(2)
    values = rng.standard_normal((5, 3))
    pts = values[rng.integers(0, 5, 80)]
    for seed in range(10):
        _, a, _ = kmeans(pts, KmeansParams(k=5, seed=seed))
        assert a.objective == 0.0


# -- exhaustive oracle -------------------------------------------------------

def test_exact_small_known_instance():
    pts = [[0.0], [1.0], [9.0], [10.0]]
    best, count = brute_optimum(pts, 2)
    assert count == 7 and best == 1.0
    c, a = exact_kmeans_small(pts, 2)
    assert a.objective == 1.0
    assert sorted(c.ravel().tolist()) == [0.5, 9.5]
    assert a.labels[0] == a.labels[1] != a.labels[2] == a.labels[3]


def test_exact_small_edge_cases(rng):
    pts = rng.standard_normal((6, 2))
    assert exact_kmeans_small(pts[:4], 4)[1].objective == pytest.approx(0.0, abs=1e-12)
    c, _ = exact_kmeans_small(pts, 1)
    np.testing.assert_allclose(c[0], pts.mean(0))
    with pytest.raises(ValidationError):
        exact_kmeans_small(rng.standard_normal((13, 1)), 2)
    with pytest.raises(ValidationError):
        exact_kmeans_small(pts, 5)


@pytest.mark.parametrize("seed", range(6))
def test_exact_small_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, k = 7, 1 + seed % 3
    pts = rng.standard_normal((n, 2))
    best, _ = brute_optimum(pts, k)
    _, a = exact_kmeans_small(pts, k)
    assert a.objective == pytest.approx(best, rel=1e-10)
    _, la, _ = kmeans(pts, KmeansParams(k=k, seed=seed))
    assert la.objective >= a.objective - 1e-12
