"""Ball sum kernels against brute force"""
import numpy as np

from SublinearDirichlet.ballsums import ball_oscillation, ball_sums


def _points(n=60, seed=3):
    rng = np.random.default_rng(seed)
    return rng.random((n, 2)), rng.random(n)


def test_shared_weights_match_brute_force():
    points, weights = _points()
    centers = points[:7]
    radii = np.array([0.1, 0.3, 0.6, 2.0])
    sums = ball_sums(points, weights, centers, radii)
    for c, center in enumerate(centers):
        dist = np.linalg.norm(points - center, axis=1)
        for k, r in enumerate(radii):
            np.testing.assert_allclose(sums[c, k], np.sum(weights[dist < r]), rtol=1e-14)


def test_per_center_weights():
    points, _ = _points()
    rng = np.random.default_rng(5)
    centers = points[:4]
    weights = rng.random((4, points.shape[0]))
    sums = ball_sums(points, weights, centers, np.array([0.25, np.inf]))
    np.testing.assert_allclose(sums[:, -1], weights.sum(axis=1), rtol=1e-14)


def test_open_balls_exclude_the_sphere():
    lattice = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.5]])
    sums = ball_sums(lattice, np.ones(3), lattice[:1], np.array([0.5, 1.0, 1.5]))
    np.testing.assert_array_equal(sums[0], [1.0, 2.0, 3.0])


def test_sums_are_monotone_in_radius():
    points, weights = _points(200, seed=11)
    sums = ball_sums(points, weights, points, np.geomspace(0.01, 2.0, 9))
    assert np.all(np.diff(sums, axis=1) >= 0)


def test_oscillation_matches_brute_force():
    points, values = _points()
    centers = points[::10]
    radii = np.array([0.05, 0.2, 0.5])
    osc = ball_oscillation(points, values, centers, radii)
    for c, center in enumerate(centers):
        dist = np.linalg.norm(points - center, axis=1)
        for k, r in enumerate(radii):
            inside = values[dist < r]
            expected = inside.max() - inside.min() if inside.size else 0.0
            assert osc[c, k] == expected
