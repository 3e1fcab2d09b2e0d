import math

import numpy as np
import pytest

from subsim.raycast import ray_sphere, raycast_grid, raycast_single


def brute_force_range(occ, cell_size, origin, direction, max_range, step=0.01):
    """Fixed-step sampling oracle for grid raycasting."""
    ts = np.arange(step / 2, max_range, step)
    pts = origin[None, :] + ts[:, None] * direction[None, :]
    cells = np.floor(pts / cell_size).astype(int)
    dims = occ.shape
    inside = np.all((cells >= 0) & (cells < np.array(dims)), axis=1)
    hit = np.zeros(len(ts), dtype=bool)
    idx = cells[inside]
    hit[inside] = occ[idx[:, 0], idx[:, 1], idx[:, 2]]
    # once the ray leaves the (convex) grid it cannot re-enter
    if inside.any():
        last_inside = np.max(np.flatnonzero(inside))
        hit[last_inside + 1:] = False
    where = np.flatnonzero(hit)
    if len(where) == 0:
        return max_range, False
    return float(ts[where[0]]), True


def random_grid(rng, dims=(12, 12, 6), fill=0.08):
    occ = rng.random(dims) < fill
    return occ


def test_axis_aligned_exact_range():
    occ = np.zeros((10, 10, 4), dtype=bool)
    occ[7, 2, 1] = True
    r, hit = raycast_single(occ, 1.0, np.array([2.5, 2.5, 1.5]),
                            np.array([1.0, 0.0, 0.0]), 20.0)
    assert hit
    assert r == pytest.approx(7.0 - 2.5)


def test_origin_in_occupied_cell_reports_zero():
    occ = np.zeros((10, 10, 4), dtype=bool)
    occ[2, 2, 1] = True
    r, hit = raycast_single(occ, 1.0, np.array([2.5, 2.5, 1.5]),
                            np.array([1.0, 0.0, 0.0]), 20.0)
    assert hit and r == 0.0


def test_miss_reports_max_range():
    occ = np.zeros((10, 10, 4), dtype=bool)
    r, hit = raycast_single(occ, 1.0, np.array([2.5, 2.5, 1.5]),
                            np.array([1.0, 0.0, 0.0]), 5.0)
    assert not hit and r == 5.0


def test_origin_outside_grid_misses():
    occ = np.ones((4, 4, 4), dtype=bool)
    r, hit = raycast_single(occ, 1.0, np.array([-3.0, 1.0, 1.0]),
                            np.array([1.0, 0.0, 0.0]), 10.0)
    assert not hit and r == 10.0


def test_matches_brute_force_sampler_on_random_rays():
    rng = np.random.default_rng(7)
    occ = random_grid(rng)
    cell = 1.0
    diag = cell * math.sqrt(3.0)
    for _ in range(200):
        origin = rng.uniform(0.5, 11.5, 3) * np.array([1, 1, 0.5])
        origin[2] = rng.uniform(0.5, 5.5)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        r, hit = raycast_single(occ, cell, origin, d, 20.0)
        rb, hb = brute_force_range(occ, cell, origin, d, 20.0)
        if hb:
            assert hit
            assert abs(r - rb) <= diag
        else:
            # the sampler can only miss thin corner clips shorter than its step
            assert (not hit) or (20.0 - r) <= diag


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    occ = random_grid(rng)
    origins = rng.uniform(1.0, 11.0, (50, 3))
    origins[:, 2] = rng.uniform(0.5, 5.5, 50)
    dirs = rng.normal(size=(50, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ranges, hits = raycast_grid(occ, 1.0, origins, dirs, 15.0)
    for i in range(50):
        r, h = raycast_single(occ, 1.0, origins[i], dirs[i], 15.0)
        assert ranges[i] == pytest.approx(r)
        assert hits[i] == h


def test_ray_sphere_closed_form():
    origins = np.array([[0.0, 0.0, 0.0]])
    dirs = np.array([[1.0, 0.0, 0.0]])
    center = np.array([5.0, 0.0, 0.0])
    t = ray_sphere(origins, dirs, center, 1.0, 20.0)
    assert t[0] == pytest.approx(4.0)


def test_ray_sphere_inside_zero_and_miss_max():
    origins = np.array([[5.0, 0.2, 0.0], [0.0, 5.0, 0.0]])
    dirs = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    center = np.array([5.0, 0.0, 0.0])
    t = ray_sphere(origins, dirs, center, 1.0, 20.0)
    assert t[0] == 0.0
    assert t[1] == 20.0


def test_ray_sphere_behind_origin_misses():
    origins = np.array([[10.0, 0.0, 0.0]])
    dirs = np.array([[1.0, 0.0, 0.0]])
    t = ray_sphere(origins, dirs, np.array([5.0, 0.0, 0.0]), 1.0, 20.0)
    assert t[0] == 20.0
