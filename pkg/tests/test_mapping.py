import math

import numpy as np
import pytest

from subsim.sensors import SonarScan
from subsim.slam.mapping import (LABEL_DYNAMIC, LABEL_STATIC, LABEL_UNKNOWN,
                                 MapConfig, OccupancyMap, classify_semantics,
                                 integrate_scan, raycast_map)


def one_beam_scan(azimuth, elevation, r, hit, max_range=20.0, tick=0):
    return SonarScan(tick=tick,
                     azimuths=np.array([azimuth]),
                     elevations=np.array([elevation]),
                     ranges=np.array([r], dtype=float),
                     hits=np.array([hit]),
                     max_range=max_range)


def fresh_map(dims=(16, 16, 8)):
    return OccupancyMap(dims=dims, cell_size=1.0)


def test_occ_threshold_constant():
    cfg = MapConfig()
    assert cfg.l_occ_thresh == pytest.approx(math.log(0.65 / 0.35))
    assert cfg.l_occ_thresh == pytest.approx(0.6190, abs=1e-4)


def test_single_beam_free_cells_and_endpoint():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    # hit at exactly 4.0 m along +x: surface at x=6.5, endpoint cell x=7
    integrate_scan(m, pose, 0.0, one_beam_scan(0.0, 0.0, 4.0, True))
    for x in range(2, 6):
        assert m.log_odds[x, 5, 3] == pytest.approx(-0.4)
        assert m.free_count[x, 5, 3] == 1
    # the cell containing the surface sample is left untouched; occupancy
    # lands half a cell behind the measured face
    assert m.log_odds[6, 5, 3] == 0.0
    assert m.log_odds[7, 5, 3] == pytest.approx(0.85)
    assert m.occ_count[7, 5, 3] == 1


def test_miss_beam_marks_ray_free_only():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    integrate_scan(m, pose, 0.0, one_beam_scan(0.0, 0.0, 20.0, False, max_range=5.0))
    assert (m.log_odds <= 0).all()
    assert m.occ_count.sum() == 0
    assert m.free_count.sum() > 0


def test_log_odds_clamped():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    scan = one_beam_scan(0.0, 0.0, 4.0, True)
    for _ in range(30):
        integrate_scan(m, pose, 0.0, scan)
    assert m.log_odds[7, 5, 3] == pytest.approx(6.0)
    assert m.log_odds[3, 5, 3] == pytest.approx(-6.0)


def test_flip_count_tracks_observation_class_changes():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    hit = one_beam_scan(0.0, 0.0, 2.0, True)     # occupied endpoint in cell x=5
    past = one_beam_scan(0.0, 0.0, 6.0, True)    # same cell now traversed free
    integrate_scan(m, pose, 0.0, hit)
    assert m.flip_count[5, 5, 3] == 0            # first observation, no flip
    integrate_scan(m, pose, 0.0, past)
    assert m.flip_count[5, 5, 3] == 1            # occ -> free
    integrate_scan(m, pose, 0.0, hit)
    assert m.flip_count[5, 5, 3] == 2            # free -> occ
    integrate_scan(m, pose, 0.0, hit)
    assert m.flip_count[5, 5, 3] == 2            # occ -> occ, stable


def test_semantics_static_vs_dynamic_labels():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    hit = one_beam_scan(0.0, 0.0, 2.0, True)
    past = one_beam_scan(0.0, 0.0, 6.0, True)
    # stable cell: 8 consistent occupied observations
    for _ in range(8):
        integrate_scan(m, pose, 0.0, hit)
    classify_semantics(m, tick=8)
    assert m.label[5, 5, 3] == LABEL_STATIC
    # flickering cell: alternate occ/free -> flip ratio ~0.5 >= 0.3
    for _ in range(4):
        integrate_scan(m, pose, 0.0, past)
        integrate_scan(m, pose, 0.0, hit)
    classify_semantics(m, tick=16)
    assert m.label[5, 5, 3] == LABEL_DYNAMIC


def test_semantics_requires_n_min_observations():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    for _ in range(7):
        integrate_scan(m, pose, 0.0, one_beam_scan(0.0, 0.0, 2.0, True))
    classify_semantics(m, tick=7)
    assert m.label[5, 5, 3] == LABEL_UNKNOWN


def test_occ_grid_cache_invalidated_by_integration():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    assert not m.occ_grid().any()
    integrate_scan(m, pose, 0.0, one_beam_scan(0.0, 0.0, 4.0, True))
    assert m.occ_grid()[7, 5, 3]


def test_raycast_map_sees_learned_wall():
    m = fresh_map()
    pose = np.array([2.5, 5.5, 3.5])
    integrate_scan(m, pose, 0.0, one_beam_scan(0.0, 0.0, 4.0, True))
    r, hit = raycast_map(m, pose, np.array([1.0, 0.0, 0.0]), 20.0)
    assert hit
    assert r == pytest.approx(7.0 - 2.5)  # front face of the learned cell
