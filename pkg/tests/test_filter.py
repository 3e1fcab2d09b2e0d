import math

import numpy as np
import pytest

from subsim.sensors import OdometryDelta, SonarScan
from subsim.slam.mapping import OccupancyMap
from subsim.slam.pfilter import (FilterConfig, ParticleSet, effective_sample_size,
                                 estimate_pose, init_particles, maybe_resample,
                                 predict, resample_systematic, weight)


def map_with_wall(x_cell=10, dims=(16, 16, 8)):
    m = OccupancyMap(dims=dims, cell_size=1.0)
    m.log_odds[x_cell, :, :] = 6.0
    return m


def one_beam_scan(r, hit=True, max_range=20.0):
    return SonarScan(tick=0, azimuths=np.array([0.0]),
                     elevations=np.array([0.0]),
                     ranges=np.array([r], dtype=float),
                     hits=np.array([hit]), max_range=max_range)


def two_particles(xa, xb):
    poses = np.array([[xa, 8.0, 3.0, 0.0], [xb, 8.0, 3.0, 0.0]])
    return ParticleSet(poses=poses, weights=np.array([0.5, 0.5]))


def beam_likelihood(measured, expected, cfg, max_range=20.0):
    g = math.exp(-0.5 * ((measured - expected) / cfg.beam_sigma) ** 2) \
        / (cfg.beam_sigma * math.sqrt(2 * math.pi))
    return (1 - cfg.epsilon) * g + cfg.epsilon / max_range


def test_weight_ratio_matches_closed_form():
    m = map_with_wall()
    cfg = FilterConfig(weight_stride=1)
    ps = two_particles(4.5, 6.0)
    measured = 5.3
    ps = weight(ps, one_beam_scan(measured), m, cfg)
    # expected ranges to the wall front face at x=10
    la = beam_likelihood(measured, 10.0 - 4.5, cfg)
    lb = beam_likelihood(measured, 10.0 - 6.0, cfg)
    assert ps.weights[0] / ps.weights[1] == pytest.approx(la / lb, abs=1e-6)
    assert ps.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_weight_ratio_two_beams_multiplies():
    m = map_with_wall()
    cfg = FilterConfig(weight_stride=1)
    ps = two_particles(4.5, 6.0)
    scan = SonarScan(tick=0, azimuths=np.array([0.0, 0.0]),
                     elevations=np.array([0.0, 0.0]),
                     ranges=np.array([5.3, 5.0]),
                     hits=np.array([True, True]), max_range=20.0)
    ps = weight(ps, scan, m, cfg)
    la = beam_likelihood(5.3, 5.5, cfg) * beam_likelihood(5.0, 5.5, cfg)
    lb = beam_likelihood(5.3, 4.0, cfg) * beam_likelihood(5.0, 4.0, cfg)
    assert ps.weights[0] / ps.weights[1] == pytest.approx(la / lb, rel=1e-9)


def test_weight_noop_on_empty_map_or_all_miss_scan():
    cfg = FilterConfig(weight_stride=1)
    ps = two_particles(4.5, 6.0)
    before = ps.weights.copy()
    weight(ps, one_beam_scan(5.0), OccupancyMap(dims=(16, 16, 8), cell_size=1.0), cfg)
    np.testing.assert_array_equal(ps.weights, before)
    weight(ps, one_beam_scan(20.0, hit=False), map_with_wall(), cfg)
    np.testing.assert_array_equal(ps.weights, before)


def test_degenerate_weights_reset_to_uniform():
    m = map_with_wall()
    cfg = FilterConfig(weight_stride=1, epsilon=0.0, beam_sigma=1e-3)
    ps = two_particles(4.5, 6.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ps = weight(ps, one_beam_scan(1.0), m, cfg)
    np.testing.assert_allclose(ps.weights, [0.5, 0.5])
    assert ps.degenerate_resets == 1


def test_systematic_resampling_of_uniform_weights_is_identity():
    rng = np.random.default_rng(0)
    poses = rng.uniform(0, 10, (64, 4))
    ps = ParticleSet(poses=poses.copy(), weights=np.full(64, 1.0 / 64))
    out = resample_systematic(ps, rng)
    np.testing.assert_array_equal(out.poses, poses)
    np.testing.assert_allclose(out.weights, 1.0 / 64)


def test_systematic_resampling_concentrates_on_heavy_particle():
    rng = np.random.default_rng(1)
    poses = np.arange(40, dtype=float).reshape(10, 4)
    w = np.full(10, 0.1 / 9)
    w[3] = 0.9
    ps = ParticleSet(poses=poses.copy(), weights=w / w.sum())
    out = resample_systematic(ps, rng)
    frac = np.mean(np.all(out.poses == poses[3], axis=1))
    assert frac >= 0.8


def test_maybe_resample_threshold():
    rng = np.random.default_rng(0)
    n = 16
    ps = ParticleSet(poses=np.zeros((n, 4)), weights=np.full(n, 1.0 / n))
    assert effective_sample_size(ps) == pytest.approx(n)
    _, did = maybe_resample(ps, rng)
    assert not did
    w = np.zeros(n)
    w[0] = 1.0
    ps = ParticleSet(poses=np.zeros((n, 4)), weights=w)
    assert effective_sample_size(ps) == pytest.approx(1.0)
    _, did = maybe_resample(ps, rng)
    assert did


def test_predict_moves_each_particle_in_its_own_frame():
    cfg = FilterConfig()
    poses = np.array([[0.0, 0.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0, math.pi / 2]])
    ps = ParticleSet(poses=poses, weights=np.array([0.5, 0.5]))
    odo = OdometryDelta(d_forward=1.0, d_heave=0.2, d_yaw=0.1,
                        covariance_diag=np.zeros(3))
    ps = predict(ps, odo, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(ps.poses[0], [1.0, 0.0, 0.2, 0.1], atol=1e-12)
    np.testing.assert_allclose(ps.poses[1], [0.0, 1.0, 0.2, math.pi / 2 + 0.1],
                               atol=1e-12)


def test_predict_noise_scales_with_inflation():
    odo = OdometryDelta(d_forward=1.0, d_heave=0.0, d_yaw=0.0,
                        covariance_diag=np.array([0.01, 0.01, 0.0]))
    n = 4000
    outs = []
    for infl in (1.0, 2.0):
        cfg = FilterConfig(predict_inflation=infl)
        ps = ParticleSet(poses=np.zeros((n, 4)), weights=np.full(n, 1.0 / n))
        ps = predict(ps, odo, cfg, np.random.default_rng(9))
        outs.append(ps.poses[:, 0].std())
    assert outs[0] == pytest.approx(0.1, rel=0.1)
    assert outs[1] == pytest.approx(0.2, rel=0.1)


def test_estimate_pose_circular_yaw_mean():
    poses = np.array([[0.0, 0.0, 0.0, math.pi - 0.1],
                      [0.0, 0.0, 0.0, -math.pi + 0.1]])
    ps = ParticleSet(poses=poses, weights=np.array([0.5, 0.5]))
    est = estimate_pose(ps)
    assert abs(abs(est.mean[3]) - math.pi) < 1e-9  # wraps to +-pi, not 0


def test_estimate_pose_confidence_shrinks_with_spread():
    tight = ParticleSet(poses=np.zeros((8, 4)), weights=np.full(8, 1 / 8))
    wide_poses = np.zeros((8, 4))
    wide_poses[:, 0] = np.linspace(-3, 3, 8)
    wide = ParticleSet(poses=wide_poses, weights=np.full(8, 1 / 8))
    assert estimate_pose(tight).confidence == pytest.approx(1.0)
    assert estimate_pose(wide).confidence < estimate_pose(tight).confidence


def test_init_particles_centered_on_start():
    cfg = FilterConfig(n_particles=2000)
    ps = init_particles(np.array([5.0, 6.0, 3.0, 0.5]), cfg,
                        np.random.default_rng(0))
    assert ps.n == 2000
    np.testing.assert_allclose(ps.poses.mean(axis=0), [5.0, 6.0, 3.0, 0.5],
                               atol=0.05)
    assert ps.weights.sum() == pytest.approx(1.0, abs=1e-9)
