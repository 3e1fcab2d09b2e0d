"""Monte-Carlo localization: predict / weight / resample / estimate.

Particles live in (x, y, z, yaw). The weight step scores each particle by
raycasting expected sonar ranges through the believed-occupied cells of the
learned map and comparing them with the measured scan under a
Gaussian-plus-uniform beam mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import wrap_angles
from ..raycast import raycast_grid
from ..sensors import SonarScan
from .mapping import OccupancyMap


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 512
    epsilon: float = 0.1            # uniform mixture weight per beam
    beam_sigma: float = 0.3         # range likelihood sigma, meters
    weight_stride: int = 2          # use every k-th hit beam when weighting
    predict_inflation: float = 2.0  # scales odometry noise std in predict
    init_sigma_xy: float = 0.3
    init_sigma_z: float = 0.2
    init_sigma_yaw: float = 0.05


@dataclass
class ParticleSet:
    poses: np.ndarray               # (N, 4): x, y, z, yaw
    weights: np.ndarray             # (N,), normalized
    degenerate_resets: int = 0

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.poses.copy(), self.weights.copy(),
                           self.degenerate_resets)


def init_particles(pose: np.ndarray, cfg: FilterConfig,
                   rng: np.random.Generator) -> ParticleSet:
    n = cfg.n_particles
    poses = np.tile(np.asarray(pose, dtype=float), (n, 1))
    poses[:, 0] += rng.normal(0, cfg.init_sigma_xy, n)
    poses[:, 1] += rng.normal(0, cfg.init_sigma_xy, n)
    poses[:, 2] += rng.normal(0, cfg.init_sigma_z, n)
    poses[:, 3] = wrap_angles(poses[:, 3] + rng.normal(0, cfg.init_sigma_yaw, n))
    return ParticleSet(poses, np.full(n, 1.0 / n))


def predict(ps: ParticleSet, odo, cfg: FilterConfig,
            rng: np.random.Generator) -> ParticleSet:
    """Advance every particle by the odometry delta in its own frame."""
    n = ps.n
    std = np.sqrt(np.asarray(odo.covariance_diag, dtype=float)) * cfg.predict_inflation
    d_f = odo.d_forward + (rng.normal(0, std[0], n) if std[0] > 0 else 0.0)
    d_h = odo.d_heave + (rng.normal(0, std[1], n) if std[1] > 0 else 0.0)
    d_y = odo.d_yaw + (rng.normal(0, std[2], n) if std[2] > 0 else 0.0)
    yaw = ps.poses[:, 3]
    ps.poses[:, 0] += d_f * np.cos(yaw)
    ps.poses[:, 1] += d_f * np.sin(yaw)
    ps.poses[:, 2] += d_h
    ps.poses[:, 3] = wrap_angles(yaw + d_y)
    return ps


def effective_sample_size(ps: ParticleSet) -> float:
    return 1.0 / float(np.sum(ps.weights ** 2))


def weight(ps: ParticleSet, scan: SonarScan, m: OccupancyMap,
           cfg: FilterConfig) -> ParticleSet:
    """Multiply particle weights by the scan likelihood and renormalize."""
    grid = m.occ_grid()
    if not grid.any():
        return ps                   # no map yet: nothing to correct against
    beam_idx = np.flatnonzero(scan.hits)[::max(cfg.weight_stride, 1)]
    if len(beam_idx) == 0:
        return ps                   # all-miss scan carries no range information

    n = ps.n
    b = len(beam_idx)
    az = scan.azimuths[beam_idx]
    el = scan.elevations[beam_idx]
    measured = scan.ranges[beam_idx]

    yaw = ps.poses[:, 3][:, None] + az[None, :]          # (N, B)
    ce = np.cos(el)[None, :]
    dirs = np.empty((n, b, 3))
    dirs[:, :, 0] = ce * np.cos(yaw)
    dirs[:, :, 1] = ce * np.sin(yaw)
    dirs[:, :, 2] = np.broadcast_to(np.sin(el)[None, :], (n, b))
    origins = np.repeat(ps.poses[:, :3], b, axis=0)

    expected, _ = raycast_grid(grid, m.cell_size, origins,
                               dirs.reshape(-1, 3), scan.max_range)
    expected = expected.reshape(n, b)

    sigma = max(cfg.beam_sigma, 1e-3)
    gauss = np.exp(-0.5 * ((measured[None, :] - expected) / sigma) ** 2) \
        / (sigma * math.sqrt(2.0 * math.pi))
    like = (1.0 - cfg.epsilon) * gauss + cfg.epsilon / scan.max_range
    log_like = np.sum(np.log(like), axis=1)
    log_like -= log_like.max()

    new_w = ps.weights * np.exp(log_like)
    total = new_w.sum()
    if total <= 0.0 or not np.isfinite(total):
        ps.weights = np.full(n, 1.0 / n)
        ps.degenerate_resets += 1
    else:
        ps.weights = new_w / total
    return ps


def resample_systematic(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Low-variance systematic resampling; output weights are uniform."""
    n = ps.n
    points = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(ps.weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, points)
    ps.poses = ps.poses[idx]
    ps.weights = np.full(n, 1.0 / n)
    return ps


def maybe_resample(ps: ParticleSet, rng: np.random.Generator) -> tuple[ParticleSet, bool]:
    """Resample only when the effective sample size drops below N/2."""
    if effective_sample_size(ps) < ps.n / 2.0:
        return resample_systematic(ps, rng), True
    return ps, False


@dataclass(frozen=True)
class PoseEstimate:
    mean: np.ndarray                # (x, y, z, yaw)
    covariance_diag: np.ndarray     # (4,)
    confidence: float


def estimate_pose(ps: ParticleSet) -> PoseEstimate:
    """Weighted mean pose (circular mean for yaw) with diagonal covariance."""
    w = ps.weights
    mean = np.empty(4)
    mean[:3] = w @ ps.poses[:, :3]
    sin_sum = float(w @ np.sin(ps.poses[:, 3]))
    cos_sum = float(w @ np.cos(ps.poses[:, 3]))
    mean[3] = math.atan2(sin_sum, cos_sum)

    cov = np.empty(4)
    diff = ps.poses[:, :3] - mean[:3]
    cov[:3] = w @ (diff ** 2)
    dyaw = wrap_angles(ps.poses[:, 3] - mean[3])
    cov[3] = float(w @ (dyaw ** 2))
    confidence = 1.0 / (1.0 + float(cov.sum()))
    return PoseEstimate(mean=mean, covariance_diag=cov, confidence=confidence)
