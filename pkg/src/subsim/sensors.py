"""Simulated sensor suite: sonar, IMU/DVL/pressure, environment/health.

Everything is driven by an explicit seeded RNG; the emitted samples carry no
ground-truth fields except NavSample.imu_bias, which exists solely so tests
can check the bias random walk (the SLAM side never reads it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import unit_from_yaw_elev
from .raycast import ray_sphere, raycast_grid
from .world import VehicleState, VoxelWorld

SURFACE_PRESSURE_KPA = 101.3
PRESSURE_PER_METER_KPA = 10.05
SURFACE_TEMP_C = 20.0
TEMP_GRADIENT_C_PER_M = -0.08
SURFACE_SALINITY_PSU = 34.5
SALINITY_GRADIENT_PSU_PER_M = 0.01


@dataclass(frozen=True)
class SensorConfig:
    max_range: float = 20.0
    sigma_range: float = 0.2
    p_drop: float = 0.02
    k_turb: float = 0.5
    sigma_imu: float = 0.01
    sigma_bias: float = 0.0005
    sigma_dvl: float = 0.05
    sigma_z: float = 0.1
    n_horizontal: int = 32
    fan_half_angle: float = math.radians(60.0)
    vertical_elev: float = math.radians(30.0)


@dataclass
class SonarScan:
    tick: int
    # beams: (azimuth rel. yaw, elevation, range, hit) per row
    azimuths: np.ndarray
    elevations: np.ndarray
    ranges: np.ndarray
    hits: np.ndarray
    max_range: float

    @property
    def n_beams(self) -> int:
        return len(self.ranges)


@dataclass(frozen=True)
class NavSample:
    tick: int
    imu_yaw_rate: float
    imu_bias: float                 # hidden truth, tests only
    dvl_velocity: np.ndarray        # body frame (surge, sway, heave)
    pressure_depth: float


@dataclass(frozen=True)
class HealthSample:
    tick: int
    temperature: float
    salinity: float
    pressure: float
    stress: float
    impact_flag: bool


@dataclass(frozen=True)
class OdometryDelta:
    d_forward: float
    d_heave: float
    d_yaw: float
    covariance_diag: np.ndarray     # (forward, heave, yaw) variances


def beam_pattern(cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fixed beam layout: a horizontal fan plus four up/down proximity beams."""
    az_h = np.linspace(-cfg.fan_half_angle, cfg.fan_half_angle, cfg.n_horizontal)
    el_h = np.zeros(cfg.n_horizontal)
    az_v = np.radians([-15.0, 15.0, -15.0, 15.0])
    el_v = np.array([-cfg.vertical_elev, -cfg.vertical_elev,
                     cfg.vertical_elev, cfg.vertical_elev])
    return np.concatenate([az_h, az_v]), np.concatenate([el_h, el_v])


@dataclass
class SensorSuite:
    """Stateful wrapper holding noise config, rng stream, and the IMU bias walk."""

    cfg: SensorConfig = field(default_factory=SensorConfig)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    imu_bias: float = 0.0

    def __post_init__(self):
        self._az, self._el = beam_pattern(self.cfg)

    def sense_sonar(self, world: VoxelWorld, state: VehicleState) -> SonarScan:
        cfg = self.cfg
        n = len(self._az)
        dirs = np.empty((n, 3))
        for b in range(n):
            dirs[b] = unit_from_yaw_elev(state.yaw + self._az[b], self._el[b])
        origins = np.broadcast_to(state.position, (n, 3))

        ranges, hits = raycast_grid(world.static_occ, world.cell_size,
                                    origins, dirs, cfg.max_range)
        for e in world.entities:
            te = ray_sphere(np.ascontiguousarray(origins, dtype=float), dirs,
                            e.center, e.radius, cfg.max_range)
            closer = te < ranges
            ranges = np.where(closer, te, ranges)
            hits = hits | (closer & (te < cfg.max_range))

        drop_u = self.rng.random(n)
        noise = self.rng.normal(0.0, cfg.sigma_range, n) if cfg.sigma_range > 0 else np.zeros(n)
        p = cfg.p_drop + cfg.k_turb * world.turbidity
        dropped = drop_u < p
        hits = hits & ~dropped
        ranges = np.where(hits, np.clip(ranges + noise, 1e-6, cfg.max_range),
                          cfg.max_range)
        return SonarScan(tick=world.tick, azimuths=self._az.copy(),
                         elevations=self._el.copy(), ranges=ranges, hits=hits,
                         max_range=cfg.max_range)

    def sense_nav(self, state: VehicleState, tick: int) -> NavSample:
        cfg = self.cfg
        self.imu_bias += self.rng.normal(0.0, cfg.sigma_bias)
        yaw_rate = state.yaw_rate_r + self.imu_bias + self.rng.normal(0.0, cfg.sigma_imu)
        body_vel = np.array([state.surge_u, 0.0, state.heave_w])
        dvl = body_vel + self.rng.normal(0.0, cfg.sigma_dvl, 3)
        depth = max(state.position[2] + self.rng.normal(0.0, cfg.sigma_z), 0.0)
        return NavSample(tick=tick, imu_yaw_rate=yaw_rate, imu_bias=self.imu_bias,
                         dvl_velocity=dvl, pressure_depth=depth)


def sense_health(world: VoxelWorld, state: VehicleState) -> HealthSample:
    z = float(state.position[2])
    return HealthSample(
        tick=world.tick,
        temperature=SURFACE_TEMP_C + TEMP_GRADIENT_C_PER_M * z,
        salinity=SURFACE_SALINITY_PSU + SALINITY_GRADIENT_PSU_PER_M * z,
        pressure=SURFACE_PRESSURE_KPA + PRESSURE_PER_METER_KPA * z,
        stress=state.stress,
        impact_flag=state.collided,
    )


def compose_odometry(nav_prev: NavSample, nav_cur: NavSample, dt: float,
                     cfg: SensorConfig) -> OdometryDelta:
    """Dead-reckoning increment between two consecutive nav samples."""
    var_xy = (cfg.sigma_dvl * dt) ** 2
    var_yaw = (cfg.sigma_imu * dt) ** 2
    return OdometryDelta(
        d_forward=float(nav_cur.dvl_velocity[0]) * dt,
        d_heave=float(nav_cur.dvl_velocity[2]) * dt,
        d_yaw=nav_cur.imu_yaw_rate * dt,
        covariance_diag=np.array([var_xy, var_xy, var_yaw]),
    )
