"""Ground-truth underwater world: voxel terrain, mobile entities, vehicle kinematics.

The world advances one fixed timestep at a time and is the single source of
truth the rest of the stack only ever observes through noisy sensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import wrap_angle

# Actuator / physics constants (desk-scale defaults).
K_ACT = 0.5        # first-order actuator lag gain, 1/s
S_HIT = 0.3        # stress spike added per collision tick
LAMBDA_S = 0.9     # per-tick geometric decay of the impact term
POS_EPS = 1e-9


@dataclass
class DynamicEntity:
    """A mobile sphere following a looping waypoint path."""

    id: int
    center: np.ndarray              # meters
    radius: float                   # meters
    waypoints: list[np.ndarray] = field(default_factory=list)
    speed: float = 0.0              # m/s
    _wp_index: int = 0

    def copy(self) -> "DynamicEntity":
        return DynamicEntity(
            id=self.id,
            center=self.center.copy(),
            radius=self.radius,
            waypoints=[w.copy() for w in self.waypoints],
            speed=self.speed,
            _wp_index=self._wp_index,
        )


@dataclass
class VoxelWorld:
    """Ground-truth 3D grid of static terrain plus mobile entities."""

    dims: tuple[int, int, int]
    cell_size: float
    static_occ: np.ndarray          # bool, shape dims; immutable after load
    entities: list[DynamicEntity] = field(default_factory=list)
    current: np.ndarray = field(default_factory=lambda: np.zeros(3))
    turbidity: float = 0.0
    max_depth: float = 0.0
    tick: int = 0

    def __post_init__(self):
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 4:
            raise ValueError("world dims must each be >= 4")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.max_depth <= 0:
            self.max_depth = nz * self.cell_size
        self.static_occ.setflags(write=False)

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.dims) * self.cell_size

    def cell_of(self, p: np.ndarray) -> tuple[int, int, int]:
        return tuple(int(math.floor(p[i] / self.cell_size)) for i in range(3))

    def in_bounds(self, p: np.ndarray) -> bool:
        ext = self.extent
        return bool(np.all(p >= 0.0) and np.all(p < ext))

    def copy(self) -> "VoxelWorld":
        return VoxelWorld(
            dims=self.dims,
            cell_size=self.cell_size,
            static_occ=self.static_occ,  # immutable, shared
            entities=[e.copy() for e in self.entities],
            current=self.current.copy(),
            turbidity=self.turbidity,
            max_depth=self.max_depth,
            tick=self.tick,
        )


@dataclass
class VehicleState:
    """Vehicle pose and body rates. z is depth, positive down."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    surge_u: float = 0.0
    heave_w: float = 0.0
    yaw_rate_r: float = 0.0
    stress: float = 0.0
    collided: bool = False
    impact: float = 0.0             # decaying accumulated impact spikes

    def copy(self) -> "VehicleState":
        return replace(self, position=self.position.copy())


@dataclass(frozen=True)
class ActuatorCommand:
    thrust: float = 0.0             # target surge, m/s
    yaw_rate: float = 0.0           # target yaw rate, rad/s
    ballast: float = 0.0            # target heave, m/s (positive down)

    def clamped(self, u_max: float, r_max: float, w_max: float) -> "ActuatorCommand":
        return ActuatorCommand(
            thrust=min(max(self.thrust, -u_max), u_max),
            yaw_rate=min(max(self.yaw_rate, -r_max), r_max),
            ballast=min(max(self.ballast, -w_max), w_max),
        )


def apply_command(state: VehicleState, cmd: ActuatorCommand, world: VoxelWorld,
                  dt: float, k_act: float = K_ACT) -> VehicleState:
    """First-order actuator lag followed by kinematic integration. Deterministic."""
    s = state.copy()
    s.surge_u += k_act * (cmd.thrust - s.surge_u) * dt
    s.heave_w += k_act * (cmd.ballast - s.heave_w) * dt
    s.yaw_rate_r += k_act * (cmd.yaw_rate - s.yaw_rate_r) * dt

    cx, cy, cz = world.current
    s.position = s.position + dt * np.array([
        s.surge_u * math.cos(s.yaw) + cx,
        s.surge_u * math.sin(s.yaw) + cy,
        s.heave_w + cz,
    ])
    s.yaw = wrap_angle(s.yaw + s.yaw_rate_r * dt)
    return s


def step_entities(world: VoxelWorld, dt: float) -> VoxelWorld:
    """Advance every entity toward its next waypoint, looping."""
    w = world.copy()
    for e in w.entities:
        if e.speed <= 0.0 or not e.waypoints:
            continue
        budget = e.speed * dt
        while budget > 1e-12:
            target = e.waypoints[e._wp_index % len(e.waypoints)]
            delta = target - e.center
            dist = float(np.linalg.norm(delta))
            if dist <= budget:
                e.center = target.copy()
                e._wp_index = (e._wp_index + 1) % len(e.waypoints)
                budget -= dist
                if dist == 0.0:
                    break
            else:
                e.center = e.center + delta * (budget / dist)
                budget = 0.0
    return w


def truth_query(world: VoxelWorld, p: np.ndarray) -> str:
    """Classify a point: out_of_bounds | static | dynamic | free."""
    if not world.in_bounds(p):
        return "out_of_bounds"
    i, j, k = world.cell_of(p)
    if world.static_occ[i, j, k]:
        return "static"
    for e in world.entities:
        if np.linalg.norm(p - e.center) <= e.radius:
            return "dynamic"
    return "free"


def _clamp_into_bounds(world: VoxelWorld, p: np.ndarray) -> np.ndarray:
    ext = world.extent
    return np.minimum(np.maximum(p, 0.0), ext - POS_EPS)


def resolve_collision_and_stress(state: VehicleState, world: VoxelWorld,
                                 prev_position: np.ndarray | None = None) -> VehicleState:
    """Collision check against static cells and entity spheres; stress update.

    On collision the position reverts to `prev_position` and body rates zero
    out (conservative no-bounce semantics).
    """
    s = state.copy()
    s.position = _clamp_into_bounds(world, s.position)
    kind = truth_query(world, s.position)
    s.collided = kind in ("static", "dynamic")
    s.impact *= LAMBDA_S
    if s.collided:
        s.impact += S_HIT
        s.surge_u = s.heave_w = s.yaw_rate_r = 0.0
        if prev_position is not None:
            s.position = _clamp_into_bounds(world, prev_position.copy())
    s.stress = min(max(s.position[2] / world.max_depth + s.impact, 0.0), 1.0)
    return s


def world_tick(world: VoxelWorld, state: VehicleState, cmd: ActuatorCommand,
               dt: float) -> tuple[VoxelWorld, VehicleState]:
    """One physics tick: entities move, command applies, collisions resolve."""
    prev_position = state.position.copy()
    w = step_entities(world, dt)
    s = apply_command(state, cmd, w, dt)
    s = resolve_collision_and_stress(s, w, prev_position)
    w.tick += 1
    return w, s
