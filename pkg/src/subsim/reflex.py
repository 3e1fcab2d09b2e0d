"""Prioritized safety reflexes and maneuver-to-command translation.

Reflexes subsume deliberation: when one fires, its command is actuated and
the cognitive layer's output for that tick is discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle
from .world import ActuatorCommand


@dataclass(frozen=True)
class Limits:
    u_max: float = 2.0
    r_max: float = 0.5
    w_max: float = 0.5
    u_cruise: float = 1.0
    k_yaw: float = 1.0
    k_z: float = 0.5


# reflex thresholds
S_MAX = 0.9            # stress above this forces emergency buoyancy
D_EMERG = 2.0          # obstacle distance below this forces avoidance
Z_MIN = 1.0            # shallow end of the depth envelope


@dataclass(frozen=True)
class ReflexDecision:
    fired: str                       # none | emergency_buoyancy | collision_avoid | depth_hold
    command: ActuatorCommand | None
    cause: str


@dataclass
class Maneuver:
    kind: str                        # follow_path | turn_left | turn_right | reverse | hold | surface
    path: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.kind == "follow_path" and not self.path:
            raise ValueError("follow_path requires a non-empty path")


def evaluate_reflexes(wm, limits: Limits, max_depth: float) -> ReflexDecision:
    """Check reflex triggers in strict priority order against working memory."""
    stress = wm.get("stress")
    impact = wm.get("impact_flag")
    nearest = wm.get("nearest_obstacle_distance")
    depth = wm.get("depth")
    if stress is None or nearest is None or depth is None:
        return ReflexDecision("none", None, "missing_wm_attributes")

    if stress > S_MAX or bool(impact):
        cmd = ActuatorCommand(thrust=0.0, yaw_rate=0.0, ballast=-limits.w_max)
        cause = "stress_exceeded" if stress > S_MAX else "impact_detected"
        return ReflexDecision("emergency_buoyancy", cmd, cause)

    if nearest < D_EMERG:
        left = wm.get("sonar.left_clear", 0.0)
        right = wm.get("sonar.right_clear", 0.0)
        # turn toward the freer half-fan; ties go left (positive yaw rate)
        sign = 1.0 if left >= right else -1.0
        cmd = ActuatorCommand(thrust=0.0, yaw_rate=sign * limits.r_max, ballast=0.0)
        return ReflexDecision("collision_avoid", cmd, "obstacle_within_emergency_range")

    if depth < Z_MIN or depth > max_depth - 1.0:
        ballast = limits.w_max if depth < Z_MIN else -limits.w_max
        cmd = ActuatorCommand(thrust=0.0, yaw_rate=0.0, ballast=ballast)
        return ReflexDecision("depth_hold", cmd, "depth_outside_envelope")

    return ReflexDecision("none", None, "")


@dataclass
class PursuitState:
    index: int = 0                   # monotone waypoint cursor


def pure_pursuit(path: list[np.ndarray], pose: np.ndarray, state: PursuitState,
                 lookahead: float = 2.0) -> tuple[float, float] | None:
    """Steering toward the first waypoint at least `lookahead` away.

    Returns (target_yaw, delta_z) or None when the path is exhausted.
    Waypoints already within lookahead are consumed; the cursor never moves
    backwards.
    """
    pos = pose[:3]
    n = len(path)
    while state.index < n - 1 and np.linalg.norm(path[state.index] - pos) < lookahead:
        state.index += 1
    target = path[state.index]
    if state.index >= n - 1 and np.linalg.norm(target - pos) < lookahead * 0.5:
        return None
    target_yaw = math.atan2(target[1] - pos[1], target[0] - pos[0])
    return target_yaw, float(target[2] - pos[2])


def maneuver_to_command(m: Maneuver, steering: tuple[float, float] | None,
                        pose_yaw: float, limits: Limits) -> ActuatorCommand:
    """Translate a maneuver (plus pursuit steering, if any) into actuator targets."""
    if m.kind == "hold":
        cmd = ActuatorCommand()
    elif m.kind == "surface":
        cmd = ActuatorCommand(thrust=0.0, yaw_rate=0.0, ballast=-limits.w_max)
    elif m.kind == "reverse":
        cmd = ActuatorCommand(thrust=-0.5 * limits.u_cruise, yaw_rate=0.0, ballast=0.0)
    elif m.kind == "turn_left":
        cmd = ActuatorCommand(thrust=0.3 * limits.u_cruise, yaw_rate=limits.r_max, ballast=0.0)
    elif m.kind == "turn_right":
        cmd = ActuatorCommand(thrust=0.3 * limits.u_cruise, yaw_rate=-limits.r_max, ballast=0.0)
    elif m.kind == "follow_path":
        if steering is None:
            cmd = ActuatorCommand()
        else:
            target_yaw, dz = steering
            err = wrap_angle(target_yaw - pose_yaw)
            forward_gain = max(math.cos(err), 0.0)   # turn in place beyond +-90 deg
            cmd = ActuatorCommand(thrust=limits.u_cruise * forward_gain,
                                  yaw_rate=limits.k_yaw * err,
                                  ballast=limits.k_z * dz)
    else:
        raise ValueError(f"unknown maneuver kind: {m.kind}")
    return clamp_command(cmd, limits)


def clamp_command(cmd: ActuatorCommand, limits: Limits) -> ActuatorCommand:
    """Clamp each channel into its symmetric limit; idempotent."""
    return cmd.clamped(limits.u_max, limits.r_max, limits.w_max)
