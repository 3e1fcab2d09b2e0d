"""Scenario files: versioned JSON, strict validation, defaults filled."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cognition import CognitionConfig
from .reflex import Limits
from .sensors import SensorConfig
from .slam.loops import LoopConfig
from .slam.mapping import MapConfig
from .slam.pfilter import FilterConfig
from .world import DynamicEntity, VoxelWorld


class ValidationError(Exception):
    def __init__(self, key: str, detail: str = ""):
        self.key = key
        super().__init__(f"validation_error({key}){': ' + detail if detail else ''}")


class ParseError(Exception):
    pass


@dataclass
class GoalSpec:
    kind: str
    target: list | None = None
    region: list | None = None


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    dt: float
    tick_budget: int
    gate_enabled: bool
    world_dims: tuple[int, int, int]
    cell_size: float
    max_depth: float
    current: list
    turbidity: float
    boxes: list
    floor: bool
    border_walls: bool
    start: list
    start_yaw: float
    entities: list
    goals: list[GoalSpec]
    sensors: SensorConfig
    pfilter: FilterConfig
    mapping: MapConfig
    loops: LoopConfig
    cognition: CognitionConfig
    limits: Limits
    operator_enabled: bool
    approval_timeout_ticks: int
    operating_box: list | None
    mission_id: str = ""


_TOP_KEYS = {"schema", "name", "seed", "dt", "tick_budget", "gate_enabled",
             "world", "vehicle", "entities", "goals", "sensors", "slam",
             "cognition", "limits", "operator", "operating_box"}
_WORLD_KEYS = {"dims", "cell_size", "max_depth", "current", "turbidity",
               "boxes", "floor", "border_walls"}
_VEHICLE_KEYS = {"start", "yaw"}
_ENTITY_KEYS = {"center", "radius", "speed", "waypoints"}
_GOAL_KEYS = {"kind", "target", "region"}
_OPERATOR_KEYS = {"enabled", "approval_timeout_ticks"}
_SLAM_KEYS = ({f.name for f in dataclasses.fields(FilterConfig)}
              | {f.name for f in dataclasses.fields(MapConfig)}
              | {f.name for f in dataclasses.fields(LoopConfig)} - {"gate_enabled"})


def _check_keys(d: dict, allowed: set, prefix: str):
    for k in d:
        if k not in allowed:
            raise ValidationError(f"{prefix}{k}", "unknown key")


def _override(dc_cls, overrides: dict, prefix: str):
    names = {f.name for f in dataclasses.fields(dc_cls)}
    picked = {k: v for k, v in overrides.items() if k in names}
    try:
        return dataclasses.replace(dc_cls(), **picked)
    except (TypeError, ValueError) as exc:
        raise ValidationError(prefix, str(exc)) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"parse_error: {exc}") from exc
    return parse_scenario(raw, name_hint=Path(path).stem)


def parse_scenario(raw: dict, name_hint: str = "scenario") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ValidationError("<root>", "scenario must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "")
    if raw.get("schema", 1) != 1:
        raise ValidationError("schema", "unsupported schema version")

    world = raw.get("world", {})
    _check_keys(world, _WORLD_KEYS, "world.")
    dims = tuple(world.get("dims", [64, 64, 16]))
    if len(dims) != 3 or any(int(d) < 4 for d in dims):
        raise ValidationError("world.dims", "each dimension must be >= 4")
    cell_size = float(world.get("cell_size", 1.0))
    if cell_size <= 0:
        raise ValidationError("world.cell_size", "must be positive")
    turbidity = float(world.get("turbidity", 0.0))
    if not 0.0 <= turbidity <= 1.0:
        raise ValidationError("world.turbidity", "must be within [0, 1]")
    max_depth = float(world.get("max_depth", dims[2] * cell_size))
    if max_depth <= 0:
        raise ValidationError("world.max_depth", "must be positive")

    vehicle = raw.get("vehicle", {})
    _check_keys(vehicle, _VEHICLE_KEYS, "vehicle.")
    start = list(vehicle.get("start", [2.0, 2.0, 2.0]))
    if len(start) != 3:
        raise ValidationError("vehicle.start", "must be a 3-vector")

    entities = raw.get("entities", [])
    ext = [dims[i] * cell_size for i in range(3)]
    for n, e in enumerate(entities):
        _check_keys(e, _ENTITY_KEYS, f"entities[{n}].")
        radius = float(e.get("radius", cell_size))
        if radius < cell_size / 2:
            raise ValidationError(f"entities[{n}].radius", "must be >= cell_size/2")
        speed = float(e.get("speed", 0.0))
        if speed < 0:
            raise ValidationError(f"entities[{n}].speed", "must be >= 0")
        wps = e.get("waypoints", [])
        if speed > 0 and len(wps) < 2:
            raise ValidationError(f"entities[{n}].waypoints",
                                  "need >= 2 waypoints when speed > 0")
        for p in [e.get("center", [0, 0, 0])] + list(wps):
            if any(not 0 <= p[i] < ext[i] for i in range(3)):
                raise ValidationError(f"entities[{n}]", "position outside world bounds")

    goals = []
    for n, g in enumerate(raw.get("goals", [])):
        _check_keys(g, _GOAL_KEYS, f"goals[{n}].")
        kind = g.get("kind")
        if kind not in ("reach_waypoint", "map_region", "resurface", "abort"):
            raise ValidationError(f"goals[{n}].kind", f"unknown goal kind {kind!r}")
        if kind == "reach_waypoint" and "target" not in g:
            raise ValidationError(f"goals[{n}].target", "required for reach_waypoint")
        if kind == "map_region" and "region" not in g:
            raise ValidationError(f"goals[{n}].region", "required for map_region")
        goals.append(GoalSpec(kind=kind, target=g.get("target"), region=g.get("region")))

    sensors_raw = raw.get("sensors", {})
    _check_keys(sensors_raw, {f.name for f in dataclasses.fields(SensorConfig)}, "sensors.")
    slam_raw = raw.get("slam", {})
    _check_keys(slam_raw, _SLAM_KEYS, "slam.")
    cog_raw = raw.get("cognition", {})
    _check_keys(cog_raw, {f.name for f in dataclasses.fields(CognitionConfig)}, "cognition.")
    limits_raw = raw.get("limits", {})
    _check_keys(limits_raw, {f.name for f in dataclasses.fields(Limits)}, "limits.")
    operator = raw.get("operator", {})
    _check_keys(operator, _OPERATOR_KEYS, "operator.")

    gate_enabled = bool(raw.get("gate_enabled", True))
    loops = _override(LoopConfig, slam_raw, "slam")
    loops = dataclasses.replace(loops, gate_enabled=gate_enabled)

    dt = float(raw.get("dt", 0.1))
    if dt <= 0:
        raise ValidationError("dt", "must be positive")
    tick_budget = int(raw.get("tick_budget", 6000))
    if tick_budget < 0:
        raise ValidationError("tick_budget", "must be >= 0")

    return ScenarioConfig(
        name=raw.get("name", name_hint),
        seed=int(raw.get("seed", 0)),
        dt=dt,
        tick_budget=tick_budget,
        gate_enabled=gate_enabled,
        world_dims=(int(dims[0]), int(dims[1]), int(dims[2])),
        cell_size=cell_size,
        max_depth=max_depth,
        current=list(world.get("current", [0.0, 0.0, 0.0])),
        turbidity=turbidity,
        boxes=list(world.get("boxes", [])),
        floor=bool(world.get("floor", True)),
        border_walls=bool(world.get("border_walls", True)),
        start=start,
        start_yaw=float(vehicle.get("yaw", 0.0)),
        entities=entities,
        goals=goals,
        sensors=_override(SensorConfig, sensors_raw, "sensors"),
        pfilter=_override(FilterConfig, slam_raw, "slam"),
        mapping=_override(MapConfig, slam_raw, "slam"),
        loops=loops,
        cognition=_override(CognitionConfig, cog_raw, "cognition"),
        limits=_override(Limits, limits_raw, "limits"),
        operator_enabled=bool(operator.get("enabled", False)),
        approval_timeout_ticks=int(operator.get("approval_timeout_ticks", 100)),
        operating_box=raw.get("operating_box"),
        mission_id=f"{raw.get('name', name_hint)}-{int(raw.get('seed', 0))}",
    )


def build_world(cfg: ScenarioConfig) -> VoxelWorld:
    nx, ny, nz = cfg.world_dims
    occ = np.zeros((nx, ny, nz), dtype=bool)
    if cfg.floor:
        occ[:, :, nz - 1] = True
    if cfg.border_walls:
        occ[0, :, :] = occ[-1, :, :] = True
        occ[:, 0, :] = occ[:, -1, :] = True
    for box in cfg.boxes:
        x0, y0, z0, x1, y1, z1 = [int(v) for v in box]
        occ[x0:x1, y0:y1, z0:z1] = True
    entities = []
    for n, e in enumerate(cfg.entities):
        entities.append(DynamicEntity(
            id=n,
            center=np.array(e.get("center", [0, 0, 0]), dtype=float),
            radius=float(e.get("radius", cfg.cell_size)),
            waypoints=[np.array(w, dtype=float) for w in e.get("waypoints", [])],
            speed=float(e.get("speed", 0.0)),
        ))
    return VoxelWorld(dims=(nx, ny, nz), cell_size=cfg.cell_size, static_occ=occ,
                      entities=entities, current=np.array(cfg.current, dtype=float),
                      turbidity=cfg.turbidity, max_depth=cfg.max_depth)
