"""Mission orchestration: the fixed-timestep loop, metrics, and artifact export."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cognition import (ApprovalBook, CognitiveController, MissionGoal,
                        compute_affect, update_goals)
from .geometry import wrap_angle
from .memory import LongTermMemory, StmBuffer, WorkingMemory, ingest_and_attend
from .reflex import Maneuver, clamp_command, evaluate_reflexes, maneuver_to_command, pure_pursuit
from .scenario import ScenarioConfig, build_world
from .sensors import SensorSuite, compose_odometry, sense_health
from .slam.loops import keyframe_and_detect, make_keyframe, validate_closure
from .slam.mapping import (LABEL_NAMES, OccupancyMap, classify_semantics,
                           integrate_scan)
from .slam.pfilter import (estimate_pose, init_particles, maybe_resample,
                           predict, weight)
from .slam.posegraph import (PoseGraphEdge, SingularNormalEquations,
                             closure_edge, optimize_pose_graph, _relative)
from .world import ActuatorCommand, VehicleState, truth_query, world_tick


class MissionFailed(Exception):
    def __init__(self, tick: int, cause: str):
        self.tick = tick
        self.cause = cause
        super().__init__(f"mission_failed at tick {tick}: {cause}")


@dataclass
class MetricsReport:
    ate_rmse: float
    dead_reckoning_rmse: float
    map_f1: float
    false_closures: int
    true_closures: int
    collisions: int
    reflex_firings: dict
    rehearsal_count: int
    chunk_hits: int
    approvals: list
    trajectory_digest: str
    ticks: int
    outcome: str

    def to_dict(self) -> dict:
        return {
            "ate_rmse": self.ate_rmse,
            "dead_reckoning_rmse": self.dead_reckoning_rmse,
            "map_f1": self.map_f1,
            "false_closures": self.false_closures,
            "true_closures": self.true_closures,
            "collisions": self.collisions,
            "reflex_firings": self.reflex_firings,
            "rehearsal_count": self.rehearsal_count,
            "chunk_hits": self.chunk_hits,
            "approvals": self.approvals,
            "trajectory_digest": self.trajectory_digest,
            "ticks": self.ticks,
            "outcome": self.outcome,
        }


def pose_line(pose: np.ndarray) -> str:
    return " ".join(f"{float(v):.9g}" for v in pose)


def replay_digest(true_poses: list[np.ndarray]) -> str:
    """Canonical 256-bit digest of the per-tick true pose trace."""
    h = hashlib.sha256()
    for p in true_poses:
        h.update(pose_line(p).encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class MissionResult:
    report: MetricsReport
    events: list
    trajectory: list            # per-tick dicts: true / est / dr poses
    occupancy: OccupancyMap
    ltm: LongTermMemory
    approvals: ApprovalBook


def run_mission(cfg: ScenarioConfig, ltm: LongTermMemory | None = None,
                gateway=None) -> MissionResult:
    """Run the full perception-cognition-action loop to completion."""
    world = build_world(cfg)
    state = VehicleState(position=np.array(cfg.start, dtype=float),
                         yaw=cfg.start_yaw)
    state.stress = state.position[2] / world.max_depth

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    suite = SensorSuite(cfg=cfg.sensors, rng=np.random.default_rng(seeds[0]))
    rng_filter = np.random.default_rng(seeds[1])

    occ_map = OccupancyMap(dims=cfg.world_dims, cell_size=cfg.cell_size,
                           cfg=cfg.mapping)
    start_pose = np.array([*cfg.start, cfg.start_yaw])
    particles = init_particles(start_pose, cfg.pfilter, rng_filter)
    est = estimate_pose(particles)

    ltm = ltm if ltm is not None else LongTermMemory()
    stm = StmBuffer()
    wm = WorkingMemory()
    approvals = ApprovalBook(timeout_ticks=cfg.approval_timeout_ticks)
    controller = CognitiveController(cfg.cognition, cfg.limits, ltm, approvals,
                                     world.max_depth, cfg.dt,
                                     operating_box=cfg.operating_box)

    goals = []
    for g in cfg.goals:
        goals.append(MissionGoal(
            kind=g.kind,
            target=np.array(g.target, dtype=float) if g.target else None,
            region=(tuple(g.region[0]), tuple(g.region[1])) if g.region else None))

    events: list[dict] = []
    trajectory: list[dict] = []
    true_poses: list[np.ndarray] = []
    reflex_firings: dict[str, int] = {}
    collisions = 0
    prev_collided = False
    risk_state: dict = {}

    # dead reckoning state (odometry composition only)
    dr_pose = start_pose.copy()

    keyframes: list = []
    kf_poses: list[np.ndarray] = []
    closure_edges: list[PoseGraphEdge] = []
    kf_truth_static_frac: dict[int, float] = {}
    true_closures = 0
    false_closures = 0

    nav_prev = None
    cmd = ActuatorCommand()
    outcome = "tick_budget"
    tick = 0

    def emit(kind: str, **payload):
        events.append({"tick": tick, "kind": kind, **payload})
        if gateway is not None:
            gateway.publish_event({"tick": tick, "kind": kind, **payload})

    while tick < cfg.tick_budget:
        tick += 1

        # -- operator inbound ------------------------------------------------
        if gateway is not None:
            for msg in gateway.drain_inbound():
                _apply_operator_message(msg, approvals, goals, tick, emit, gateway)
        for req in approvals.resolve_timeouts(tick):
            emit("approval_resolved", id=req.id, approval_kind=req.kind,
                 approved=req.approved, source=req.source)

        # -- physics ---------------------------------------------------------
        world, state = world_tick(world, state, cmd, cfg.dt)
        if state.collided and not prev_collided:
            collisions += 1
            emit("collision", position=[float(v) for v in state.position])
        prev_collided = state.collided
        true_pose = np.array([*state.position, state.yaw])
        true_poses.append(true_pose)

        # -- sensing ---------------------------------------------------------
        scan = suite.sense_sonar(world, state)
        nav = suite.sense_nav(state, tick)
        health = sense_health(world, state)

        # -- short-term memory / attention (previous estimate) ---------------
        bundle = {"scan": scan, "nav": nav, "health": health, "est": est}
        features = ingest_and_attend(stm, bundle, occ_map, est, cfg.dt)

        # -- SLAM ------------------------------------------------------------
        if nav_prev is not None:
            odo = compose_odometry(nav_prev, nav, cfg.dt, cfg.sensors)
            particles = predict(particles, odo, cfg.pfilter, rng_filter)
            dr_pose = _advance_dr(dr_pose, odo)
        nav_prev = nav
        particles = weight(particles, scan, occ_map, cfg.pfilter)
        particles, _ = maybe_resample(particles, rng_filter)
        est = estimate_pose(particles)
        integrate_scan(occ_map, est.mean[:3], float(est.mean[3]), scan)
        classify_semantics(occ_map, tick)

        # -- keyframes and loop closures -------------------------------------
        if tick % cfg.loops.k_kf == 0:
            kf = make_keyframe(len(keyframes), tick, est.mean, occ_map, scan,
                               cfg.loops)
            kf_truth_static_frac[kf.id] = _truth_static_fraction(world, kf)
            candidates = keyframe_and_detect(keyframes, kf, cfg.loops)
            kf_poses.append(kf.pose.copy())
            for pair in candidates:
                ev = validate_closure(pair, cfg.loops)
                ungated = validate_closure(pair, _ungated(cfg.loops))
                emit("loop_closure", from_kf=ev.from_keyframe, to_kf=ev.to_keyframe,
                     score=round(ev.score, 6), static_fraction=round(ev.static_fraction, 6),
                     accepted=ev.accepted, reason=ev.reason,
                     accepted_ungated=ungated.accepted)
                if not ev.accepted:
                    continue
                closure_edges.append(closure_edge(ev.from_keyframe, ev.to_keyframe))
                correction = _optimize_and_correct(kf_poses, closure_edges,
                                                   particles, emit)
                if correction is not None:
                    est = estimate_pose(particles)
                err = float(np.linalg.norm(est.mean[:3] - true_pose[:3]))
                if kf_truth_static_frac[ev.to_keyframe] < 0.5 or err > 2.0:
                    false_closures += 1
                else:
                    true_closures += 1

        # -- working memory --------------------------------------------------
        hit_ranges = scan.ranges[scan.hits]
        nearest = float(hit_ranges.min()) if hit_ranges.size else scan.max_range
        half = cfg.sensors.n_horizontal // 2
        right_clear = float(np.mean(scan.ranges[:half]))
        left_clear = float(np.mean(scan.ranges[half:cfg.sensors.n_horizontal]))
        affect = compute_affect(nearest, health.stress, est.confidence,
                                tick, cfg.tick_budget, cfg.cognition)
        standard = {
            "tick": tick,
            "pose": est.mean.copy(),
            "confidence": est.confidence,
            "nearest_obstacle_distance": nearest,
            "depth": float(est.mean[2]),
            "stress": health.stress,
            "impact_flag": health.impact_flag,
            "sonar.left_clear": left_clear,
            "sonar.right_clear": right_clear,
            "affect.risk": affect.risk,
            "affect.urgency": affect.urgency,
            "affect.confidence": affect.confidence,
        }
        wm.update(tick, standard, features)

        # -- goal maintenance (never starved by reflexes) --------------------
        for req in approvals.pending():
            if not req.context.get("announced"):
                req.context["announced"] = True
                emit("approval_requested", id=req.id, approval_kind=req.kind,
                     deadline_tick=req.deadline_tick, default=req.default)
                if gateway is not None:
                    gateway.publish_approval(req)
        active_goal = update_goals(goals, est.mean, occ_map, affect, approvals,
                                   tick, risk_state, cfg.cognition)
        wm.write("goal", active_goal.kind if active_goal else "none", tick)

        # -- reflexes then deliberation --------------------------------------
        decision = evaluate_reflexes(wm, cfg.limits, world.max_depth)
        if decision.fired != "none":
            reflex_firings[decision.fired] = reflex_firings.get(decision.fired, 0) + 1
            emit("reflex", fired=decision.fired, cause=decision.cause)
            controller.notify_reflex_fired()
            cmd = clamp_command(decision.command, cfg.limits)
            maneuver_kind = "reflex"
        else:
            maneuver, tel = controller.decision_cycle(occ_map, est, affect,
                                                      active_goal, tick,
                                                      stress=health.stress)
            if tel.planned or tel.chunk_hit:
                emit("decision", chunk_hit=tel.chunk_hit, rehearsals=tel.rehearsals,
                     vetoes=tel.veto_reasons, maneuver=tel.maneuver,
                     no_viable_plan=tel.no_viable_plan)
            steering = None
            if maneuver.kind == "follow_path":
                steering = pure_pursuit(maneuver.path, est.mean, controller.pursuit,
                                        cfg.cognition.lookahead)
            cmd = maneuver_to_command(maneuver, steering, float(est.mean[3]),
                                      cfg.limits)
            maneuver_kind = maneuver.kind

        trajectory.append({
            "tick": tick,
            "true": [float(v) for v in true_pose],
            "est": [float(v) for v in est.mean],
            "dr": [float(v) for v in dr_pose],
            "maneuver": maneuver_kind,
            "nearest": nearest,
        })
        if gateway is not None and tick % gateway.snapshot_every == 0:
            gateway.publish_snapshot(_snapshot(tick, est, affect, active_goal,
                                               occ_map, approvals))

        if active_goal is None:
            outcome = "goals_done"
            break
        if active_goal.kind == "abort":
            outcome = "aborted"
            break

    report = _compute_report(cfg, world, occ_map, trajectory, true_poses,
                             reflex_firings, collisions, true_closures,
                             false_closures, controller, approvals, tick, outcome)
    emit("mission_complete", outcome=outcome)
    return MissionResult(report=report, events=events, trajectory=trajectory,
                         occupancy=occ_map, ltm=ltm, approvals=approvals)


def _ungated(loops_cfg):
    import dataclasses
    return dataclasses.replace(loops_cfg, gate_enabled=False)


def _advance_dr(dr_pose: np.ndarray, odo) -> np.ndarray:
    p = dr_pose.copy()
    p[0] += odo.d_forward * math.cos(p[3])
    p[1] += odo.d_forward * math.sin(p[3])
    p[2] += odo.d_heave
    p[3] = wrap_angle(p[3] + odo.d_yaw)
    return p


def _truth_static_fraction(world, kf) -> float:
    """Ground-truth check of a keyframe's contributing endpoint cells."""
    if len(kf.contrib_cells) == 0:
        return 0.0
    cs = world.cell_size
    static = 0
    for c in kf.contrib_cells:
        center = (np.asarray(c, dtype=float) + 0.5) * cs
        hit_entity = any(np.linalg.norm(center - e.center) <= e.radius + cs
                         for e in world.entities)
        if not hit_entity and world.static_occ[tuple(int(v) for v in c)]:
            static += 1
    return static / len(kf.contrib_cells)


def _optimize_and_correct(kf_poses, closure_edges, particles, emit):
    from .slam.posegraph import odometry_edges
    poses = np.array(kf_poses)
    edges = odometry_edges(poses) + closure_edges
    try:
        result = optimize_pose_graph(poses, edges)
    except SingularNormalEquations as exc:
        emit("pose_graph_failed", detail=str(exc))
        return None
    delta = result.poses[-1] - poses[-1]
    delta[3] = wrap_angle(delta[3])
    particles.poses[:, :3] += delta[:3]
    particles.poses[:, 3] = (particles.poses[:, 3] + delta[3] + np.pi) % (2 * np.pi) - np.pi
    for i in range(len(kf_poses)):
        kf_poses[i] = result.poses[i].copy()
    emit("pose_graph_corrected", shift=[float(v) for v in delta],
         residuals=[round(r, 9) for r in result.residuals])
    return delta


def _snapshot(tick, est, affect, goal, occ_map, approvals) -> dict:
    z = int(est.mean[2] / occ_map.cell_size)
    z = min(max(z, 0), occ_map.dims[2] - 1)
    return {
        "msg": "Snapshot",
        "tick": tick,
        "pose": [float(v) for v in est.mean],
        "affect": {"risk": affect.risk, "urgency": affect.urgency,
                   "confidence": affect.confidence},
        "goal": goal.kind if goal else "none",
        "map_slice": map_slice_rle(occ_map, z),
        "pending_approvals": [
            {"id": r.id, "kind": r.kind, "deadline_tick": r.deadline_tick,
             "default": r.default}
            for r in approvals.pending()
        ],
    }


def map_slice_rle(occ_map: OccupancyMap, z: int) -> dict:
    """Run-length-encoded z-slice: cell codes 0 unknown, 1 free, 2 occupied, 3 dynamic."""
    from .slam.mapping import LABEL_DYNAMIC
    nx, ny, _ = occ_map.dims
    sl = np.zeros((nx, ny), dtype=np.int8)
    lo = occ_map.log_odds[:, :, z]
    observed = occ_map.obs_count[:, :, z] > 0
    sl[observed & (lo <= 0)] = 1
    sl[lo > occ_map.cfg.l_occ_thresh] = 2
    sl[occ_map.label[:, :, z] == LABEL_DYNAMIC] = 3
    flat = sl.flatten(order="C")
    runs = []
    i = 0
    n = len(flat)
    while i < n:
        j = i
        while j < n and flat[j] == flat[i]:
            j += 1
        runs.append([j - i, int(flat[i])])
        i = j
    return {"z": z, "nx": nx, "ny": ny, "rle": runs}


def _apply_operator_message(msg: dict, approvals: ApprovalBook, goals, tick,
                            emit, gateway):
    kind = msg.get("msg")
    if kind == "ApprovalDecision":
        try:
            req = approvals.resolve(int(msg["id"]), bool(msg["approve"]),
                                    "operator", tick)
            emit("approval_resolved", id=req.id, approval_kind=req.kind,
                 approved=req.approved, source=req.source)
        except Exception:
            # unknown id, or already resolved (e.g. the timeout fired first)
            gateway.send_error(msg.get("_client"), "unknown_request",
                               f"no pending request {msg.get('id')}")
    elif kind == "GoalOverride":
        goal_kind = msg.get("kind", "reach_waypoint")
        if goal_kind == "resurface":
            goals.insert(0, MissionGoal(kind="resurface",
                                        target=np.array([0.0, 0.0, 1.5]),
                                        status="active", source="operator"))
        elif goal_kind == "reach_waypoint" and msg.get("target") is not None:
            goals.insert(0, MissionGoal(kind="reach_waypoint",
                                        target=np.array(msg["target"], dtype=float),
                                        status="active", source="operator"))
        else:
            gateway.send_error(msg.get("_client"), "malformed",
                               f"bad goal override {goal_kind!r}")
            return
        emit("goal_override", goal_kind=goal_kind, source="operator")
    else:
        gateway.send_error(msg.get("_client"), "malformed",
                           f"unknown message kind {kind!r}")


# ---------------------------------------------------------------------------
# metrics

def _compute_report(cfg, world, occ_map, trajectory, true_poses, reflex_firings,
                    collisions, true_closures, false_closures, controller,
                    approvals, ticks, outcome) -> MetricsReport:
    if trajectory:
        true_xyz = np.array([t["true"][:3] for t in trajectory])
        est_xyz = np.array([t["est"][:3] for t in trajectory])
        dr_xyz = np.array([t["dr"][:3] for t in trajectory])
        ate = float(np.sqrt(np.mean(np.sum((est_xyz - true_xyz) ** 2, axis=1))))
        dr_rmse = float(np.sqrt(np.mean(np.sum((dr_xyz - true_xyz) ** 2, axis=1))))
    else:
        ate = dr_rmse = 0.0

    observed = occ_map.obs_count >= occ_map.cfg.n_min
    pred_occ = occ_map.log_odds > occ_map.cfg.l_occ_thresh
    truth_occ = world.static_occ
    tp = int(np.sum(observed & pred_occ & truth_occ))
    fp = int(np.sum(observed & pred_occ & ~truth_occ))
    fn = int(np.sum(observed & ~pred_occ & truth_occ))
    map_f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0

    return MetricsReport(
        ate_rmse=ate,
        dead_reckoning_rmse=dr_rmse,
        map_f1=map_f1,
        false_closures=false_closures,
        true_closures=true_closures,
        collisions=collisions,
        reflex_firings=reflex_firings,
        rehearsal_count=controller.rehearsal_count,
        chunk_hits=controller.chunk_hits,
        approvals=[{"id": r.id, "kind": r.kind, "approved": r.approved,
                    "source": r.source, "resolved_tick": r.resolved_tick}
                   for r in approvals.requests],
        trajectory_digest=replay_digest(true_poses),
        ticks=ticks,
        outcome=outcome,
    )


# ---------------------------------------------------------------------------
# artifact export / import

MAP_HEADER = "# voxel map v1"


def export_map(occ_map: OccupancyMap, path: str | Path) -> None:
    lines = [MAP_HEADER,
             f"# dims {occ_map.dims[0]} {occ_map.dims[1]} {occ_map.dims[2]}",
             f"# cell_size {occ_map.cell_size:.17g}"]
    idx = np.argwhere((occ_map.log_odds != 0.0) | (occ_map.label != 0))
    for i, j, k in idx:
        lines.append(f"{i} {j} {k} {occ_map.log_odds[i, j, k]:.17g} "
                     f"{LABEL_NAMES[int(occ_map.label[i, j, k])]}")
    Path(path).write_text("\n".join(lines) + "\n")


def import_map(path: str | Path) -> OccupancyMap:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != MAP_HEADER:
        raise ValueError("not a voxel map file")
    dims = tuple(int(v) for v in text[1].split()[2:5])
    cell_size = float(text[2].split()[2])
    m = OccupancyMap(dims=dims, cell_size=cell_size)
    names = {v: k for k, v in LABEL_NAMES.items()}
    for line in text[3:]:
        if not line.strip():
            continue
        parts = line.split()
        i, j, k = int(parts[0]), int(parts[1]), int(parts[2])
        m.log_odds[i, j, k] = float(parts[3])
        m.label[i, j, k] = names[parts[4]]
    return m


def export_artifacts(out_dir: str | Path, result: MissionResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_map(result.occupancy, out / "map.voxels")
    with open(out / "trajectory.jsonl", "w") as f:
        for rec in result.trajectory:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(out / "events.jsonl", "w") as f:
        for ev in result.events:
            f.write(json.dumps(ev, sort_keys=True) + "\n")
    (out / "metrics.json").write_text(
        json.dumps(result.report.to_dict(), indent=2, sort_keys=True) + "\n")


def digest_from_trajectory_file(path: str | Path) -> str:
    poses = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            poses.append(np.array(rec["true"], dtype=float))
    return replay_digest(poses)
