"""Deliberative layer: affect, goal management, A* planning on the learned
grid, internal rehearsal of candidates, safety veto, chunk shortcutting, and
human-approval requests."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import unit_from_yaw_elev, wrap_angle
from .memory import LongTermMemory, WorkingMemory
from .raycast import raycast_grid
from .reflex import Limits, Maneuver, PursuitState, maneuver_to_command, pure_pursuit
from .slam.mapping import LABEL_DYNAMIC, LABEL_UNKNOWN, OccupancyMap


@dataclass(frozen=True)
class CognitionConfig:
    d_safe: float = 5.0
    p_block: float = 0.65
    lambda_r: float = 2.0
    curiosity_surcharge: float = 0.5
    penalty_factor: float = 10.0
    k_paths: int = 3
    horizon: int = 40
    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 0.1
    d_floor: float = 0.5
    d_veto: float = 1.0
    lookahead: float = 2.0
    waypoint_tol: float = 1.5
    region_done_fraction: float = 0.9
    risk_threshold: float = 0.9
    risk_sustain_ticks: int = 20
    escalation_limit: int = 3
    clearance_range: float = 10.0


@dataclass(frozen=True)
class AffectState:
    risk: float
    urgency: float
    confidence: float


def compute_affect(clearance: float, stress: float, confidence: float,
                   tick: int, tick_budget: int, cfg: CognitionConfig) -> AffectState:
    risk = max(1.0 - clearance / cfg.d_safe, stress)
    risk = min(max(risk, 0.0), 1.0)
    urgency = min(max(tick / max(tick_budget, 1), 0.0), 1.0)
    return AffectState(risk=risk, urgency=urgency, confidence=confidence)


# ---------------------------------------------------------------------------
# goals and approvals

@dataclass
class MissionGoal:
    kind: str                       # reach_waypoint | map_region | resurface | abort
    target: np.ndarray | None = None
    region: tuple | None = None     # ((x0,y0,z0),(x1,y1,z1)) meters
    status: str = "pending"         # pending | active | done | failed
    source: str = "scenario"


@dataclass
class ApprovalRequest:
    id: int
    kind: str                       # emergency_resurface | abort_mission | corridor_deviation
    context: dict
    deadline_tick: int
    default: str                    # approve | deny
    resolved: bool = False
    approved: bool | None = None
    source: str | None = None       # operator | timeout
    resolved_tick: int | None = None


class DuplicateResolution(Exception):
    pass


APPROVAL_DEFAULTS = {
    "emergency_resurface": "approve",
    "abort_mission": "deny",
    "corridor_deviation": "deny",
}


class ApprovalBook:
    """Registry of approval requests; each resolves exactly once."""

    def __init__(self, timeout_ticks: int = 100):
        self.timeout_ticks = timeout_ticks
        self.requests: list[ApprovalRequest] = []
        self._ids = itertools.count(1)

    def pending(self) -> list[ApprovalRequest]:
        return [r for r in self.requests if not r.resolved]

    def has_pending(self, kind: str) -> bool:
        return any(r.kind == kind for r in self.pending())

    def raise_request(self, kind: str, context: dict, tick: int) -> ApprovalRequest:
        req = ApprovalRequest(id=next(self._ids), kind=kind, context=context,
                              deadline_tick=tick + self.timeout_ticks,
                              default=APPROVAL_DEFAULTS[kind])
        self.requests.append(req)
        return req

    def resolve(self, req_id: int, approve: bool, source: str, tick: int) -> ApprovalRequest:
        for r in self.requests:
            if r.id == req_id:
                if r.resolved:
                    raise DuplicateResolution(f"request {req_id} already resolved")
                r.resolved = True
                r.approved = approve
                r.source = source
                r.resolved_tick = tick
                return r
        raise KeyError(req_id)

    def resolve_timeouts(self, tick: int) -> list[ApprovalRequest]:
        done = []
        for r in self.pending():
            if tick >= r.deadline_tick:
                self.resolve(r.id, r.default == "approve", "timeout", tick)
                done.append(r)
        return done


# ---------------------------------------------------------------------------
# planning

class PlanError(Exception):
    pass


class GoalBlocked(PlanError):
    pass


class NoPath(PlanError):
    pass


@dataclass
class RehearsalResult:
    min_clearance: float
    energy: float
    progress: float
    utility: float


@dataclass
class PlanCandidate:
    path: list[np.ndarray]
    cost: float
    rehearsal: RehearsalResult | None = None


_NEIGHBORS = [(dx, dy, dz)
              for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
              if (dx, dy, dz) != (0, 0, 0)]
_STEP_LEN = {n: math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2) for n in _NEIGHBORS}


def blocked_grid(m: OccupancyMap, cfg: CognitionConfig) -> np.ndarray:
    """Blocked cells (occupancy over threshold or dynamic) with 1-cell inflation."""
    p = 1.0 / (1.0 + np.exp(-m.log_odds))
    hard = (p > cfg.p_block) | (m.label == LABEL_DYNAMIC)
    inflated = hard.copy()
    for dx, dy, dz in _NEIGHBORS:
        shifted = np.roll(hard, (dx, dy, dz), axis=(0, 1, 2))
        # roll wraps; zero out the wrapped border slabs
        if dx == 1:
            shifted[0, :, :] = False
        elif dx == -1:
            shifted[-1, :, :] = False
        if dy == 1:
            shifted[:, 0, :] = False
        elif dy == -1:
            shifted[:, -1, :] = False
        if dz == 1:
            shifted[:, :, 0] = False
        elif dz == -1:
            shifted[:, :, -1] = False
        inflated |= shifted
    return inflated


def plan_paths(m: OccupancyMap, start: np.ndarray, goal: np.ndarray,
               k: int, cfg: CognitionConfig) -> list[PlanCandidate]:
    """Up to k diverse A* paths on the 26-connected voxel graph."""
    blocked = blocked_grid(m, cfg)
    p_occ = 1.0 / (1.0 + np.exp(-m.log_odds))
    unknown = m.label == LABEL_UNKNOWN
    start_c = m.cell_of(start)
    goal_c = m.cell_of(goal)
    if not m.in_bounds_cell(start_c) or not m.in_bounds_cell(goal_c):
        raise NoPath("start or goal outside the map")
    if blocked[goal_c] and not unknown[goal_c]:
        raise GoalBlocked(f"goal cell {goal_c} is blocked")
    blocked = blocked.copy()
    blocked[start_c] = False
    blocked[goal_c] = False

    penalty = np.zeros(m.dims)
    cs = m.cell_size
    out: list[PlanCandidate] = []
    for _ in range(k):
        result = _astar(blocked, p_occ, unknown, penalty, start_c, goal_c, cs, cfg)
        if result is None:
            break
        cells, cost = result
        path = [np.array([(c[0] + 0.5) * cs, (c[1] + 0.5) * cs, (c[2] + 0.5) * cs])
                for c in cells]
        out.append(PlanCandidate(path=path, cost=cost))
        for c in cells:
            penalty[c] = cfg.penalty_factor
    if not out:
        raise NoPath("open set exhausted")
    return out


def _astar(blocked, p_occ, unknown, penalty, start, goal, cs, cfg):
    # Flat integer indexing and plain lists: this loop dominates replanning
    # cost, and tuple/dict bookkeeping was several times slower.
    nx, ny, nz = blocked.shape
    n = nx * ny * nz
    syx, sy = ny * nz, nz
    start_i = start[0] * syx + start[1] * sy + start[2]
    goal_i = goal[0] * syx + goal[1] * sy + goal[2]
    gx, gy, gz = goal
    cell_cost = (cfg.lambda_r * p_occ
                 + cfg.curiosity_surcharge * unknown + penalty).ravel().tolist()
    blocked_f = blocked.ravel().tolist()
    neigh = [(dx, dy, dz, cs * _STEP_LEN[(dx, dy, dz)], dx * syx + dy * sy + dz)
             for dx, dy, dz in _NEIGHBORS]

    inf = math.inf
    g = [inf] * n
    g[start_i] = 0.0
    came = [-1] * n
    closed = [False] * n
    h0 = cs * math.sqrt((start[0] - gx) ** 2 + (start[1] - gy) ** 2
                        + (start[2] - gz) ** 2)
    open_heap = [(h0, 0, start_i)]
    counter = itertools.count(1)
    while open_heap:
        _, _, cur = heapq.heappop(open_heap)
        if closed[cur]:
            continue
        if cur == goal_i:
            cells = []
            while cur != -1:
                cells.append((cur // syx, (cur // sy) % ny, cur % sy))
                cur = came[cur]
            cells.reverse()
            return cells, g[goal_i]
        closed[cur] = True
        cx, cy, cz = cur // syx, (cur // sy) % ny, cur % sy
        g_cur = g[cur]
        for dx, dy, dz, step_len, doff in neigh:
            tx, ty, tz = cx + dx, cy + dy, cz + dz
            if not (0 <= tx < nx and 0 <= ty < ny and 0 <= tz < nz):
                continue
            t = cur + doff
            if blocked_f[t] and t != goal_i:
                continue
            ng = g_cur + step_len + cell_cost[t]
            if ng < g[t] - 1e-12:
                g[t] = ng
                came[t] = cur
                ht = cs * math.sqrt((tx - gx) ** 2 + (ty - gy) ** 2
                                    + (tz - gz) ** 2)
                heapq.heappush(open_heap, (ng + ht, next(counter), t))
    return None


# ---------------------------------------------------------------------------
# rehearsal

def internal_rehearsal(candidate: PlanCandidate, m: OccupancyMap, est,
                       limits: Limits, dt: float,
                       cfg: CognitionConfig) -> RehearsalResult:
    """Noiseless forward rollout of pursuing the candidate path on the map."""
    pos = est.mean[:3].copy()
    yaw = float(est.mean[3])
    u = w = r = 0.0
    pursuit = PursuitState()
    goal_pt = candidate.path[-1]
    start_gap = float(np.linalg.norm(goal_pt - pos))
    min_clear = cfg.clearance_range
    energy = 0.0
    grid = m.occ_grid()

    for _ in range(cfg.horizon):
        steering = pure_pursuit(candidate.path, np.append(pos, yaw), pursuit,
                                cfg.lookahead)
        cmd = maneuver_to_command(Maneuver("follow_path", candidate.path),
                                  steering, yaw, limits)
        u += 0.5 * (cmd.thrust - u) * dt
        w += 0.5 * (cmd.ballast - w) * dt
        r += 0.5 * (cmd.yaw_rate - r) * dt
        pos = pos + dt * np.array([u * math.cos(yaw), u * math.sin(yaw), w])
        yaw = wrap_angle(yaw + r * dt)
        energy += abs(cmd.thrust) * dt
        min_clear = min(min_clear, _clearance(grid, m.cell_size, pos, yaw, cfg))
        if steering is None:
            break

    progress = start_gap - float(np.linalg.norm(goal_pt - pos))
    utility = (cfg.alpha * progress - cfg.beta / max(min_clear, cfg.d_floor)
               - cfg.gamma * energy)
    return RehearsalResult(min_clearance=min_clear, energy=energy,
                           progress=progress, utility=utility)


_CLEAR_AZ = np.radians([0.0, 45.0, 90.0, 135.0, 180.0, -135.0, -90.0, -45.0])


def _clearance(grid, cell_size, pos, yaw, cfg: CognitionConfig) -> float:
    dirs = np.stack([np.cos(yaw + _CLEAR_AZ), np.sin(yaw + _CLEAR_AZ),
                     np.zeros_like(_CLEAR_AZ)], axis=1)
    origins = np.broadcast_to(pos, dirs.shape)
    ranges, _ = raycast_grid(grid, cell_size, origins, dirs, cfg.clearance_range)
    return float(ranges.min())


def map_clearance(m: OccupancyMap, pos: np.ndarray, yaw: float,
                  cfg: CognitionConfig) -> float:
    return _clearance(m.occ_grid(), m.cell_size, pos, yaw, cfg)


# ---------------------------------------------------------------------------
# situation signatures

def situation_signature(m: OccupancyMap, pose: np.ndarray, goal_point: np.ndarray,
                        risk: float, max_depth: float,
                        cfg: CognitionConfig) -> tuple:
    """Discrete (goal octant, blocked-octant mask, depth band, risk band) key."""
    yaw = float(pose[3])
    to_goal = math.atan2(goal_point[1] - pose[1], goal_point[0] - pose[0])
    rel = wrap_angle(to_goal - yaw)
    goal_bin = int((rel + math.pi) / (math.pi / 4.0)) % 8

    grid = m.occ_grid()
    dirs = np.stack([np.cos(yaw + _CLEAR_AZ), np.sin(yaw + _CLEAR_AZ),
                     np.zeros_like(_CLEAR_AZ)], axis=1)
    origins = np.broadcast_to(pose[:3], dirs.shape)
    ranges, hits = raycast_grid(grid, m.cell_size, origins, dirs, 4.0)
    mask = 0
    for i in range(8):
        if hits[i]:
            mask |= 1 << i

    band = pose[2] / max_depth
    depth_band = 0 if band < 1 / 3 else (1 if band < 2 / 3 else 2)
    risk_band = 0 if risk < 0.3 else (1 if risk < 0.6 else 2)
    return (goal_bin, mask, depth_band, risk_band)


# ---------------------------------------------------------------------------
# goal management

def update_goals(goals: list[MissionGoal], pose: np.ndarray, m: OccupancyMap,
                 affect: AffectState, approvals: ApprovalBook, tick: int,
                 risk_state: dict, cfg: CognitionConfig) -> MissionGoal | None:
    """Advance goal statuses, raise risk-driven approvals, apply preemptions."""
    # approved preemptive goals first
    for req in approvals.requests:
        if req.resolved and req.approved and not req.context.get("goal_applied"):
            req.context["goal_applied"] = True
            if req.kind == "emergency_resurface":
                goals.insert(0, MissionGoal(kind="resurface",
                                            target=np.array([pose[0], pose[1], 1.5]),
                                            status="active", source=req.source or "approval"))
            elif req.kind == "abort_mission":
                goals.insert(0, MissionGoal(kind="abort", status="active",
                                            source=req.source or "approval"))

    # sustained-risk escalation (deduplicated)
    if affect.risk >= cfg.risk_threshold:
        risk_state["streak"] = risk_state.get("streak", 0) + 1
    else:
        risk_state["streak"] = 0
    already = (approvals.has_pending("emergency_resurface")
               or any(r.kind == "emergency_resurface" and r.resolved and r.approved
                      for r in approvals.requests))
    if risk_state["streak"] >= cfg.risk_sustain_ticks and not already:
        approvals.raise_request("emergency_resurface",
                                {"cause": "sustained_risk", "risk": affect.risk,
                                 "pose": [float(x) for x in pose]}, tick)
        risk_state["streak"] = 0

    # completion checks on the active goal
    active = None
    for goal in goals:
        if goal.status in ("pending", "active"):
            goal.status = "active"
            active = goal
            break
    if active is None:
        return None

    if active.kind == "reach_waypoint":
        if np.linalg.norm(pose[:3] - active.target) <= cfg.waypoint_tol:
            active.status = "done"
            return update_goals(goals, pose, m, affect, approvals, tick,
                                risk_state, cfg)
    elif active.kind == "map_region":
        (x0, y0, z0), (x1, y1, z1) = active.region
        cs = m.cell_size
        i0, j0, k0 = int(x0 / cs), int(y0 / cs), int(z0 / cs)
        i1, j1, k1 = int(math.ceil(x1 / cs)), int(math.ceil(y1 / cs)), int(math.ceil(z1 / cs))
        sub = m.label[i0:i1, j0:j1, k0:k1]
        if sub.size and (sub != LABEL_UNKNOWN).mean() >= cfg.region_done_fraction:
            active.status = "done"
            return update_goals(goals, pose, m, affect, approvals, tick,
                                risk_state, cfg)
    elif active.kind == "resurface":
        if pose[2] <= 2.0:
            active.status = "done"
            return update_goals(goals, pose, m, affect, approvals, tick,
                                risk_state, cfg)
    return active


# ---------------------------------------------------------------------------
# safety veto

@dataclass(frozen=True)
class Veto:
    reason: str


def safety_veto(candidate: PlanCandidate, stress: float,
                operating_box: tuple | None, cfg: CognitionConfig) -> Veto | None:
    reh = candidate.rehearsal
    if reh is not None and reh.min_clearance < cfg.d_veto:
        return Veto("low_clearance")
    start_z = candidate.path[0][2]
    end_z = candidate.path[-1][2]
    if stress > 0.8 and end_z > start_z + 0.5:
        return Veto("descent_under_stress")
    if operating_box is not None:
        lo, hi = np.asarray(operating_box[0]), np.asarray(operating_box[1])
        for wp in candidate.path:
            if np.any(wp < lo) or np.any(wp > hi):
                return Veto("outside_operating_box")
    return None


# ---------------------------------------------------------------------------
# the decision cycle

@dataclass
class Telemetry:
    tick: int = 0
    chunk_hit: bool = False
    rehearsals: int = 0
    veto_reasons: list[str] = field(default_factory=list)
    planned: bool = False
    no_viable_plan: bool = False
    maneuver: str = "hold"
    goal_kind: str | None = None


class CognitiveController:
    """Central-executive state machine run once per tick when no reflex fired."""

    def __init__(self, cfg: CognitionConfig, limits: Limits, ltm: LongTermMemory,
                 approvals: ApprovalBook, max_depth: float, dt: float,
                 operating_box: tuple | None = None):
        self.cfg = cfg
        self.limits = limits
        self.ltm = ltm
        self.approvals = approvals
        self.max_depth = max_depth
        self.dt = dt
        self.operating_box = operating_box
        self.active_path: list[np.ndarray] | None = None
        self.pursuit = PursuitState()
        self.active_goal_ref: MissionGoal | None = None
        self.escalation = 0
        self.current_chunk_sig: tuple | None = None
        self.rehearsal_count = 0
        self.chunk_hits = 0

    def notify_reflex_fired(self):
        """Attribute a reflex interruption to the chunk that was steering."""
        if self.current_chunk_sig is not None:
            self.ltm.chunk_failure(self.current_chunk_sig)
            self.current_chunk_sig = None
        self.active_path = None

    def _cell_blocked(self, m: OccupancyMap, c) -> bool:
        # hard blocking only (no inflation): cheap enough for per-tick checks
        return bool(m.occ_grid()[c]) or int(m.label[c]) == LABEL_DYNAMIC

    def _path_valid(self, m: OccupancyMap) -> bool:
        if not self.active_path:
            return False
        for wp in self.active_path[self.pursuit.index:]:
            c = m.cell_of(wp)
            if m.in_bounds_cell(c) and self._cell_blocked(m, c):
                return False
        return True

    def decision_cycle(self, m: OccupancyMap, est, affect: AffectState,
                       goal: MissionGoal | None, tick: int,
                       stress: float = 0.0) -> tuple[Maneuver, Telemetry]:
        tel = Telemetry(tick=tick, goal_kind=goal.kind if goal else None)
        if goal is None or goal.kind == "abort":
            tel.maneuver = "hold"
            return Maneuver("hold"), tel
        if goal.kind == "resurface":
            tel.maneuver = "surface"
            self.active_path = None
            return Maneuver("surface"), tel

        target = goal.target if goal.kind == "reach_waypoint" else _region_center(goal)
        goal_changed = goal is not self.active_goal_ref
        if goal_changed:
            self.active_path = None
            self.active_goal_ref = goal

        if self.active_path is not None and self._path_valid(m):
            tel.maneuver = "follow_path"
            return Maneuver("follow_path", self.active_path), tel

        # planning event
        sig = situation_signature(m, est.mean, target, affect.risk,
                                  self.max_depth, self.cfg)
        chunk = self.ltm.chunk_match(sig)
        if chunk is not None and chunk.get("path"):
            path = [np.asarray(p, dtype=float) for p in chunk["path"]]
            cand = PlanCandidate(path=path, cost=0.0)
            if self._candidate_clear(cand, m):
                self.active_path = path
                self.pursuit = PursuitState()
                self.current_chunk_sig = sig
                self.chunk_hits += 1
                self.escalation = 0
                tel.chunk_hit = True
                tel.maneuver = "follow_path"
                return Maneuver("follow_path", path), tel

        tel.planned = True
        self.current_chunk_sig = None
        try:
            candidates = plan_paths(m, est.mean[:3], target, self.cfg.k_paths, self.cfg)
        except PlanError:
            candidates = []

        best = None
        for cand in candidates:
            cand.rehearsal = internal_rehearsal(cand, m, est, self.limits,
                                                self.dt, self.cfg)
            tel.rehearsals += 1
            self.rehearsal_count += 1
            veto = safety_veto(cand, stress, self.operating_box, self.cfg)
            if veto is not None:
                tel.veto_reasons.append(veto.reason)
                continue
            if best is None or cand.rehearsal.utility > best.rehearsal.utility:
                best = cand

        if best is None:
            self.escalation += 1
            tel.no_viable_plan = True
            if (self.escalation >= self.cfg.escalation_limit
                    and not self.approvals.has_pending("corridor_deviation")):
                self.approvals.raise_request(
                    "corridor_deviation",
                    {"cause": "no_viable_plan", "pose": [float(x) for x in est.mean]},
                    tick)
                self.escalation = 0
            tel.maneuver = "hold"
            return Maneuver("hold"), tel

        self.escalation = 0
        self.active_path = best.path
        self.pursuit = PursuitState()
        self.ltm.chunk_store(sig, {"class": "follow_path",
                                   "path": [[float(x) for x in wp] for wp in best.path]})
        tel.maneuver = "follow_path"
        return Maneuver("follow_path", best.path), tel

    def _candidate_clear(self, cand: PlanCandidate, m: OccupancyMap) -> bool:
        for wp in cand.path:
            c = m.cell_of(wp)
            if m.in_bounds_cell(c) and self._cell_blocked(m, c):
                return False
        return True


def _region_center(goal: MissionGoal) -> np.ndarray:
    if goal.region is not None:
        lo, hi = np.asarray(goal.region[0]), np.asarray(goal.region[1])
        return (lo + hi) / 2.0
    return goal.target
