/** Console session state: pure, message-driven, no simulation logic.
 *
 * Everything displayed originates from gateway messages; the session only
 * journals what it has itself sent (decisions, overrides) so the UI can keep
 * buttons idempotent and show optimistic chips until snapshots confirm.
 */

import {
  ApprovalDecision,
  ApprovalRequest,
  EventMsg,
  ErrorMsg,
  GoalOverride,
  Outbound,
  Snapshot,
} from "./protocol.js";

export const DT = 0.1; // seconds per tick, fixed by the scenario schema default
export const EVENT_RING = 200;
export const BACKOFF_SECONDS = [1, 2, 4, 8];

export type ConnectionState = "connecting" | "connected" | "disconnected";

export interface TrackedApproval {
  id: number;
  kind: string;
  deadline_tick: number;
  default: boolean;
  context: Record<string, unknown>;
  /** set once a decision for this id has left the client */
  decided: boolean;
  approve?: boolean;
}

export interface SessionState {
  connection: ConnectionState;
  /** consecutive failed connection attempts, drives backoff */
  attempts: number;
  snapshot: Snapshot | null;
  /** true after a drop until the next Snapshot resyncs us */
  stale: boolean;
  approvals: Map<number, TrackedApproval>;
  events: EventMsg[];
  errors: ErrorMsg[];
  /** decision journal: request id -> approve flag sent */
  journal: Map<number, boolean>;
  pendingOverride: GoalOverride | null;
  warnings: string[];
}

export function newSession(): SessionState {
  return {
    connection: "connecting",
    attempts: 0,
    snapshot: null,
    stale: false,
    approvals: new Map(),
    events: [],
    errors: [],
    journal: new Map(),
    pendingOverride: null,
    warnings: [],
  };
}

/** Reconnect delay in seconds for the given (1-based) attempt: 1, 2, 4, then 8 capped. */
export function backoffDelay(attempt: number): number {
  const i = Math.min(Math.max(attempt, 1), BACKOFF_SECONDS.length) - 1;
  return BACKOFF_SECONDS[i];
}

/** Seconds until a request's deadline, floored at zero. */
export function countdown(deadlineTick: number, tick: number, dt: number = DT): number {
  return Math.max(0, (deadlineTick - tick) * dt);
}

export function onOpen(s: SessionState): void {
  s.connection = "connected";
  s.attempts = 0;
}

export function onClose(s: SessionState): void {
  s.connection = "disconnected";
  s.attempts += 1;
  s.stale = true; // read-only until the next Snapshot resyncs
}

export function onMessage(s: SessionState, msg: Outbound): void {
  switch (msg.msg) {
    case "Snapshot": {
      if (s.snapshot && msg.tick < s.snapshot.tick) {
        s.warnings.push(`snapshot tick regressed ${s.snapshot.tick} -> ${msg.tick}; ignored`);
        return;
      }
      s.snapshot = msg;
      s.stale = false;
      // requests absent from pending_approvals have been resolved server-side
      const pending = new Set(msg.pending_approvals.map((p) => p.id));
      for (const [id, req] of [...s.approvals]) {
        if (!pending.has(id)) s.approvals.delete(id);
        else {
          req.deadline_tick = msg.pending_approvals.find((p) => p.id === id)!.deadline_tick;
        }
      }
      for (const p of msg.pending_approvals) {
        if (!s.approvals.has(p.id)) {
          s.approvals.set(p.id, {
            ...p, context: {}, decided: s.journal.has(p.id),
            approve: s.journal.get(p.id),
          });
        }
      }
      // confirmed operator goal: clear the optimistic chip
      if (s.pendingOverride) {
        const want = s.pendingOverride.kind;
        if (msg.goal === want) s.pendingOverride = null;
      }
      break;
    }
    case "ApprovalRequest":
      s.approvals.set(msg.id, {
        id: msg.id, kind: msg.kind, deadline_tick: msg.deadline_tick,
        default: msg.default, context: msg.context,
        decided: s.journal.has(msg.id), approve: s.journal.get(msg.id),
      });
      break;
    case "Event":
      s.events.push(msg);
      if (s.events.length > EVENT_RING) s.events.splice(0, s.events.length - EVENT_RING);
      if (msg.kind === "approval_resolved") {
        s.approvals.delete(msg["id"] as number);
      }
      break;
    case "Error":
      s.errors.push(msg);
      break;
  }
}

/** Build the decision message for a request, or null if not sendable
 * (unknown id, already decided locally, or disconnected). At most one
 * decision per request id ever leaves the client. */
export function decide(s: SessionState, id: number, approve: boolean): ApprovalDecision | null {
  if (s.connection !== "connected") return null;
  const req = s.approvals.get(id);
  if (!req || req.decided || s.journal.has(id)) return null;
  req.decided = true;
  req.approve = approve;
  s.journal.set(id, approve);
  return { msg: "ApprovalDecision", id, approve };
}

/** Build a goal-override message, or null when disconnected. */
export function override(
  s: SessionState,
  kind: "reach_waypoint" | "resurface",
  target?: [number, number, number],
): GoalOverride | null {
  if (s.connection !== "connected") return null;
  const msg: GoalOverride =
    kind === "resurface" ? { msg: "GoalOverride", kind } : { msg: "GoalOverride", kind, target };
  s.pendingOverride = msg;
  return msg;
}
