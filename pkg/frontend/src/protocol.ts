/** Gateway message types and validation. Field names are part of the wire contract. */

export interface MapSlice {
  z: number;
  nx: number;
  ny: number;
  /** run-length pairs [count, code]; codes: 0 unknown, 1 free, 2 occupied, 3 dynamic */
  rle: [number, number][];
}

export interface PendingApproval {
  id: number;
  kind: string;
  deadline_tick: number;
  default: boolean;
}

export interface Snapshot {
  msg: "Snapshot";
  tick: number;
  pose: [number, number, number, number];
  affect: { risk: number; urgency: number; confidence: number };
  goal: string;
  map_slice: MapSlice;
  pending_approvals: PendingApproval[];
}

export interface EventMsg {
  msg: "Event";
  tick: number;
  kind: string;
  [key: string]: unknown;
}

export interface ApprovalRequest {
  msg: "ApprovalRequest";
  id: number;
  kind: string;
  context: Record<string, unknown>;
  deadline_tick: number;
  default: boolean;
}

export interface ErrorMsg {
  msg: "Error";
  code: string;
  detail: string;
}

export type Outbound = Snapshot | EventMsg | ApprovalRequest | ErrorMsg;

export interface ApprovalDecision {
  msg: "ApprovalDecision";
  id: number;
  approve: boolean;
}

export interface GoalOverride {
  msg: "GoalOverride";
  kind: "reach_waypoint" | "resurface";
  target?: [number, number, number];
}

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

/** Parse one inbound frame; returns null (not an exception) on anything malformed. */
export function parseMessage(raw: string): Outbound | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const m = obj as Record<string, unknown>;
  switch (m.msg) {
    case "Snapshot": {
      if (!isNum(m.tick)) return null;
      if (!Array.isArray(m.pose) || m.pose.length !== 4 || !m.pose.every(isNum)) return null;
      const a = m.affect as Record<string, unknown> | undefined;
      if (!a || !isNum(a.risk) || !isNum(a.urgency) || !isNum(a.confidence)) return null;
      const s = m.map_slice as Record<string, unknown> | undefined;
      if (!s || !isNum(s.nx) || !isNum(s.ny) || !isNum(s.z) || !Array.isArray(s.rle)) return null;
      if (!Array.isArray(m.pending_approvals)) return null;
      return m as unknown as Snapshot;
    }
    case "Event":
      if (!isNum(m.tick) || typeof m.kind !== "string") return null;
      return m as unknown as EventMsg;
    case "ApprovalRequest":
      if (!isNum(m.id) || typeof m.kind !== "string" || !isNum(m.deadline_tick)) return null;
      return m as unknown as ApprovalRequest;
    case "Error":
      if (typeof m.code !== "string") return null;
      return m as unknown as ErrorMsg;
    default:
      return null;
  }
}

/** Decode a run-length-encoded slice to nx*ny cell codes (x-major, as encoded). */
export function decodeSlice(slice: MapSlice): Uint8Array {
  const out = new Uint8Array(slice.nx * slice.ny);
  let i = 0;
  for (const run of slice.rle) {
    if (!Array.isArray(run) || run.length !== 2) throw new Error("bad rle run");
    const [count, code] = run;
    if (!Number.isInteger(count) || count <= 0 || !Number.isInteger(code) || code < 0 || code > 3) {
      throw new Error("bad rle run");
    }
    if (i + count > out.length) throw new Error("rle overflow");
    out.fill(code, i, i + count);
    i += count;
  }
  if (i !== out.length) throw new Error("rle underflow");
  return out;
}
