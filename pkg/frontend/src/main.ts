/** DOM wiring: renders the session into the page and forwards operator actions. */

import { Snapshot } from "./protocol.js";
import { DT, SessionState, countdown, decide, newSession, override } from "./session.js";
import { cellToWorld, gauges, gridView, vehicleMarker } from "./render.js";
import { GatewayClient } from "./ws.js";

const $ = (id: string) => document.getElementById(id)!;

const session: SessionState = newSession();
let client: GatewayClient | null = null;
const PX = 8; // canvas pixels per cell

function drawMap(snap: Snapshot): void {
  const canvas = $("map") as HTMLCanvasElement;
  const view = gridView(snap.map_slice);
  canvas.width = view.nx * PX;
  canvas.height = view.ny * PX;
  const ctx = canvas.getContext("2d")!;
  for (let y = 0; y < view.ny; y++) {
    for (let x = 0; x < view.nx; x++) {
      ctx.fillStyle = view.colors[y][x];
      // y axis points up on screen
      ctx.fillRect(x * PX, (view.ny - 1 - y) * PX, PX, PX);
    }
  }
  const v = vehicleMarker(snap);
  if (v.onSlice) {
    const px = v.cx * PX;
    const py = (view.ny - v.cy) * PX;
    ctx.strokeStyle = "#ffb300";
    ctx.fillStyle = "#ffb300";
    ctx.beginPath();
    ctx.arc(px, py, PX * 0.6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.beginPath();
    ctx.moveTo(px, py);
    ctx.lineTo(px + Math.cos(v.yaw) * PX * 1.5, py - Math.sin(v.yaw) * PX * 1.5);
    ctx.lineWidth = 2;
    ctx.stroke();
  }
}

function render(): void {
  $("conn").textContent = session.connection + (session.stale ? " (stale)" : "");
  $("conn").className = session.connection;
  const snap = session.snapshot;
  if (snap) {
    drawMap(snap);
    $("tick").textContent = String(snap.tick);
    $("goal").textContent = snap.goal + (session.pendingOverride ? " (override pending)" : "");
    $("slice-z").textContent = String(snap.map_slice.z);
    const g = $("gauges");
    g.innerHTML = "";
    for (const gauge of gauges(snap)) {
      const row = document.createElement("div");
      row.className = "gauge";
      row.innerHTML = `<span>${gauge.label}</span><div class="bar"><div style="width:${(gauge.value * 100).toFixed(0)}%"></div></div>`;
      g.appendChild(row);
    }
  }
  const list = $("approvals");
  list.innerHTML = "";
  for (const req of session.approvals.values()) {
    const secs = snap ? countdown(req.deadline_tick, snap.tick, DT) : 0;
    const div = document.createElement("div");
    div.className = "approval";
    div.innerHTML = `<b>${req.kind}</b> #${req.id} — ${secs.toFixed(1)}s left (default ${req.default ? "approve" : "deny"}) `;
    for (const [label, approve] of [["approve", true], ["deny", false]] as const) {
      const btn = document.createElement("button");
      btn.textContent = req.decided ? (req.approve === approve ? `${label} ✓` : label) : label;
      btn.disabled = req.decided;
      btn.onclick = () => {
        const msg = decide(session, req.id, approve);
        if (msg && client) client.send(msg);
        render();
      };
      div.appendChild(btn);
    }
    list.appendChild(div);
  }
  $("events").textContent = session.events
    .slice(-30)
    .map((e) => `${e.tick} ${e.kind}`)
    .reverse()
    .join("\n");
  $("errors").textContent = [...session.errors.slice(-3).map((e) => `${e.code}: ${e.detail}`),
                             ...session.warnings.slice(-3)].join("\n");
}

function start(): void {
  const url = ($("endpoint") as HTMLInputElement).value;
  client?.close();
  client = new GatewayClient(url, session, render);
  client.connect();
}

$("connect").onclick = start;
$("resurface").onclick = () => {
  const msg = override(session, "resurface");
  if (msg && client) client.send(msg);
  render();
};
($("map") as HTMLCanvasElement).onclick = (ev) => {
  const snap = session.snapshot;
  if (!snap) return;
  const rect = ($("map") as HTMLCanvasElement).getBoundingClientRect();
  const cx = (ev.clientX - rect.left) / PX;
  const cy = snap.map_slice.ny - (ev.clientY - rect.top) / PX;
  const msg = override(session, "reach_waypoint", cellToWorld(cx, cy, snap.map_slice.z));
  if (msg && client) client.send(msg);
  render();
};

render();
