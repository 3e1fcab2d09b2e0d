/** Pure view-model computation: same snapshot in, same cells out. DOM-free. */

import { MapSlice, Snapshot, decodeSlice } from "./protocol.js";

export const CELL_COLORS: Record<number, string> = {
  0: "#9e9e9e", // unknown: gray
  1: "#dce9f5", // free: light
  2: "#263238", // occupied: dark
  3: "#e53935", // dynamic: red
};

export interface GridView {
  nx: number;
  ny: number;
  z: number;
  /** row-major [y][x] hex colors */
  colors: string[][];
}

export function gridView(slice: MapSlice): GridView {
  const cells = decodeSlice(slice); // x-major
  const colors: string[][] = [];
  for (let y = 0; y < slice.ny; y++) {
    const row: string[] = [];
    for (let x = 0; x < slice.nx; x++) {
      row.push(CELL_COLORS[cells[x * slice.ny + y]]);
    }
    colors.push(row);
  }
  return { nx: slice.nx, ny: slice.ny, z: slice.z, colors };
}

export interface VehicleMarker {
  /** fractional cell coordinates */
  cx: number;
  cy: number;
  yaw: number;
  onSlice: boolean;
}

export function vehicleMarker(snap: Snapshot, cellSize = 1.0): VehicleMarker {
  const [x, y, z, yaw] = snap.pose;
  const zCell = Math.floor(z / cellSize);
  return { cx: x / cellSize, cy: y / cellSize, yaw, onSlice: zCell === snap.map_slice.z };
}

export interface GaugeView {
  label: string;
  /** clamped to [0, 1] */
  value: number;
}

export function gauges(snap: Snapshot): GaugeView[] {
  const clamp = (v: number) => Math.min(1, Math.max(0, v));
  return [
    { label: "risk", value: clamp(snap.affect.risk) },
    { label: "urgency", value: clamp(snap.affect.urgency) },
    { label: "confidence", value: clamp(snap.affect.confidence) },
  ];
}

/** World coordinates (cell centers) for a click at fractional cell (cx, cy). */
export function cellToWorld(cx: number, cy: number, zSlice: number, cellSize = 1.0):
    [number, number, number] {
  return [
    (Math.floor(cx) + 0.5) * cellSize,
    (Math.floor(cy) + 0.5) * cellSize,
    (zSlice + 0.5) * cellSize,
  ];
}
