"""Incremental voxel-grid ray traversal (Amanatides-Woo style walking).

One scalar kernel shared by the sensor simulator (against ground truth) and
the SLAM side (against thresholded log-odds); a batch wrapper fans out over
rays. Correctness is checked in tests against a brute-force fixed-step
sampler.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_INF = 1e30


@njit(cache=True)
def traverse(occ, cell_size, ox, oy, oz, dx, dy, dz, max_range):
    """Walk the grid from (ox,oy,oz) along (dx,dy,dz) until an occupied cell.

    Returns (range, hit). Origin inside an occupied cell yields (0, True).
    Rays leaving the grid or exceeding max_range report (max_range, False).
    """
    nx, ny, nz = occ.shape
    i = int(np.floor(ox / cell_size))
    j = int(np.floor(oy / cell_size))
    k = int(np.floor(oz / cell_size))
    if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
        return max_range, False
    if occ[i, j, k]:
        return 0.0, True

    step_i = 1 if dx > 0 else (-1 if dx < 0 else 0)
    step_j = 1 if dy > 0 else (-1 if dy < 0 else 0)
    step_k = 1 if dz > 0 else (-1 if dz < 0 else 0)

    t_delta_x = cell_size / abs(dx) if dx != 0.0 else _INF
    t_delta_y = cell_size / abs(dy) if dy != 0.0 else _INF
    t_delta_z = cell_size / abs(dz) if dz != 0.0 else _INF

    if dx > 0:
        t_max_x = ((i + 1) * cell_size - ox) / dx
    elif dx < 0:
        t_max_x = (i * cell_size - ox) / dx
    else:
        t_max_x = _INF
    if dy > 0:
        t_max_y = ((j + 1) * cell_size - oy) / dy
    elif dy < 0:
        t_max_y = (j * cell_size - oy) / dy
    else:
        t_max_y = _INF
    if dz > 0:
        t_max_z = ((k + 1) * cell_size - oz) / dz
    elif dz < 0:
        t_max_z = (k * cell_size - oz) / dz
    else:
        t_max_z = _INF

    while True:
        if t_max_x <= t_max_y and t_max_x <= t_max_z:
            t = t_max_x
            t_max_x += t_delta_x
            i += step_i
        elif t_max_y <= t_max_z:
            t = t_max_y
            t_max_y += t_delta_y
            j += step_j
        else:
            t = t_max_z
            t_max_z += t_delta_z
            k += step_k
        if t > max_range:
            return max_range, False
        if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
            return max_range, False
        if occ[i, j, k]:
            return t, True


@njit(cache=True, parallel=True)
def traverse_batch(occ, cell_size, origins, dirs, max_range, out_range, out_hit):
    n = origins.shape[0]
    for m in prange(n):
        r, h = traverse(occ, cell_size,
                        origins[m, 0], origins[m, 1], origins[m, 2],
                        dirs[m, 0], dirs[m, 1], dirs[m, 2], max_range)
        out_range[m] = r
        out_hit[m] = 1 if h else 0


def raycast_grid(occ: np.ndarray, cell_size: float, origins: np.ndarray,
                 dirs: np.ndarray, max_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Batch raycast. origins/dirs are (M,3); returns (ranges, hits)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    out_range = np.empty(origins.shape[0], dtype=np.float64)
    out_hit = np.empty(origins.shape[0], dtype=np.uint8)
    traverse_batch(occ, cell_size, origins, dirs, max_range, out_range, out_hit)
    return out_range, out_hit.astype(bool)


def raycast_single(occ: np.ndarray, cell_size: float, origin: np.ndarray,
                   direction: np.ndarray, max_range: float) -> tuple[float, bool]:
    r, h = traverse(occ, cell_size,
                    float(origin[0]), float(origin[1]), float(origin[2]),
                    float(direction[0]), float(direction[1]), float(direction[2]),
                    max_range)
    return float(r), bool(h)


def ray_sphere(origins: np.ndarray, dirs: np.ndarray, center: np.ndarray,
               radius: float, max_range: float) -> np.ndarray:
    """First-intersection distance of each ray with a sphere; max_range if none.

    Rays starting inside the sphere report 0.
    """
    oc = origins - center[None, :]
    b = np.einsum("ij,ij->i", oc, dirs)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    t = np.full(origins.shape[0], max_range)
    inside = c <= 0.0
    t[inside] = 0.0
    ok = (~inside) & (disc >= 0.0)
    root = -b[ok] - np.sqrt(disc[ok])
    valid = root >= 0.0
    idx = np.flatnonzero(ok)[valid]
    t[idx] = np.minimum(root[valid], max_range)
    return t
