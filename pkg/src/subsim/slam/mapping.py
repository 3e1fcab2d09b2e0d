"""Log-odds occupancy grid with per-cell observation statistics and semantics.

Cells accumulate occupied/free evidence along sonar beams; a flip-ratio
statistic separates persistently occupied structure from transient contacts
so the loop-closure gate can ignore anchors that moved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..geometry import unit_from_yaw_elev
from ..raycast import raycast_single
from ..sensors import SonarScan

LABEL_UNKNOWN = 0
LABEL_STATIC = 1
LABEL_DYNAMIC = 2
LABEL_NAMES = {LABEL_UNKNOWN: "unknown", LABEL_STATIC: "static", LABEL_DYNAMIC: "dynamic"}


@dataclass(frozen=True)
class MapConfig:
    l_occ: float = 0.85
    l_free: float = -0.4
    l_max: float = 6.0
    occ_prob_thresh: float = 0.65
    n_min: int = 8                  # observations before a cell may be labeled
    tau_dyn: float = 0.3            # flip-ratio threshold for "dynamic"

    @property
    def l_occ_thresh(self) -> float:
        p = self.occ_prob_thresh
        return math.log(p / (1.0 - p))


@njit(cache=True)
def _integrate_kernel(log_odds, occ_count, free_count, flip_count, last_class,
                      cell_size, ox, oy, oz, dirs, ranges, hits,
                      l_free, l_occ, l_max):
    nx, ny, nz = log_odds.shape
    for b in range(dirs.shape[0]):
        r = ranges[b]
        dx, dy, dz = dirs[b, 0], dirs[b, 1], dirs[b, 2]
        i = int(np.floor(ox / cell_size))
        j = int(np.floor(oy / cell_size))
        k = int(np.floor(oz / cell_size))
        if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
            continue

        step_i = 1 if dx > 0 else (-1 if dx < 0 else 0)
        step_j = 1 if dy > 0 else (-1 if dy < 0 else 0)
        step_k = 1 if dz > 0 else (-1 if dz < 0 else 0)
        big = 1e30
        t_delta_x = cell_size / abs(dx) if dx != 0.0 else big
        t_delta_y = cell_size / abs(dy) if dy != 0.0 else big
        t_delta_z = cell_size / abs(dz) if dz != 0.0 else big
        if dx > 0:
            t_max_x = ((i + 1) * cell_size - ox) / dx
        elif dx < 0:
            t_max_x = (i * cell_size - ox) / dx
        else:
            t_max_x = big
        if dy > 0:
            t_max_y = ((j + 1) * cell_size - oy) / dy
        elif dy < 0:
            t_max_y = (j * cell_size - oy) / dy
        else:
            t_max_y = big
        if dz > 0:
            t_max_z = ((k + 1) * cell_size - oz) / dz
        elif dz < 0:
            t_max_z = (k * cell_size - oz) / dz
        else:
            t_max_z = big

        while True:
            # exit parameter of the current cell
            t_exit = min(t_max_x, min(t_max_y, t_max_z))
            if t_exit < r:
                # fully traversed before the endpoint: free evidence
                log_odds[i, j, k] = max(min(log_odds[i, j, k] + l_free, l_max), -l_max)
                free_count[i, j, k] += 1
                if last_class[i, j, k] == 1:
                    flip_count[i, j, k] += 1
                last_class[i, j, k] = 0
            else:
                # a hit range measures the surface, which sits on a cell face;
                # bin the occupied evidence half a cell behind it
                if hits[b]:
                    t_occ = r + 0.5 * cell_size
                    ei = int(np.floor((ox + dx * t_occ) / cell_size))
                    ej = int(np.floor((oy + dy * t_occ) / cell_size))
                    ek = int(np.floor((oz + dz * t_occ) / cell_size))
                    if 0 <= ei < nx and 0 <= ej < ny and 0 <= ek < nz:
                        log_odds[ei, ej, ek] = max(min(log_odds[ei, ej, ek] + l_occ, l_max), -l_max)
                        occ_count[ei, ej, ek] += 1
                        if last_class[ei, ej, ek] == 0:
                            flip_count[ei, ej, ek] += 1
                        last_class[ei, ej, ek] = 1
                break
            if t_max_x <= t_max_y and t_max_x <= t_max_z:
                t_max_x += t_delta_x
                i += step_i
            elif t_max_y <= t_max_z:
                t_max_y += t_delta_y
                j += step_j
            else:
                t_max_z += t_delta_z
                k += step_k
            if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
                break


@dataclass
class OccupancyMap:
    """The vehicle's learned map: log-odds belief plus per-cell statistics."""

    dims: tuple[int, int, int]
    cell_size: float
    cfg: MapConfig = field(default_factory=MapConfig)

    def __post_init__(self):
        self.log_odds = np.zeros(self.dims, dtype=np.float64)
        self.occ_count = np.zeros(self.dims, dtype=np.uint32)
        self.free_count = np.zeros(self.dims, dtype=np.uint32)
        self.flip_count = np.zeros(self.dims, dtype=np.uint32)
        # last observation class per cell: -1 none, 0 free, 1 occupied
        self.last_class = np.full(self.dims, -1, dtype=np.int8)
        self.label = np.zeros(self.dims, dtype=np.int8)
        self._occ_grid: np.ndarray | None = None

    @property
    def obs_count(self) -> np.ndarray:
        return self.occ_count + self.free_count

    def occ_grid(self) -> np.ndarray:
        """Boolean grid of cells currently believed occupied (cached)."""
        if self._occ_grid is None:
            self._occ_grid = self.log_odds > self.cfg.l_occ_thresh
        return self._occ_grid

    def cell_of(self, p: np.ndarray) -> tuple[int, int, int]:
        return tuple(int(math.floor(p[i] / self.cell_size)) for i in range(3))

    def in_bounds_cell(self, c: tuple[int, int, int]) -> bool:
        return all(0 <= c[i] < self.dims[i] for i in range(3))


def integrate_scan(m: OccupancyMap, pose: np.ndarray, yaw: float,
                   scan: SonarScan) -> OccupancyMap:
    """Update the map in place from one scan taken at the given pose."""
    n = scan.n_beams
    dirs = np.empty((n, 3))
    for b in range(n):
        dirs[b] = unit_from_yaw_elev(yaw + scan.azimuths[b], scan.elevations[b])
    _integrate_kernel(m.log_odds, m.occ_count, m.free_count, m.flip_count,
                      m.last_class, m.cell_size,
                      float(pose[0]), float(pose[1]), float(pose[2]),
                      dirs, scan.ranges.astype(np.float64),
                      scan.hits.astype(np.uint8),
                      m.cfg.l_free, m.cfg.l_occ, m.cfg.l_max)
    m._occ_grid = None
    return m


def classify_semantics(m: OccupancyMap, tick: int) -> OccupancyMap:
    """Label well-observed cells static or dynamic by their flip ratio."""
    obs = m.obs_count
    enough = obs >= m.cfg.n_min
    with np.errstate(divide="ignore", invalid="ignore"):
        flip_ratio = np.where(enough, m.flip_count / np.maximum(obs, 1), 0.0)
    m.label[:] = LABEL_UNKNOWN
    m.label[enough & (flip_ratio >= m.cfg.tau_dyn)] = LABEL_DYNAMIC
    m.label[enough & (flip_ratio < m.cfg.tau_dyn)] = LABEL_STATIC
    return m


def raycast_map(m: OccupancyMap, origin: np.ndarray, direction: np.ndarray,
                max_range: float) -> tuple[float, bool]:
    """Range to the first believed-occupied cell along a ray."""
    return raycast_single(m.occ_grid(), m.cell_size, origin, direction, max_range)
