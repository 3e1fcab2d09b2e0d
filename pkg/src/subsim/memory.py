"""Memory hierarchy: short-term ring buffer with attention, working memory,
and the long-term store (semantic facts, episodes, procedural chunks)."""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import unit_from_yaw_elev
from .slam.mapping import LABEL_DYNAMIC, LABEL_UNKNOWN, OccupancyMap

# attention scoring
W_DIST = 1.0
W_CLOSING = 0.5
W_NOVELTY = 0.3
D_FLOOR = 0.5
TOP_K = 5

U_MIN = 2         # chunk uses before it may fire
F_MAX = 2         # failures before a chunk retires


@dataclass(frozen=True)
class AttendedFeature:
    kind: str                       # obstacle_cluster | dynamic_contact | structural_alert
    position: np.ndarray
    distance: float
    closing_speed: float
    novelty: float
    score: float
    cluster_id: int


@dataclass
class StmBuffer:
    """FIFO ring of per-tick sensor bundles plus the previous attention state."""

    capacity: int = 50

    def __post_init__(self):
        self.entries: deque = deque(maxlen=self.capacity)
        self._prev_clusters: list[tuple[np.ndarray, float]] = []

    def __len__(self) -> int:
        return len(self.entries)


def _cluster_endpoints(cells: list[tuple[int, int, int]]) -> list[list[int]]:
    """Group endpoint cells into components under 1-cell (26-way) adjacency."""
    n = len(cells)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if all(abs(cells[a][d] - cells[b][d]) <= 1 for d in range(3)):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[rb] = ra
    groups: dict[int, list[int]] = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    # deterministic cluster order: by smallest member index
    return [groups[r] for r in sorted(groups, key=lambda r: min(groups[r]))]


def ingest_and_attend(stm: StmBuffer, bundle: dict, m: OccupancyMap,
                      est, dt: float) -> list[AttendedFeature]:
    """Append the tick bundle and return the top-K scored features."""
    stm.entries.append(bundle)
    scan = bundle["scan"]
    health = bundle["health"]
    pose = est.mean

    points: list[np.ndarray] = []
    cells: list[tuple[int, int, int]] = []
    for b in range(scan.n_beams):
        if not scan.hits[b]:
            continue
        d = unit_from_yaw_elev(pose[3] + scan.azimuths[b], scan.elevations[b])
        end = pose[:3] + d * (float(scan.ranges[b]) + 0.5 * m.cell_size)
        cell = m.cell_of(end)
        if m.in_bounds_cell(cell):
            points.append(end)
            cells.append(cell)

    features: list[AttendedFeature] = []
    new_clusters: list[tuple[np.ndarray, float]] = []
    for cid, members in enumerate(_cluster_endpoints(cells)):
        centroid = np.mean([points[i] for i in members], axis=0)
        dist = float(np.linalg.norm(centroid - pose[:3]))
        closing = 0.0
        if dt > 0 and stm._prev_clusters:
            best = None
            for prev_c, prev_d in stm._prev_clusters:
                gap = float(np.linalg.norm(prev_c - centroid))
                if gap < 2.0 and (best is None or gap < best[0]):
                    best = (gap, prev_d)
            if best is not None:
                closing = (best[1] - dist) / dt
        labels = [int(m.label[cells[i]]) for i in members]
        labeled = sum(1 for l in labels if l != LABEL_UNKNOWN)
        novelty = 1.0 - labeled / len(members)
        dynamic = sum(1 for l in labels if l == LABEL_DYNAMIC)
        kind = "dynamic_contact" if dynamic * 2 >= len(members) else "obstacle_cluster"
        score = (W_DIST / max(dist, D_FLOOR) + W_CLOSING * max(closing, 0.0)
                 + W_NOVELTY * novelty)
        features.append(AttendedFeature(kind, centroid, dist, closing, novelty,
                                        score, cid))
        new_clusters.append((centroid, dist))

    if health.impact_flag:
        features.append(AttendedFeature("structural_alert", pose[:3].copy(),
                                        D_FLOOR, 0.0, 1.0,
                                        W_DIST / D_FLOOR + W_NOVELTY,
                                        len(new_clusters)))
    stm._prev_clusters = new_clusters
    features.sort(key=lambda f: (-f.score, f.distance, f.cluster_id))
    return features[:TOP_K]


@dataclass
class WorkingMemoryElement:
    attribute: str
    value: object
    tick_created: int
    ttl: int


class WorkingMemory:
    """Flat attribute-value store with per-element time-to-live."""

    def __init__(self):
        self._elements: list[WorkingMemoryElement] = []
        self._tick = 0

    def write(self, attribute: str, value, tick: int, ttl: int = 2) -> None:
        self._tick = max(self._tick, tick)
        # last write wins within a tick
        self._elements = [e for e in self._elements
                          if not (e.attribute == attribute and e.tick_created == tick)]
        self._elements.append(WorkingMemoryElement(attribute, value, tick, ttl))

    def update(self, tick: int, standard: dict, features: list[AttendedFeature]) -> None:
        self._tick = tick
        for attr, value in standard.items():
            self.write(attr, value, tick)
        for i, f in enumerate(features):
            self.write(f"feature.{i}", f, tick, ttl=10)
        self.purge(tick)

    def purge(self, tick: int) -> None:
        self._elements = [e for e in self._elements if tick - e.tick_created <= e.ttl]

    def query(self, pattern: str, tick: int | None = None) -> list[WorkingMemoryElement]:
        """Unexpired elements whose attribute matches the regex, newest first."""
        now = self._tick if tick is None else tick
        rx = re.compile(pattern)
        hits = [e for e in self._elements
                if rx.fullmatch(e.attribute) and now - e.tick_created <= e.ttl]
        hits.sort(key=lambda e: -e.tick_created)
        return hits

    def get(self, attribute: str, default=None):
        hits = self.query(re.escape(attribute))
        return hits[0].value if hits else default


@dataclass
class EpisodeRecord:
    mission_id: str
    tick_start: int
    tick_end: int
    goal_bin: int
    depth_band: int
    risk_band: int
    action: str
    outcome: str                    # ok | reflex_triggered | collision | aborted


@dataclass
class Chunk:
    signature: tuple
    maneuver: dict                  # {"class": str, "path": list | None}
    uses: int = 1
    failures: int = 0
    active: bool = True


class LongTermMemory:
    """Semantic facts, episodic records, and the procedural chunk table."""

    SCHEMA = 1

    def __init__(self):
        self.facts: dict[str, object] = {}
        self.episodes: list[EpisodeRecord] = []
        self.chunks: dict[tuple, list[Chunk]] = {}

    # -- episodic ---------------------------------------------------------
    def episode_store(self, record: EpisodeRecord) -> None:
        self.episodes.append(record)

    def episode_retrieve(self, goal_bin: int, depth_band: int,
                         risk_band: int, top: int = 3) -> list[EpisodeRecord]:
        scored = []
        for i, ep in enumerate(self.episodes):
            l1 = (abs(ep.goal_bin - goal_bin) + abs(ep.depth_band - depth_band)
                  + abs(ep.risk_band - risk_band))
            sim = 1.0 / (1.0 + l1)
            if ep.outcome == "ok":
                sim *= 2.0
            scored.append((-sim, i, ep))
        scored.sort(key=lambda t: (t[0], t[1]))
        return [ep for _, _, ep in scored[:top]]

    # -- procedural -------------------------------------------------------
    def _active_chunk(self, signature: tuple) -> Chunk | None:
        for c in self.chunks.get(signature, []):
            if c.active:
                return c
        return None

    def chunk_store(self, signature: tuple, maneuver: dict) -> Chunk:
        existing = self._active_chunk(signature)
        if existing is not None:
            existing.uses += 1
            return existing
        chunk = Chunk(signature=signature, maneuver=dict(maneuver))
        self.chunks.setdefault(signature, []).append(chunk)
        return chunk

    def chunk_match(self, signature: tuple) -> dict | None:
        chunk = self._active_chunk(signature)
        if chunk is not None and chunk.uses >= U_MIN:
            return chunk.maneuver
        return None

    def chunk_failure(self, signature: tuple) -> None:
        chunk = self._active_chunk(signature)
        if chunk is None:
            return
        chunk.failures += 1
        if chunk.failures >= F_MAX:
            chunk.active = False

    @property
    def n_chunks(self) -> int:
        return sum(len(v) for v in self.chunks.values())

    # -- persistence ------------------------------------------------------
    def save(self, path: str | Path) -> None:
        data = {
            "schema": self.SCHEMA,
            "facts": self.facts,
            "episodes": [vars(ep) for ep in self.episodes],
            "chunks": [
                {"signature": list(c.signature), "maneuver": c.maneuver,
                 "uses": c.uses, "failures": c.failures, "active": c.active}
                for lst in self.chunks.values() for c in lst
            ],
        }
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "LongTermMemory":
        data = json.loads(Path(path).read_text())
        if data.get("schema") != cls.SCHEMA:
            raise ValueError(f"unsupported long-term memory schema: {data.get('schema')}")
        ltm = cls()
        ltm.facts = data.get("facts", {})
        for ep in data.get("episodes", []):
            ltm.episode_store(EpisodeRecord(**ep))
        for c in data.get("chunks", []):
            sig = tuple(c["signature"])
            chunk = Chunk(signature=sig, maneuver=c["maneuver"], uses=c["uses"],
                          failures=c["failures"], active=c["active"])
            ltm.chunks.setdefault(sig, []).append(chunk)
        return ltm
