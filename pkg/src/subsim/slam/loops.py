"""Place recognition and semantically gated loop-closure validation.

A keyframe's signature is a 36-bin polar proximity histogram built from scan
endpoints whose map cells are not labeled dynamic. Matching maximizes
normalized cross-correlation over circular shifts (yaw invariance); the
semantic gate additionally demands that enough contributing endpoints are
confirmed static before a closure is trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import unit_from_yaw_elev, wrap_angle
from ..sensors import SonarScan
from .mapping import LABEL_DYNAMIC, LABEL_STATIC, OccupancyMap


@dataclass(frozen=True)
class LoopConfig:
    n_bins: int = 36
    theta_match: float = 0.85       # min shift-max correlation
    f_min: float = 0.6              # min static fraction (gate)
    r_loop: float = 5.0             # candidate radius, meters
    t_sep: int = 100                # min tick separation
    k_kf: int = 25                  # keyframe cadence, ticks
    gate_enabled: bool = True


@dataclass
class Keyframe:
    id: int
    tick: int
    pose: np.ndarray                # (x, y, z, yaw) estimate at creation
    signature: np.ndarray           # (n_bins,), values in [0, 1]
    static_hits: int
    unknown_hits: int
    dynamic_hits: int               # excluded from the signature
    contrib_cells: np.ndarray       # (M, 3) int cells contributing to signature

    @property
    def static_fraction(self) -> float:
        contrib = self.static_hits + self.unknown_hits
        if contrib == 0:
            return 0.0
        return self.static_hits / contrib


@dataclass(frozen=True)
class LoopClosureEvent:
    from_keyframe: int
    to_keyframe: int
    score: float
    static_fraction: float
    accepted: bool
    reason: str                     # accepted | low_score | dynamic_anchor | adjacent


def signature_from_scan(m: OccupancyMap, pose: np.ndarray, yaw: float,
                        scan: SonarScan, cfg: LoopConfig):
    """Build the polar signature plus endpoint label tallies for one scan."""
    sig = np.zeros(cfg.n_bins)
    static_n = unknown_n = dynamic_n = 0
    contrib: list[tuple[int, int, int]] = []
    bin_width = 2.0 * math.pi / cfg.n_bins
    for b in range(scan.n_beams):
        if not scan.hits[b]:
            continue
        r = float(scan.ranges[b])
        d = unit_from_yaw_elev(yaw + scan.azimuths[b], scan.elevations[b])
        # same half-cell inset as map integration: bin the surface sample
        # into the cell behind the measured face
        end = pose[:3] + d * (r + 0.5 * m.cell_size)
        cell = m.cell_of(end)
        if not m.in_bounds_cell(cell):
            continue
        label = int(m.label[cell])
        if label == LABEL_DYNAMIC:
            dynamic_n += 1
            continue
        if label == LABEL_STATIC:
            static_n += 1
        else:
            unknown_n += 1
        contrib.append(cell)
        az = wrap_angle(float(scan.azimuths[b]))
        k = int((az + math.pi) / bin_width) % cfg.n_bins
        proximity = (scan.max_range - r) / scan.max_range
        sig[k] = max(sig[k], proximity)
    cells = np.array(contrib, dtype=np.int64).reshape(-1, 3)
    return sig, static_n, unknown_n, dynamic_n, cells


def make_keyframe(kf_id: int, tick: int, pose: np.ndarray, m: OccupancyMap,
                  scan: SonarScan, cfg: LoopConfig) -> Keyframe:
    sig, s_n, u_n, d_n, cells = signature_from_scan(m, pose, float(pose[3]), scan, cfg)
    return Keyframe(id=kf_id, tick=tick, pose=np.asarray(pose, dtype=float).copy(),
                    signature=sig, static_hits=s_n, unknown_hits=u_n,
                    dynamic_hits=d_n, contrib_cells=cells)


def keyframe_and_detect(keyframes: list[Keyframe], new_kf: Keyframe,
                        cfg: LoopConfig) -> list[tuple[Keyframe, Keyframe]]:
    """Append the keyframe and return (past, new) candidate pairs."""
    candidates = []
    for kf in keyframes:
        if new_kf.tick - kf.tick < cfg.t_sep:
            continue
        if np.linalg.norm(new_kf.pose[:3] - kf.pose[:3]) > cfg.r_loop:
            continue
        candidates.append((kf, new_kf))
    keyframes.append(new_kf)
    return candidates


def match_score(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """Max normalized cross-correlation over circular shifts of b."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0, 0
    best = -1.0
    best_shift = 0
    for s in range(len(a)):
        c = float(np.dot(a, np.roll(b, s))) / (na * nb)
        if c > best:
            best = c
            best_shift = s
    return best, best_shift


def validate_closure(pair: tuple[Keyframe, Keyframe],
                     cfg: LoopConfig) -> LoopClosureEvent:
    """Score a candidate pair and apply the semantic gate.

    With the gate disabled the static-fraction test is skipped (ablation
    mode); the score threshold always applies.
    """
    past, cur = pair
    score, _ = match_score(past.signature, cur.signature)
    frac = cur.static_fraction
    if score < cfg.theta_match:
        accepted, reason = False, "low_score"
    elif cfg.gate_enabled and frac < cfg.f_min:
        accepted, reason = False, "dynamic_anchor"
    else:
        accepted, reason = True, "accepted"
    return LoopClosureEvent(from_keyframe=past.id, to_keyframe=cur.id,
                            score=score, static_fraction=frac,
                            accepted=accepted, reason=reason)
