from .mapping import MapConfig, OccupancyMap, classify_semantics, integrate_scan, raycast_map
from .pfilter import (FilterConfig, ParticleSet, estimate_pose, init_particles,
                      predict, resample_systematic, weight)
from .loops import (Keyframe, LoopClosureEvent, LoopConfig, keyframe_and_detect,
                    signature_from_scan, validate_closure)
from .posegraph import PoseGraphResult, optimize_pose_graph

__all__ = [
    "MapConfig", "OccupancyMap", "classify_semantics", "integrate_scan", "raycast_map",
    "FilterConfig", "ParticleSet", "estimate_pose", "init_particles",
    "predict", "resample_systematic", "weight",
    "Keyframe", "LoopClosureEvent", "LoopConfig", "keyframe_and_detect",
    "signature_from_scan", "validate_closure",
    "PoseGraphResult", "optimize_pose_graph",
]
