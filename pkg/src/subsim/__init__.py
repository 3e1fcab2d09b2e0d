"""Deterministic desk-scale underwater vehicle simulator with cognitive SLAM.

Subpackages:
    world      ground-truth voxel ocean, entities, vehicle kinematics
    sensors    simulated sonar / nav / health sensing with seeded noise
    slam       particle filter, occupancy mapping, loop closures, pose graph
    memory     short-term buffer, attention, working memory, long-term store
    reflex     prioritized safety reflexes and maneuver-to-command translation
    cognition  planning, internal rehearsal, goals, affect, approvals
    mission    scenario loading, tick loop, metrics, artifact export
    gateway    operator message channel (length-delimited JSON over websocket)
"""

__version__ = "0.1.0"
