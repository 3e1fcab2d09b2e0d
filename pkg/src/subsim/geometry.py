"""Small shared geometry helpers."""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


def wrap_angles(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % TWO_PI - np.pi


def unit_from_yaw_elev(yaw: float, elev: float) -> np.ndarray:
    """World-frame unit vector for a heading (yaw) and elevation.

    z is positive down, so positive elevation points downward.
    """
    c = math.cos(elev)
    return np.array([c * math.cos(yaw), c * math.sin(yaw), math.sin(elev)])
