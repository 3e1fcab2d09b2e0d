"""Gauss-Newton pose-graph optimization over (x, y, z, yaw) keyframe nodes.

Odometry-chain edges carry the relative pose between consecutive keyframes;
closure edges tie matched keyframes together. The first node is fixed and a
step-halving line search keeps the total squared residual non-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import wrap_angle


class SingularNormalEquations(Exception):
    """Raised when the normal equations cannot be solved; caller skips correction."""


@dataclass(frozen=True)
class PoseGraphEdge:
    i: int
    j: int
    meas: np.ndarray                # relative (dx, dy, dz, dyaw) in frame of node i
    weight: np.ndarray = field(default_factory=lambda: np.ones(4))


@dataclass(frozen=True)
class PoseGraphResult:
    poses: np.ndarray               # (n, 4) optimized
    residuals: list[float]          # total squared residual per iteration (incl. start)
    iterations: int


def odometry_edges(poses: np.ndarray) -> list[PoseGraphEdge]:
    """Chain edges measuring the current relative pose between consecutive nodes."""
    edges = []
    for i in range(len(poses) - 1):
        edges.append(PoseGraphEdge(i, i + 1, _relative(poses[i], poses[i + 1])))
    return edges


def closure_edge(i: int, j: int) -> PoseGraphEdge:
    """Same-place closure: zero relative position, yaw unconstrained."""
    return PoseGraphEdge(i, j, np.zeros(4), np.array([1.0, 1.0, 1.0, 0.0]))


def _relative(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, s = math.cos(a[3]), math.sin(a[3])
    dx, dy = b[0] - a[0], b[1] - a[1]
    return np.array([c * dx + s * dy, -s * dx + c * dy, b[2] - a[2],
                     wrap_angle(b[3] - a[3])])


def _edge_residual(poses: np.ndarray, e: PoseGraphEdge) -> np.ndarray:
    pred = _relative(poses[e.i], poses[e.j])
    r = pred - e.meas
    r[3] = wrap_angle(r[3])
    return r * e.weight


def total_residual(poses: np.ndarray, edges: list[PoseGraphEdge]) -> float:
    return float(sum(np.dot(r, r) for r in
                     (_edge_residual(poses, e) for e in edges)))


def optimize_pose_graph(poses_in: np.ndarray, edges: list[PoseGraphEdge],
                        max_iters: int = 10, grad_tol: float = 1e-8) -> PoseGraphResult:
    """Minimize the weighted squared edge residuals; node 0 stays fixed."""
    poses = np.asarray(poses_in, dtype=float).copy()
    n = len(poses)
    dof = 4 * (n - 1)
    residuals = [total_residual(poses, edges)]
    iterations = 0

    for _ in range(max_iters):
        h = np.zeros((dof, dof))
        g = np.zeros(dof)
        for e in edges:
            r = _edge_residual(poses, e)
            jac = _edge_jacobian(poses, e)         # (4, dof) sparse-by-hand
            for (col, block) in jac:
                g[col:col + 4] += block.T @ r
                for (col2, block2) in jac:
                    h[col:col + 4, col2:col2 + 4] += block.T @ block2
        if np.linalg.norm(g) < grad_tol:
            break
        try:
            delta = np.linalg.solve(h + 1e-12 * np.eye(dof), -g)
        except np.linalg.LinAlgError as exc:
            raise SingularNormalEquations(str(exc)) from exc
        if not np.all(np.isfinite(delta)):
            raise SingularNormalEquations("non-finite update")

        # step-halving: never accept an increase in total residual
        base = residuals[-1]
        step = 1.0
        accepted = False
        for _half in range(12):
            trial = poses.copy()
            trial[1:] += (step * delta).reshape(n - 1, 4)
            trial[1:, 3] = np.array([wrap_angle(a) for a in trial[1:, 3]])
            cost = total_residual(trial, edges)
            if cost <= base + 1e-15:
                poses = trial
                residuals.append(cost)
                accepted = True
                break
            step *= 0.5
        iterations += 1
        if not accepted:
            break
    return PoseGraphResult(poses=poses, residuals=residuals, iterations=iterations)


def _edge_jacobian(poses: np.ndarray, e: PoseGraphEdge):
    """Jacobian blocks of the weighted residual w.r.t. the free node states."""
    xi = poses[e.i]
    c, s = math.cos(xi[3]), math.sin(xi[3])
    dx, dy = poses[e.j][0] - xi[0], poses[e.j][1] - xi[1]
    w = e.weight

    blocks = []
    if e.j != 0:
        bj = np.zeros((4, 4))
        bj[0, 0], bj[0, 1] = c, s
        bj[1, 0], bj[1, 1] = -s, c
        bj[2, 2] = 1.0
        bj[3, 3] = 1.0
        blocks.append((4 * (e.j - 1), w[:, None] * bj))
    if e.i != 0:
        bi = np.zeros((4, 4))
        bi[0, 0], bi[0, 1] = -c, -s
        bi[1, 0], bi[1, 1] = s, -c
        bi[2, 2] = -1.0
        bi[3, 3] = -1.0
        bi[0, 3] = -s * dx + c * dy
        bi[1, 3] = -c * dx - s * dy
        blocks.append((4 * (e.i - 1), w[:, None] * bi))
    return blocks
