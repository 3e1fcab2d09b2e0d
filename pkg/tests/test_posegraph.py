import math

import numpy as np
import pytest

from subsim.slam.posegraph import (PoseGraphEdge, SingularNormalEquations,
                                   closure_edge, odometry_edges,
                                   optimize_pose_graph, total_residual)


def line_poses(xs):
    return np.array([[x, 0.0, 0.0, 0.0] for x in xs])


def test_four_node_contradictory_closure_hand_solution():
    # chain 0-1-2-3 with unit steps plus an edge claiming node3 sits at x=2.
    # minimizing (x1-1)^2+(x2-x1-1)^2+(x3-x2-1)^2+(x3-2)^2 by hand gives
    # x1=0.75, x2=1.5, x3=2.25
    poses = line_poses([0, 1, 2, 3])
    edges = odometry_edges(poses)
    edges.append(PoseGraphEdge(0, 3, np.array([2.0, 0.0, 0.0, 0.0])))
    result = optimize_pose_graph(poses, edges)
    np.testing.assert_allclose(result.poses[:, 0], [0.0, 0.75, 1.5, 2.25],
                               atol=1e-6)
    np.testing.assert_allclose(result.poses[:, 1:], 0.0, atol=1e-6)


def test_matches_independent_least_squares_on_random_z_graph():
    # x/y/yaw measurements are kept consistent; the inconsistency lives in z,
    # which no rotation can absorb, so the z optimum is plain least squares
    # over the independently built design matrix
    rng = np.random.default_rng(4)
    n = 6
    poses = np.zeros((n, 4))
    poses[:, 0] = np.arange(n, dtype=float)
    poses[:, 2] = rng.normal(0, 0.5, n)
    edges = []
    rows, rhs = [], []

    def add_edge(i, j, dz):
        meas = np.array([poses[j][0] - poses[i][0], 0.0, dz, 0.0])
        edges.append(PoseGraphEdge(i, j, meas))
        row = np.zeros(n - 1)
        if j != 0:
            row[j - 1] = 1.0
        if i != 0:
            row[i - 1] = -1.0
        rows.append(row)
        rhs.append(dz + (poses[i][2] if i == 0 else 0.0))

    for i in range(n - 1):
        add_edge(i, i + 1, rng.normal(0.0, 0.5))
    add_edge(0, n - 1, rng.normal(0.0, 0.5))
    add_edge(1, 4, rng.normal(0.0, 0.5))

    expected_z, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)

    result = optimize_pose_graph(poses, edges)
    np.testing.assert_allclose(result.poses[1:, 2], expected_z, atol=1e-6)
    np.testing.assert_allclose(result.poses[:, 0], poses[:, 0], atol=1e-6)
    np.testing.assert_allclose(result.poses[:, [1, 3]], 0.0, atol=1e-6)
    np.testing.assert_allclose(result.poses[0], poses[0], atol=0)  # anchored


def test_residual_non_increasing_nonlinear():
    rng = np.random.default_rng(7)
    n = 5
    poses = rng.normal(0, 1.0, (n, 4))
    poses[:, 3] = rng.uniform(-math.pi, math.pi, n)
    edges = []
    for i in range(n - 1):
        edges.append(PoseGraphEdge(i, i + 1, rng.normal(0, 1.0, 4)))
    edges.append(PoseGraphEdge(0, n - 1, rng.normal(0, 1.0, 4)))
    result = optimize_pose_graph(poses, edges)
    for a, b in zip(result.residuals, result.residuals[1:]):
        assert b <= a + 1e-12
    assert result.residuals[-1] <= total_residual(poses, edges)


def test_consistent_graph_converges_to_zero_residual():
    poses = line_poses([0, 1, 2, 3])
    edges = odometry_edges(poses)
    edges.append(PoseGraphEdge(0, 3, np.array([3.0, 0.0, 0.0, 0.0])))
    result = optimize_pose_graph(poses, edges)
    assert result.residuals[-1] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(result.poses, poses, atol=1e-9)


def test_closure_edge_ignores_yaw():
    e = closure_edge(0, 3)
    np.testing.assert_array_equal(e.meas, np.zeros(4))
    np.testing.assert_array_equal(e.weight, [1.0, 1.0, 1.0, 0.0])
    # a yaw-only discrepancy contributes nothing to the closure residual
    poses = line_poses([0, 1])
    poses[1, 3] = 2.0
    r = total_residual(poses, [closure_edge(0, 1)])
    assert r == pytest.approx(1.0)  # only the 1 m x offset counts


def test_non_finite_input_raises_singular():
    poses = line_poses([0, 1, 2])
    poses[1, 0] = math.nan
    edges = [PoseGraphEdge(0, 1, np.array([1.0, 0, 0, 0])),
             PoseGraphEdge(1, 2, np.array([1.0, 0, 0, 0]))]
    with pytest.raises(SingularNormalEquations):
        optimize_pose_graph(poses, edges)
