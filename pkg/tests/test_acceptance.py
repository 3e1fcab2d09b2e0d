"""End-to-end acceptance suite.

Each test exercises one headline requirement against the shipped scenarios and
prints a single PASS/FAIL line (visible even under pytest capture) alongside
the usual assertions.  Tolerances are stated inline.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from subsim.memory import LongTermMemory
from subsim.mission import export_artifacts, run_mission
from subsim.raycast import raycast_grid
from subsim.scenario import load_scenario, parse_scenario
from subsim.slam.pfilter import (FilterConfig, ParticleSet,
                                 resample_systematic, weight)
from subsim.slam.posegraph import (closure_edge, odometry_edges,
                                   optimize_pose_graph)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _raw(name: str, **over) -> dict:
    raw = json.loads((SCENARIOS / f"{name}.json").read_text())
    raw.update(over)
    return raw


def _say(capsys, line: str) -> None:
    with capsys.disabled():
        print(line, flush=True)


def _verdict(capsys, name: str, ok: bool, detail: str) -> None:
    _say(capsys, f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


# -- shared expensive runs ---------------------------------------------------

@pytest.fixture(scope="module")
def static_walls_run(tmp_path_factory):
    cfg = parse_scenario(_raw("static_walls"))
    result = run_mission(cfg)
    out = tmp_path_factory.mktemp("static_walls")
    export_artifacts(out, result)
    return result, out


@pytest.fixture(scope="module")
def static_loop_run():
    return run_mission(load_scenario(SCENARIOS / "static_loop.json"))


# -- 1. localization beats dead reckoning ------------------------------------

def test_static_walls_ate(static_walls_run, capsys):
    result, out = static_walls_run
    metrics = json.loads((out / "metrics.json").read_text())
    ate = metrics["ate_rmse"]
    dr = metrics["dead_reckoning_rmse"]
    ok = ate <= 1.5 and ate <= 0.5 * dr
    _verdict(capsys, "static_walls localization",
             ok, f"ate_rmse={ate:.3f} (≤1.5 and ≤0.5×dr), dr_rmse={dr:.3f}")


# -- 2. map quality ----------------------------------------------------------

def test_static_walls_map_f1(static_walls_run, capsys):
    result, out = static_walls_run
    metrics = json.loads((out / "metrics.json").read_text())
    ok = metrics["map_f1"] >= 0.80
    _verdict(capsys, "static_walls map F1",
             ok, f"map_f1={metrics['map_f1']:.3f} (≥0.80 over observed cells)")


# -- 3. semantic gate --------------------------------------------------------

def test_semantic_gate(static_loop_run, capsys):
    gate_on_fc = []
    subset_ok = True
    for seed in range(10):
        res = run_mission(parse_scenario(_raw("creature_corridor", seed=seed)))
        gate_on_fc.append(res.report.false_closures)
        for ev in res.events:
            if ev["kind"] == "loop_closure" and ev["accepted"]:
                subset_ok = subset_ok and ev["accepted_ungated"]

    gate_off_fc = 0
    for seed in range(10):
        raw = _raw("creature_corridor", seed=seed, gate_enabled=False)
        gate_off_fc += run_mission(parse_scenario(raw)).report.false_closures

    true_in_loop = static_loop_run.report.true_closures
    ok = (all(fc == 0 for fc in gate_on_fc) and gate_off_fc >= 1
          and true_in_loop >= 1 and subset_ok)
    _verdict(capsys, "semantic gate",
             ok, f"gate-on fc per seed={gate_on_fc} (all 0), "
                 f"gate-off total fc={gate_off_fc} (≥1), "
                 f"static_loop true closures={true_in_loop} (≥1), "
                 f"gate-on ⊆ gate-off: {subset_ok}")


# -- 4. reflex safety --------------------------------------------------------

def test_wall_trap_reflexes(capsys):
    failures = []
    for seed in range(20):
        res = run_mission(parse_scenario(_raw("wall_trap", seed=seed)))
        first = next((t["tick"] for t in res.trajectory if t["nearest"] < 2.0),
                     None)
        fired = next((e["tick"] for e in res.events
                      if e["kind"] == "reflex"
                      and e["fired"] == "collision_avoid"), None)
        if res.report.collisions != 0:
            failures.append(f"seed {seed}: {res.report.collisions} collisions")
        elif first is None or fired is None or not 0 <= fired - first <= 1:
            failures.append(f"seed {seed}: first<2.0m @{first}, reflex @{fired}")
    _verdict(capsys, "wall_trap reflex safety",
             not failures,
             failures[0] if failures else
             "20 seeds: 0 collisions, collision_avoid within 1 tick of 2.0 m")


# -- 5. chunk learning -------------------------------------------------------

def test_repeat_gauntlet_chunks(tmp_path, capsys):
    cfg = load_scenario(SCENARIOS / "repeat_gauntlet.json")
    run1 = run_mission(cfg)
    ltm_file = tmp_path / "ltm.json"
    run1.ltm.save(ltm_file)
    run2 = run_mission(load_scenario(SCENARIOS / "repeat_gauntlet.json"),
                       ltm=LongTermMemory.load(ltm_file))
    r1, r2 = run1.report, run2.report
    ok = (r2.rehearsal_count < r1.rehearsal_count and r2.chunk_hits >= 1
          and r2.collisions <= r1.collisions)
    _verdict(capsys, "repeat_gauntlet chunk learning",
             ok, f"rehearsals {r1.rehearsal_count}→{r2.rehearsal_count} (<), "
                 f"run-2 chunk_hits={r2.chunk_hits} (≥1), "
                 f"collisions {r1.collisions}→{r2.collisions} (≤)")


# -- 6. determinism ----------------------------------------------------------

def test_determinism(tmp_path, capsys):
    cfg_raw = _raw("wall_trap", seed=3)
    outs = []
    for i in range(2):
        res = run_mission(parse_scenario(cfg_raw))
        out = tmp_path / f"run{i}"
        export_artifacts(out, res)
        outs.append((res.report.trajectory_digest,
                     (out / "metrics.json").read_bytes()))
    ok = outs[0][0] == outs[1][0] and outs[0][1] == outs[1][1]
    _verdict(capsys, "determinism",
             ok, "same seed: identical trajectory_digest and byte-identical "
                 "metrics.json")


# -- 7. pose-graph oracle ----------------------------------------------------

def test_pose_graph_oracle(capsys):
    # chain 0-1-2-3 with unit odometry steps in x and a closure pinning node 3
    # back onto node 0.  With node 0 fixed and equal weights the solution has
    # equal increments d minimizing 3(d−1)² + (3d)², so d = 0.25 and
    # x = (0, 0.25, 0.5, 0.75).
    poses = np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0],
                      [2.0, 0, 0, 0], [3.0, 0, 0, 0]])
    edges = odometry_edges(poses) + [closure_edge(0, 3)]
    result = optimize_pose_graph(poses, edges)
    expected_x = np.array([0.0, 0.25, 0.5, 0.75])
    err = float(np.max(np.abs(result.poses[:, 0] - expected_x)))
    monotone = all(b <= a + 1e-12 for a, b in
                   zip(result.residuals, result.residuals[1:]))
    ok = err < 1e-6 and monotone
    _verdict(capsys, "pose-graph oracle",
             ok, f"max |x − hand solution| = {err:.2e} (<1e-6), "
                 f"residual non-increasing: {monotone}")


# -- 8. filter micro-oracles -------------------------------------------------

def test_filter_micro_oracles(capsys):
    from subsim.slam.mapping import OccupancyMap
    cfg = FilterConfig(n_particles=2)
    m = OccupancyMap(dims=(20, 5, 5), cell_size=1.0)
    m.log_odds[10, 2, 2] = 6.0    # one wall cell at x≈10
    # particle A at x=5 (range error 0), particle B at x=4 (error 1.0)
    particles = ParticleSet(
        poses=np.array([[5.0, 2.5, 2.5, 0.0], [4.0, 2.5, 2.5, 0.0]]),
        weights=np.array([0.5, 0.5]))

    class OneBeam:
        n_beams = 1
        azimuths = np.array([0.0])
        elevations = np.array([0.0])
        ranges = np.array([5.0])
        hits = np.array([True])
        max_range = 20.0

    def beam_like(measured, expected):
        # closed-form single-beam mixture: Gaussian range model + uniform floor
        gauss = math.exp(-0.5 * ((measured - expected) / cfg.beam_sigma) ** 2) \
            / (cfg.beam_sigma * math.sqrt(2.0 * math.pi))
        return (1.0 - cfg.epsilon) * gauss + cfg.epsilon / OneBeam.max_range

    weighted = weight(particles, OneBeam(), m, cfg)
    la = beam_like(5.0, 5.0)                    # particle A: expected 5.0
    lb = beam_like(5.0, 6.0)                    # particle B: expected 6.0
    expected_ratio = la / lb
    got_ratio = weighted.weights[0] / weighted.weights[1]
    ratio_err = abs(got_ratio - expected_ratio) / expected_ratio

    uniform = ParticleSet(poses=np.arange(32.0).reshape(8, 4),
                          weights=np.full(8, 1 / 8))
    out = resample_systematic(uniform.copy(), np.random.default_rng(3))
    identity = np.array_equal(out.poses, uniform.poses)

    # weight normalization across a full run of updates
    rng = np.random.default_rng(0)
    ps = ParticleSet(poses=rng.normal([5, 2.5, 2.5, 0], 0.2, (64, 4)),
                     weights=np.full(64, 1 / 64))
    worst = 0.0
    for _ in range(100):
        ps = weight(ps, OneBeam(), m, FilterConfig(n_particles=64))
        worst = max(worst, abs(float(ps.weights.sum()) - 1.0))

    ok = ratio_err < 1e-6 and identity and worst < 1e-9
    _verdict(capsys, "filter micro-oracles",
             ok, f"weight-ratio err={ratio_err:.2e} (<1e-6), "
                 f"uniform systematic resample identity: {identity}, "
                 f"max |Σw−1| over 100 updates={worst:.2e} (<1e-9)")


# -- 9. raycast oracle -------------------------------------------------------

def test_raycast_oracle(capsys):
    rng = np.random.default_rng(7)
    grid = rng.random((24, 24, 12)) < 0.03
    cell = 1.0
    diag = cell * math.sqrt(3)
    n = 1000
    origins = np.column_stack([rng.uniform(1, 23, n), rng.uniform(1, 23, n),
                               rng.uniform(1, 11, n)])
    free = ~grid[tuple(origins.astype(int).T)]
    origins = origins[free][:500]
    origins = np.vstack([origins, origins])[:n]
    dirs = rng.normal(size=(len(origins), 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    ranges, hits = raycast_grid(grid, cell, origins, dirs, 30.0)
    worst = 0.0
    for o, d, r, h in zip(origins, dirs, ranges, hits):
        ts = np.arange(0.0, 30.0, 0.01)
        pts = o[None, :] + ts[:, None] * d[None, :]
        cells = np.floor(pts / cell).astype(int)
        inb = np.all((cells >= 0) & (cells < grid.shape), axis=1)
        occ = np.zeros(len(ts), dtype=bool)
        occ[inb] = grid[tuple(cells[inb].T)]
        first = np.argmax(occ) if occ.any() else None
        brute = ts[first] if first is not None else 30.0
        got = r if h else 30.0
        worst = max(worst, abs(got - brute))
    ok = worst <= diag
    _verdict(capsys, "raycast oracle",
             ok, f"{len(origins)} rays, max |grid-walk − brute force| = "
                 f"{worst:.3f} m (≤ cell diagonal {diag:.3f})")


# -- 10. headless human-in-the-loop ------------------------------------------

def test_deep_risk_headless(capsys):
    res = run_mission(load_scenario(SCENARIOS / "deep_risk.json"))
    raised = [e for e in res.events if e["kind"] == "approval_requested"
              and e["approval_kind"] == "emergency_resurface"]
    resolved = [e for e in res.events if e["kind"] == "approval_resolved"]
    by_id = {}
    for e in resolved:
        by_id[e["id"]] = by_id.get(e["id"], 0) + 1
    timeout_ok = any(e["approval_kind"] == "emergency_resurface"
                     and e["approved"] and e["source"] == "timeout"
                     for e in resolved)
    min_z = min(t["true"][2] for t in res.trajectory)
    ok = (len(raised) >= 1 and timeout_ok and min_z <= 2.0
          and all(n == 1 for n in by_id.values()))
    _verdict(capsys, "deep_risk headless approval",
             ok, f"resurface raised: {len(raised) >= 1}, timeout-approved: "
                 f"{timeout_ok}, min z={min_z:.2f} (≤2.0), "
                 f"one resolution per id: {all(n == 1 for n in by_id.values())}")
