import numpy as np
import pytest

from netdeploy.errors import InvalidArgumentError, OffNetworkError
from netdeploy.gradient import SensorDerivative, grad_collapsed_lex
from netdeploy.network import Network, build_collapsed, distance_to_network
from netdeploy.objective import DensityField, h_collapsed, tanh_profile
from netdeploy.optimizer import (AscentProblem, DeploymentState, PipelineConfig,
                                 ascent_iteration, cluster_sensors, line_search,
                                 run_pipeline, run_step1, run_step2,
                                 spread_and_project, _random_on_network)
from netdeploy.scenario import random_network, table1_density
from netdeploy.voronoi import SensorSet, delaunay_neighbors


def simple_problem(mode="plane-collapsed", r=0.3, radius=1.5, seed=0, segments=8):
    net = random_network(seed, segments)
    dens = table1_density()
    collapsed = None if mode == "network-full" else build_collapsed(net, r, dens)
    perf = tanh_profile(radius)
    return AscentProblem(mode, net, dens, perf, collapsed=collapsed), net, dens


# -- line search -----------------------------------------------------------------


def test_line_search_zero_direction_rejected():
    problem, net, _ = simple_problem()
    sensors = SensorSet([(1.0, 1.0)])
    snap = problem.snapshot(sensors)
    with pytest.raises(InvalidArgumentError):
        line_search(problem, sensors, 0, SensorDerivative.zero(), 0.1,
                    snap.h, snap.trial_h)


def test_line_search_accepts_full_step_toward_mass():
    net = Network([(0, 0), (1, 0)], [(0, 1)])
    collapsed = build_collapsed(net, 2.0)  # one unit-weight barycenter at (0.5, 0)
    problem = AscentProblem("plane-collapsed", net, None, tanh_profile(2.0),
                            collapsed=collapsed)
    sensors = SensorSet([(0.5, 2.0)])
    snap = problem.snapshot(sensors)
    deriv = snap.derivatives()[0]
    delta, pos, _ = line_search(problem, sensors, 0, deriv,
                             0.01 / deriv.magnitude, snap.h, snap.trial_h)
    # Small step toward the barycenter strictly increases H, so the first
    # trial is accepted.
    assert delta == pytest.approx(0.01 / deriv.magnitude)
    assert snap.trial_h(0, pos) > snap.h


def test_line_search_backtracks_on_overshoot():
    net = Network([(0, 0), (1, 0)], [(0, 1)])
    collapsed = build_collapsed(net, 2.0)
    problem = AscentProblem("plane-collapsed", net, None, tanh_profile(2.0),
                            collapsed=collapsed)
    sensors = SensorSet([(0.5, 0.5)])
    snap = problem.snapshot(sensors)
    deriv = snap.derivatives()[0]
    huge = 1e4 / deriv.magnitude
    delta, pos, _ = line_search(problem, sensors, 0, deriv, huge, snap.h, snap.trial_h)
    assert 0.0 < delta < huge
    assert snap.trial_h(0, pos) >= snap.h - 1e-12


# -- ascent iteration ----------------------------------------------------------


def test_iteration_at_critical_point_is_fixed():
    net = Network([(0, 0), (2, 0)], [(0, 1)])
    collapsed = build_collapsed(net, 1.0)  # barycenters at 0.5 and 1.5
    problem = AscentProblem("plane-collapsed", net, None, tanh_profile(1.0),
                            collapsed=collapsed)
    state = DeploymentState(SensorSet([(1.0, 0.0)]), "plane-collapsed", 1.0)
    report = ascent_iteration(problem, state, PipelineConfig())
    assert report.deltas.tolist() == [0.0]
    assert report.h_after == report.h_before
    assert np.array_equal(state.sensors.positions, [[1.0, 0.0]])


def test_single_sensor_iterations_nondecreasing():
    problem, net, _ = simple_problem(seed=3)
    state = DeploymentState(SensorSet([(2.0, 2.0)]), "plane-collapsed", 1.5)
    cfg = PipelineConfig()
    prev = problem.h(state.sensors)
    state.h_history.append(prev)
    for _ in range(30):
        report = ascent_iteration(problem, state, cfg)
        assert report.h_after >= prev
        prev = report.h_after


def test_random_instances_history_nondecreasing():
    cfg = PipelineConfig()
    for seed in range(10):
        problem, net, _ = simple_problem(seed=seed % 5)
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 6))
        state = DeploymentState(SensorSet(rng.uniform([0, 0], [10, 8], size=(m, 2))),
                                "plane-collapsed", 1.5)
        state.h_history.append(problem.h(state.sensors))
        for _ in range(50):
            ascent_iteration(problem, state, cfg)
        h = np.asarray(state.h_history)
        assert np.all(np.diff(h) >= -1e-9)


def test_report_cells_sum_to_global():
    problem, net, _ = simple_problem(seed=2)
    rng = np.random.default_rng(0)
    state = DeploymentState(SensorSet(rng.uniform([0, 0], [10, 8], size=(3, 2))),
                            "plane-collapsed", 1.5)
    report = ascent_iteration(problem, state, PipelineConfig())
    assert sum(s.cell_before for s in report.sensors) == pytest.approx(
        report.h_before, rel=1e-10)
    assert sum(s.cell_after for s in report.sensors) == pytest.approx(
        report.h_after, rel=1e-10)


# -- clustering ------------------------------------------------------------------


def test_kmeans_two_far_blobs():
    rng = np.random.default_rng(1)
    blob_a = rng.normal([0, 0], 0.05, size=(5, 2))
    blob_b = rng.normal([20, 0], 0.05, size=(5, 2))
    points = np.vstack([blob_a, blob_b])
    centers, assign = cluster_sensors(points, 2, seed=0)
    # Brute-force oracle: the optimal 2-partition separates the blobs.
    assert len(set(assign[:5])) == 1
    assert len(set(assign[5:])) == 1
    assert assign[0] != assign[5]
    got = {tuple(np.round(c, 6)) for c in centers}
    expected = {tuple(np.round(blob_a.mean(axis=0), 6)),
                tuple(np.round(blob_b.mean(axis=0), 6))}
    assert got == expected


def test_kmeans_k_equals_n():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    centers, assign = cluster_sensors(points, 3, seed=5)
    assert sorted(map(tuple, centers)) == sorted(map(tuple, points))
    assert sorted(assign.tolist()) == [0, 1, 2]


def test_kmeans_identical_points():
    points = np.tile([2.0, 3.0], (6, 1))
    centers, assign = cluster_sensors(points, 1, seed=9)
    assert centers[0] == pytest.approx([2.0, 3.0])
    assert np.all(assign == 0)


def test_kmeans_too_many_clusters_rejected():
    with pytest.raises(InvalidArgumentError):
        cluster_sensors(np.zeros((2, 2)), 3, seed=0)


def test_kmeans_deterministic():
    rng = np.random.default_rng(2)
    points = rng.uniform(0, 10, size=(30, 2))
    c1, a1 = cluster_sensors(points, 4, seed=11)
    c2, a2 = cluster_sensors(points, 4, seed=11)
    assert np.array_equal(c1, c2) and np.array_equal(a1, a2)


def test_kmeans_centers_are_member_means():
    rng = np.random.default_rng(7)
    points = rng.uniform(0, 10, size=(40, 2))
    centers, assign = cluster_sensors(points, 5, seed=3)
    for j in range(5):
        members = points[assign == j]
        if members.size:
            assert centers[j] == pytest.approx(members.mean(axis=0), rel=1e-12)


# -- spread and project -----------------------------------------------------------


def test_spread_tiny_disc_projects_center():
    net = random_network(1, 6)
    center = np.array([[5.0, 4.0]])
    sensors = spread_and_project(net, center, 1, 1e-12, seed=0)
    from netdeploy.network import project_to_network
    foot, _, _ = project_to_network(net, (5.0, 4.0))
    assert sensors.positions[0] == pytest.approx([foot.x, foot.y], abs=1e-9)


def test_spread_output_on_network_and_distinct():
    net = random_network(2, 10)
    centers = np.array([[2.0, 2.0], [7.0, 6.0], [2.0, 2.0]])  # duplicate center
    sensors = spread_and_project(net, centers, 5, 0.4, seed=4)
    assert sensors.count == 15
    for i in range(sensors.count):
        assert distance_to_network(net, sensors.point(i)) < 1e-9
    d = sensors.positions[:, None, :] - sensors.positions[None, :, :]
    dist = np.sqrt((d ** 2).sum(-1))
    dist[np.diag_indices(15)] = np.inf
    assert dist.min() >= 1e-9


def test_spread_deterministic():
    net = random_network(3, 8)
    centers = np.array([[3.0, 3.0], [6.0, 5.0]])
    s1 = spread_and_project(net, centers, 4, 0.5, seed=8)
    s2 = spread_and_project(net, centers, 4, 0.5, seed=8)
    assert np.array_equal(s1.positions, s2.positions)


# -- run_step1 / run_step2 ----------------------------------------------------------


def test_step1_constant_radius_monotone():
    net = random_network(1, 8)
    cfg = PipelineConfig(cluster_count=3, sensors_per_cluster=2, r_collapse=0.3,
                         radius_initial=1.5, radius_final=1.5,
                         step1_iterations=40, rng_seed=5)
    _, trace = run_step1(cfg, net, table1_density())
    h = trace.h_values()
    assert np.all(np.diff(h) >= -1e-9)


def test_step1_single_cluster_single_barycenter_attracts():
    net = Network([(4, 3), (4.2, 3)], [(0, 1)])  # tiny far-off segment
    cfg = PipelineConfig(cluster_count=1, sensors_per_cluster=1, r_collapse=1.0,
                         radius_initial=20.0, radius_final=20.0,
                         step1_iterations=120, rng_seed=2)
    centers, trace = run_step1(cfg, net, None)
    target = np.array([4.1, 3.0])  # the only barycenter
    d_first = np.hypot(*(trace.rows[0].positions[0] - target))
    d_last = np.hypot(*(trace.rows[-1].positions[0] - target))
    assert d_last < d_first
    assert d_last < 0.05


def test_step1_deterministic_trace():
    net = random_network(6, 9)
    cfg = PipelineConfig(cluster_count=2, sensors_per_cluster=2, r_collapse=0.3,
                         radius_initial=3.0, radius_final=1.0,
                         step1_iterations=15, rng_seed=13)
    _, t1 = run_step1(cfg, net, table1_density())
    _, t2 = run_step1(cfg, net, table1_density())
    assert len(t1.rows) == len(t2.rows)
    for r1, r2 in zip(t1.rows, t2.rows):
        assert np.array_equal(r1.positions, r2.positions)
        assert r1.h_value == r2.h_value and r1.radius == r2.radius


def test_step2_initial_off_network_rejected():
    net = random_network(1, 6)
    cfg = PipelineConfig(rng_seed=0)
    with pytest.raises(OffNetworkError):
        run_step2(cfg, net, None, SensorSet([(-100.0, -100.0)]))


def test_step2_positions_stay_on_network():
    net = random_network(4, 10)
    cfg = PipelineConfig(cluster_count=2, sensors_per_cluster=2, r_collapse=0.3,
                         radius_initial=1.0, radius_final=1.0,
                         step2_iterations=25, rng_seed=1, step2_model="collapsed")
    rng = np.random.default_rng(3)
    init = SensorSet(_random_on_network(net, 4, rng))
    final, trace = run_step2(cfg, net, table1_density(), init)
    assert np.all(np.diff(trace.h_values()) >= -1e-9)
    for row in trace.rows:
        for p in row.positions:
            assert distance_to_network(net, p) < 1e-9


def test_step2_mass_at_endpoint_attracts_sensor():
    # Single sensor, single segment, density concentrated at the right
    # endpoint; the grid-search argmax of the 1-D objective sits next to the
    # endpoint and the sensor must converge to it. The start is within
    # sensing reach of the mass (a start on the dead plateau would be a
    # legitimate critical point).
    net = Network([(0, 0), (4, 0)], [(0, 1)])
    dens = DensityField(np.asarray([[10.0, 4.0, 0.0, 0.5, 0.5]]))
    cfg = PipelineConfig(cluster_count=1, sensors_per_cluster=1, r_collapse=0.05,
                         radius_initial=1.0, radius_final=1.0,
                         step2_iterations=400, rng_seed=0, step2_model="collapsed")
    init = SensorSet([(2.6, 0.0)])
    final, trace = run_step2(cfg, net, dens, init)
    collapsed = build_collapsed(net, 0.05, dens)
    f = tanh_profile(1.0)
    xs = np.linspace(0, 4, 10001)
    hs = [h_collapsed(collapsed, f, SensorSet([(x, 0.0)])) for x in xs]
    best = xs[int(np.argmax(hs))]
    assert best > 3.0  # the optimum is indeed near the endpoint
    assert abs(final.positions[0, 0] - best) < 2e-3
    assert np.all(np.diff(trace.h_values()) >= -1e-9)


def test_step2_full_vs_collapsed_agree_at_fine_resolution():
    # On a benign instance (one density bump centered on the network, sensors
    # spread around it, a smoothing radius) both environment models drive the
    # sensors into the same basin, so the final objectives agree at fine
    # collapse resolution.
    net = random_network(2, 6)
    cx, cy = net.vertex_array[net.vertex_count // 2]
    dens = DensityField(np.asarray([[5.0, cx, cy, 1.5, 1.5]]))
    init = spread_and_project(net, np.array([[cx, cy]]), 3, 0.6, seed=2)
    base = dict(cluster_count=1, sensors_per_cluster=3, radius_initial=1.5,
                radius_final=1.5, step2_iterations=150, rng_seed=0)
    cfg_full = PipelineConfig(step2_model="full", r_collapse=0.01, **base)
    cfg_coll = PipelineConfig(step2_model="collapsed", r_collapse=0.01, **base)
    _, tr_full = run_step2(cfg_full, net, dens, init)
    _, tr_coll = run_step2(cfg_coll, net, dens, init)
    h_full_final = tr_full.rows[-1].h_value
    h_coll_final = tr_coll.rows[-1].h_value
    assert abs(h_full_final - h_coll_final) / abs(h_full_final) < 1e-2


# -- pipeline ----------------------------------------------------------------------


def test_pipeline_single_sensor_matches_grid_search():
    net = Network([(0, 0), (5, 0)], [(0, 1)])
    dens = DensityField(np.asarray([[5.0, 3.2, 0.4, 0.8, 0.8]]))
    cfg = PipelineConfig(cluster_count=1, sensors_per_cluster=1, r_collapse=0.05,
                         radius_initial=2.0, radius_final=1.0,
                         step1_iterations=40, step2_iterations=200,
                         spread_radius=0.05, rng_seed=3, step2_model="full")
    res = run_pipeline(cfg, net, dens)
    from netdeploy.objective import h_full
    f = tanh_profile(1.0)
    xs = np.linspace(0, 5, 10001)
    t = (np.arange(20000) + 0.5) / 20000
    pts = np.column_stack([5.0 * t, np.zeros_like(t)])
    dv = dens.eval_at(pts)
    hs = [float((f.value(np.abs(pts[:, 0] - x)) * dv).mean() * 5.0) for x in xs]
    best = xs[int(np.argmax(hs))]
    assert abs(res.final_sensors.positions[0, 0] - best) <= 5e-4 + 1e-12
    assert abs(res.final_sensors.positions[0, 1]) < 1e-9


def test_pipeline_deterministic():
    net = random_network(7, 9)
    cfg = PipelineConfig(cluster_count=2, sensors_per_cluster=2, r_collapse=0.3,
                         radius_initial=2.0, radius_final=1.0,
                         step1_iterations=10, step2_iterations=10, rng_seed=21)
    r1 = run_pipeline(cfg, net, table1_density())
    r2 = run_pipeline(cfg, net, table1_density())
    assert np.array_equal(r1.final_sensors.positions, r2.final_sensors.positions)
    assert [row.h_value for row in r1.step2_trace.rows] == \
        [row.h_value for row in r2.step2_trace.rows]


def test_step1_stays_in_inflated_bbox():
    net = random_network(2, 10)
    cfg = PipelineConfig(cluster_count=3, sensors_per_cluster=2, r_collapse=0.3,
                         radius_initial=5.0, radius_final=1.0,
                         step1_iterations=30, rng_seed=4)
    _, trace = run_step1(cfg, net, table1_density())
    x0, y0, x1, y1 = net.bounding_box()
    r = cfg.radius_initial
    for row in trace.rows:
        assert np.all(row.positions[:, 0] >= x0 - r)
        assert np.all(row.positions[:, 0] <= x1 + r)
        assert np.all(row.positions[:, 1] >= y0 - r)
        assert np.all(row.positions[:, 1] <= y1 + r)


def test_distributivity_owned_plus_neighbors_bit_identical():
    rng = np.random.default_rng(19)
    net = random_network(3, 10)
    dens = table1_density()
    c = build_collapsed(net, 0.3, dens)
    f = tanh_profile(1.5)
    for _ in range(20):
        m = int(rng.integers(3, 8))
        pos = rng.uniform([0, 0], [10, 8], size=(m, 2))
        sensors = SensorSet(pos)
        g = grad_collapsed_lex(c, f, sensors)
        graph = delaunay_neighbors(sensors)
        for h in range(m):
            local = sorted({h, *graph.neighbors(h)})
            sub = SensorSet(pos[local])
            g_local = grad_collapsed_lex(c, f, sub)
            assert np.array_equal(g_local[local.index(h)], g[h])


def test_convergence_to_critical_set():
    # Restated theorem assertion: once a run stops (derivative tolerance or
    # iteration cap), the max per-sensor feasible directional derivative is
    # below 1e-4.
    from netdeploy.optimizer import AscentProblem
    for seed in (0, 2, 4):
        net = random_network(seed, 8)
        cx, cy = net.vertex_array[net.vertex_count // 2]
        dens = DensityField(np.asarray([[5.0, cx, cy, 2.0, 2.0]]))
        for model in ("collapsed", "full"):
            cfg = PipelineConfig(cluster_count=1, sensors_per_cluster=3,
                                 r_collapse=0.2, radius_initial=1.5,
                                 radius_final=1.5, step2_iterations=500,
                                 rng_seed=seed, step2_model=model)
            init = spread_and_project(net, np.array([[cx, cy]]), 3, 0.8,
                                      seed=seed)
            final, trace = run_step2(cfg, net, dens, init)
            collapsed = None if model == "full" else build_collapsed(net, 0.2, dens)
            problem = AscentProblem("network-full" if model == "full"
                                    else "network-collapsed",
                                    net, dens, tanh_profile(1.5),
                                    collapsed=collapsed)
            derivs = problem.derivatives(final)
            assert max(d.magnitude for d in derivs) < 1e-4, (seed, model)


def test_thread_count_does_not_change_results(monkeypatch):
    net = random_network(5, 9)
    dens = table1_density()
    cfg = PipelineConfig(cluster_count=2, sensors_per_cluster=2, r_collapse=0.3,
                         radius_initial=2.0, radius_final=1.0,
                         step1_iterations=8, step2_iterations=8, rng_seed=9)
    monkeypatch.delenv("NETDEPLOY_THREADS", raising=False)
    serial = run_pipeline(cfg, net, dens)
    monkeypatch.setenv("NETDEPLOY_THREADS", "4")
    threaded = run_pipeline(cfg, net, dens)
    assert np.array_equal(serial.final_sensors.positions,
                          threaded.final_sensors.positions)
    assert [r.h_value for r in serial.step2_trace.rows] == \
        [r.h_value for r in threaded.step2_trace.rows]


def test_annealing_schedule_linear():
    cfg = PipelineConfig(radius_initial=10.0, radius_final=1.0,
                         step1_iterations=10)
    rs = [cfg.annealed_radius(j) for j in range(10)]
    assert rs[0] == 10.0 and rs[-1] == 1.0
    assert np.allclose(np.diff(rs), -1.0)
    single = PipelineConfig(radius_initial=10.0, radius_final=1.0,
                            step1_iterations=1)
    assert single.annealed_radius(0) == 1.0


def test_step1_trace_radius_column_matches_schedule():
    net = random_network(3, 7)
    cfg = PipelineConfig(cluster_count=2, sensors_per_cluster=1, r_collapse=0.3,
                         radius_initial=4.0, radius_final=1.0,
                         step1_iterations=7, rng_seed=2)
    _, trace = run_step1(cfg, net, table1_density())
    for j, row in enumerate(trace.rows[1:]):
        assert row.radius == pytest.approx(cfg.annealed_radius(j))
