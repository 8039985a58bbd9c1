"""Discrete-time gradient-ascent engine and the two-step deployment pipeline.

Each iteration is synchronous: every sensor computes its derivative and its
own back-tracked step against the same snapshot, all moves apply at once, and
the iteration retries with halved step caps if the simultaneous moves ever
interact badly enough to decrease the objective. The recorded objective
history is therefore nondecreasing (within 1e-9) at fixed sensing radius.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateConfigurationError, InvalidArgumentError,
                     OffNetworkError)
from .geometry import Point2
from .gradient import (SensorDerivative, dir_deriv_on_network, full_network_gradient,
                       grad_collapsed_lex)
from .network import (CollapsedNetwork, Network, build_collapsed,
                      distance_to_network, project_to_network)
from .objective import (PerformanceFunction, h_collapsed, h_collapsed_cells,
                        h_full_cells, h_full_segment_sums,
                        integrate_interval_values, tanh_profile)
from .voronoi import NetworkCells, SensorSet, envelope_walk, sensor_distances

__all__ = [
    "MODES",
    "PipelineConfig",
    "DeploymentState",
    "SensorStep",
    "StepReport",
    "TraceRow",
    "RunTrace",
    "AscentProblem",
    "line_search",
    "ascent_iteration",
    "cluster_sensors",
    "spread_and_project",
    "run_step1",
    "run_step2",
    "run_pipeline",
    "PipelineResult",
]

MODES = ("plane-collapsed", "network-collapsed", "network-full")

# Trial positions this close to another sensor (or to a barycenter, in the
# collapsed modes) are rejected by the line search.
AVOIDANCE_EPS = 1e-9

H_STEP_SLACK = 1e-12       # per-sensor line-search nondecrease slack
H_GLOBAL_SLACK = 1e-9      # per-iteration global nondecrease slack


def _worker_count() -> int:
    raw = os.environ.get("NETDEPLOY_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n <= 0:
        return 1
    return n


@dataclass
class PipelineConfig:
    """Knobs of the two-step procedure; defaults match the benchmark scenario."""

    cluster_count: int = 10
    sensors_per_cluster: int = 5
    r_collapse: float = 0.3
    radius_initial: float = 10.0
    radius_final: float = 1.0
    step1_iterations: int = 60
    step2_iterations: int = 50
    spread_radius: float = 0.5
    rng_seed: int = 0
    step2_model: str = "full"
    step_scale: float | None = None   # per-iteration displacement cap override
    max_backtracks: int = 40
    max_retries: int = 20
    stop_tolerance: float = 1e-6
    quad_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.cluster_count < 1 or self.sensors_per_cluster < 1:
            raise InvalidArgumentError("cluster counts must be positive")
        if not (self.radius_initial >= self.radius_final > 0):
            raise InvalidArgumentError(
                f"need radius_initial >= radius_final > 0, got "
                f"{self.radius_initial} < {self.radius_final}")
        if self.r_collapse <= 0 or self.spread_radius <= 0:
            raise InvalidArgumentError("r_collapse and spread_radius must be positive")
        if self.step1_iterations < 1 or self.step2_iterations < 1:
            raise InvalidArgumentError("iteration counts must be positive")
        if self.step2_model not in ("collapsed", "full"):
            raise InvalidArgumentError(f"unknown step2_model {self.step2_model!r}")

    @property
    def total_sensors(self) -> int:
        return self.cluster_count * self.sensors_per_cluster

    def annealed_radius(self, j: int) -> float:
        """Sensing radius before iteration j (0-based), linear in j."""
        n = self.step1_iterations
        if n == 1:
            return self.radius_final
        frac = j / (n - 1)
        return self.radius_initial + (self.radius_final - self.radius_initial) * frac


@dataclass
class DeploymentState:
    sensors: SensorSet
    mode: str
    radius: float
    iteration: int = 0
    h_history: list[float] = field(default_factory=list)
    # Last accepted displacement per sensor; warm-starts the next line search.
    last_step: np.ndarray | None = None
    # Last accepted move vector per sensor; a direction reversal means the
    # sensor hopped across its optimum and the step amplitude must shrink.
    last_move: np.ndarray | None = None
    snapshot_cache: object = None


@dataclass(frozen=True)
class SensorStep:
    delta: float
    derivative_magnitude: float
    cell_before: float
    cell_after: float


@dataclass(frozen=True)
class StepReport:
    sensors: tuple[SensorStep, ...]
    h_before: float
    h_after: float
    max_derivative: float
    retries: int

    @property
    def deltas(self) -> np.ndarray:
        return np.asarray([s.delta for s in self.sensors])


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    radius: float
    h_value: float
    positions: np.ndarray
    deltas: np.ndarray


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def h_values(self) -> np.ndarray:
        return np.asarray([r.h_value for r in self.rows])


class Snapshot:
    """Everything derived from one frozen sensor configuration: objective
    value, per-cell values, a single-move evaluator, and (lazily) the
    per-sensor derivatives."""

    def __init__(self, problem: "AscentProblem", sensors: SensorSet) -> None:
        self.problem = problem
        self.sensors = sensors
        self._derivs: list[SensorDerivative] | None = None
        if problem.mode == "network-full":
            self._init_full()
        else:
            self._init_collapsed()

    # -- collapsed modes ---------------------------------------------------
    def _init_collapsed(self) -> None:
        problem = self.problem
        c = problem.collapsed
        dist = sensor_distances(c.positions, self.sensors)
        owner = np.argmin(dist, axis=1)
        m = self.sensors.count
        perf = problem.perf
        self.h_cells = np.empty(m)
        for i in range(m):
            mask = owner == i
            self.h_cells[i] = float(np.sum(perf.value(dist[mask, i]) * c.weights[mask])) \
                if mask.any() else 0.0
        self.h = float(perf.value(dist.min(axis=1)) @ c.weights)
        if m == 1:
            excl = np.full((dist.shape[0], 1), np.inf)
        else:
            part = np.partition(dist, 1, axis=1)
            excl = np.where(owner[:, None] == np.arange(m)[None, :],
                            part[:, 1][:, None], part[:, 0][:, None])
        self._excl = excl

    # -- full-network mode ---------------------------------------------------
    def _init_full(self) -> None:
        problem = self.problem
        n = problem.network
        positions = self.sensors.positions
        walk = envelope_walk(n.segment_starts, n._u, positions)
        self._walk = walk
        m = self.sensors.count

        cells: list[list[tuple[int, float, float]]] = [[] for _ in range(m)]
        seg_breaks, seg_owners = [], []
        for k, (cuts, owners) in enumerate(walk):
            seg_breaks.append(tuple(cuts[1:-1]))
            seg_owners.append(tuple(owners))
            for i, o in enumerate(owners):
                cells[o].append((k, cuts[i], cuts[i + 1]))
        self.cells = NetworkCells(cells=tuple(tuple(c) for c in cells),
                                  breakpoints=tuple(seg_breaks),
                                  segment_owners=tuple(seg_owners))

        seg, t0, t1, own = [], [], [], []
        for k, (cuts, owners) in enumerate(walk):
            for i, o in enumerate(owners):
                seg.append(k)
                t0.append(cuts[i])
                t1.append(cuts[i + 1])
                own.append(o)
        seg = np.asarray(seg, dtype=int)
        own = np.asarray(own, dtype=int)
        vals = integrate_interval_values(n, problem.perf, problem.density, positions,
                                         seg, np.asarray(t0), np.asarray(t1), own,
                                         problem.quad_tol)
        self.h_cells = np.zeros(m)
        np.add.at(self.h_cells, own, vals)
        self._seg_sums = np.zeros(n.segment_count)
        np.add.at(self._seg_sums, seg, vals)
        self.h = float(vals.sum())

        # Envelope maximum per segment: the owner distance is convex on each
        # interval, so the maximum over a segment sits at a cut point.
        env_max = np.zeros(n.segment_count)
        owned_by: list[set[int]] = [set() for _ in range(m)]
        for k, (cuts, owners) in enumerate(walk):
            worst = 0.0
            for i, o in enumerate(owners):
                owned_by[o].add(k)
                for t in (cuts[i], cuts[i + 1]):
                    g = n.segment_starts[k] + t * n._u[k]
                    worst = max(worst, float(np.hypot(g[0] - positions[o, 0],
                                                      g[1] - positions[o, 1])))
            env_max[k] = worst
        self._env_max = env_max
        self._owned_by = owned_by

    # -- shared surface --------------------------------------------------------
    def derivatives(self) -> list[SensorDerivative]:
        if self._derivs is None:
            problem = self.problem
            if problem.mode == "network-full":
                g = full_network_gradient(problem.network, problem.perf,
                                          problem.density, self.sensors,
                                          cells=self.cells, tol=problem.quad_tol)
            else:
                g = grad_collapsed_lex(problem.collapsed, problem.perf, self.sensors)
            if problem.constrained:
                self._derivs = [dir_deriv_on_network(g, self.sensors, problem.network, i)
                                for i in range(self.sensors.count)]
            else:
                self._derivs = [SensorDerivative.unconstrained(g[i])
                                for i in range(self.sensors.count)]
        return self._derivs

    def trial_h(self, i: int, pos: np.ndarray) -> float:
        """H with sensor i at pos and every other sensor frozen."""
        problem = self.problem
        if problem.mode != "network-full":
            c = problem.collapsed
            d_new = np.hypot(c.positions[:, 0] - pos[0], c.positions[:, 1] - pos[1])
            return float(problem.perf.value(np.minimum(self._excl[:, i], d_new))
                         @ c.weights)
        n = problem.network
        positions = self.sensors.positions
        A, U, UU = n.segment_starts, n._u, n._uu
        t = np.clip(((pos[None, :] - A) * U).sum(-1) / UU, 0.0, 1.0)
        foot = A + t[:, None] * U
        dmin = np.hypot(foot[:, 0] - pos[0], foot[:, 1] - pos[1])
        affected = set(np.nonzero(dmin < self._env_max + 1e-9)[0].tolist())
        affected |= self._owned_by[i]
        rows = np.asarray(sorted(affected), dtype=int)
        if rows.size == 0:
            return self.h
        moved = positions.copy()
        moved[i] = pos
        new_sums = h_full_segment_sums(n, problem.perf, problem.density, moved,
                                       rows, tol=problem.quad_tol)
        return self.h - float(self._seg_sums[rows].sum()) + float(new_sums.sum())


class AscentProblem:
    """One optimization mode bound to its environment model."""

    def __init__(self, mode: str, network: Network, density, perf: PerformanceFunction,
                 collapsed: CollapsedNetwork | None = None, quad_tol: float = 1e-8) -> None:
        if mode not in MODES:
            raise InvalidArgumentError(f"unknown mode {mode!r}")
        if mode != "network-full" and collapsed is None:
            raise InvalidArgumentError(f"mode {mode} needs a collapsed network")
        self.mode = mode
        self.network = network
        self.density = density
        self.perf = perf
        self.collapsed = collapsed
        self.quad_tol = quad_tol

    @property
    def constrained(self) -> bool:
        return self.mode != "plane-collapsed"

    def snapshot(self, sensors: SensorSet) -> Snapshot:
        return Snapshot(self, sensors)

    def h(self, sensors: SensorSet) -> float:
        if self.mode == "network-full":
            return float(h_full_cells(self.network, self.perf, self.density,
                                      sensors, tol=self.quad_tol).sum())
        return h_collapsed(self.collapsed, self.perf, sensors)

    def h_cells(self, sensors: SensorSet) -> np.ndarray:
        if self.mode == "network-full":
            return h_full_cells(self.network, self.perf, self.density,
                                sensors, tol=self.quad_tol)
        return h_collapsed_cells(self.collapsed, self.perf, sensors)

    def derivatives(self, sensors: SensorSet) -> list[SensorDerivative]:
        return self.snapshot(sensors).derivatives()

    def single_move_evaluator(self, snapshot: SensorSet):
        snap = self.snapshot(snapshot)
        return snap.trial_h

    def default_step_scale(self) -> float:
        """Displacement cap per iteration: a quarter of the collapse
        resolution in the planar mode, a tenth of the shortest segment in the
        network-constrained modes."""
        if self.constrained:
            return 0.1 * float(self.network.segment_lengths.min())
        return 0.25 * self.collapsed.resolution


def _trial_position(problem: AscentProblem, snapshot: SensorSet, i: int,
                    deriv: SensorDerivative, delta: float) -> np.ndarray:
    p = snapshot.positions[i]
    if not problem.constrained:
        return p + delta * deriv.vector
    # Constrained motion stays on the host segment, clamped at its vertices.
    n = problem.network
    k = deriv.segment
    A, U, UU = n.segment_starts[k], n._u[k], n._uu[k]
    t = float(np.clip((p - A) @ U / UU, 0.0, 1.0))
    t_new = float(np.clip(t + delta * float(deriv.vector @ U) / UU, 0.0, 1.0))
    return A + t_new * U


def _trial_rejected(problem: AscentProblem, snapshot: SensorSet, i: int,
                    pos: np.ndarray) -> bool:
    others = np.delete(snapshot.positions, i, axis=0)
    if others.size and np.hypot(others[:, 0] - pos[0], others[:, 1] - pos[1]).min() < AVOIDANCE_EPS:
        return True
    if problem.collapsed is not None:
        b = problem.collapsed.positions
        if np.hypot(b[:, 0] - pos[0], b[:, 1] - pos[1]).min() < AVOIDANCE_EPS:
            return True
    return False


# Displacements below this cannot beat the line-search slack; stop searching.
STEP_FLOOR = 1e-12

# Warm-start regrowth: the next search starts at this multiple of the last
# accepted displacement (capped by the scale), so steps can recover after
# shrinking without re-running the whole backtrack ladder.
GROWTH = 2.0

# Run loops stop once H has gained less than this over STALL_WINDOW
# iterations; it breaks noise-level oscillation cycles near critical points
# while leaving genuine slow creep (which still clears the window) running.
STALL_WINDOW = 12
STALL_EPS = 1e-12


def _stalled(history: list[float]) -> bool:
    if len(history) <= STALL_WINDOW:
        return False
    return history[-1] - history[-1 - STALL_WINDOW] <= STALL_EPS


def line_search(problem: AscentProblem, snapshot: SensorSet, i: int,
                deriv: SensorDerivative, delta_max: float,
                h_snapshot: float, trial_h, max_backtracks: int = 40,
                ) -> tuple[float, np.ndarray, float]:
    """First delta in {delta_max, delta_max/2, ...} whose single-sensor move
    does not decrease H; returns (delta, position, H gain), with delta = 0
    after exhausting max_backtracks halvings or once the displacement falls
    below the objective noise floor."""
    if deriv.magnitude <= 0.0:
        raise InvalidArgumentError("line search needs a nonzero direction")
    delta = delta_max
    for _ in range(max_backtracks):
        if delta * deriv.magnitude < STEP_FLOOR:
            break
        pos = _trial_position(problem, snapshot, i, deriv, delta)
        if not _trial_rejected(problem, snapshot, i, pos):
            gain = trial_h(i, pos) - h_snapshot
            if gain >= -H_STEP_SLACK:
                return delta, pos, gain
        delta *= 0.5
    return 0.0, snapshot.positions[i].copy(), 0.0


def ascent_iteration(problem: AscentProblem, state: DeploymentState,
                     config: PipelineConfig) -> StepReport:
    """One synchronous update of every sensor; records a nondecreasing H."""
    sensors = state.sensors
    snap = state.snapshot_cache
    if not (isinstance(snap, Snapshot) and snap.sensors is sensors
            and snap.problem is problem):
        snap = problem.snapshot(sensors)
    h_before = snap.h
    cells_before = snap.h_cells
    derivs = snap.derivatives()
    max_derivative = max(d.magnitude for d in derivs)
    base_scale = config.step_scale if config.step_scale is not None \
        else problem.default_step_scale()
    if state.last_step is None or state.last_step.shape[0] != sensors.count:
        state.last_step = np.full(sensors.count, base_scale)

    workers = _worker_count()
    retries = 0
    while True:
        scale = base_scale / (2 ** retries)

        def search(i: int) -> tuple[float, np.ndarray, float]:
            d = derivs[i]
            if d.magnitude <= 0.0:
                return 0.0, sensors.positions[i].copy(), state.last_step[i]
            # Warm start: grow from the last accepted displacement, capped by
            # the (retry-halved) scale; retries must shrink the start too.
            start = min(scale, GROWTH * state.last_step[i] * 0.5 ** retries)
            if start < STEP_FLOOR:
                return 0.0, sensors.positions[i].copy(), min(scale, GROWTH * start)
            delta, pos, _ = line_search(problem, sensors, i, d,
                                        start / d.magnitude, h_before,
                                        snap.trial_h, config.max_backtracks)
            warm = delta * d.magnitude if delta > 0.0 else 0.25 * STEP_FLOOR
            return delta, pos, warm

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(search, range(sensors.count)))
        else:
            results = [search(i) for i in range(sensors.count)]

        deltas = np.asarray([r[0] for r in results])
        new_positions = np.asarray([r[1] for r in results])
        warm = np.asarray([r[2] for r in results])
        pair_ok = True
        if sensors.count > 1:
            diff = new_positions[:, None, :] - new_positions[None, :, :]
            dmat = np.sqrt((diff ** 2).sum(-1))
            dmat[np.diag_indices(sensors.count)] = np.inf
            pair_ok = dmat.min() >= AVOIDANCE_EPS
        if pair_ok:
            moved = SensorSet(new_positions)
            new_snap = problem.snapshot(moved)
            if new_snap.h >= h_before - H_GLOBAL_SLACK:
                break
        retries += 1
        if retries > config.max_retries:
            raise DegenerateConfigurationError(
                "iteration could not preserve monotonicity after retrying with "
                f"{config.max_retries} halvings")

    moves = new_positions - sensors.positions
    prev_ok = state.last_move is not None and state.last_move.shape == moves.shape
    if prev_ok:
        flipped = np.einsum("ij,ij->i", moves, state.last_move) < 0.0
        warm = np.where(flipped & (deltas > 0.0), 0.25 * warm, warm)
    state.sensors = moved
    state.iteration += 1
    state.h_history.append(new_snap.h)
    state.last_step = warm
    state.last_move = np.where((deltas > 0.0)[:, None], moves,
                               state.last_move if prev_ok else moves)
    state.snapshot_cache = new_snap
    steps = tuple(
        SensorStep(delta=float(deltas[i]),
                   derivative_magnitude=float(derivs[i].magnitude),
                   cell_before=float(cells_before[i]),
                   cell_after=float(new_snap.h_cells[i]))
        for i in range(sensors.count)
    )
    return StepReport(sensors=steps, h_before=h_before, h_after=new_snap.h,
                      max_derivative=float(max_derivative), retries=retries)


# -- clustering and spreading ---------------------------------------------------


def cluster_sensors(positions, k: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means (k-means++ style seeding, Lloyd rounds, 1e-9 movement
    convergence); deterministic for a fixed seed."""
    pts = np.asarray([[p.x, p.y] if isinstance(p, Point2) else [p[0], p[1]]
                      for p in positions], dtype=float).reshape(-1, 2)
    n = pts.shape[0]
    if k > n:
        raise InvalidArgumentError(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, 2))
    centers[0] = pts[int(rng.integers(n))]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All points coincide with some chosen center; any point will do.
            centers[j] = pts[j % n]
        else:
            centers[j] = pts[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((pts - centers[j]) ** 2).sum(axis=1))

    assign = np.zeros(n, dtype=int)
    for _ in range(100):
        dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        assign = np.argmin(dist, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = assign == j
            if mask.any():
                new_centers[j] = pts[mask].mean(axis=0)
            else:
                # Re-seed an empty cluster at the point farthest from its center.
                far = int(np.argmax(dist.min(axis=1)))
                new_centers[j] = pts[far]
        move = np.hypot(*(new_centers - centers).T).max()
        centers = new_centers
        if move < 1e-9:
            break
    dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    assign = np.argmin(dist, axis=1)
    return centers, assign


def spread_and_project(network: Network, centers, per_cluster: int,
                       spread_radius: float, seed) -> SensorSet:
    """Draw per_cluster points in a disc around each center, project all of
    them onto the network, and separate any coincidences along their host
    segments."""
    if per_cluster < 1:
        raise InvalidArgumentError("per_cluster must be positive")
    if not spread_radius > 0:
        raise InvalidArgumentError("spread radius must be positive")
    centers = np.asarray([[c.x, c.y] if isinstance(c, Point2) else [c[0], c[1]]
                          for c in centers], dtype=float).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    placed: list[np.ndarray] = []
    hosts: list[int] = []
    for c in centers:
        for _ in range(per_cluster):
            radius = spread_radius * np.sqrt(rng.random())
            angle = 2.0 * np.pi * rng.random()
            raw = c + radius * np.array([np.cos(angle), np.sin(angle)])
            foot, k, _ = project_to_network(network, Point2(*raw))
            placed.append(np.array([foot.x, foot.y]))
            hosts.append(k)

    # Separate coincident projections along their host segments.
    for i in range(1, len(placed)):
        k = hosts[i]
        A, U, UU = network.segment_starts[k], network._u[k], network._uu[k]
        t = float(np.clip((placed[i] - A) @ U / UU, 0.0, 1.0))
        step = 1e-6 / float(np.sqrt(UU))
        tries = 0
        while any(np.hypot(*(placed[i] - placed[j])) < AVOIDANCE_EPS for j in range(i)):
            tries += 1
            sign = 1.0 if (tries % 2 == 1) else -1.0
            t_new = float(np.clip(t + sign * step * ((tries + 1) // 2), 0.0, 1.0))
            placed[i] = A + t_new * U
            if tries > 200:
                raise DegenerateConfigurationError("could not separate projected sensors")
    return SensorSet(np.asarray(placed))


# -- pipeline steps --------------------------------------------------------------


def _random_on_network(network: Network, count: int, rng: np.random.Generator) -> np.ndarray:
    lengths = network.segment_lengths
    probs = lengths / lengths.sum()
    ks = rng.choice(network.segment_count, size=count, p=probs)
    ts = rng.random(count)
    return network.segment_starts[ks] + ts[:, None] * network._u[ks]


def _perf_for(performance, radius: float) -> PerformanceFunction:
    if performance is None:
        return tanh_profile(radius)
    if isinstance(performance, PerformanceFunction):
        return performance
    return performance(radius)


def _seed_children(seed: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(3)


def run_step1(config: PipelineConfig, network: Network, density,
              performance=None) -> tuple[list[Point2], RunTrace]:
    """Coarse step: cluster centers ascend freely in the plane over the
    collapsed model while the sensing radius anneals linearly."""
    init_seed, kmeans_seed, _ = _seed_children(config.rng_seed)
    rng = np.random.default_rng(init_seed)
    sensors0 = _random_on_network(network, config.total_sensors, rng)
    centers, _ = cluster_sensors(sensors0, config.cluster_count, kmeans_seed)

    collapsed = build_collapsed(network, config.r_collapse, density)
    state = DeploymentState(sensors=SensorSet(centers), mode="plane-collapsed",
                            radius=config.annealed_radius(0))
    trace = RunTrace()
    perf0 = _perf_for(performance, state.radius)
    problem0 = AscentProblem("plane-collapsed", network, density, perf0,
                             collapsed=collapsed)
    h0 = problem0.h(state.sensors)
    state.h_history.append(h0)
    trace.rows.append(TraceRow(0, state.radius, h0, state.sensors.positions.copy(),
                               np.zeros(config.cluster_count)))

    annealed = config.radius_initial != config.radius_final
    for j in range(config.step1_iterations):
        radius = config.annealed_radius(j)
        state.radius = radius
        perf = _perf_for(performance, radius)
        problem = AscentProblem("plane-collapsed", network, density, perf,
                                collapsed=collapsed)
        report = ascent_iteration(problem, state, config)
        trace.rows.append(TraceRow(j + 1, radius, report.h_after,
                                   state.sensors.positions.copy(), report.deltas))
        if not annealed and (report.max_derivative < config.stop_tolerance
                             or not report.deltas.any()
                             or _stalled(state.h_history)):
            break
    final = [Point2(*row) for row in state.sensors.positions]
    return final, trace


def run_step2(config: PipelineConfig, network: Network, density,
              initial: SensorSet, performance=None) -> tuple[SensorSet, RunTrace]:
    """Fine step: sensors constrained to the network at fixed final radius."""
    for i in range(initial.count):
        if distance_to_network(network, initial.point(i)) > 1e-9:
            raise OffNetworkError(f"initial sensor {i} is off the network")
    mode = "network-full" if config.step2_model == "full" else "network-collapsed"
    collapsed = None
    if mode == "network-collapsed":
        collapsed = build_collapsed(network, config.r_collapse, density)
    perf = _perf_for(performance, config.radius_final)
    problem = AscentProblem(mode, network, density, perf, collapsed=collapsed,
                            quad_tol=config.quad_tol)
    state = DeploymentState(sensors=initial, mode=mode, radius=config.radius_final)
    trace = RunTrace()
    h0 = problem.h(state.sensors)
    state.h_history.append(h0)
    trace.rows.append(TraceRow(0, state.radius, h0, state.sensors.positions.copy(),
                               np.zeros(initial.count)))
    for j in range(config.step2_iterations):
        report = ascent_iteration(problem, state, config)
        trace.rows.append(TraceRow(j + 1, state.radius, report.h_after,
                                   state.sensors.positions.copy(), report.deltas))
        if report.max_derivative < config.stop_tolerance or not report.deltas.any() \
                or _stalled(state.h_history):
            break
    return state.sensors, trace


@dataclass
class PipelineResult:
    final_sensors: SensorSet
    cluster_centers: list[Point2]
    step2_initial: SensorSet
    step1_trace: RunTrace
    step2_trace: RunTrace
    timing: dict[str, float]


def run_pipeline(config: PipelineConfig, network: Network, density,
                 performance=None) -> PipelineResult:
    """Full procedure: coarse planar step, spread-and-project, fine network step."""
    timing: dict[str, float] = {}
    t0 = time.perf_counter()
    centers, trace1 = run_step1(config, network, density, performance)
    timing["step1"] = time.perf_counter() - t0

    _, _, spread_seed = _seed_children(config.rng_seed)
    initial = spread_and_project(network, centers, config.sensors_per_cluster,
                                 config.spread_radius, spread_seed)

    t1 = time.perf_counter()
    final, trace2 = run_step2(config, network, density, initial, performance)
    timing["step2"] = time.perf_counter() - t1
    timing["total"] = time.perf_counter() - t0
    return PipelineResult(final_sensors=final, cluster_centers=centers,
                          step2_initial=initial, step1_trace=trace1,
                          step2_trace=trace2, timing=timing)
