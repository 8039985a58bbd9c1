"""Scenario configuration, benchmark generation, and trace persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ScenarioError
from .network import (Network, network_from_dict, network_to_dict, save_network,
                      validate_network)
from .objective import DensityField, linear_profile_pieces
from .optimizer import PipelineConfig, RunTrace, TraceRow

__all__ = [
    "ScenarioConfig",
    "OutputConfig",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "save_scenario",
    "table1_density",
    "generate_benchmark",
    "benchmark_scenario",
    "random_network",
    "write_trace",
    "read_trace",
]

# The 11-Gaussian density of the airport case study (amplitude, center, widths).
_TABLE1 = [
    (20.0, 4.3, 2.3, 1.5, 1.5),
    (20.0, 5.0, 4.0, 1.5, 1.5),
    (20.0, 6.0, 5.5, 1.5, 1.5),
    (10.0, 3.5, 5.0, 2.0, 2.0),
    (4.0, 9.0, 8.5, 4.0, 4.0),
    (20.0, 12.5, 8.5, 1.5, 1.5),
    (20.0, 13.5, 7.2, 1.5, 1.5),
    (20.0, 15.0, 6.2, 1.5, 1.5),
    (10.0, 14.5, 10.5, 2.0, 2.0),
    (10.0, 17.0, 9.0, 2.0, 2.0),
    (4.0, 20.0, 7.0, 4.0, 2.0),
]

BENCHMARK_VERTEX_COUNT = 63
BENCHMARK_SEGMENT_COUNT = 87
BENCHMARK_BOX = (2.0, 1.0, 21.0, 11.0)


def table1_density() -> DensityField:
    return DensityField(np.asarray(_TABLE1, dtype=float))


def _grid_network(cols: int, rows: int, box: tuple[float, float, float, float],
                  n_remove: int, rng: np.random.Generator,
                  jitter_frac: float = 0.18) -> Network:
    """Jittered grid graph with connectivity-preserving edge removals.

    Jitter stays below a quarter of the grid spacing, which provably keeps
    segment interiors disjoint; boundary coordinates are pinned so the
    vertex set spans the box exactly.
    """
    x0, y0, x1, y1 = box
    dx = (x1 - x0) / (cols - 1)
    dy = (y1 - y0) / (rows - 1)
    jitter = jitter_frac * min(dx, dy)

    verts = []
    for r in range(rows):
        for c in range(cols):
            jx = 0.0 if c in (0, cols - 1) else float(rng.uniform(-jitter, jitter))
            jy = 0.0 if r in (0, rows - 1) else float(rng.uniform(-jitter, jitter))
            verts.append((x0 + c * dx + jx, y0 + r * dy + jy))

    def vid(r: int, c: int) -> int:
        return r * cols + c

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((vid(r, c), vid(r, c + 1)))
            if r + 1 < rows:
                edges.append((vid(r, c), vid(r + 1, c)))

    def connected(edge_set: list[tuple[int, int]]) -> bool:
        adj: dict[int, list[int]] = {}
        for i, j in edge_set:
            adj.setdefault(i, []).append(j)
            adj.setdefault(j, []).append(i)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj.get(stack.pop(), []):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(verts)

    removed = 0
    attempts = 0
    while removed < n_remove:
        attempts += 1
        if attempts > 20000:
            raise InvalidArgumentError("could not remove the requested number of edges")
        idx = int(rng.integers(len(edges)))
        candidate = edges[:idx] + edges[idx + 1:]
        if connected(candidate):
            edges = candidate
            removed += 1
    return Network(verts, edges)


def generate_benchmark(seed: int = 0) -> tuple[Network, DensityField]:
    """Synthetic corridor network at the case-study scale: 63 vertices and 87
    segments spanning [2, 21] x [1, 11], plus the 11-Gaussian density."""
    rng = np.random.default_rng(np.random.SeedSequence([0xB37C, seed]))
    net = _grid_network(9, 7, BENCHMARK_BOX, n_remove=110 - BENCHMARK_SEGMENT_COUNT,
                        rng=rng)
    assert net.vertex_count == BENCHMARK_VERTEX_COUNT
    assert net.segment_count == BENCHMARK_SEGMENT_COUNT
    violations = validate_network(net)
    if violations:
        raise InvalidArgumentError(f"benchmark generation produced an invalid network: "
                                   f"{[str(v) for v in violations]}")
    return net, table1_density()


def random_network(seed: int, n_segments: int,
                   box: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 8.0)) -> Network:
    """Small random test network with exactly n_segments segments."""
    if n_segments < 3:
        raise InvalidArgumentError("need at least 3 segments")
    rng = np.random.default_rng(np.random.SeedSequence([0x4E71, seed]))
    for cols in range(2, 9):
        for rows in range(2, 8):
            v = cols * rows
            e = cols * (rows - 1) + rows * (cols - 1)
            if v - 1 <= n_segments <= e:
                return _grid_network(cols, rows, box, e - n_segments, rng)
    raise InvalidArgumentError(f"no grid size fits {n_segments} segments")


# -- scenario configuration ----------------------------------------------------


@dataclass
class OutputConfig:
    directory: str = "out"
    svg: bool = False
    figures: bool = True


def _require_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}")


def _performance_from_spec(spec: dict, radius_final: float) -> tuple[dict, object]:
    """Returns (canonical spec, factory-or-instance)."""
    _require_keys(spec, {"kind", "R", "pieces"}, "performance")
    kind = spec.get("kind")
    if kind == "tanh":
        radius = float(spec.get("R", radius_final))
        if abs(radius - radius_final) > 1e-12:
            raise ScenarioError(
                f"performance.R ({radius}) must equal pipeline.radius_final "
                f"({radius_final})")
        return {"kind": "tanh", "R": radius}, None
    if kind == "piecewise":
        pieces = spec.get("pieces")
        if not isinstance(pieces, list) or not pieces:
            raise ScenarioError("performance.pieces must be a non-empty list")
        canon = {"kind": "piecewise", "pieces": []}
        intercepts, slopes, breaks = [], [], []
        for k, piece in enumerate(pieces):
            _require_keys(piece, {"form", "value", "intercept", "slope", "end"},
                          f"performance.pieces[{k}]")
            form = piece.get("form")
            if form == "constant":
                intercepts.append(float(piece["value"]))
                slopes.append(0.0)
            elif form == "linear":
                intercepts.append(float(piece["intercept"]))
                slopes.append(float(piece["slope"]))
            else:
                raise ScenarioError(f"performance.pieces[{k}].form must be "
                                    f"'constant' or 'linear', got {form!r}")
            last = k == len(pieces) - 1
            if last != ("end" not in piece):
                raise ScenarioError(
                    f"performance.pieces[{k}] must carry 'end' exactly when "
                    f"it is not the last piece")
            if not last:
                breaks.append(float(piece["end"]))
            canon["pieces"].append({
                "form": form,
                **({"value": intercepts[-1]} if form == "constant"
                   else {"intercept": intercepts[-1], "slope": slopes[-1]}),
                **({} if last else {"end": breaks[-1]}),
            })
        try:
            profile = linear_profile_pieces(intercepts, slopes, breaks)
        except InvalidArgumentError as exc:
            raise ScenarioError(f"performance: {exc}") from exc
        return canon, profile
    raise ScenarioError(f"performance.kind must be 'tanh' or 'piecewise', got {kind!r}")


@dataclass
class ScenarioConfig:
    network: Network
    density: DensityField
    pipeline: PipelineConfig
    output: OutputConfig
    performance_spec: dict
    performance: object  # None for the annealable tanh family, else a fixed profile
    network_file: str | None = None

    def performance_for_runs(self):
        return self.performance


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> ScenarioConfig:
    _require_keys(data, {"network", "density", "performance", "pipeline", "output"},
                  "scenario")
    if "network" not in data:
        raise ScenarioError("scenario is missing the 'network' section")

    net_spec = data["network"]
    network_file = None
    if isinstance(net_spec, dict) and set(net_spec) == {"file"}:
        network_file = str(net_spec["file"])
        path = Path(network_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        with open(path) as fh:
            net_data = json.load(fh)
        network = network_from_dict(net_data)
    else:
        network = network_from_dict(net_spec)
    violations = validate_network(network)
    if violations:
        raise ScenarioError("network: " + "; ".join(str(v) for v in violations))

    pipe_spec = dict(data.get("pipeline", {}))
    allowed = {f.name for f in fields(PipelineConfig)}
    _require_keys(pipe_spec, allowed, "pipeline")
    try:
        pipeline = PipelineConfig(**pipe_spec)
    except (TypeError, InvalidArgumentError) as exc:
        raise ScenarioError(f"pipeline: {exc}") from exc

    dens_spec = data.get("density", {"gaussians": [dict(zip(("a", "cx", "cy", "sx", "sy"), row))
                                                   for row in _TABLE1]})
    _require_keys(dens_spec, {"gaussians"}, "density")
    try:
        density = DensityField.from_dicts(dens_spec.get("gaussians", []))
    except InvalidArgumentError as exc:
        raise ScenarioError(f"density: {exc}") from exc

    perf_spec_in = data.get("performance", {"kind": "tanh"})
    perf_spec, performance = _performance_from_spec(perf_spec_in, pipeline.radius_final)
    if performance is not None and pipeline.radius_initial != pipeline.radius_final:
        raise ScenarioError(
            "pipeline.radius_initial must equal pipeline.radius_final for a "
            "piecewise performance function (annealing needs the tanh family)")
    if performance is not None and not performance.continuous \
            and pipeline.step2_model == "full":
        raise ScenarioError(
            "performance: the full-network model requires a continuous profile; "
            "use step2_model 'collapsed' or remove the jumps")

    out_spec = dict(data.get("output", {}))
    _require_keys(out_spec, {"directory", "svg", "figures"}, "output")
    output = OutputConfig(**out_spec)

    return ScenarioConfig(network=network, density=density, pipeline=pipeline,
                          output=output, performance_spec=perf_spec,
                          performance=performance, network_file=network_file)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical form: every field materialized, keys in a fixed order."""
    pipe = {f.name: getattr(cfg.pipeline, f.name) for f in fields(PipelineConfig)}
    return {
        "network": ({"file": cfg.network_file} if cfg.network_file
                    else network_to_dict(cfg.network)),
        "density": {"gaussians": cfg.density.to_dicts()},
        "performance": cfg.performance_spec,
        "pipeline": pipe,
        "output": {"directory": cfg.output.directory, "svg": cfg.output.svg,
                   "figures": cfg.output.figures},
    }


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(data, base_dir=path.parent)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")


def benchmark_scenario(seed: int = 0) -> ScenarioConfig:
    network, density = generate_benchmark(seed)
    return scenario_from_dict({
        "network": network_to_dict(network),
        "pipeline": {"rng_seed": seed},
    })


# -- trace persistence -----------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace(trace: RunTrace, path) -> None:
    """CSV with one row per recorded state; floats carry 17 significant digits
    so parsing them back is bit-exact."""
    if not trace.rows:
        raise InvalidArgumentError("trace has no rows")
    m = trace.rows[0].positions.shape[0]
    header = ["iteration", "R", "H"]
    for i in range(m):
        header += [f"sensor{i}_x", f"sensor{i}_y", f"delta{i}"]
    lines = [",".join(header)]
    for row in trace.rows:
        cols = [str(row.iteration), _fmt(row.radius), _fmt(row.h_value)]
        for i in range(m):
            cols += [_fmt(row.positions[i, 0]), _fmt(row.positions[i, 1]),
                     _fmt(row.deltas[i])]
        lines.append(",".join(cols))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path) -> RunTrace:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    m = (len(header) - 3) // 3
    rows = []
    for line in lines[1:]:
        cols = line.split(",")
        positions = np.asarray([[float(cols[3 + 3 * i]), float(cols[4 + 3 * i])]
                                for i in range(m)])
        deltas = np.asarray([float(cols[5 + 3 * i]) for i in range(m)])
        rows.append(TraceRow(iteration=int(cols[0]), radius=float(cols[1]),
                             h_value=float(cols[2]), positions=positions,
                             deltas=deltas))
    return RunTrace(rows=rows)
