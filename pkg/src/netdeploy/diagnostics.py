"""Finite-difference oracles for the derivative kernels.

Random non-degenerate configurations are drawn on a given environment; the
analytic derivative of each mode is compared against central differences of
the matching objective.
"""

from __future__ import annotations

import numpy as np

from .network import Network, build_collapsed
from .objective import PerformanceFunction, h_collapsed, h_full
from .gradient import dir_deriv_on_network, full_network_gradient, grad_collapsed_lex
from .voronoi import SensorSet, clip_network_cells, sensor_distances

__all__ = ["sample_planar_config", "sample_network_config", "check_gradients"]

FD_STEP = 1e-6


def _tie_gap_ok(collapsed, positions: np.ndarray, gap: float = 1e-3) -> bool:
    """No barycenter may sit within `gap` of an allocation tie, and no sensor
    within `gap` of a barycenter (the finite-difference stencil must stay on
    one smooth branch)."""
    dist = sensor_distances(collapsed.positions, positions)
    if dist.min() < gap:
        return False
    if positions.shape[0] == 1:
        return True
    part = np.partition(dist, 1, axis=1)
    return bool((part[:, 1] - part[:, 0]).min() > gap)


def sample_planar_config(network: Network, collapsed, m: int,
                         rng: np.random.Generator, max_tries: int = 500) -> np.ndarray:
    x0, y0, x1, y1 = network.bounding_box()
    for _ in range(max_tries):
        pos = rng.uniform([x0, y0], [x1, y1], size=(m, 2))
        if m > 1:
            d = pos[:, None, :] - pos[None, :, :]
            pd = np.sqrt((d ** 2).sum(-1))
            pd[np.diag_indices(m)] = np.inf
            if pd.min() < 0.2:
                continue
        if _tie_gap_ok(collapsed, pos):
            return pos
    raise RuntimeError("could not sample a non-degenerate planar configuration")


def sample_network_config(network: Network, collapsed, m: int,
                          rng: np.random.Generator, require_gap: bool,
                          max_tries: int = 500):
    """Sensors in segment interiors, away from vertices; returns (positions,
    host segments, host parameters)."""
    for _ in range(max_tries):
        ks = rng.integers(network.segment_count, size=m)
        ts = rng.uniform(0.1, 0.9, size=m)
        pos = network.segment_starts[ks] + ts[:, None] * network._u[ks]
        if m > 1:
            d = pos[:, None, :] - pos[None, :, :]
            pd = np.sqrt((d ** 2).sum(-1))
            pd[np.diag_indices(m)] = np.inf
            if pd.min() < 0.2:
                continue
        if require_gap and collapsed is not None and not _tie_gap_ok(collapsed, pos):
            continue
        return pos, ks, ts
    raise RuntimeError("could not sample a non-degenerate network configuration")


def _rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = max(float(np.abs(reference).max()), 1e-6)
    return float(np.abs(analytic - reference).max()) / scale


def check_plane_collapsed(network: Network, density, f: PerformanceFunction,
                          r_collapse: float, samples: int, seed: int,
                          m_range=(3, 7)) -> float:
    collapsed = build_collapsed(network, r_collapse, density)
    rng = np.random.default_rng(np.random.SeedSequence([0xFD01, seed]))
    worst = 0.0
    for _ in range(samples):
        m = int(rng.integers(*m_range))
        pos = sample_planar_config(network, collapsed, m, rng)
        sensors = SensorSet(pos)
        g = grad_collapsed_lex(collapsed, f, sensors)
        fd = np.zeros_like(g)
        for i in range(m):
            for k in range(2):
                for sgn, slot in ((1.0, 0), (-1.0, 1)):
                    trial = pos.copy()
                    trial[i, k] += sgn * FD_STEP
                    val = h_collapsed(collapsed, f, SensorSet(trial))
                    fd[i, k] += sgn * val / (2.0 * FD_STEP)
        worst = max(worst, _rel_err(g, fd))
    return worst


def check_network_collapsed(network: Network, density, f: PerformanceFunction,
                            r_collapse: float, samples: int, seed: int,
                            m_range=(3, 7)) -> float:
    """Directional derivative along the host edge against a 1-D central
    difference of the collapsed objective."""
    collapsed = build_collapsed(network, r_collapse, density)
    rng = np.random.default_rng(np.random.SeedSequence([0xFD02, seed]))
    worst = 0.0
    for _ in range(samples):
        m = int(rng.integers(*m_range))
        pos, ks, _ = sample_network_config(network, collapsed, m, rng, require_gap=True)
        sensors = SensorSet(pos)
        g = grad_collapsed_lex(collapsed, f, sensors)
        for i in range(m):
            d = dir_deriv_on_network(g, sensors, network, i)
            u = network._u[ks[i]] / network.segment_lengths[ks[i]]
            fd = np.zeros(1)
            for sgn in (1.0, -1.0):
                trial = pos.copy()
                trial[i] = trial[i] + sgn * FD_STEP * u
                fd += sgn * h_collapsed(collapsed, f, SensorSet(trial)) / (2.0 * FD_STEP)
            worst = max(worst, _rel_err(np.asarray([d.scalar]), fd))
    return worst


def check_network_full(network: Network, density, f: PerformanceFunction,
                       samples: int, seed: int, m_range=(3, 7),
                       quad_tol: float = 1e-10) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([0xFD03, seed]))
    worst = 0.0
    for _ in range(samples):
        m = int(rng.integers(*m_range))
        pos, ks, _ = sample_network_config(network, None, m, rng, require_gap=False)
        sensors = SensorSet(pos)
        cells = clip_network_cells(network, sensors)
        g = full_network_gradient(network, f, density, sensors, cells=cells,
                                  tol=quad_tol)
        for i in range(m):
            u = network._u[ks[i]] / network.segment_lengths[ks[i]]
            analytic = float(g[i] @ u)
            fd = 0.0
            for sgn in (1.0, -1.0):
                trial = pos.copy()
                trial[i] = trial[i] + sgn * FD_STEP * u
                fd += sgn * h_full(network, f, density, SensorSet(trial),
                                   tol=quad_tol) / (2.0 * FD_STEP)
            worst = max(worst, _rel_err(np.asarray([analytic]), np.asarray([fd])))
    return worst


def check_gradients(network: Network, density, f: PerformanceFunction,
                    r_collapse: float, samples: int, seed: int = 0,
                    full_samples: int | None = None) -> dict[str, float]:
    """Max relative finite-difference error per mode."""
    if full_samples is None:
        full_samples = samples
    return {
        "plane-collapsed": check_plane_collapsed(network, density, f, r_collapse,
                                                 samples, seed),
        "network-collapsed": check_network_collapsed(network, density, f, r_collapse,
                                                     samples, seed),
        "network-full": check_network_full(network, density, f, full_samples, seed),
    }
