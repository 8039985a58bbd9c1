"""Adaptive Gauss-Legendre quadrature over batches of parameter intervals.

Panels use 7-point Gauss-Legendre rules and bisect recursively; the error
estimate of a panel is the difference between its one-panel value and the
sum over its two halves. Nodes are strictly interior, so integrands may be
singular or discontinuous at panel endpoints.
"""

from __future__ import annotations

import numpy as np

from .errors import QuadratureError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)
# Shifted to [0, 1].
GL7_NODES = 0.5 * (_GL_NODES + 1.0)
GL7_WEIGHTS = 0.5 * _GL_WEIGHTS

DEFAULT_TOL = 1e-8
MAX_DEPTH = 40


def _gl7(fn, lo: np.ndarray, hi: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """One 7-point panel per row; returns (panels,) or (panels, C)."""
    width = hi - lo
    t = lo[:, None] + width[:, None] * GL7_NODES[None, :]
    vals = fn(t.ravel(), np.repeat(ids, GL7_NODES.size))
    if vals.ndim == 1:
        vals = vals.reshape(t.shape)
        return (vals * GL7_WEIGHTS[None, :]).sum(axis=1) * width
    comps = vals.shape[-1]
    vals = vals.reshape(t.shape + (comps,))
    return (vals * GL7_WEIGHTS[None, :, None]).sum(axis=1) * width[:, None]


def _gl7_halves(fn, lo: np.ndarray, mid: np.ndarray, hi: np.ndarray,
                ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """7-point panels over both halves of each row, one integrand call."""
    n = lo.shape[0]
    wl = mid - lo
    wr = hi - mid
    t = np.empty((n, 14))
    t[:, :7] = lo[:, None] + wl[:, None] * GL7_NODES[None, :]
    t[:, 7:] = mid[:, None] + wr[:, None] * GL7_NODES[None, :]
    vals = fn(t.ravel(), np.repeat(ids, 14))
    if vals.ndim == 1:
        vals = vals.reshape(n, 14)
        left = (vals[:, :7] * GL7_WEIGHTS[None, :]).sum(axis=1) * wl
        right = (vals[:, 7:] * GL7_WEIGHTS[None, :]).sum(axis=1) * wr
        return left, right
    comps = vals.shape[-1]
    vals = vals.reshape(n, 14, comps)
    left = (vals[:, :7] * GL7_WEIGHTS[None, :, None]).sum(axis=1) * wl[:, None]
    right = (vals[:, 7:] * GL7_WEIGHTS[None, :, None]).sum(axis=1) * wr[:, None]
    return left, right


def integrate_intervals(fn, lo, hi, *, tol: float = DEFAULT_TOL,
                        max_depth: int = MAX_DEPTH, components: int = 1,
                        context=None) -> np.ndarray:
    """Integrate fn over each [lo[i], hi[i]] to absolute-plus-relative tol.

    fn(t, ids) evaluates the integrand at flat parameter array t, where ids
    maps each entry back to its interval index (for per-interval geometry).
    Returns an array (n,) or (n, components). `context` is attached to the
    QuadratureError raised when a panel fails to converge.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.shape[0]
    out = np.zeros(n if components == 1 else (n, components))
    if n == 0:
        return out
    ids = np.arange(n)
    span = hi - lo

    p_lo, p_hi, p_ids = lo, hi, ids
    coarse = _gl7(fn, p_lo, p_hi, p_ids)
    for _ in range(max_depth):
        if p_lo.size == 0:
            return out
        mid = 0.5 * (p_lo + p_hi)
        left, right = _gl7_halves(fn, p_lo, mid, p_hi, p_ids)
        fine = left + right
        diff = np.abs(fine - coarse)
        mag = np.abs(fine)
        if components > 1:
            diff = diff.max(axis=1)
            mag = mag.max(axis=1)
        frac = (p_hi - p_lo) / span[p_ids]
        done = diff <= tol * frac + tol * mag
        np.add.at(out, p_ids[done], fine[done])
        keep = ~done
        p_lo = np.concatenate([p_lo[keep], mid[keep]])
        p_hi = np.concatenate([mid[keep], p_hi[keep]])
        p_ids = np.concatenate([p_ids[keep], p_ids[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    worst = int(p_ids[0])
    raise QuadratureError(
        f"quadrature failed to converge on interval {worst} "
        f"[{lo[worst]:.6g}, {hi[worst]:.6g}]",
        segment=None if context is None else context(worst),
        t_range=(float(lo[worst]), float(hi[worst])),
    )
