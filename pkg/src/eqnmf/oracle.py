"""Brute-force reference solvers for cross-checking the Newton machinery.

These deliberately avoid multipliers and closed forms: the constrained
surrogate minimum is located by golden-section search (two variables) or by
a refined grid sweep (three variables) over the feasible slice, and root
uniqueness is checked by dense sign scanning.  They ship with the library so
the command line can expose a verification mode, but they are reference
code, not a fast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleConfig:
    grid_points: int = 2001
    refine_rounds: int = 6
    domain_pad: float = 1e-9

    def __post_init__(self) -> None:
        if self.grid_points < 3:
            raise ValueError("grid_points must be at least 3")


def minimize_majorizer_on_simplex_slice(
    g: Sequence[Callable],
    weights: Sequence[float],
    rhs: float,
    cfg: OracleConfig = OracleConfig(),
) -> np.ndarray:
    """Feasible minimizer of sum_q g_q(y_q) subject to weights . y = rhs, y > 0.

    Each g_q must be strictly convex on (0, inf).  Supports blocks of two or
    three variables; larger blocks add nothing to the validation and cost
    geometrically more.
    """
    w = np.asarray(weights, dtype=float)
    if rhs <= 0.0 or np.any(w <= 0.0):
        raise ValueError("weights and rhs must be positive")
    if len(g) == 2:
        return _minimize_q2(g, w, rhs, cfg)
    if len(g) == 3:
        return _minimize_q3(g, w, rhs, cfg)
    raise ValueError(f"oracle supports blocks of 2 or 3 variables, got {len(g)}")


def _minimize_q2(g, w, rhs, cfg: OracleConfig) -> np.ndarray:
    cap = rhs / w[0]
    lo = cfg.domain_pad * cap
    hi = (1.0 - cfg.domain_pad) * cap

    def f(y0: float) -> float:
        y1 = (rhs - w[0] * y0) / w[1]
        return float(g[0](y0) + g[1](y1))

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > 1e-12 * cap:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    y0 = 0.5 * (a + b)
    return np.array([y0, (rhs - w[0] * y0) / w[1]])


def _minimize_q3(g, w, rhs, cfg: OracleConfig) -> np.ndarray:
    pad = cfg.domain_pad
    caps = rhs / w
    lo = np.array([pad * caps[0], pad * caps[1]])
    hi = np.array([(1.0 - pad) * caps[0], (1.0 - pad) * caps[1]])
    best = None
    for _ in range(cfg.refine_rounds):
        xs = np.linspace(lo[0], hi[0], cfg.grid_points)
        ys = np.linspace(lo[1], hi[1], cfg.grid_points)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        Z = (rhs - w[0] * X - w[1] * Y) / w[2]
        feas = Z > pad * caps[2]
        val = np.full(X.shape, np.inf)
        val[feas] = g[0](X[feas]) + g[1](Y[feas]) + g[2](Z[feas])
        k = int(np.argmin(val))
        i, j = np.unravel_index(k, val.shape)
        best = np.array([X[i, j], Y[i, j], Z[i, j]])
        # zoom on the winning cell, staying inside the feasible box
        span = (hi - lo) / (cfg.grid_points - 1)
        lo = np.maximum(best[:2] - 2.0 * span, pad * caps[:2])
        hi = np.minimum(best[:2] + 2.0 * span, (1.0 - pad) * caps[:2])
    return best


def scan_root_uniqueness(
    r: Callable[[np.ndarray], np.ndarray] | Callable[[float], float],
    domain: tuple[float, float],
    samples: int = 10001,
) -> int:
    """Count strict sign changes of r over a dense sample of (a, b).

    Nonfinite and exactly-zero values are skipped, so a root touched exactly
    still registers as one change between its finite neighbors.
    """
    a, b = domain
    xs = np.linspace(a, b, samples)
    try:
        vals = np.asarray(r(xs), dtype=float)
        if vals.shape != xs.shape:
            raise TypeError
    except Exception:
        vals = np.array([float(r(float(x))) for x in xs])
    keep = np.isfinite(vals) & (vals != 0.0)
    signs = np.sign(vals[keep])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))
