"""Safeguarded scalar Newton-Raphson for the multiplier equations.

The constraint multipliers solve r(mu) = 0 where r is either strictly
increasing and convex on (-inf, t) with a pole at t (weighted-sum
constraints), or strictly decreasing and convex on (0, inf) with a negative
limit at infinity (sphere constraints).  In both shapes, a Newton iteration
started on the correct side of the root converges monotonically, and every
step is additionally guarded by a sign-change bracket: a candidate landing
outside the bracket is replaced by its midpoint, so the bracket never loses
the root.

Iteration counts returned by the solvers include every evaluation of r,
bracket-expansion probes included.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

_MAX_EXPAND = 200
_EPS = 2.220446049250313e-16


class DomainHint(enum.Enum):
    INCREASING_CONVEX_LEFT_OF_POLE = "increasing_convex_left_of_pole"
    DECREASING_CONVEX_ON_POSITIVES = "decreasing_convex_on_positives"


class SolverError(RuntimeError):
    """Base class for root-solver failures."""


class NoSignChangeError(SolverError):
    """No sign change was found within the allowed expansion steps."""


class MaxItersError(SolverError):
    """The residual tolerance was not met within max_iters evaluations."""


@dataclass
class RootProblem:
    """A scalar root problem r(mu) = 0 with analytic derivative.

    ``upper_bound_t`` is the pole (exclusive upper end of the domain) for the
    increasing case; use +inf when the domain is unbounded.
    """

    r: Callable[[float], float]
    r_prime: Callable[[float], float]
    domain_hint: DomainHint = DomainHint.INCREASING_CONVEX_LEFT_OF_POLE
    upper_bound_t: float = math.inf
    tol_residual: float = 1e-6
    max_iters: int = 200
    history: list[float] | None = field(default=None, repr=False)

    def _eval(self, mu: float) -> float:
        if self.history is not None:
            self.history.append(mu)
        return self.r(mu)


def solve_increasing_convex(p: RootProblem, mu0: float | None = None) -> tuple[float, int]:
    """Root of a strictly increasing convex r on (-inf, t).

    Starts from ``mu0`` when supplied and r(mu0) > 0; otherwise probes mu = 0
    and, if r(0) <= 0, walks candidates toward the pole (halving the gap for
    finite t, doubling for infinite t) until the residual turns positive.
    From a positive-residual point the Newton iterates decrease monotonically
    onto the root.
    """
    t = p.upper_bound_t
    evals = 0
    lo = -math.inf  # sign(r) < 0 side
    hi = t          # exclusive wall; becomes a finite r > 0 point once found
    x = None
    fx = None

    def ev(mu: float) -> float:
        nonlocal evals
        evals += 1
        return p._eval(mu)

    candidates = []
    if mu0 is not None and math.isfinite(mu0) and mu0 < t:
        candidates.append(mu0)
    if not candidates or candidates[0] != 0.0:
        if t > 0.0:
            candidates.append(0.0)
        else:
            candidates.append(t - 1.0 if math.isfinite(t) else -1.0)

    for cand in candidates:
        f = ev(cand)
        if math.isfinite(f) and abs(f) <= p.tol_residual:
            return cand, evals
        if math.isfinite(f) and f > 0.0:
            x, fx, hi = cand, f, cand
            break
        if math.isfinite(f):
            lo = max(lo, cand)

    if x is None:
        origin = lo if math.isfinite(lo) else 0.0
        wall = t
        for m in range(1, _MAX_EXPAND + 1):
            if math.isfinite(wall):
                cand = wall - (wall - origin) / 2.0**m
            else:
                cand = max(1.0, 2.0**m)
            if cand <= lo:
                continue
            f = ev(cand)
            if not math.isfinite(f):
                wall = cand  # overflow near the pole: shrink the search wall
                continue
            if abs(f) <= p.tol_residual:
                return cand, evals
            if f > 0.0:
                x, fx, hi = cand, f, cand
                break
            lo = cand
        else:
            raise NoSignChangeError(
                f"no sign change of r located on (-inf, {t!r}) after {_MAX_EXPAND} probes"
            )

    best_x, best_f = x, abs(fx)
    for _ in range(p.max_iters):
        d = p.r_prime(x)
        cand = x - fx / d if math.isfinite(d) and d > 0.0 else math.nan
        if not (lo < cand < hi) or not math.isfinite(cand):
            if math.isfinite(lo):
                cand = 0.5 * (lo + hi)
            else:
                cand = hi - max(1.0, abs(hi))
        f = ev(cand)
        if math.isfinite(f) and abs(f) <= p.tol_residual:
            return cand, evals
        if math.isfinite(f) and abs(f) < best_f:
            best_x, best_f = cand, abs(f)
        if not math.isfinite(f) or f > 0.0:
            hi = cand
        else:
            lo = cand
        x, fx = cand, f if math.isfinite(f) else math.inf
        if (
            math.isfinite(lo)
            and math.isfinite(hi)
            and hi - lo <= 4.0 * _EPS * max(abs(lo), abs(hi))
        ):
            # bracket collapsed to adjacent floats: solved to working precision
            return best_x, evals
    raise MaxItersError(
        f"residual {fx!r} above tolerance {p.tol_residual!r} after {evals} evaluations"
    )


def solve_decreasing_convex_positive(
    p: RootProblem, probe: float | None = None
) -> tuple[float, int] | None:
    """Root of a strictly decreasing convex r on (0, inf), or None.

    Probes a tiny positive point first; a nonpositive residual there means
    the supremum of r on (0, inf) is already below zero, so no positive root
    exists and None is returned.  Otherwise the bracket is expanded by
    doubling until the residual turns negative, and guarded Newton ascends
    monotonically onto the root from the left.
    """
    evals = 0

    def ev(mu: float) -> float:
        nonlocal evals
        evals += 1
        return p._eval(mu)

    x = probe if probe is not None else 1e-12
    fx = ev(x)
    if not math.isfinite(fx) or fx <= 0.0:
        return None
    if abs(fx) <= p.tol_residual:
        return x, evals

    lo = x  # sign(r) > 0 side
    hi = None
    h = max(2.0 * x, 1.0)
    for _ in range(_MAX_EXPAND):
        f = ev(h)
        if math.isfinite(f) and abs(f) <= p.tol_residual:
            return h, evals
        if math.isfinite(f) and f > 0.0:
            lo, x, fx = h, h, f
            h *= 2.0
            continue
        hi = h
        break
    if hi is None:
        raise NoSignChangeError("r never turned negative while doubling the bracket")

    best_x, best_f = x, abs(fx)
    for _ in range(p.max_iters):
        d = p.r_prime(x)
        cand = x - fx / d if math.isfinite(d) and d < 0.0 else math.nan
        if not math.isfinite(cand) or not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        f = ev(cand)
        if math.isfinite(f) and abs(f) <= p.tol_residual:
            return cand, evals
        if math.isfinite(f) and abs(f) < best_f:
            best_x, best_f = cand, abs(f)
        if not math.isfinite(f) or f > 0.0:
            lo = cand
        else:
            hi = cand
        x, fx = cand, f if math.isfinite(f) else math.inf
        if math.isfinite(hi) and hi - lo <= 4.0 * _EPS * max(abs(lo), abs(hi)):
            return best_x, evals
    raise MaxItersError(
        f"residual {fx!r} above tolerance {p.tol_residual!r} after {evals} evaluations"
    )
