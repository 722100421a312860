"""Beta-divergences and their convex-concave decomposition.

The beta-divergence family interpolates the Itakura-Saito divergence
(beta = 0), the generalized Kullback-Leibler divergence (beta = 1) and the
halved squared Euclidean distance (beta = 2).  As a function of its second
argument, every member splits into a strictly convex part and a concave
part with no leftover constant; the split and its derivatives in the second
argument are what the multiplicative-update machinery consumes.

All functions here are pure and accept either floats or numpy arrays for
``x`` and ``y``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """An argument left the admissible domain of the divergence."""


class Regime(enum.Enum):
    """Dispatch regions of beta; the split and MU exponent change per region."""

    BELOW_ONE = "below_one"                      # beta < 1, beta != 0
    IS = "itakura_saito"                         # beta == 0
    KL = "kullback_leibler"                      # beta == 1
    BETWEEN_ONE_AND_TWO = "between_one_and_two"  # 1 < beta < 2
    AT_OR_ABOVE_TWO = "at_or_above_two"          # beta >= 2


@dataclass(frozen=True)
class BetaParams:
    """Divergence order plus the derived MU exponent and dispatch regime."""

    beta: float
    gamma_exp: float
    regime: Regime


def beta_params(beta: float) -> BetaParams:
    """Bundle ``beta`` with the exponent gamma(beta) used by the updates.

    The exponent is the standard one that makes the multiplicative update a
    majorization-minimization step: 1/(2-beta) for beta < 1, 1 on [1, 2],
    and 1/(beta-1) above 2.  It is positive for every beta.
    """
    beta = float(beta)
    if beta < 1.0:
        gamma = 1.0 / (2.0 - beta)
        regime = Regime.IS if beta == 0.0 else Regime.BELOW_ONE
    elif beta == 1.0:
        gamma = 1.0
        regime = Regime.KL
    elif beta < 2.0:
        gamma = 1.0
        regime = Regime.BETWEEN_ONE_AND_TWO
    elif beta == 2.0:
        gamma = 1.0
        regime = Regime.AT_OR_ABOVE_TWO
    else:
        gamma = 1.0 / (beta - 1.0)
        regime = Regime.AT_OR_ABOVE_TWO
    return BetaParams(beta=beta, gamma_exp=gamma, regime=regime)


def d_beta(x: float, y: float, p: BetaParams) -> float:
    """Entrywise beta-divergence d(x | y).

    ``y`` must be positive.  ``x`` may be zero only when the formula allows
    it: for beta = 1 the 0*log(0) := 0 convention applies, and for any
    beta > 0 the term x**beta vanishes; for beta <= 0 a zero ``x`` is a
    domain error.
    """
    if y <= 0.0:
        raise DomainError(f"d_beta requires y > 0, got y={y!r}")
    if x < 0.0:
        raise DomainError(f"d_beta requires x >= 0, got x={x!r}")
    b = p.beta
    if x == 0.0 and b <= 0.0:
        raise DomainError(f"d_beta at beta={b} requires x > 0, got x=0")
    if p.regime is Regime.KL:
        xlog = x * math.log(x / y) if x > 0.0 else 0.0
        return xlog - x + y
    if p.regime is Regime.IS:
        q = x / y
        return q - math.log(q) - 1.0
    return (x**b + (b - 1.0) * y**b - b * x * y ** (b - 1.0)) / (b * (b - 1.0))


def _scratch(ws: dict | None, key: str, shape: tuple) -> np.ndarray:
    if ws is None:
        return np.empty(shape)
    a = ws.get(key)
    if a is None or a.shape != shape:
        a = np.empty(shape)
        ws[key] = a
    return a


def d_beta_sum(V: np.ndarray, Y: np.ndarray, p: BetaParams, ws: dict | None = None) -> float:
    """Sum of entrywise beta-divergences between ``V`` and a reconstruction ``Y``.

    A workspace dict, when given, supplies reusable scratch arrays.
    """
    V = np.asarray(V, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_matrix_domain(V, Y, p)
    b = p.beta
    t = _scratch(ws, "div.a", V.shape)
    if p.regime is Regime.KL:
        with np.errstate(divide="ignore", invalid="ignore"):
            np.divide(V, Y, out=t)
            np.log(t, out=t)
            np.multiply(V, t, out=t)
        np.copyto(t, 0.0, where=V <= 0.0)
        np.subtract(t, V, out=t)
        np.add(t, Y, out=t)
    elif p.regime is Regime.IS:
        u = _scratch(ws, "div.b", V.shape)
        np.divide(V, Y, out=t)
        np.log(t, out=u)
        np.subtract(t, u, out=t)
        np.subtract(t, 1.0, out=t)
    else:
        u = _scratch(ws, "div.b", V.shape)
        np.power(Y, b - 1.0, out=t)
        np.multiply(V, t, out=u)       # V * Y**(b-1)
        np.multiply(t, Y, out=t)       # Y**b
        np.multiply(t, b - 1.0, out=t)
        np.multiply(u, b, out=u)
        np.subtract(t, u, out=t)
        np.power(V, b, out=u)
        np.add(t, u, out=t)
        np.divide(t, b * (b - 1.0), out=t)
    return float(t.sum())


def D_beta(V: np.ndarray, W: np.ndarray, H: np.ndarray, p: BetaParams) -> float:
    """Total divergence between ``V`` and the product ``W @ H``."""
    return d_beta_sum(V, np.asarray(W, dtype=float) @ np.asarray(H, dtype=float), p)


def _check_matrix_domain(V: np.ndarray, Y: np.ndarray, p: BetaParams) -> None:
    if Y.min() <= 0.0:
        f, n = np.unravel_index(int(np.argmin(Y)), Y.shape)
        raise DomainError(f"reconstruction must be positive; entry ({f}, {n}) is {Y[f, n]!r}")
    if V.min() < 0.0:
        f, n = np.unravel_index(int(np.argmin(V)), V.shape)
        raise DomainError(f"data must be nonnegative; entry ({f}, {n}) is {V[f, n]!r}")
    if p.beta <= 0.0 and np.any(V == 0.0):
        f, n = np.unravel_index(int(np.argmax(V == 0.0)), V.shape)
        raise DomainError(f"beta={p.beta} requires positive data; entry ({f}, {n}) is 0")


def _check_split_domain(x, y) -> None:
    if np.any(np.asarray(x) <= 0.0):
        raise DomainError("split functions require x > 0")
    if np.any(np.asarray(y) <= 0.0):
        raise DomainError("split functions require y > 0")


def split_convex(x, y, p: BetaParams):
    """Strictly convex part of d(x | y) as a function of y."""
    _check_split_domain(x, y)
    b = p.beta
    if b < 1.0:
        # covers beta = 0, where x * y**(-1) / 1 = x / y
        return x * y ** (b - 1.0) / (1.0 - b)
    if p.regime is Regime.KL:
        return -x * np.log(y)
    if p.regime is Regime.BETWEEN_ONE_AND_TWO:
        return y**b / b - x * y ** (b - 1.0) / (b - 1.0)
    return y**b / b


def split_concave(x, y, p: BetaParams):
    """Concave part of d(x | y); split_convex + split_concave = d exactly."""
    _check_split_domain(x, y)
    b = p.beta
    if p.regime is Regime.IS:
        return np.log(y / x) - 1.0
    if b < 1.0:
        return y**b / b - x**b / (b * (1.0 - b))
    if p.regime is Regime.KL:
        return y + x * np.log(x) - x
    if p.regime is Regime.BETWEEN_ONE_AND_TWO:
        return x**b / (b * (b - 1.0)) + 0.0 * y
    return -x * y ** (b - 1.0) / (b - 1.0) + x**b / (b * (b - 1.0))


def split_convex_d1(x, y, p: BetaParams):
    """First derivative of the convex part with respect to y.

    Strictly increasing in y; tends to -inf as y -> 0+ for beta < 2 and to 0
    as y -> inf for beta <= 1.
    """
    _check_split_domain(x, y)
    b = p.beta
    if b < 1.0:
        return -x * y ** (b - 2.0)
    if p.regime is Regime.KL:
        return -x / y
    if p.regime is Regime.BETWEEN_ONE_AND_TWO:
        return y ** (b - 1.0) - x * y ** (b - 2.0)
    return y ** (b - 1.0)


def split_concave_d1(x, y, p: BetaParams):
    """First derivative of the concave part with respect to y."""
    _check_split_domain(x, y)
    b = p.beta
    if b < 1.0:
        return y ** (b - 1.0) + 0.0 * x
    if p.regime is Regime.KL:
        return 1.0 + 0.0 * (x + y)
    if p.regime is Regime.BETWEEN_ONE_AND_TWO:
        return 0.0 * (x + y)
    return -x * y ** (b - 2.0)
