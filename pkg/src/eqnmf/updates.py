"""Multiplicative updates, with and without equality constraints.

The unconstrained update rescales each entry by (numer/denom)**gamma(beta).
Under a weighted-sum constraint the denominator is shifted by mu times the
weight, where the scalar multiplier mu is the root of an increasing convex
residual on (-inf, t) with pole t = min_q denom_q / weight_q.  The min-vol
and sphere variants solve a per-entry quadratic instead; both quadratic
closed forms are evaluated in a conjugate form that avoids the catastrophic
cancellation of sqrt(A^2 + S) - A when A >= 0.

Multiplier solves for many constraints run in lockstep on padded arrays so
that a full simplex-constrained factor costs a handful of vectorized passes
rather than one Python-level Newton per column.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constraints import ConstraintSet, LinearConstraint, SphereConstraint
from .divergence import BetaParams, DomainError
from .rootfind import (
    DomainHint,
    MaxItersError,
    NoSignChangeError,
    RootProblem,
    SolverError,
    solve_decreasing_convex_positive,
    solve_increasing_convex,
)


@dataclass
class MajorizerCoefficients:
    """Per-entry terms of the separable surrogate around the current iterate.

    ``numer``/``denom`` are the ratio terms of the multiplicative update;
    ``quad`` is the quadratic-branch term of the min-vol/sphere updates and
    ``ratio`` keeps (V / (WH)) @ H.T around for their stable evaluation.
    ``denom`` may be a read-only broadcast view.
    """

    numer: np.ndarray
    denom: np.ndarray
    quad: np.ndarray | None = None
    ratio: np.ndarray | None = None
    curvature: np.ndarray | float | None = None
    linear: np.ndarray | None = None


def _buf(ws: dict | None, key: str, shape: tuple) -> np.ndarray:
    """Reusable scratch array; large temporaries churn the allocator badly."""
    if ws is None:
        return np.empty(shape)
    a = ws.get(key)
    if a is None or a.shape != shape:
        a = np.empty(shape)
        ws[key] = a
    return a


def mu_coefficients(
    V: np.ndarray,
    W: np.ndarray,
    H: np.ndarray,
    p: BetaParams,
    ws: dict | None = None,
) -> MajorizerCoefficients:
    """Numerator W.T((WH)^(beta-2) * V) and denominator W.T(WH)^(beta-1).

    Requires strictly positive WH (guaranteed upstream by entry flooring).
    At beta = 1 the denominator collapses to the column sums of W and is
    returned as a broadcast view.  When a workspace dict is supplied, the
    returned arrays live in it and stay valid until the next call with the
    same workspace.
    """
    F_, N_ = V.shape
    K_ = W.shape[1]
    WH = _buf(ws, "mu.wh", (F_, N_))
    np.matmul(W, H, out=WH)
    if WH.min() <= 0.0:
        k, n = np.unravel_index(int(np.argmin(WH)), WH.shape)
        raise DomainError(f"WH must be positive; entry ({k}, {n}) is {WH[k, n]!r}")
    b = p.beta
    if b == 1.0:
        np.divide(V, WH, out=WH)
        numer = _buf(ws, "mu.num", (K_, N_))
        np.matmul(W.T, WH, out=numer)
        denom = np.broadcast_to(W.sum(axis=0)[:, None], numer.shape)
    elif b == 2.0:
        numer = _buf(ws, "mu.num", (K_, N_))
        np.matmul(W.T, V, out=numer)
        denom = _buf(ws, "mu.den", (K_, N_))
        np.matmul(W.T, WH, out=denom)
    else:
        P = _buf(ws, "mu.pow", (F_, N_))
        np.power(WH, b - 2.0, out=P)
        np.multiply(P, WH, out=WH)  # (WH)^(beta-1)
        denom = _buf(ws, "mu.den", (K_, N_))
        np.matmul(W.T, WH, out=denom)
        np.multiply(P, V, out=P)
        numer = _buf(ws, "mu.num", (K_, N_))
        np.matmul(W.T, P, out=numer)
    return MajorizerCoefficients(numer=numer, denom=denom)


def update_unconstrained(
    Ht: np.ndarray,
    coeff: MajorizerCoefficients,
    p: BetaParams,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Ht * (numer/denom)**gamma(beta); fixed when numer == denom.

    ``out``, when given, receives the result and must not alias ``Ht``.
    """
    if out is Ht:
        raise ValueError("out must not alias Ht")
    ratio = np.divide(coeff.numer, coeff.denom, out=out)
    if p.gamma_exp != 1.0:
        np.power(ratio, p.gamma_exp, out=ratio)
    np.multiply(Ht, ratio, out=ratio)
    return ratio


# ---------------------------------------------------------------------------
# weighted-sum constraints
# ---------------------------------------------------------------------------


@dataclass
class LinearSolvePlan:
    """Gather/scatter layout for all weighted-sum constraints of one factor.

    Constraints are padded to a (q_max, n_constraints) rectangle; padded
    slots carry zero weight and a unit denominator so they contribute
    nothing to any residual.  A full cover of the columns in order (the
    column-simplex layout) is recognized and gathered as the factor itself,
    with no copies.
    """

    idx: np.ndarray        # (q_max, J) flat indices into the factor
    mask: np.ndarray       # (q_max, J) valid-entry mask
    weights: np.ndarray    # (q_max, J), 0.0 at padding
    rhs: np.ndarray        # (J,)
    shape: tuple[int, int]
    identity: bool = False  # idx is exactly the row-major layout of the factor

    @property
    def n_constraints(self) -> int:
        return self.rhs.size

    @staticmethod
    def build(cs: ConstraintSet, rows: int, cols: int) -> "LinearSolvePlan":
        J = len(cs.linear)
        qmax = max((len(lc.indices) for lc in cs.linear), default=0)
        idx = np.zeros((qmax, J), dtype=np.int64)
        mask = np.zeros((qmax, J), dtype=bool)
        weights = np.zeros((qmax, J), dtype=float)
        rhs = np.empty(J, dtype=float)
        for j, lc in enumerate(cs.linear):
            q = len(lc.indices)
            idx[:q, j] = [r * cols + c for r, c in lc.indices]
            mask[:q, j] = True
            weights[:q, j] = lc.weights
            rhs[j] = lc.rhs
        identity = (
            J == cols
            and qmax == rows
            and bool(mask.all())
            and bool((idx == np.arange(rows * cols).reshape(rows, cols)).all())
        )
        return LinearSolvePlan(
            idx=idx, mask=mask, weights=weights, rhs=rhs, shape=(rows, cols), identity=identity
        )

    def gather(self, M: np.ndarray, fill: float = 0.0) -> np.ndarray:
        M = np.asarray(M)
        if self.identity:
            return M if M.shape == self.shape else M.reshape(self.shape)
        out = M.reshape(-1)[self.idx.reshape(-1)].reshape(self.idx.shape)
        if self.mask.all():
            return out
        if fill != 0.0:
            out[~self.mask] = fill
        else:
            out *= self.mask
        return out

    def scatter(self, target: np.ndarray, entries: np.ndarray) -> None:
        if self.identity:
            target[...] = entries
            return
        target.reshape(-1)[self.idx[self.mask]] = entries[self.mask]


def solve_ratio_multipliers(
    Cb: np.ndarray,
    Db: np.ndarray,
    w: np.ndarray,
    yb: np.ndarray,
    rhs: np.ndarray,
    p: BetaParams,
    tol: float | np.ndarray = 1e-6,
    max_iters: int = 200,
    mu_init: np.ndarray | None = None,
    ws: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep safeguarded Newton for J constraints of ratio form.

    Residual per constraint: sum_q w*y*(C/(D - mu*w))**g - rhs, increasing
    and convex left of the pole t = min_q D/w.  Starts at a warm point when
    it keeps a positive residual, then at 0, then walks toward the pole.
    ``tol`` may be scalar or one value per constraint.  Returns multipliers
    and per-constraint evaluation counts.
    """
    g = p.gamma_exp
    J = rhs.size
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (J,)).copy()
    with np.errstate(divide="ignore"):
        poles = np.where(w > 0.0, Db / np.where(w > 0.0, w, 1.0), np.inf)
    t = poles.min(axis=0)
    # a block whose numerators all vanish can never meet a positive rhs
    dead = ~np.any((Cb > 0.0) & (w > 0.0), axis=0)
    if dead.any():
        j = int(np.argmax(dead))
        raise NoSignChangeError(f"constraint {j}: all update numerators vanish")
    # fast path for padding-free unit weights (column-simplex constraints)
    uniform = bool(np.all(w == 1.0))
    eps_mach = np.finfo(float).eps

    mu_out = np.zeros(J)
    evals_out = np.zeros(J, dtype=np.int64)

    # live (not-yet-converged) problems, kept compacted in two stacks so a
    # compaction is two gathers rather than a dozen
    live = np.arange(J)
    parts = [Cb, Db, yb] if uniform else [Cb, Db, w, yb]
    S2 = _buf(ws, "rm.s2", (len(parts),) + Cb.shape)
    for i, part in enumerate(parts):
        np.copyto(S2[i], part)
    nev = np.zeros(J, dtype=np.int64)

    # probe a warm start where admissible, else 0
    at = np.zeros(J)
    if mu_init is not None:
        okw = np.isfinite(mu_init) & (mu_init < t - 1e-12 * np.abs(t))
        at = np.where(okw, mu_init, 0.0)
    # rows: rhs, tol, lo (residual <= 0 side), hi (> 0 side; starts at the
    # pole), current point
    S1 = np.stack([rhs, tol, np.full(J, -np.inf), t, at])

    def compact(keep, r=None):
        nonlocal live, S2, S1, nev
        live = live[keep]
        S2 = S2[:, :, keep]
        S1 = S1[:, keep]
        nev = nev[keep]
        return None if r is None else r[keep]

    with np.errstate(all="ignore"):
        for round_no in range(max_iters + 1):
            at = S1[4]
            full = live.size == J  # reuse round buffers while uncompacted
            # residual at the candidate points (candidates are always strictly
            # inside the current bracket, so lo/hi tighten monotonically)
            if uniform:
                Cl, Dl, yl = S2
                wl = None
                recip = _buf(ws if full else None, "rm.recip", Dl.shape)
                np.subtract(Dl, at[None, :], out=recip)
                np.divide(1.0, recip, out=recip)
                term = _buf(ws if full else None, "rm.term", Dl.shape)
                np.multiply(Cl, recip, out=term)
                if g != 1.0:
                    np.power(term, g, out=term)
                np.multiply(yl, term, out=term)
            else:
                Cl, Dl, wl, yl = S2
                recip = _buf(ws if full else None, "rm.recip", Dl.shape)
                np.multiply(wl, at[None, :], out=recip)
                np.subtract(Dl, recip, out=recip)
                np.divide(1.0, recip, out=recip)
                term = _buf(ws if full else None, "rm.term", Dl.shape)
                np.multiply(Cl, recip, out=term)
                if g != 1.0:
                    np.power(term, g, out=term)
                np.multiply(yl, term, out=term)
                np.multiply(wl, term, out=term)
            r = term.sum(axis=0) - S1[0]
            nev += 1

            neg = r <= 0.0                       # NaN (pole overflow) counts as r > 0
            S1[3] = np.where(neg, S1[3], at)
            S1[2] = np.where(neg, at, S1[2])
            settle = np.abs(r) <= S1[1]          # NaN compares False
            if round_no >= 4:
                # a bracket collapsed to adjacent floats is solved to
                # working precision
                settle |= np.isfinite(S1[2]) & (
                    S1[3] - S1[2]
                    <= 4.0 * eps_mach * np.maximum(np.abs(S1[2]), np.abs(S1[3]))
                )
            if settle.any():
                idx = live[settle]
                mu_out[idx] = at[settle]
                evals_out[idx] = nev[settle]
                keep = ~settle
                if not keep.any():
                    return mu_out, evals_out
                r = compact(keep, r)
                at = S1[4]
                recip, term = recip[:, keep], term[:, keep]
                if not uniform:
                    wl = wl[:, keep]

            # first three derivatives at the surviving points (in-place
            # passes reusing term/recip); every derivative of r is positive
            # and increases toward the pole, which is what makes the Taylor
            # bounds below one-sided
            full = live.size == J
            tmp = _buf(ws if full else None, "rm.tmp", term.shape)
            np.multiply(term, recip, out=tmp)
            if uniform:
                fp = g * tmp.sum(axis=0)
                np.multiply(tmp, recip, out=tmp)
                r2 = (g * (g + 1.0)) * tmp.sum(axis=0)
                np.multiply(tmp, recip, out=tmp)
                r3 = (g * (g + 1.0) * (g + 2.0)) * tmp.sum(axis=0)
            else:
                np.multiply(tmp, wl, out=tmp)
                fp = g * tmp.sum(axis=0)
                np.multiply(tmp, wl, out=tmp)
                np.multiply(tmp, recip, out=tmp)
                r2 = (g * (g + 1.0)) * tmp.sum(axis=0)
                np.multiply(tmp, wl, out=tmp)
                np.multiply(tmp, recip, out=tmp)
                r3 = (g * (g + 1.0) * (g + 2.0)) * tmp.sum(axis=0)
            step = r / fp
            # Halley step: cubic convergence at the cost of two small kernels;
            # fall back to plain Newton when the curvature correction is large
            hall = 1.0 - 0.5 * step * (r2 / fp)
            step_h = np.where(hall > 0.25, step / np.where(hall > 0.25, hall, 1.0), step)
            cand = at - step_h                   # NaN/inf fall out of the bracket test
            inside = (cand > S1[2]) & (cand < S1[3])
            # For a leftward step s from a positive residual, Taylor with the
            # monotone-derivative bounds gives
            #   r - fp*s + r2*s^2/2 - r3*s^3/6 <= r(at - s) <= r - fp*s + r2*s^2/2,
            # so a lane is accepted without re-evaluation once both ends of
            # that band clear half the tolerance.
            ub = r - fp * step_h + 0.5 * r2 * step_h * step_h
            lb = ub - r3 * step_h * step_h * step_h / 6.0
            sure = inside & (r > 0.0) & (step_h > 0.0)
            sure &= np.abs(ub) <= 0.5 * S1[1]
            sure &= np.abs(lb) <= 0.5 * S1[1]
            if sure.any():
                idx = live[sure]
                mu_out[idx] = cand[sure]
                evals_out[idx] = nev[sure]
                keep = ~sure
                if not keep.any():
                    return mu_out, evals_out
                compact(keep)
                cand, inside = cand[keep], inside[keep]
            if not inside.all():
                mid = np.where(
                    np.isfinite(S1[2]),
                    0.5 * (S1[2] + S1[3]),
                    S1[3] - np.maximum(1.0, np.abs(S1[3])),
                )
                cand = np.where(inside, cand, mid)
            S1[4] = cand
    bad = int(live[0])
    raise MaxItersError(
        f"constraint {bad}: residual above tolerance {tol[bad]!r} "
        f"after {max_iters} evaluations"
    )


def apply_linear_constraints(
    Hnew: np.ndarray,
    Ht: np.ndarray,
    coeff: MajorizerCoefficients,
    plan: LinearSolvePlan,
    p: BetaParams,
    tol: float | np.ndarray = 1e-6,
    max_iters: int = 200,
    mu_init: np.ndarray | None = None,
    ws: dict | None = None,
) -> tuple[np.ndarray, int, float]:
    """Overwrite the constrained entries of ``Hnew`` in place.

    ``Hnew`` should already hold the unconstrained update of the free
    entries.  Returns the multipliers, the total evaluation count, and the
    seconds spent inside the root solve (excluding the update algebra).
    """
    if plan.n_constraints == 0:
        return np.empty(0), 0, 0.0
    Cb = plan.gather(coeff.numer)
    Db = plan.gather(coeff.denom, fill=1.0)
    yb = plan.gather(Ht)
    t0 = time.perf_counter()
    mu, evals = solve_ratio_multipliers(
        Cb, Db, plan.weights, yb, plan.rhs, p,
        tol=tol, max_iters=max_iters, mu_init=mu_init, ws=ws,
    )
    solve_seconds = time.perf_counter() - t0
    entries = _buf(ws, "al.entries", Cb.shape)
    np.multiply(plan.weights, mu[None, :], out=entries)
    np.subtract(Db, entries, out=entries)
    np.divide(Cb, entries, out=entries)
    if p.gamma_exp != 1.0:
        np.power(entries, p.gamma_exp, out=entries)
    np.multiply(yb, entries, out=entries)
    plan.scatter(Hnew, entries)
    return mu, int(evals.sum()), solve_seconds


def update_linear_constrained(
    Ht: np.ndarray,
    coeff: MajorizerCoefficients,
    lc: LinearConstraint,
    p: BetaParams,
    tol: float = 1e-6,
    max_iters: int = 200,
) -> tuple[np.ndarray, float]:
    """Constrained update of one index block; returns (entries, multiplier).

    The entries are Ht[block] * (numer / (denom - mu*weights))**gamma with
    mu chosen so the weighted sum meets the right-hand side.
    """
    rows = [r for r, _ in lc.indices]
    cols = [c for _, c in lc.indices]
    cq = np.asarray(coeff.numer)[rows, cols]
    dq = np.asarray(coeff.denom)[rows, cols]
    wq = np.asarray(lc.weights, dtype=float)
    yq = np.asarray(Ht)[rows, cols]
    g = p.gamma_exp
    t = float(np.min(dq / wq))
    if not np.any(cq > 0.0):
        raise NoSignChangeError("all update numerators vanish on the constraint block")

    def entries_at(mu: float) -> np.ndarray:
        return yq * (cq / (dq - mu * wq)) ** g

    def r(mu: float) -> float:
        return float(wq @ entries_at(mu) - lc.rhs)

    def rp(mu: float) -> float:
        den = dq - mu * wq
        return float(g * np.sum(wq * wq * yq * (cq / den) ** g / den))

    prob = RootProblem(
        r, rp, DomainHint.INCREASING_CONVEX_LEFT_OF_POLE, t, tol_residual=tol, max_iters=max_iters
    )
    mu, _ = solve_increasing_convex(prob)
    return entries_at(mu), mu


def majorizer_entry_functions(
    numer: np.ndarray, denom: np.ndarray, ytil: np.ndarray, p: BetaParams
) -> list[Callable]:
    """Per-entry surrogate functions g_q(y) whose constrained argmin is the
    ratio-form update (up to an additive constant).

    For beta < 1 this is the exact separable majorizer of the divergence;
    on [1, 2] it is the operative surrogate with derivative D - C*ytil/y.
    Used by the brute-force oracle to cross-check the Newton solve.
    """
    if p.beta > 2.0:
        raise ValueError("constrained surrogates are only defined for beta <= 2")
    funcs: list[Callable] = []
    b = p.beta
    for cq, dq, yq in zip(np.ravel(numer), np.ravel(denom), np.ravel(ytil)):
        if b < 1.0:
            scale = cq * yq ** (2.0 - b) / (1.0 - b)

            def g(y, dq=dq, scale=scale):
                return dq * y + scale * y ** (b - 1.0)

        else:

            def g(y, cq=cq, dq=dq, yq=yq):
                return dq * y - cq * yq * np.log(y)

        funcs.append(g)
    return funcs


# ---------------------------------------------------------------------------
# min-vol (logdet-penalized, KL) update of the basis factor
# ---------------------------------------------------------------------------


@dataclass
class MinVolState:
    """Split inverse Gram matrix of the current basis.

    gram_inv = (W.T W + delta I)^(-1) = pos - neg with pos, neg >= 0;
    ``logdet`` is log det(W.T W + delta I) from the same factorization.
    """

    gram_inv: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    lam: float
    delta: float
    logdet: float = 0.0


def minvol_state(W: np.ndarray, lam: float, delta: float) -> MinVolState:
    """Invert the regularized Gram matrix via its Cholesky factor."""
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam!r}")
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    K = W.shape[1]
    Q = W.T @ W
    Q[np.arange(K), np.arange(K)] += delta
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:  # cannot happen for delta > 0
        raise SolverError(f"regularized Gram matrix is not positive definite: {exc}") from exc
    logdet = float(2.0 * np.sum(np.log(np.diag(L))))
    Linv = np.linalg.inv(L)
    Y = Linv.T @ Linv
    Y = 0.5 * (Y + Y.T)
    return MinVolState(
        gram_inv=Y, pos=np.maximum(Y, 0.0), neg=np.maximum(-Y, 0.0),
        lam=float(lam), delta=float(delta), logdet=logdet,
    )


def logdet_gram(W: np.ndarray, delta: float) -> float:
    """log det(W.T W + delta I) via the Cholesky diagonal."""
    K = W.shape[1]
    Q = W.T @ W
    Q[np.arange(K), np.arange(K)] += delta
    L = np.linalg.cholesky(Q)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def minvol_coefficients(
    V: np.ndarray,
    Wt: np.ndarray,
    H: np.ndarray,
    state: MinVolState,
    ws: dict | None = None,
) -> MajorizerCoefficients:
    """Coefficient matrices of the volume-penalized KL update of W.

    numer can be negative; quad = 2 * denom * ratio is the quadratic-branch
    term.  With lam = 0 both denom and quad vanish and the update collapses
    to the multiplier-shifted KL step.
    """
    F = V.shape[0]
    lam = state.lam
    habs = state.pos + state.neg
    rowsums = np.broadcast_to(H.sum(axis=1)[None, :], (F, Wt.shape[1]))
    if lam > 0.0:
        numer = rowsums - 4.0 * lam * (Wt @ state.neg)
        denom = 4.0 * lam * (Wt @ habs)
    else:
        numer = np.array(rowsums, dtype=float)
        denom = np.zeros_like(numer)
    WH = _buf(ws, "mv.wh", V.shape)
    np.matmul(Wt, H, out=WH)
    if WH.min() <= 0.0:
        raise DomainError("WH must be positive in the min-vol update")
    np.divide(V, WH, out=WH)
    ratio = _buf(ws, "mv.ratio", numer.shape)
    np.matmul(WH, H.T, out=ratio)
    quad = 2.0 * denom * ratio
    return MajorizerCoefficients(numer=numer, denom=denom, quad=quad, ratio=ratio)


def update_minvol_w(Wt: np.ndarray, coeff: MajorizerCoefficients, mu_vec: np.ndarray) -> np.ndarray:
    """Closed-form W step: Wt * (sqrt((C + mu)^2 + S) - (C + mu)) / D.

    Evaluated as 2*ratio / (sqrt(A^2 + S) + A) when A = C + mu >= 0 (exact by
    conjugation since S = 2*D*ratio, and well defined at D = 0) and in the
    direct form when A < 0 (where D > 0 whenever lam > 0).
    """
    A = coeff.numer + np.asarray(mu_vec)[None, :]
    S = coeff.quad
    M = coeff.ratio
    u = np.sqrt(A * A + S)
    out = np.empty_like(A)
    pos = A >= 0.0
    den = u[pos] + A[pos]
    out[pos] = np.divide(2.0 * M[pos], den, out=np.zeros_like(den), where=den > 0.0)
    neg = ~pos
    out[neg] = (u[neg] - A[neg]) / coeff.denom[neg]
    return Wt * out


def solve_minvol_multipliers(
    Wt: np.ndarray,
    coeff: MajorizerCoefficients,
    tol: float = 1e-6,
    max_iters: int = 200,
    mu_init: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One multiplier per column of W so each updated column sums to one.

    Each scalar equation decouples because entry (f, i) depends only on
    mu_i.  The column sum is increasing and convex in nu = -mu, so all K
    lanes run one guarded Newton in lockstep; with lam = 0 the domain gains
    the pole nu < min_f numer[f, i].
    """
    F, K = Wt.shape
    C, D, M, S = coeff.numer, coeff.denom, coeff.ratio, coeff.quad
    pole = np.any(D <= 0.0, axis=0)
    cmin = np.min(C, axis=0)
    t = [float(cmin[i]) if pole[i] else math.inf for i in range(K)]
    eps_mach = np.finfo(float).eps

    # column evaluations stay vectorized over F x K; the per-lane Newton
    # bookkeeping runs on plain floats, which beats numpy dispatch at small K
    nu = [0.0] * K
    if mu_init is not None:
        for i in range(K):
            wi = float(mu_init[i])
            cap = t[i] - 1e-12 * abs(t[i]) if math.isfinite(t[i]) else math.inf
            if math.isfinite(wi) and -wi < cap:
                nu[i] = -wi
    lo = [-math.inf] * K
    hi = list(t)
    nev = [0] * K
    done = [False] * K
    out = np.zeros(K)
    evals_out = np.zeros(K, dtype=np.int64)

    M2 = 2.0 * M
    M2W = M2 * Wt
    quad_pos = bool(S.min() > 0.0)  # then u > 0 and u + A > 0 wherever A >= 0
    with np.errstate(all="ignore"):
        for round_no in range(max_iters + 1):
            nu_arr = np.asarray(nu)
            A = C - nu_arr[None, :]
            u = np.sqrt(A * A + S)
            conj = u + A
            nonneg = A >= 0.0
            if quad_pos:
                col = M2 / conj if nonneg.all() else np.where(nonneg, M2 / conj, (u - A) / D)
            elif nonneg.all():
                col = np.divide(M2, conj, out=np.zeros_like(A), where=conj > 0.0)
            else:
                col = np.where(
                    nonneg,
                    np.divide(M2, conj, out=np.zeros_like(A), where=conj > 0.0),
                    (u - A) / np.where(nonneg, 1.0, D),
                )
            col *= Wt
            # first two derivatives reuse the same arrays; since
            # col * (u + A) = 2*M*Wt identically, the second derivative of the
            # column sum is sum(2*M*Wt / u^3), whose maximum over a leftward
            # step is computable (A grows leftward, so u is smallest at
            # whichever end of the step interval is closest to A = 0)
            usafe = u if quad_pos else np.maximum(u, 1e-300)
            grad = col / usafe
            rs = (col.sum(axis=0) - 1.0).tolist()
            fps = grad.sum(axis=0).tolist()
            r2s = (grad * (conj / (usafe * usafe))).sum(axis=0).tolist()

            # Newton steps, in python floats; from the r > 0 side Newton never
            # crosses the root, so its remainder bound certifies the landing
            newtons = [math.nan] * K
            for i in range(K):
                if done[i]:
                    continue
                r, fp = rs[i], fps[i]
                if math.isfinite(fp) and fp > 0.0 and math.isfinite(r):
                    newtons[i] = r / fp
            # curvature maximum over each lane's Newton interval, for the
            # remainder bound |r(x-s)| <= max|r''| * s^2 / 2
            s_arr = np.array([s if math.isfinite(s) and s > 0.0 else 0.0 for s in newtons])
            if s_arr.any():
                Aend = A + s_arr[None, :]
                umin2 = np.where(A >= 0.0, u * u, np.where(Aend <= 0.0, Aend * Aend + S, S))
                r2max = (M2W / np.maximum(umin2, 1e-300) ** 1.5).sum(axis=0).tolist()
            else:
                r2max = [math.inf] * K

            pending = False
            for i in range(K):
                if done[i]:
                    continue
                x, r = nu[i], rs[i]
                nev[i] += 1
                if r <= 0.0:  # NaN (pole overflow) counts as r > 0
                    lo[i] = x
                else:
                    hi[i] = x
                if abs(r) <= tol or (
                    round_no >= 4
                    and math.isfinite(lo[i])
                    and math.isfinite(hi[i])
                    and hi[i] - lo[i] <= 4.0 * eps_mach * max(abs(lo[i]), abs(hi[i]))
                ):
                    out[i] = -x
                    evals_out[i] = nev[i]
                    done[i] = True
                    continue
                step_n = newtons[i]
                if step_n > 0.0 and lo[i] < x - step_n < hi[i]:
                    bound = 0.5 * r2max[i] * step_n * step_n
                    if bound <= 0.5 * tol:
                        out[i] = -(x - step_n)
                        evals_out[i] = nev[i]
                        done[i] = True
                        continue
                pending = True
                cand = math.nan
                if math.isfinite(step_n):
                    # Halley for the next probe: cubic progress, bracket-guarded
                    hall = max(1.0 - 0.5 * step_n * (r2s[i] / fps[i]), 0.25)
                    cand = x - step_n / hall
                if not (lo[i] < cand < hi[i]):
                    if math.isfinite(lo[i]) and math.isfinite(hi[i]):
                        cand = 0.5 * (lo[i] + hi[i])
                    elif math.isfinite(hi[i]):
                        cand = hi[i] - max(1.0, abs(hi[i]))
                    else:
                        cand = lo[i] + max(1.0, abs(lo[i]))
                nu[i] = cand
            if not pending:
                return out, evals_out
    bad = done.index(False)
    raise MaxItersError(
        f"column {bad}: multiplier residual above tolerance {tol!r} "
        f"after {max_iters} evaluations"
    )


# ---------------------------------------------------------------------------
# sparse / sphere updates (KL)
# ---------------------------------------------------------------------------


def update_sparse_h(
    Ht: np.ndarray, coeff: MajorizerCoefficients, lam_vec: np.ndarray
) -> np.ndarray:
    """KL step for H with the denominator of row k shifted by lam_k."""
    lam = np.asarray(lam_vec, dtype=float)
    return Ht * coeff.numer / (coeff.denom + lam[:, None])


@dataclass
class SphereUpdateResult:
    column: np.ndarray
    mu: float | None     # None on the fallback path
    evals: int
    fallback: bool
    h_row_scale: float   # multiply the matching H row by this to keep WH fixed


def _sphere_column_step(
    c0: float,
    s: np.ndarray,
    wt_col: np.ndarray,
    rho: float,
    tol: float,
    max_iters: int,
) -> SphereUpdateResult:
    """Shared solve for one column given its constant C and quadratic term S.

    When no positive multiplier exists (the mu -> 0+ limit of the column
    norm already falls below rho), falls back to the plain KL step rescaled
    onto the sphere, with the compensating H-row scale reported.
    """

    def wcol(mu: float) -> tuple[np.ndarray, np.ndarray]:
        u = np.sqrt(c0 * c0 + 8.0 * mu * s)
        return 2.0 * s / (u + c0), u

    def r(mu: float) -> float:
        w, _ = wcol(mu)
        return float(np.sum(w * w) - rho)

    def rp(mu: float) -> float:
        w, u = wcol(mu)
        dw = -8.0 * s * s / (u * (u + c0) ** 2)
        return float(np.sum(2.0 * w * dw))

    prob = RootProblem(
        r,
        rp,
        DomainHint.DECREASING_CONVEX_ON_POSITIVES,
        math.inf,
        tol_residual=tol,
        max_iters=max_iters,
    )
    probe = 1e-12 * (1.0 + c0)
    solved = solve_decreasing_convex_positive(prob, probe=probe)
    if solved is not None:
        mu, evals = solved
        col, _ = wcol(mu)
        return SphereUpdateResult(column=col, mu=mu, evals=evals, fallback=False, h_row_scale=1.0)
    col = s / c0  # plain KL multiplicative step
    norm = float(np.linalg.norm(col))
    if norm <= 0.0:
        raise SolverError("sphere fallback hit an all-zero column")
    scale = math.sqrt(rho) / norm
    return SphereUpdateResult(
        column=col * scale, mu=None, evals=1, fallback=True, h_row_scale=1.0 / scale
    )


def update_sphere_w(
    Wt: np.ndarray,
    V: np.ndarray,
    H: np.ndarray,
    sc: SphereConstraint,
    tol: float = 1e-6,
    max_iters: int = 200,
) -> SphereUpdateResult:
    """Sphere-constrained KL step of one column of W."""
    i = sc.column
    c0 = float(H[i, :].sum())
    WH = Wt @ H
    if WH.min() <= 0.0:
        raise DomainError("WH must be positive in the sphere update")
    s = Wt[:, i] * ((V / WH) @ H[i, :])
    return _sphere_column_step(c0, s, Wt[:, i], sc.radius_sq, tol, max_iters)


def update_sphere_all(
    Wt: np.ndarray,
    V: np.ndarray,
    H: np.ndarray,
    rho: float,
    tol: float = 1e-6,
    max_iters: int = 200,
) -> tuple[np.ndarray, list[SphereUpdateResult]]:
    """Sphere-constrained KL step of every column, sharing the big products."""
    WH = Wt @ H
    if WH.min() <= 0.0:
        raise DomainError("WH must be positive in the sphere update")
    S = Wt * ((V / WH) @ H.T)
    c0s = H.sum(axis=1)
    Wnew = np.empty_like(Wt)
    results = []
    for i in range(Wt.shape[1]):
        try:
            res = _sphere_column_step(float(c0s[i]), S[:, i], Wt[:, i], rho, tol, max_iters)
        except SolverError as exc:
            raise type(exc)(f"column {i}: {exc}") from exc
        Wnew[:, i] = res.column
        results.append(res)
    return Wnew, results
