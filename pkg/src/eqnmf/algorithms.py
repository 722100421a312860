"""Alternating drivers: baseline MU, constrained fits, min-vol and sparse models.

Every driver keeps its constraints satisfied after each factor update (the
multiplier solve lands exactly on the constraint, up to the residual
tolerance) while the objective decreases monotonically for beta < 2; beta = 2
is accepted and checked empirically.  Runs are single-threaded and
deterministic: identical options and seed reproduce identical traces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    ConstraintSet,
    LinearConstraint,
    ensure_valid,
    simplex_columns,
)
from .divergence import BetaParams, DomainError, beta_params, d_beta_sum
from .updates import (
    LinearSolvePlan,
    apply_linear_constraints,
    logdet_gram,
    minvol_coefficients,
    minvol_state,
    mu_coefficients,
    solve_minvol_multipliers,
    update_minvol_w,
    update_sparse_h,
    update_sphere_all,
    update_unconstrained,
)

TRACE_COLUMNS = (
    "iter",
    "divergence",
    "penalty",
    "objective",
    "max_constraint_residual",
    "newton_iters_total",
    "fallback_count",
    "elapsed_s",
)


@dataclass
class SolverOptions:
    max_iters: int = 300
    beta: float = 1.0
    seed: int = 0
    tol_residual: float = 1e-6
    floor_eps: float | None = None  # None resolves to 1e-15 * max(V)
    record_trace: bool = True
    objective_every: int = 1

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol_residual <= 0.0:
            raise ValueError("tol_residual must be positive")
        if self.floor_eps is not None and self.floor_eps <= 0.0:
            raise ValueError("floor_eps must be positive")
        if self.objective_every < 1:
            raise ValueError("objective_every must be at least 1")


@dataclass
class SparsitySchedule:
    """Geometric ramp of the row penalties toward a target Hoyer sparsity.

    Inside the iteration window, each lambda_k is multiplied by rate_alpha
    once per iteration while its row sparsity sits below the target; outside
    the window the penalties are frozen.  Penalties never decrease.
    """

    lambda0: float | np.ndarray = 0.05
    rate_alpha: float = 1.05
    target_sp: float = 0.5
    window: tuple[int, int] = (1, 150)

    def __post_init__(self) -> None:
        if self.rate_alpha <= 1.0:
            raise ValueError("rate_alpha must exceed 1")
        if not (0.0 <= self.target_sp <= 1.0):
            raise ValueError("target_sp must lie in [0, 1]")
        if self.window[0] > self.window[1]:
            raise ValueError("window must satisfy it_min <= it_max")

    def initial_lambdas(self, k: int) -> np.ndarray:
        lam = np.asarray(self.lambda0, dtype=float)
        lam = np.full(k, float(lam)) if lam.ndim == 0 else lam.astype(float).copy()
        if lam.shape != (k,):
            raise ValueError(f"lambda0 must be scalar or length {k}")
        if np.any(lam < 0.0):
            raise ValueError("lambda0 must be nonnegative")
        return lam


@dataclass
class ConvergenceTrace:
    """Per-iteration record of objective pieces, residuals and solver effort.

    ``newton_evals``, ``newton_seconds``, ``fallback_count`` and ``elapsed_s``
    are cumulative since the start of the run, so recording gaps lose
    nothing.  ``newton_seconds`` covers the multiplier root solves only (not
    the constrained-update algebra around them).
    """

    iters: list[int] = field(default_factory=list)
    divergence: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    max_residual: list[float] = field(default_factory=list)
    newton_evals: list[int] = field(default_factory=list)
    fallback_count: list[int] = field(default_factory=list)
    elapsed_s: list[float] = field(default_factory=list)
    newton_seconds: list[float] = field(default_factory=list)
    mu_w: list = field(default_factory=list)
    mu_h: list = field(default_factory=list)

    def record(self, it, div, pen, res, nev, fall, elapsed, nsec, mu_w=None, mu_h=None) -> None:
        self.iters.append(int(it))
        self.divergence.append(float(div))
        self.penalty.append(float(pen))
        self.objective.append(float(div) + float(pen))
        self.max_residual.append(float(res))
        self.newton_evals.append(int(nev))
        self.fallback_count.append(int(fall))
        self.elapsed_s.append(float(elapsed))
        self.newton_seconds.append(float(nsec))
        self.mu_w.append(None if mu_w is None else np.array(mu_w))
        self.mu_h.append(None if mu_h is None else np.array(mu_h))

    def rows(self):
        """Rows in the order of TRACE_COLUMNS."""
        for i in range(len(self.iters)):
            yield (
                self.iters[i],
                self.divergence[i],
                self.penalty[i],
                self.objective[i],
                self.max_residual[i],
                self.newton_evals[i],
                self.fallback_count[i],
                self.elapsed_s[i],
            )

    @property
    def final_objective(self) -> float:
        return self.objective[-1]


@dataclass(frozen=True)
class ObjectiveParts:
    divergence: float
    penalty: float
    total: float


def objective(
    V: np.ndarray,
    W: np.ndarray,
    H: np.ndarray,
    p: BetaParams,
    minvol: tuple[float, float] | None = None,
    sparse_lambda: np.ndarray | None = None,
) -> ObjectiveParts:
    """Divergence plus the active penalty (volume, sparsity, or none)."""
    if minvol is not None and sparse_lambda is not None:
        raise ValueError("at most one penalty may be active")
    div = d_beta_sum(V, W @ H, p)
    pen = 0.0
    if minvol is not None:
        lam, delta = minvol
        pen = lam * logdet_gram(W, delta)
    elif sparse_lambda is not None:
        lam = np.asarray(sparse_lambda, dtype=float)
        pen = float(lam @ np.abs(H).sum(axis=1))
    return ObjectiveParts(divergence=div, penalty=pen, total=div + pen)


def hoyer_sparsity(row: np.ndarray) -> float:
    """(sqrt(N) - l1/l2) / (sqrt(N) - 1): 0 for constant rows, 1 for one-hot."""
    row = np.asarray(row, dtype=float)
    n = row.size
    if n < 2:
        raise DomainError("sparsity needs at least two entries")
    if np.any(row < 0.0):
        raise DomainError("sparsity is defined for nonnegative rows")
    l2 = float(np.linalg.norm(row))
    if l2 == 0.0:
        raise DomainError("sparsity of the zero vector is undefined")
    l1 = float(np.abs(row).sum())
    rt = math.sqrt(n)
    return (rt - l1 / l2) / (rt - 1.0)


# ---------------------------------------------------------------------------
# shared driver plumbing
# ---------------------------------------------------------------------------


def _resolve_eps(V: np.ndarray, opts: SolverOptions) -> float:
    if opts.floor_eps is not None:
        return opts.floor_eps
    vmax = float(V.max())
    if vmax <= 0.0:
        raise DomainError("data matrix must contain a positive entry")
    return 1e-15 * vmax


def _check_data(V: np.ndarray, p: BetaParams) -> None:
    if V.ndim != 2:
        raise DomainError("data must be a 2-D matrix")
    if V.min() < 0.0:
        f, n = np.unravel_index(int(np.argmin(V)), V.shape)
        raise DomainError(f"data must be nonnegative; entry ({f}, {n}) is {V[f, n]!r}")
    if p.beta <= 0.0 and np.any(V == 0.0):
        f, n = np.unravel_index(int(np.argmax(V == 0.0)), V.shape)
        raise DomainError(f"beta={p.beta} requires positive data; entry ({f}, {n}) is 0")


def _draw_positive(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    return 1.0 - rng.random(shape)  # uniform on (0, 1]


def _project_linear(M: np.ndarray, plan: LinearSolvePlan) -> None:
    """Rescale each constrained block once so its weighted sum hits the rhs."""
    if plan.n_constraints == 0:
        return
    y = plan.gather(M)
    s = (plan.weights * y).sum(axis=0)
    plan.scatter(M, y * (plan.rhs / s)[None, :])


def _linear_residual(M: np.ndarray, plan: LinearSolvePlan) -> float:
    if plan.n_constraints == 0:
        return 0.0
    y = plan.gather(M)
    return float(np.max(np.abs((plan.weights * y).sum(axis=0) - plan.rhs)))


def _transpose_constraints(cs: ConstraintSet) -> ConstraintSet:
    lin = tuple(
        LinearConstraint.of([(c, r) for r, c in lc.indices], lc.weights, lc.rhs)
        for lc in cs.linear
    )
    return ConstraintSet(linear=lin)


def _solve_tol(tol_residual: float, rhs) -> np.ndarray | float:
    """Multiplier-solve tolerance: essentially exact, never above the contract.

    Monotone descent needs the constrained surrogate minimized much tighter
    than the residual contract: near convergence the objective moves
    linearly with the multiplier residual (slope about the multiplier
    itself), so the solve targets 1e-12 * (1 + rhs).  Roots the float grid
    cannot pin that precisely settle via the bracket-collapse path.
    """
    return np.minimum(tol_residual, 1e-12 * (1.0 + np.asarray(rhs, dtype=float)))


def _push(history: list, mu) -> None:
    if mu is not None:
        history.append(mu)
        del history[:-3]


def _extrapolate(history: list):
    """Warm-start guess for the next multiplier solve.

    Multiplier trajectories are smooth across iterations, so a quadratic
    extrapolation usually starts Newton within one certified step of the
    root; the solver discards guesses that land beyond the pole.
    """
    if not history:
        return None
    if len(history) == 1:
        return history[0]
    if len(history) == 2:
        return 2.0 * history[1] - history[0]
    return 3.0 * (history[2] - history[1]) + history[0]


def _mu_step(Vm, L, R, plan, p, eps, tol, max_iters, mu_warm, ws=None, out=None):
    """One multiplicative update of R in Vm ~ L @ R, constraints exact."""
    coeff = mu_coefficients(Vm, L, R, p, ws=ws)
    Rn = update_unconstrained(R, coeff, p, out=out)
    mus, nev, nsec = None, 0, 0.0
    if plan.n_constraints:
        mus, nev, nsec = apply_linear_constraints(
            Rn, R, coeff, plan, p, tol=_solve_tol(tol, plan.rhs),
            max_iters=max_iters, mu_init=mu_warm, ws=ws,
        )
    np.maximum(Rn, eps, out=Rn)
    return Rn, mus, nev, nsec


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def fit_constrained(
    V: np.ndarray,
    K: int,
    cs_w: ConstraintSet,
    cs_h: ConstraintSet,
    opts: SolverOptions,
    W0: np.ndarray | None = None,
    H0: np.ndarray | None = None,
):
    """Alternating MU under disjoint weighted-sum constraints on W and H.

    Factors start feasible (seeded entries are rescaled once per block) and
    every update lands back on the constraints.  With empty constraint sets
    this is exactly the baseline multiplicative-update algorithm.
    """
    V = np.asarray(V, dtype=float)
    p = beta_params(opts.beta)
    _check_data(V, p)
    F, N = V.shape
    ensure_valid(cs_w, F, K)
    ensure_valid(cs_h, K, N)
    if cs_w.spheres or cs_h.spheres:
        raise ValueError("sphere constraints belong to fit_sparse_sphere_kl")
    if opts.beta > 2.0 and not (cs_w.is_empty() and cs_h.is_empty()):
        raise ValueError("constrained updates support beta <= 2 only")

    eps = _resolve_eps(V, opts)
    plan_h = LinearSolvePlan.build(cs_h, K, N)
    plan_wt = LinearSolvePlan.build(_transpose_constraints(cs_w), K, F)

    rng = np.random.default_rng(opts.seed)
    W = np.asarray(W0, dtype=float).copy() if W0 is not None else _draw_positive(rng, (F, K))
    H = np.asarray(H0, dtype=float).copy() if H0 is not None else _draw_positive(rng, (K, N))
    Wt = np.ascontiguousarray(W.T)
    _project_linear(H, plan_h)
    _project_linear(Wt, plan_wt)
    W = np.ascontiguousarray(Wt.T)
    np.maximum(W, eps, out=W)
    np.maximum(H, eps, out=H)

    Vt = np.ascontiguousarray(V.T)
    trace = ConvergenceTrace()
    t_start = time.perf_counter()

    # reusable workspaces and ping-pong factor buffers: the hot loop would
    # otherwise spend most of its time in the allocator at production sizes
    ws_h: dict = {}
    ws_w: dict = {}
    H_spare = np.empty_like(H)
    Wt_spare = np.empty((K, F))
    W_spare = np.empty_like(W)

    def residual() -> float:
        return max(_linear_residual(H, plan_h), _linear_residual(W.T, plan_wt))

    newton_evals = 0
    newton_secs = 0.0

    def record(it, mu_w=None, mu_h=None) -> None:
        rec = ws_h.get("rec.wh")
        if rec is None or rec.shape != V.shape:
            rec = ws_h["rec.wh"] = np.empty(V.shape)
        np.matmul(W, H, out=rec)
        div = d_beta_sum(V, rec, p, ws=ws_h)
        trace.record(
            it, div, 0.0, residual(), newton_evals, 0,
            time.perf_counter() - t_start, newton_secs, mu_w, mu_h,
        )

    if opts.record_trace:
        record(0)
    hist_h: list = []
    hist_w: list = []
    for it in range(1, opts.max_iters + 1):
        H_new, mu_h, nev_h, nsec_h = _mu_step(
            V, W, H, plan_h, p, eps, opts.tol_residual, 200,
            _extrapolate(hist_h), ws=ws_h, out=H_spare,
        )
        H_spare, H = H, H_new
        Wt_new, mu_w, nev_w, nsec_w = _mu_step(
            Vt, H.T, W.T, plan_wt, p, eps, opts.tol_residual, 200,
            _extrapolate(hist_w), ws=ws_w, out=Wt_spare,
        )
        W_spare[...] = Wt_new.T
        W_spare, W = W, W_spare
        _push(hist_h, mu_h)
        _push(hist_w, mu_w)
        newton_evals += nev_h + nev_w
        newton_secs += nsec_h + nsec_w
        if (opts.record_trace and it % opts.objective_every == 0) or it == opts.max_iters:
            record(it, mu_w, mu_h)
    return W, H, trace


def fit_baseline(V, K, opts: SolverOptions, W0=None, H0=None):
    """Unconstrained multiplicative updates for both factors."""
    empty = ConstraintSet()
    return fit_constrained(V, K, empty, empty, opts, W0=W0, H0=H0)


def fit_ssnmf(V, K, opts: SolverOptions, W0=None, H0=None):
    """beta-NMF with every column of H on the unit simplex."""
    V = np.asarray(V, dtype=float)
    cs_h = simplex_columns(K, V.shape[1])
    return fit_constrained(V, K, ConstraintSet(), cs_h, opts, W0=W0, H0=H0)


def fit_minvol_kl(
    V: np.ndarray,
    K: int,
    lam: float,
    delta: float,
    opts: SolverOptions,
    W0: np.ndarray | None = None,
    H0: np.ndarray | None = None,
):
    """Volume-penalized KL-NMF with column-stochastic W.

    Per iteration: plain KL step for H, then the closed-form penalized step
    for W with one multiplier per column keeping each column sum at one.
    The recorded objective is the divergence plus lam * logdet(W.T W + dI).
    """
    V = np.asarray(V, dtype=float)
    if opts.beta != 1.0:
        raise ValueError("the min-vol driver is specific to beta = 1")
    p = beta_params(1.0)
    _check_data(V, p)
    F, N = V.shape
    if lam < 0.0 or delta <= 0.0:
        raise ValueError("need lam >= 0 and delta > 0")

    eps = _resolve_eps(V, opts)
    rng = np.random.default_rng(opts.seed)
    W = np.asarray(W0, dtype=float).copy() if W0 is not None else _draw_positive(rng, (F, K))
    H = np.asarray(H0, dtype=float).copy() if H0 is not None else _draw_positive(rng, (K, N))
    W /= W.sum(axis=0, keepdims=True)
    np.maximum(W, eps, out=W)
    np.maximum(H, eps, out=H)

    trace = ConvergenceTrace()
    t_start = time.perf_counter()
    newton_evals = 0
    newton_secs = 0.0
    ws: dict = {}
    H_spare = np.empty_like(H)
    # the state of the updated W doubles as the recorded penalty and as the
    # next iteration's majorizer input, so one factorization serves both
    state = minvol_state(W, lam, delta)

    def record(it, mu=None) -> None:
        rec = ws.get("rec.wh")
        if rec is None or rec.shape != V.shape:
            rec = ws["rec.wh"] = np.empty(V.shape)
        np.matmul(W, H, out=rec)
        div = d_beta_sum(V, rec, p, ws=ws)
        pen = lam * state.logdet
        res = float(np.max(np.abs(W.sum(axis=0) - 1.0)))
        trace.record(
            it, div, pen, res, newton_evals, 0,
            time.perf_counter() - t_start, newton_secs, mu_w=mu,
        )

    if opts.record_trace:
        record(0)
    hist: list = []
    for it in range(1, opts.max_iters + 1):
        coeff_h = mu_coefficients(V, W, H, p, ws=ws)
        H_new = update_unconstrained(H, coeff_h, p, out=H_spare)
        np.maximum(H_new, eps, out=H_new)
        H_spare, H = H, H_new

        coeff_w = minvol_coefficients(V, W, H, state, ws=ws)
        t0 = time.perf_counter()
        mu, evals = solve_minvol_multipliers(
            W, coeff_w, tol=float(_solve_tol(opts.tol_residual, 1.0)),
            max_iters=200, mu_init=_extrapolate(hist),
        )
        newton_secs += time.perf_counter() - t0
        newton_evals += int(evals.sum())
        W = update_minvol_w(W, coeff_w, mu)
        np.maximum(W, eps, out=W)
        state = minvol_state(W, lam, delta)
        _push(hist, mu)
        if (opts.record_trace and it % opts.objective_every == 0) or it == opts.max_iters:
            record(it, mu)
    return W, H, trace


def fit_sparse_sphere_kl(
    V: np.ndarray,
    K: int,
    schedule: SparsitySchedule,
    rho: float,
    opts: SolverOptions,
    W0: np.ndarray | None = None,
    H0: np.ndarray | None = None,
):
    """l1-sparse KL-NMF with every column of W on the sphere of radius sqrt(rho).

    When a column admits no positive multiplier (its unconstrained step
    already falls inside the sphere), the plain KL step is rescaled onto the
    sphere and the matching H row is counter-scaled so WH is unchanged; such
    iterations are flagged in the trace and excluded from the monotonicity
    guarantee.
    """
    V = np.asarray(V, dtype=float)
    if opts.beta != 1.0:
        raise ValueError("the sparse-sphere driver is specific to beta = 1")
    p = beta_params(1.0)
    _check_data(V, p)
    F, N = V.shape
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    lam = schedule.initial_lambdas(K)

    eps = _resolve_eps(V, opts)
    rng = np.random.default_rng(opts.seed)
    W = np.asarray(W0, dtype=float).copy() if W0 is not None else _draw_positive(rng, (F, K))
    H = np.asarray(H0, dtype=float).copy() if H0 is not None else _draw_positive(rng, (K, N))
    W *= math.sqrt(rho) / np.linalg.norm(W, axis=0, keepdims=True)
    np.maximum(W, eps, out=W)
    np.maximum(H, eps, out=H)

    trace = ConvergenceTrace()
    t_start = time.perf_counter()
    newton_evals = 0
    newton_secs = 0.0
    fallbacks_total = 0

    def record(it, mu=None) -> None:
        div = d_beta_sum(V, W @ H, p)
        pen = float(lam @ H.sum(axis=1))
        res = float(np.max(np.abs(np.sum(W * W, axis=0) - rho)))
        trace.record(
            it, div, pen, res, newton_evals, fallbacks_total,
            time.perf_counter() - t_start, newton_secs, mu_w=mu,
        )

    if opts.record_trace:
        record(0)
    for it in range(1, opts.max_iters + 1):
        coeff_h = mu_coefficients(V, W, H, p)
        H = update_sparse_h(H, coeff_h, lam)
        np.maximum(H, eps, out=H)

        t0 = time.perf_counter()
        W_new, results = update_sphere_all(
            W, V, H, rho, tol=float(_solve_tol(opts.tol_residual, rho)), max_iters=200
        )
        newton_secs += time.perf_counter() - t0
        for i, res in enumerate(results):
            if res.fallback:
                H[i, :] *= res.h_row_scale
        W = W_new
        np.maximum(W, eps, out=W)
        np.maximum(H, eps, out=H)

        if schedule.window[0] <= it <= schedule.window[1]:
            for k in range(K):
                if hoyer_sparsity(H[k, :]) < schedule.target_sp:
                    lam[k] *= schedule.rate_alpha

        newton_evals += sum(r.evals for r in results)
        fallbacks_total += sum(res.fallback for res in results)
        if (opts.record_trace and it % opts.objective_every == 0) or it == opts.max_iters:
            mu = np.array([math.nan if r.fallback else r.mu for r in results])
            record(it, mu)
    return W, H, trace
