"""Command-line front end.

Runs one fit per invocation and writes W.csv, H.csv, trace.csv and
summary.json into the output directory.  Exit codes: 0 on success, 2 for
validation problems, 3 for solver failures, 4 for I/O trouble.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracle, updates
from .algorithms import (
    SolverOptions,
    SparsitySchedule,
    fit_baseline,
    fit_constrained,
    fit_minvol_kl,
    fit_sparse_sphere_kl,
    fit_ssnmf,
)
from .constraints import ConstraintError, ConstraintSet
from .divergence import DomainError, beta_params
from .matio import MatrixIOError, load_matrix, parse_constraints, save_matrix, write_trace_csv
from .rootfind import SolverError

MODELS = ("baseline", "constrained", "ssnmf", "minvol", "sparse-sphere")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


@dataclass
class RunManifest:
    model: str
    v_path: str
    out_dir: str
    rank: int = 4
    beta: float = 1.0
    iters: int = 300
    seed: int = 0
    tol: float = 1e-6
    floor_eps: float | None = None
    objective_every: int = 1
    w0_path: str | None = None
    h0_path: str | None = None
    constraints_path: str | None = None
    lam: float = 0.0
    delta: float = 0.1
    rho: float = 1.0
    lambda0: float = 0.05
    target_sparsity: float = 0.5
    alpha_rate: float = 1.05
    schedule_window: tuple[int, int] = (1, 150)
    verify: bool = False


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eqnmf",
        description="beta-NMF with exact disjoint equality constraints",
    )
    ap.add_argument("v_path", help="data matrix V (.csv, .mtx or .mm)")
    ap.add_argument("--model", choices=MODELS, default="baseline")
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--iters", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-6, help="multiplier residual tolerance")
    ap.add_argument("--lambda", dest="lam", type=float, default=0.1,
                    help="volume penalty weight (minvol model)")
    ap.add_argument("--delta", type=float, default=0.1, help="logdet regularizer shift")
    ap.add_argument("--rho", type=float, default=1.0, help="squared column norm (sparse-sphere)")
    ap.add_argument("--lambda0", type=float, default=0.05, help="initial row penalty")
    ap.add_argument("--target-sparsity", type=float, default=0.5)
    ap.add_argument("--alpha-rate", type=float, default=1.05)
    ap.add_argument("--schedule-window", default="1,150", metavar="A,B")
    ap.add_argument("--constraints", dest="constraints_path", default=None, metavar="FILE",
                    help="constraint file applied to H (constrained model)")
    ap.add_argument("--w0", dest="w0_path", default=None)
    ap.add_argument("--h0", dest="h0_path", default=None)
    ap.add_argument("--objective-every", type=int, default=1)
    ap.add_argument("--out", dest="out_dir", default="eqnmf-out")
    ap.add_argument("--verify", action="store_true",
                    help="append an oracle-agreement report to summary.json")
    return ap


def manifest_from_args(argv: list[str]) -> RunManifest:
    ns = build_parser().parse_args(argv)
    try:
        a, b = (int(tok) for tok in ns.schedule_window.split(","))
    except ValueError:
        raise ConstraintError(
            f"--schedule-window must be two integers 'a,b', got {ns.schedule_window!r}"
        ) from None
    return RunManifest(
        model=ns.model,
        v_path=ns.v_path,
        out_dir=ns.out_dir,
        rank=ns.rank,
        beta=ns.beta,
        iters=ns.iters,
        seed=ns.seed,
        tol=ns.tol,
        objective_every=ns.objective_every,
        w0_path=ns.w0_path,
        h0_path=ns.h0_path,
        constraints_path=ns.constraints_path,
        lam=ns.lam,
        delta=ns.delta,
        rho=ns.rho,
        lambda0=ns.lambda0,
        target_sparsity=ns.target_sparsity,
        alpha_rate=ns.alpha_rate,
        schedule_window=(a, b),
        verify=ns.verify,
    )


def _load_optional(path: str | None) -> np.ndarray | None:
    return None if path is None else load_matrix(path)


def _verify_report(manifest: RunManifest, V, W, H, p) -> dict:
    """Cross-check the multiplier machinery on the final iterate.

    For column-simplex models the first few column blocks are re-solved by
    the brute-force surrogate minimizer; for the sphere and min-vol models
    each column's root function is scanned around its solved multiplier for
    sign-change uniqueness.
    """
    model = manifest.model
    if model in ("ssnmf", "constrained"):
        coeff = updates.mu_coefficients(V, W, H, p)
        K, N = H.shape
        worst = 0.0
        checked = 0
        for n in range(min(N, 8)):
            if not 2 <= K <= 3:
                break
            from .constraints import LinearConstraint

            lc = LinearConstraint.of([(k, n) for k in range(K)])
            entries, _ = updates.update_linear_constrained(H, coeff, lc, p, tol=manifest.tol)
            funcs = updates.majorizer_entry_functions(
                coeff.numer[:, n], coeff.denom[:, n], H[:, n], p
            )
            ref = oracle.minimize_majorizer_on_simplex_slice(
                funcs, np.ones(K), 1.0, oracle.OracleConfig(grid_points=301)
            )
            worst = max(worst, float(np.max(np.abs(entries - ref))))
            checked += 1
        return {"kind": "oracle-agreement", "blocks_checked": checked, "max_abs_gap": worst}
    if model == "sparse-sphere":
        WH = W @ H
        S = W * ((V / WH) @ H.T)
        c0s = H.sum(axis=1)
        rho = manifest.rho
        changes = []
        for i in range(W.shape[1]):
            s = S[:, i]
            c0 = float(c0s[i])

            def r(mu, s=s, c0=c0):
                u = np.sqrt(c0 * c0 + 8.0 * np.asarray(mu)[..., None] * s)
                wcol = 2.0 * s / (u + c0)
                return np.sum(wcol * wcol, axis=-1) - rho

            hi = 10.0 * (1.0 + float(np.sum((s / c0) ** 2)) / rho)
            changes.append(oracle.scan_root_uniqueness(r, (1e-12, hi), samples=4001))
        return {"kind": "root-uniqueness", "sign_changes_per_column": changes}
    if model == "minvol":
        state = updates.minvol_state(W, manifest.lam, manifest.delta)
        coeff = updates.minvol_coefficients(V, W, H, state)
        mus, _ = updates.solve_minvol_multipliers(W, coeff, tol=manifest.tol)
        changes = []
        for i in range(W.shape[1]):
            def r(mu, i=i):
                mu = np.atleast_1d(np.asarray(mu, dtype=float))
                out = np.empty(mu.size)
                for j, m in enumerate(mu):
                    vec = mus.copy()
                    vec[i] = m
                    out[j] = float(updates.update_minvol_w(W, coeff, vec)[:, i].sum()) - 1.0
                return out

            span = 10.0 * (1.0 + abs(float(mus[i])))
            changes.append(
                oracle.scan_root_uniqueness(r, (mus[i] - span, mus[i] + span), samples=801)
            )
        return {"kind": "root-uniqueness", "sign_changes_per_column": changes}
    return {"kind": "none", "note": "verification applies to constrained models"}


def run(manifest: RunManifest) -> int:
    out = Path(manifest.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return EXIT_IO

    def fail(code: int, kind: str, exc: Exception) -> int:
        record = {"error": kind, "message": str(exc), "model": manifest.model}
        try:
            (out / "error.json").write_text(json.dumps(record, indent=2))
        except OSError:
            pass
        print(json.dumps(record), file=sys.stderr)
        return code

    try:
        V = load_matrix(manifest.v_path, require_nonnegative=True)
        W0 = _load_optional(manifest.w0_path)
        H0 = _load_optional(manifest.h0_path)
    except (MatrixIOError, OSError) as exc:
        return fail(EXIT_IO, "io", exc)

    opts = SolverOptions(
        max_iters=manifest.iters,
        beta=manifest.beta,
        seed=manifest.seed,
        tol_residual=manifest.tol,
        floor_eps=manifest.floor_eps,
        objective_every=manifest.objective_every,
    )
    t0 = time.perf_counter()
    try:
        if manifest.model == "baseline":
            W, H, trace = fit_baseline(V, manifest.rank, opts, W0=W0, H0=H0)
        elif manifest.model == "ssnmf":
            W, H, trace = fit_ssnmf(V, manifest.rank, opts, W0=W0, H0=H0)
        elif manifest.model == "constrained":
            if manifest.constraints_path is None:
                raise ConstraintError("the constrained model needs --constraints FILE")
            cs_h = parse_constraints(manifest.constraints_path, manifest.rank, V.shape[1])
            W, H, trace = fit_constrained(
                V, manifest.rank, ConstraintSet(), cs_h, opts, W0=W0, H0=H0
            )
        elif manifest.model == "minvol":
            W, H, trace = fit_minvol_kl(
                V, manifest.rank, manifest.lam, manifest.delta, opts, W0=W0, H0=H0
            )
        else:
            schedule = SparsitySchedule(
                lambda0=manifest.lambda0,
                rate_alpha=manifest.alpha_rate,
                target_sp=manifest.target_sparsity,
                window=manifest.schedule_window,
            )
            W, H, trace = fit_sparse_sphere_kl(
                V, manifest.rank, schedule, manifest.rho, opts, W0=W0, H0=H0
            )
    except (ConstraintError, DomainError, MatrixIOError, ValueError) as exc:
        return fail(EXIT_VALIDATION, "validation", exc)
    except SolverError as exc:
        return fail(EXIT_SOLVER, "solver", exc)
    wall = time.perf_counter() - t0

    summary = {
        "model": manifest.model,
        "final_objective": trace.objective[-1],
        "final_divergence": trace.divergence[-1],
        "final_penalty": trace.penalty[-1],
        "max_constraint_residual": max(trace.max_residual),
        "fallback_total": int(trace.fallback_count[-1]),
        "wall_seconds": wall,
        "manifest": dataclasses.asdict(manifest),
    }
    if manifest.verify:
        summary["verify"] = _verify_report(manifest, V, W, H, beta_params(manifest.beta))
    try:
        save_matrix(W, out / "W.csv")
        save_matrix(H, out / "H.csv")
        write_trace_csv(trace, out / "trace.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    except OSError as exc:
        return fail(EXIT_IO, "io", exc)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        manifest = manifest_from_args(sys.argv[1:] if argv is None else argv)
    except ConstraintError as exc:
        print(json.dumps({"error": "validation", "message": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
