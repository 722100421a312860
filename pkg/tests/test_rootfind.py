import math

import numpy as np
import pytest

from eqnmf import (
    DomainHint,
    MaxItersError,
    NoSignChangeError,
    RootProblem,
    beta_params,
    solve_decreasing_convex_positive,
    solve_increasing_convex,
)
from eqnmf.oracle import scan_root_uniqueness


def ratio_problem(C, D, w, y, rhs, gexp, history=None, tol=1e-6):
    """r(mu) = sum_q w*y*(C/(D - mu*w))**g - rhs, the multiplier residual."""
    C, D, w, y = (np.asarray(a, dtype=float) for a in (C, D, w, y))

    def r(mu):
        return float(np.sum(w * y * (C / (D - mu * w)) ** gexp) - rhs)

    def rp(mu):
        den = D - mu * w
        return float(gexp * np.sum(w * w * y * (C / den) ** gexp / den))

    t = float(np.min(D / w))
    return RootProblem(
        r, rp, DomainHint.INCREASING_CONVEX_LEFT_OF_POLE, t, tol_residual=tol, history=history
    )


def test_rational_example_from_interior_start():
    hist = []
    prob = RootProblem(
        lambda m: 2.0 / (2.0 - m) - 1.0,
        lambda m: 2.0 / (2.0 - m) ** 2,
        DomainHint.INCREASING_CONVEX_LEFT_OF_POLE,
        2.0,
        history=hist,
    )
    mu, iters = solve_increasing_convex(prob, mu0=1.5)
    assert abs(mu) <= 4e-6  # r(mu) = mu/(2-mu), so |r|<=1e-6 puts mu within 2e-6
    assert iters <= 8
    assert hist[0] == 1.5


def test_linear_r_is_one_step():
    prob = RootProblem(lambda m: m, lambda m: 1.0)
    mu, iters = solve_increasing_convex(prob)
    assert mu == 0.0 and iters == 1


def test_sum_of_rationals_collapses():
    prob = RootProblem(
        lambda m: 0.5 / (2.0 - m) + 1.5 / (2.0 - m) - 1.0,
        lambda m: 0.5 / (2.0 - m) ** 2 + 1.5 / (2.0 - m) ** 2,
        DomainHint.INCREASING_CONVEX_LEFT_OF_POLE,
        2.0,
    )
    mu, _ = solve_increasing_convex(prob)
    assert abs(mu) <= 4e-6


def test_sphere_example_and_no_positive_root():
    # per-entry C=1, S=2, rho=1: root at 0.5
    def r(mu):
        return ((math.sqrt(1.0 + 16.0 * mu) - 1.0) / (4.0 * mu)) ** 2 - 1.0

    def rp(mu):
        u = math.sqrt(1.0 + 16.0 * mu)
        w = 2.0 * 2.0 / (u + 1.0)
        dw = -8.0 * 4.0 / (u * (u + 1.0) ** 2)
        return 2.0 * w * dw

    prob = RootProblem(r, rp, DomainHint.DECREASING_CONVEX_ON_POSITIVES)
    mu, _ = solve_decreasing_convex_positive(prob, probe=1e-12 * 2.0)
    assert mu == pytest.approx(0.5, abs=1e-6)

    # C=2, S=1, rho=1: the mu -> 0+ limit is (S/C)**2 = 0.25 < rho
    def r2(mu):
        u = math.sqrt(4.0 + 8.0 * mu)
        return (2.0 / (u + 2.0)) ** 2 - 1.0

    prob2 = RootProblem(r2, lambda m: -1.0, DomainHint.DECREASING_CONVEX_ON_POSITIVES)
    assert solve_decreasing_convex_positive(prob2, probe=1e-12 * 3.0) is None


def test_reciprocal_example():
    prob = RootProblem(
        lambda m: 1.0 / m - 1.0, lambda m: -1.0 / m**2, DomainHint.DECREASING_CONVEX_ON_POSITIVES
    )
    mu, _ = solve_decreasing_convex_positive(prob)
    assert mu == pytest.approx(1.0, abs=1e-6)


def test_max_iters_error():
    # quadratic convergence from 1.5 cannot reach an impossible tolerance in 5 steps
    prob = RootProblem(
        lambda m: 2.0 / (2.0 - m) - 1.0,
        lambda m: 2.0 / (2.0 - m) ** 2,
        DomainHint.INCREASING_CONVEX_LEFT_OF_POLE,
        2.0,
        tol_residual=1e-300,
        max_iters=5,
    )
    with pytest.raises(MaxItersError):
        solve_increasing_convex(prob, mu0=1.5)


def test_no_sign_change_error():
    # increasing toward a negative limit: never crosses zero
    prob = RootProblem(
        lambda m: -2.0 + 1.0 / (1.0 + math.exp(-m)),
        lambda m: math.exp(-m) / (1.0 + math.exp(-m)) ** 2,
        DomainHint.INCREASING_CONVEX_LEFT_OF_POLE,
        math.inf,
    )
    with pytest.raises(NoSignChangeError):
        solve_increasing_convex(prob)


def random_ratio_instance(rng):
    q = int(rng.integers(2, 7))
    C = rng.uniform(0.1, 5.0, q)
    D = rng.uniform(0.2, 5.0, q)
    w = rng.uniform(0.3, 3.0, q)
    y = rng.uniform(0.05, 2.0, q)
    rhs = float(rng.uniform(0.2, 3.0))
    beta = float(rng.choice([0.0, 0.5, 1.0, 1.5]))
    return C, D, w, y, rhs, beta_params(beta).gamma_exp


def test_random_mu_instances_converge_fast_and_monotone():
    # the full thousand-instance sweep with dense scans runs in the
    # acceptance suite; here a decimated scan keeps the unit test quick
    rng = np.random.default_rng(42)
    for trial in range(1000):
        C, D, w, y, rhs, g = random_ratio_instance(rng)
        hist = []
        prob = ratio_problem(C, D, w, y, rhs, g, history=hist)
        mu, iters = solve_increasing_convex(prob)
        assert abs(prob.r(mu)) <= 1e-6
        assert mu < prob.upper_bound_t
        assert iters <= 60
        if trial % 20 == 0:
            # exactly one sign change on (-inf, t), scanning far left of the root
            t = prob.upper_bound_t
            lo_scan = mu - 10.0 * (abs(t) + abs(mu) + 1.0)
            n_changes = scan_root_uniqueness(prob.r, (lo_scan, t - 1e-9 * abs(t)), samples=2001)
            assert n_changes == 1
        # once the iterates enter (mu*, t) they decrease monotonically
        signs = [prob.r(h) for h in hist]
        inside = [h for h, s in zip(hist, signs) if s > 0.0]
        assert all(a >= b for a, b in zip(inside, inside[1:]))
        assert all(h > mu - 1e-9 * (1 + abs(mu)) for h in inside)


def test_safeguard_keeps_bracket_on_nasty_function():
    # steep rational: Newton from far left would overshoot past the pole,
    # the solver must recover through bisection and still land on the root
    hist = []
    prob = RootProblem(
        lambda m: 1e6 / (1.0 - m) - 1.0 if m < 1.0 else math.inf,
        lambda m: 1e6 / (1.0 - m) ** 2,
        DomainHint.INCREASING_CONVEX_LEFT_OF_POLE,
        1.0,
        history=hist,
    )
    mu, _ = solve_increasing_convex(prob)
    assert mu == pytest.approx(1.0 - 1e6, rel=1e-5)
    assert all(h < 1.0 for h in hist)


def test_decreasing_iterates_increase_from_below():
    hist = []
    prob = RootProblem(
        lambda m: 4.0 / (1.0 + m) ** 2 - 1.0,
        lambda m: -8.0 / (1.0 + m) ** 3,
        DomainHint.DECREASING_CONVEX_ON_POSITIVES,
        history=hist,
    )
    mu, _ = solve_decreasing_convex_positive(prob, probe=1e-10)
    assert mu == pytest.approx(1.0, abs=1e-5)
    vals = [4.0 / (1.0 + h) ** 2 - 1.0 for h in hist]
    below = [h for h, v in zip(hist, vals) if v > 0.0]
    assert all(a <= b for a, b in zip(below, below[1:]))
