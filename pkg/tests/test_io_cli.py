import csv
import json
from pathlib import Path

import numpy as np
import pytest

from eqnmf import load_matrix, parse_constraints, save_matrix, synth_simplex
from eqnmf.cli import main
from eqnmf.matio import MatrixIOError

# -- matrix formats -----------------------------------------------------------


def test_csv_identity_roundtrip(tmp_path):
    path = tmp_path / "eye.csv"
    path.write_text("1,0\n0,1\n")
    M = load_matrix(path)
    assert np.array_equal(M, np.eye(2))


@pytest.mark.parametrize("suffix", [".csv", ".mtx", ".mm"])
def test_roundtrip_is_exact(tmp_path, suffix):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((5, 7)) * 10.0 ** rng.integers(-8, 8, (5, 7))
    path = tmp_path / f"m{suffix}"
    save_matrix(M, path)
    back = load_matrix(path)
    assert np.array_equal(back, M)


def test_negative_entry_rejected_with_location(tmp_path):
    path = tmp_path / "v.csv"
    save_matrix(np.array([[1.0, 2.0], [3.0, -4.0]]), path)
    with pytest.raises(MatrixIOError, match="row 1, column 1"):
        load_matrix(path, require_nonnegative=True)
    assert load_matrix(path).shape == (2, 2)


def test_csv_parse_errors_carry_position(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,oops\n")
    with pytest.raises(MatrixIOError, match="line 2, column 2"):
        load_matrix(path)
    path.write_text("1,2\n3\n")
    with pytest.raises(MatrixIOError, match="line 2"):
        load_matrix(path)


def test_matrixmarket_layout_is_column_major(tmp_path):
    path = tmp_path / "m.mtx"
    path.write_text(
        "%%MatrixMarket matrix array real general\n% comment\n2 3\n1\n2\n3\n4\n5\n6\n"
    )
    M = load_matrix(path)
    assert np.array_equal(M, np.array([[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]]))
    path.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 5\n")
    with pytest.raises(MatrixIOError):
        load_matrix(path)


# -- constraint files ----------------------------------------------------------


def test_parse_constraints_file(tmp_path):
    path = tmp_path / "cons.txt"
    path.write_text(
        """
        # a weighted sum and a sphere
        linear 2.0 0,0:1 1,0:2 2,0:3
        linear 1.0 0,1 1,1
        sphere 1 0.5
        """
    )
    cs = parse_constraints(path, 3, 2)
    assert len(cs.linear) == 2 and len(cs.spheres) == 1
    assert cs.linear[0].rhs == 2.0
    assert cs.linear[0].weights == (1.0, 2.0, 3.0)
    assert cs.linear[1].weights == (1.0, 1.0)
    assert cs.spheres[0].column == 1 and cs.spheres[0].radius_sq == 0.5


def test_parse_constraints_reports_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("linear\n")
    with pytest.raises(MatrixIOError, match="line 1"):
        parse_constraints(path, 2, 2)
    path.write_text("banana 1 2\n")
    with pytest.raises(MatrixIOError, match="banana"):
        parse_constraints(path, 2, 2)


# -- synthetic data --------------------------------------------------------------


def test_synth_level_zero_is_exact():
    for noise in ("gaussian", "poisson", "gamma-multiplicative"):
        V, W, H = synth_simplex(6, 2, 9, noise=noise, level=0.0, seed=3)
        assert np.allclose(V, W @ H)
        assert np.allclose(H.sum(axis=0), 1.0)


def test_synth_reproducible_and_validated():
    V1, _, _ = synth_simplex(5, 2, 6, noise="poisson", level=1.0, seed=9)
    V2, _, _ = synth_simplex(5, 2, 6, noise="poisson", level=1.0, seed=9)
    assert np.array_equal(V1, V2)
    with pytest.raises(ValueError):
        synth_simplex(5, 2, 6, noise="salt-and-pepper")
    with pytest.raises(ValueError):
        synth_simplex(0, 2, 6)
    with pytest.raises(ValueError):
        synth_simplex(5, 2, 6, level=-1.0)
    with pytest.raises(ValueError):
        synth_simplex(5, 2, 6, pure_cols=4)


def test_synth_pure_columns_are_scaled_basis_columns():
    V, W, H = synth_simplex(7, 3, 12, noise="poisson", level=0.0, seed=5, pure_cols=2)
    for k in range(3):
        assert np.allclose(V[:, 2 * k], W[:, k])


def test_poisson_noise_variance_matches_mean():
    # at level 1 the entries are Poisson draws with the product as the rate
    F, K, N = 4, 2, 40_000
    V, W, H = synth_simplex(F, K, N, noise="poisson", level=1.0, seed=13)
    Y = W @ H
    resid = V - Y
    # variance of (V - Y) pooled over entries with similar rate
    rate = float(Y.mean())
    assert np.var(resid) == pytest.approx(rate, rel=0.05)


# -- CLI ----------------------------------------------------------------------


def write_data(tmp_path, F=12, K=2, N=10, seed=1):
    V, _, _ = synth_simplex(F, K, N, noise="poisson", level=0.5, seed=seed)
    V = np.maximum(V, 1e-6)
    path = tmp_path / "V.csv"
    save_matrix(V, path)
    return path


def read_trace(out_dir):
    with open(Path(out_dir) / "trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def test_cli_baseline_run(tmp_path):
    vpath = write_data(tmp_path)
    out = tmp_path / "out"
    code = main([str(vpath), "--model", "baseline", "--rank", "2", "--iters", "30",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    rows = read_trace(out)
    objs = [float(r["objective"]) for r in rows]
    assert objs == sorted(objs, reverse=True) or all(
        b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(objs, objs[1:])
    )
    assert [int(r["iter"]) for r in rows] == list(range(31))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_objective"] == float(rows[-1]["objective"])
    W = load_matrix(out / "W.csv")
    H = load_matrix(out / "H.csv")
    assert W.shape == (12, 2) and H.shape == (2, 10)


def test_cli_ssnmf_run_meets_constraints(tmp_path):
    vpath = write_data(tmp_path)
    out = tmp_path / "out"
    code = main([str(vpath), "--model", "ssnmf", "--rank", "2", "--iters", "25",
                 "--beta", "1.5", "--out", str(out), "--verify"])
    assert code == 0
    rows = read_trace(out)
    assert all(float(r["max_constraint_residual"]) <= 1e-6 for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verify"]["kind"] == "oracle-agreement"
    assert summary["verify"]["max_abs_gap"] <= 1e-5


def test_cli_constrained_model_with_file(tmp_path):
    vpath = write_data(tmp_path)
    cons = tmp_path / "cons.txt"
    cons.write_text("linear 1.0 0,0 1,0\nlinear 2.0 0,5:1 1,5:2\n")
    out = tmp_path / "out"
    code = main([str(vpath), "--model", "constrained", "--rank", "2", "--iters", "20",
                 "--constraints", str(cons), "--out", str(out)])
    assert code == 0
    H = load_matrix(out / "H.csv")
    assert abs(H[0, 0] + H[1, 0] - 1.0) <= 1e-6
    assert abs(H[0, 5] + 2 * H[1, 5] - 2.0) <= 1e-6


def test_cli_minvol_and_sparse_runs(tmp_path):
    vpath = write_data(tmp_path)
    out1 = tmp_path / "mv"
    assert main([str(vpath), "--model", "minvol", "--rank", "2", "--iters", "20",
                 "--lambda", "0.1", "--delta", "0.5", "--out", str(out1), "--verify"]) == 0
    rows = read_trace(out1)
    assert all(float(r["max_constraint_residual"]) <= 1e-6 for r in rows)
    summary = json.loads((out1 / "summary.json").read_text())
    assert summary["verify"]["kind"] == "root-uniqueness"
    assert all(c == 1 for c in summary["verify"]["sign_changes_per_column"])

    out2 = tmp_path / "sp"
    assert main([str(vpath), "--model", "sparse-sphere", "--rank", "2", "--iters", "20",
                 "--rho", "1.0", "--target-sparsity", "0.4", "--schedule-window", "1,10",
                 "--out", str(out2)]) == 0
    W = load_matrix(out2 / "W.csv")
    assert np.max(np.abs(np.sum(W * W, axis=0) - 1.0)) <= 1e-6


def test_cli_exit_codes(tmp_path):
    missing = tmp_path / "nope.csv"
    assert main([str(missing), "--out", str(tmp_path / "o1")]) == 4

    neg = tmp_path / "neg.csv"
    save_matrix(np.array([[1.0, -2.0]]), neg)
    assert main([str(neg), "--out", str(tmp_path / "o2")]) == 4

    vpath = write_data(tmp_path)
    # IS divergence on data containing a zero entry: validation error
    zero = tmp_path / "zero.csv"
    save_matrix(np.array([[1.0, 0.0], [0.5, 2.0]]), zero)
    code = main([str(zero), "--model", "baseline", "--beta", "0", "--rank", "1",
                 "--iters", "5", "--out", str(tmp_path / "o3")])
    assert code == 2
    err = json.loads((tmp_path / "o3" / "error.json").read_text())
    assert err["error"] == "validation"

    assert main([str(vpath), "--model", "constrained", "--out", str(tmp_path / "o4")]) == 2


def test_cli_accepts_matrixmarket_input(tmp_path):
    V, _, _ = synth_simplex(6, 2, 8, noise="poisson", level=0.5, seed=2)
    V = np.maximum(V, 1e-6)
    path = tmp_path / "V.mtx"
    save_matrix(V, path)
    out = tmp_path / "out"
    assert main([str(path), "--model", "baseline", "--rank", "2", "--iters", "5",
                 "--out", str(out)]) == 0
    assert load_matrix(out / "W.csv").shape == (6, 2)


def test_cli_rejects_bad_schedule_window(tmp_path):
    vpath = write_data(tmp_path)
    assert main([str(vpath), "--model", "sparse-sphere", "--rank", "2",
                 "--schedule-window", "oops", "--out", str(tmp_path / "o")]) == 2


def test_cli_solver_failure_exit_code(tmp_path):
    # a simplex constraint over a column whose data is all zero: every update
    # numerator vanishes and the multiplier equation has no root
    V, _, _ = synth_simplex(8, 2, 6, noise="poisson", level=0.5, seed=4)
    V = np.maximum(V, 1e-6)
    V[:, 3] = 0.0
    vpath = tmp_path / "V.csv"
    save_matrix(V, vpath)
    cons = tmp_path / "cons.txt"
    cons.write_text("linear 1.0 0,3 1,3\n")
    code = main([str(vpath), "--model", "constrained", "--rank", "2", "--iters", "5",
                 "--constraints", str(cons), "--out", str(tmp_path / "o")])
    assert code == 3
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"] == "solver"


def test_cli_trace_floats_roundtrip(tmp_path):
    vpath = write_data(tmp_path)
    out = tmp_path / "out"
    assert main([str(vpath), "--model", "baseline", "--rank", "2", "--iters", "5",
                 "--seed", "8", "--out", str(out)]) == 0
    # rerun with identical options: identical numeric columns
    out2 = tmp_path / "out2"
    assert main([str(vpath), "--model", "baseline", "--rank", "2", "--iters", "5",
                 "--seed", "8", "--out", str(out2)]) == 0
    r1, r2 = read_trace(out), read_trace(out2)
    for a, b in zip(r1, r2):
        assert a["objective"] == b["objective"]
        assert a["divergence"] == b["divergence"]
