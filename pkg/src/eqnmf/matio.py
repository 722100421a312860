"""Matrix and constraint file formats.

Matrices travel as numeric CSV or as MatrixMarket dense arrays, chosen by
extension; floats are written with 17 significant digits so a round trip
reproduces every bit.  Constraints use a line format:

    linear <rhs> <row,col:weight> <row,col:weight> ...
    sphere <col> <rho>

Indices are zero-based; blank lines and '#' comments are ignored.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .constraints import ConstraintSet, LinearConstraint, SphereConstraint

_MM_SUFFIXES = {".mtx", ".mm"}


class MatrixIOError(ValueError):
    """A matrix or constraint file failed to parse."""


def load_matrix(path: str | Path, require_nonnegative: bool = False) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in _MM_SUFFIXES:
        M = _load_matrixmarket(path)
    else:
        M = _load_csv(path)
    if require_nonnegative and M.min() < 0.0:
        r, c = np.unravel_index(int(np.argmin(M)), M.shape)
        raise MatrixIOError(
            f"{path}: negative entry {M[r, c]!r} at row {r}, column {c}; "
            "the data matrix must be nonnegative"
        )
    return M


def save_matrix(M: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    M = np.asarray(M, dtype=float)
    if path.suffix.lower() in _MM_SUFFIXES:
        _save_matrixmarket(M, path)
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in M:
                writer.writerow([f"{x:.17g}" for x in row])


def _load_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            parsed = []
            for colno, cell in enumerate(record, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise MatrixIOError(
                        f"{path}: line {lineno}, column {colno}: not a number: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise MatrixIOError(f"{path}: no numeric rows found")
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise MatrixIOError(
                f"{path}: line {lineno} has {len(row)} cells, expected {width}"
            )
    return np.asarray(rows, dtype=float)


def _load_matrixmarket(path: Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        fields = header.strip().lower().split()
        if len(fields) < 4 or fields[0] != "%%matrixmarket" or fields[1] != "matrix":
            raise MatrixIOError(f"{path}: not a MatrixMarket file: {header!r}")
        if fields[2] != "array" or fields[3] not in ("real", "integer"):
            raise MatrixIOError(
                f"{path}: only dense 'array real' matrices are supported, got {header!r}"
            )
        if len(fields) > 4 and fields[4] != "general":
            raise MatrixIOError(f"{path}: only 'general' symmetry is supported")
        line = fh.readline()
        lineno = 2
        while line.startswith("%"):
            line = fh.readline()
            lineno += 1
        try:
            rows, cols = (int(tok) for tok in line.split())
        except ValueError:
            raise MatrixIOError(f"{path}: line {lineno}: bad size line {line!r}") from None
        values = []
        for lineno, raw in enumerate(fh, start=lineno + 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                values.append(float(raw))
            except ValueError:
                raise MatrixIOError(
                    f"{path}: line {lineno}: not a number: {raw!r}"
                ) from None
    if len(values) != rows * cols:
        raise MatrixIOError(
            f"{path}: expected {rows * cols} values, found {len(values)}"
        )
    # MatrixMarket dense arrays are stored column-major
    return np.asarray(values, dtype=float).reshape((cols, rows)).T


def _save_matrixmarket(M: np.ndarray, path: Path) -> None:
    rows, cols = M.shape
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{rows} {cols}\n")
        for c in range(cols):
            for r in range(rows):
                fh.write(f"{M[r, c]:.17g}\n")


def parse_constraints(path: str | Path, rows: int, cols: int) -> ConstraintSet:
    """Read the line-oriented constraint format for a rows-by-cols factor."""
    path = Path(path)
    linear: list[LinearConstraint] = []
    spheres: list[SphereConstraint] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            kind = tokens[0].lower()
            try:
                if kind == "linear":
                    rhs = float(tokens[1])
                    pairs, weights = [], []
                    for tok in tokens[2:]:
                        rc, _, wtxt = tok.partition(":")
                        r_txt, _, c_txt = rc.partition(",")
                        pairs.append((int(r_txt), int(c_txt)))
                        weights.append(float(wtxt) if wtxt else 1.0)
                    if not pairs:
                        raise ValueError("no indices")
                    linear.append(LinearConstraint.of(pairs, weights, rhs))
                elif kind == "sphere":
                    spheres.append(SphereConstraint(int(tokens[1]), float(tokens[2])))
                else:
                    raise ValueError(f"unknown constraint kind {kind!r}")
            except (IndexError, ValueError) as exc:
                raise MatrixIOError(f"{path}: line {lineno}: {exc}") from None
    return ConstraintSet.of(linear, spheres)


def write_trace_csv(trace, path: str | Path) -> None:
    from .algorithms import TRACE_COLUMNS

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            writer.writerow(
                [
                    row[0],
                    *[f"{x:.17g}" for x in row[1:5]],
                    row[5],
                    row[6],
                    f"{row[7]:.17g}",
                ]
            )
