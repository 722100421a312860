"""Disjoint equality constraints over the entries of one factor matrix.

Two kinds are supported: weighted-sum (linear) constraints over an arbitrary
index set, and sphere constraints fixing the squared 2-norm of a whole
column.  Disjointness — no matrix entry may appear in two constraints — is
what lets each multiplier be solved independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConstraintError(ValueError):
    """A constraint set failed validation."""


@dataclass(frozen=True)
class IndexSet:
    """A set of (row, col) positions into a factor matrix."""

    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True)
class LinearConstraint:
    """weights . factor[pairs] == rhs, with positive weights and rhs."""

    indices: IndexSet
    weights: tuple[float, ...]
    rhs: float

    @staticmethod
    def of(pairs, weights=None, rhs: float = 1.0) -> "LinearConstraint":
        pairs = tuple((int(r), int(c)) for r, c in pairs)
        if weights is None:
            weights = (1.0,) * len(pairs)
        return LinearConstraint(IndexSet(pairs), tuple(float(w) for w in weights), float(rhs))


@dataclass(frozen=True)
class SphereConstraint:
    """sum_f factor[f, column]**2 == radius_sq over a whole column."""

    column: int
    radius_sq: float


@dataclass(frozen=True)
class ConstraintSet:
    linear: tuple[LinearConstraint, ...] = field(default=())
    spheres: tuple[SphereConstraint, ...] = field(default=())

    @staticmethod
    def of(linear=(), spheres=()) -> "ConstraintSet":
        return ConstraintSet(tuple(linear), tuple(spheres))

    def is_empty(self) -> bool:
        return not self.linear and not self.spheres


@dataclass(frozen=True)
class Violation:
    """First invariant broken by a constraint set, with the offending place."""

    message: str
    where: tuple | None = None

    def __str__(self) -> str:
        loc = f" at {self.where}" if self.where is not None else ""
        return self.message + loc


def validate(cs: ConstraintSet, rows: int, cols: int) -> Violation | None:
    """Return None if ``cs`` is admissible for a rows-by-cols factor.

    Checks, in order: nonempty index sets, in-range indices, no duplicate
    pair inside a set, positive weights, positive right-hand sides, positive
    sphere radii, and pairwise disjointness across all constraints.
    """
    seen: set[int] = set()
    for j, lc in enumerate(cs.linear):
        if len(lc.indices) == 0:
            return Violation(f"linear constraint {j} has an empty index set")
        if len(lc.weights) != len(lc.indices):
            return Violation(
                f"linear constraint {j} has {len(lc.weights)} weights "
                f"for {len(lc.indices)} indices"
            )
        if lc.rhs <= 0.0:
            return Violation(f"nonpositive rhs {lc.rhs!r} in linear constraint {j}")
        local: set[tuple[int, int]] = set()
        for (r, c), w in zip(lc.indices, lc.weights):
            if not (0 <= r < rows and 0 <= c < cols):
                return Violation(f"index out of range in linear constraint {j}", (r, c))
            if (r, c) in local:
                return Violation(f"duplicate index in linear constraint {j}", (r, c))
            local.add((r, c))
            if w <= 0.0:
                return Violation(f"nonpositive weight {w!r} in linear constraint {j}", (r, c))
            flat = r * cols + c
            if flat in seen:
                return Violation("overlap", (r, c))
            seen.add(flat)
    for i, sc in enumerate(cs.spheres):
        if not (0 <= sc.column < cols):
            return Violation(f"sphere constraint {i} column out of range", (None, sc.column))
        if sc.radius_sq <= 0.0:
            return Violation(f"nonpositive radius in sphere constraint {i}")
        for r in range(rows):
            flat = r * cols + sc.column
            if flat in seen:
                return Violation("overlap", (r, sc.column))
            seen.add(flat)
    return None


def ensure_valid(cs: ConstraintSet, rows: int, cols: int) -> None:
    """Raise :class:`ConstraintError` on the first violated invariant."""
    v = validate(cs, rows, cols)
    if v is not None:
        raise ConstraintError(str(v))


def complement(cs: ConstraintSet, rows: int, cols: int) -> IndexSet:
    """Entries of the factor appearing in no constraint."""
    covered = np.zeros((rows, cols), dtype=bool)
    for lc in cs.linear:
        for r, c in lc.indices:
            covered[r, c] = True
    for sc in cs.spheres:
        covered[:, sc.column] = True
    free = np.argwhere(~covered)
    return IndexSet(tuple((int(r), int(c)) for r, c in free))


def simplex_columns(rows: int, cols: int) -> ConstraintSet:
    """One unit-weight, sum-to-one constraint per column of a rows-by-cols factor."""
    if rows <= 0 or cols <= 0:
        raise ConstraintError(f"dimensions must be positive, got {rows}x{cols}")
    lin = tuple(
        LinearConstraint.of([(r, c) for r in range(rows)]) for c in range(cols)
    )
    return ConstraintSet(linear=lin)


def simplex_columns_of_w(f: int, k: int) -> ConstraintSet:
    """Column-stochastic constraints for an F-by-K basis factor."""
    return simplex_columns(f, k)
