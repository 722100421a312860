import numpy as np
import pytest

from eqnmf import (
    ConstraintError,
    ConstraintSet,
    LinearConstraint,
    SphereConstraint,
    complement,
    ensure_valid,
    simplex_columns,
    simplex_columns_of_w,
    validate,
)


def test_overlap_reported_with_indices():
    a = LinearConstraint.of([(0, 0), (0, 1)])
    b = LinearConstraint.of([(0, 0), (1, 0)])
    v = validate(ConstraintSet.of([a, b]), 2, 2)
    assert v is not None
    assert "overlap" in str(v)
    assert "(0, 0)" in str(v)


def test_nonpositive_weight_rejected():
    lc = LinearConstraint.of([(0, 0), (1, 0)], weights=[1.0, 0.0])
    v = validate(ConstraintSet.of([lc]), 2, 2)
    assert v is not None and "weight" in str(v)


def test_valid_column_simplex_cover():
    cs = simplex_columns(3, 4)
    assert validate(cs, 3, 4) is None
    assert len(cs.linear) == 4
    assert all(len(lc.indices) == 3 for lc in cs.linear)


def test_empty_index_set_rejected():
    lc = LinearConstraint(indices=__import__("eqnmf").IndexSet(()), weights=(), rhs=1.0)
    v = validate(ConstraintSet.of([lc]), 2, 2)
    assert v is not None and "empty" in str(v)


def test_out_of_range_and_duplicates_rejected():
    v = validate(ConstraintSet.of([LinearConstraint.of([(0, 5)])]), 2, 2)
    assert v is not None and "range" in str(v)
    v = validate(ConstraintSet.of([LinearConstraint.of([(0, 0), (0, 0)])]), 2, 2)
    assert v is not None and "duplicate" in str(v)
    v = validate(ConstraintSet.of([LinearConstraint.of([(0, 0)], rhs=-1.0)]), 2, 2)
    assert v is not None and "rhs" in str(v)


def test_sphere_validation_and_overlap():
    cs = ConstraintSet.of(spheres=[SphereConstraint(0, 1.0)])
    assert validate(cs, 3, 2) is None
    v = validate(ConstraintSet.of(spheres=[SphereConstraint(0, -1.0)]), 3, 2)
    assert v is not None and "radius" in str(v)
    mixed = ConstraintSet.of(
        linear=[LinearConstraint.of([(1, 0)])], spheres=[SphereConstraint(0, 1.0)]
    )
    v = validate(mixed, 3, 2)
    assert v is not None and "overlap" in str(v)


def test_ensure_valid_raises():
    with pytest.raises(ConstraintError):
        ensure_valid(ConstraintSet.of([LinearConstraint.of([(0, 0)], weights=[-1.0])]), 1, 1)


def test_complement_examples():
    assert len(complement(simplex_columns(3, 4), 3, 4)) == 0
    cs = ConstraintSet.of([LinearConstraint.of([(0, 0)])])
    assert len(complement(cs, 2, 2)) == 3
    assert len(complement(ConstraintSet(), 2, 2)) == 4


def test_complement_partitions_the_matrix():
    rng = np.random.default_rng(0)
    for _ in range(20):
        rows, cols = int(rng.integers(2, 6)), int(rng.integers(2, 7))
        taken = set()
        linear = []
        for _ in range(int(rng.integers(0, 4))):
            avail = [(r, c) for r in range(rows) for c in range(cols) if (r, c) not in taken]
            if not avail:
                break
            q = int(rng.integers(1, min(3, len(avail)) + 1))
            pick = [avail[i] for i in rng.choice(len(avail), size=q, replace=False)]
            taken.update(pick)
            linear.append(LinearConstraint.of(pick, weights=1.0 + rng.random(q), rhs=1.0))
        cs = ConstraintSet.of(linear)
        assert validate(cs, rows, cols) is None
        free = complement(cs, rows, cols)
        assert len(free) + sum(len(lc.indices) for lc in cs.linear) == rows * cols
        assert set(free) | taken == {(r, c) for r in range(rows) for c in range(cols)}


def test_simplex_factories():
    cs = simplex_columns(2, 3)
    assert len(cs.linear) == 3 and all(len(lc.indices) == 2 for lc in cs.linear)
    single = simplex_columns(1, 1)
    assert len(single.linear) == 1 and single.linear[0].rhs == 1.0
    w = simplex_columns_of_w(2, 2)
    assert len(w.linear) == 2
    assert validate(w, 2, 2) is None
    with pytest.raises(ConstraintError):
        simplex_columns(0, 3)
