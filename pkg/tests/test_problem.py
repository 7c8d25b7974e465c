import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arbpg.nmf import make_nmf_problem, stack_factors
from arbpg.problem import INF, BlockPartition, Quadratic, UsageError, block_view, check_extended, objective
from arbpg.prox import NonnegIndicator

from conftest import scalar_problem


def test_partition_offsets_and_sizes():
    part = BlockPartition([2, 1, 3])
    assert part.n == 6 and part.N == 3
    assert part.offsets == (0, 2, 3, 6)


@pytest.mark.parametrize("sizes", [[], [0], [2, -1]])
def test_partition_rejects_bad_sizes(sizes):
    with pytest.raises(UsageError):
        BlockPartition(sizes)


@pytest.mark.parametrize("x, sizes, i, expected", [
    ([1, 2, 3], [2, 1], 1, [3]),
    ([1, 2, 3], [3], 0, [1, 2, 3]),
    ([5], [1], 0, [5]),
])
def test_block_view_examples(x, sizes, i, expected):
    assert block_view(np.array(x, float), BlockPartition(sizes), i).tolist() == expected


def test_block_view_is_a_writable_view():
    x = np.arange(5.0)
    part = BlockPartition([2, 3])
    v = block_view(x, part, 1)
    v[:] = [7, 8, 9]
    assert x.tolist() == [0, 1, 7, 8, 9]
    assert block_view(x, part, 1).tolist() == [7, 8, 9]


def test_block_view_errors():
    part = BlockPartition([2, 1])
    with pytest.raises(UsageError):
        block_view(np.zeros(3), part, 2)
    with pytest.raises(UsageError):
        block_view(np.zeros(4), part, 0)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=8))
def test_partition_completeness(sizes):
    part = BlockPartition(sizes)
    x = np.arange(part.n, dtype=float)
    pieces = [block_view(x, part, i) for i in range(part.N)]
    assert np.array_equal(np.concatenate(pieces), x)


def test_objective_examples(half_sq_nonneg):
    assert objective(half_sq_nonneg, np.array([2.0])) == 2.0
    assert objective(half_sq_nonneg, np.array([-1.0])) == INF


def test_objective_nmf_example():
    prob = make_nmf_problem(np.eye(2), 1)
    x = stack_factors(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert objective(prob, x) == 0.5


def test_objective_dimension_mismatch(half_sq_nonneg):
    with pytest.raises(UsageError):
        objective(half_sq_nonneg, np.zeros(2))


def test_infinite_value_dominates_finite(half_sq_nonneg):
    bad = objective(half_sq_nonneg, np.array([-1e-300]))
    assert bad > 1e308 and not bad <= 1e308 and bad <= INF


def test_check_extended_rejects_nan_and_minus_inf():
    assert check_extended(INF) == INF
    with pytest.raises(ValueError):
        check_extended(math.nan)
    with pytest.raises(ValueError):
        check_extended(-INF)


def test_default_candidate_matches_materialized_eval():
    prob = scalar_problem(NonnegIndicator(), sizes=(2, 2))
    f = prob.smooth
    f.reset(np.array([1.0, 2.0, 3.0, 4.0]))
    cand = f.eval_candidate(1, np.array([0.5, 0.5]))
    assert cand == f.evaluate(np.array([1.0, 2.0, 0.5, 0.5]))
    f.commit_block(1, np.array([0.5, 0.5]))
    assert f.value() == cand


def test_quadratic_cached_residual_matches_full(rng):
    part = BlockPartition([2, 3, 1])
    Q = rng.standard_normal((7, 6))
    b = rng.standard_normal(7)
    f = Quadratic(Q, b, part)
    x = rng.standard_normal(6)
    f.reset(x)
    for i in range(3):
        new = rng.standard_normal(part.sizes[i])
        probe = f.eval_candidate(i, new)
        f.commit_block(i, new)
        assert f.value() == probe
        x[part.slice(i)] = new
        assert f.value() == pytest.approx(f.evaluate(x), rel=1e-12)
        np.testing.assert_allclose(f.block_grad(i), f.grad_block_at(x, i), rtol=1e-10, atol=1e-12)
