import numpy as np
import pytest

from mlqs import (
    BlockPartition,
    PartitionMismatch,
    QsMatrix,
    StructureError,
    aggregate,
    frobenius_norm,
    from_band,
    from_dense,
    matvec,
    offdiag_rank_profile,
    reconstruct_dense,
)
from mlqs.fem import GridSpec, assemble_stiffness, mass_factor, stiffness_dense
from qs_testing import entrywise_dense, random_qs, random_sizes, rel, split_ranks


def test_partition_basics():
    P = BlockPartition((2, 1, 3))
    assert P.N == 6 and P.n == 3
    assert P.offsets == (0, 2, 3, 6)
    assert BlockPartition.uniform(7, 3).sizes == (3, 3, 1)
    assert BlockPartition((2, 4)).is_coarsening_of(BlockPartition((2, 1, 3)))
    with pytest.raises(ValueError):
        BlockPartition((2, 0))
    with pytest.raises(ValueError):
        BlockPartition(())


def test_diagonal_reconstruction():
    A = QsMatrix.block_diagonal([np.array([[2.5]])] * 3)
    np.testing.assert_array_equal(reconstruct_dense(A), 2.5 * np.eye(3))
    assert A.lower_orders == (0, 0) and A.upper_orders == (0, 0)


def test_two_by_two_swap():
    one = np.ones((1, 1))
    A = QsMatrix.from_generators(
        d=[np.zeros((1, 1))] * 2, q=[one], a=[], p=[np.zeros((1, 0)), one], g=[one], b=[], h=[np.zeros((0, 1)), one]
    )
    np.testing.assert_array_equal(A.to_dense(), [[0, 1], [1, 0]])


def test_shape_error_names_block():
    rng = np.random.default_rng(1)
    A = random_qs(rng, [2, 2, 2], 1, 1)
    gen = A.gen
    bad_p = list(gen.p)
    bad_p[2] = np.ones((2, 3))
    with pytest.raises(StructureError, match="k=2"):
        QsMatrix.from_generators(gen.d, gen.q, gen.a, bad_p, gen.g, gen.b, gen.h)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_reconstruction_matches_entrywise_evaluator(seed):
    rng = np.random.default_rng(seed)
    A = random_qs(rng, [1] * 6, 2, 3)
    np.testing.assert_allclose(A.to_dense(), entrywise_dense(A), rtol=0, atol=1e-13)
    B = random_qs(rng, random_sizes(rng, 60, 8), 3, 2)
    np.testing.assert_allclose(B.to_dense(), entrywise_dense(B), rtol=0, atol=1e-12)


def test_ranks_bounded_by_widths():
    rng = np.random.default_rng(3)
    A = random_qs(rng, [3, 1, 4, 2, 2, 5], 2, 1)
    lo, up = split_ranks(A.to_dense(), A.offsets)
    assert all(r <= w for r, w in zip(lo, A.lower_orders))
    assert all(r <= w for r, w in zip(up, A.upper_orders))


def test_matvec_examples():
    T = from_band(mass_factor(4), 1, 1)
    np.testing.assert_allclose(matvec(T, np.ones(4)), [5 / 6, 1, 1, 5 / 6], rtol=1e-15)
    I = QsMatrix.identity(BlockPartition((2, 3)))
    x = np.arange(5.0)
    np.testing.assert_array_equal(I @ x, x)
    with pytest.raises(ValueError):
        matvec(I, np.ones(4))


def test_matvec_random_and_multiple_rhs():
    rng = np.random.default_rng(4)
    A = random_qs(rng, [1] * 64, 3, 2)
    x = rng.standard_normal(64)
    assert rel(matvec(A, x), A.to_dense() @ x) <= 1e-13
    X = rng.standard_normal((64, 3))
    assert rel(matvec(A, X), A.to_dense() @ X) <= 1e-13


def test_frobenius_norm():
    assert frobenius_norm(QsMatrix.identity(BlockPartition.scalar(5))) == pytest.approx(np.sqrt(5))
    assert frobenius_norm(QsMatrix.zeros(BlockPartition((2, 2)))) == 0.0
    rng = np.random.default_rng(5)
    A = random_qs(rng, [2] * 32, 2, 3)
    assert abs(frobenius_norm(A) - np.linalg.norm(A.to_dense())) <= 1e-12 * np.linalg.norm(A.to_dense())


def test_from_band():
    T = from_band(mass_factor(4), 1, 1)
    assert T.lower_orders == (1, 1, 1) and T.upper_orders == (1, 1, 1)
    D = from_band(np.diag([1.0, 2, 3]), 0, 0)
    assert D.order == (0, 0)
    rng = np.random.default_rng(6)
    P = np.triu(np.tril(rng.standard_normal((8, 8)), 2), -2)
    Q = from_band(P, 2, 2)
    np.testing.assert_array_equal(Q.to_dense(), P)
    assert max(Q.order) <= 2
    with pytest.raises(StructureError):
        from_band(P, 1, 2)


def test_from_band_block_partition():
    K = stiffness_dense(4)
    A = from_band(K, 5, 5, BlockPartition((4, 4, 4, 4)))
    np.testing.assert_array_equal(A.to_dense(), K)


def test_from_dense_minimal():
    rng = np.random.default_rng(7)
    u, v = rng.standard_normal(4), rng.standard_normal(4)
    R = from_dense(np.outer(u, v))
    assert R.lower_orders == (1, 1, 1) and R.upper_orders == (1, 1, 1)
    assert from_dense(np.eye(5)).order == (0, 0)
    Ti = np.linalg.inv(mass_factor(16))
    A = from_dense(Ti)
    assert set(A.lower_orders) == {1} and set(A.upper_orders) == {1}
    assert rel(A.to_dense(), Ti) <= 1e-13


def test_from_dense_tolerance_reports_constant():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((40, 40)) @ np.diag(0.5 ** np.arange(40)) @ rng.standard_normal((40, 40))
    tau = 1e-6
    A, info = from_dense(X, tol=tau, return_info=True)
    err = np.linalg.norm(A.to_dense() - X)
    assert err <= info["c"] * tau * np.linalg.norm(X)
    assert max(A.order) < 39


def test_round_trip_and_minimality():
    rng = np.random.default_rng(9)
    A = random_qs(rng, random_sizes(rng, 200, 16), 2, 3)
    Ad = A.to_dense()
    B = from_dense(Ad, A.partition)
    assert rel(B.to_dense(), Ad) <= 1e-12
    lo, up = split_ranks(Ad, A.offsets)
    assert list(B.lower_orders) == lo and list(B.upper_orders) == up


def test_aggregation_to_coarser_blocks():
    rng = np.random.default_rng(10)
    A = random_qs(rng, [1] * 12, 2, 2)
    C = aggregate(A, BlockPartition((3, 4, 1, 4)))
    assert rel(C.to_dense(), A.to_dense()) <= 1e-14
    with pytest.raises(PartitionMismatch):
        aggregate(random_qs(rng, [2] * 6, 1, 1), BlockPartition((3, 9)))


def test_offdiag_rank_profile():
    prof = offdiag_rank_profile(np.eye(6), 1e-3)
    assert all(lo == 0 and up == 0 for _, lo, up in prof)
    n = 16
    K = stiffness_dense(n)
    prof = offdiag_rank_profile(K, 1e-12, BlockPartition((n,) * n))
    assert [s for s, _, _ in prof] == [n * (k + 1) for k in range(n - 1)]
    # the only nonzero block across each split is B = tridiag(1, 1, 1) / 3, which is nonsingular
    assert all(lo == n and up == n for _, lo, up in prof)
    Kq = assemble_stiffness(GridSpec(n))
    assert set(Kq.lower_orders) == {1} and set(Kq.upper_orders) == {1}


def test_rank_convention_strictly_greater():
    A = np.diag([1.0, 1.0]) + np.array([[0, 1e-6], [1e-6, 0]])
    (_, lo, up), = offdiag_rank_profile(A, 1e-6)
    assert lo == 0 and up == 0
    (_, lo, up), = offdiag_rank_profile(A, 0.99e-6)
    assert lo == 1 and up == 1
