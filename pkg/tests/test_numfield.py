import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kaleido.numfield import (
    FormatError,
    NonFiniteError,
    SparseMatrix,
    dense_mvm,
    displacement_residual,
    dump_dense,
    dump_sparse,
    dump_vector,
    format_scalar,
    frobenius_distance,
    gen_cauchy,
    gen_fourier,
    gen_lowrank,
    gen_shift,
    gen_vandermonde,
    numeric_rank,
    parse_dense,
    parse_scalar,
    parse_sparse,
    parse_vector,
    sparse_mvm,
)

from helpers import crandn, random_sparse


def test_dense_mvm_examples():
    assert np.array_equal(dense_mvm(np.eye(2), [3, 4]), [3, 4])
    assert np.array_equal(dense_mvm([[1, 2], [3, 4]], [1, 0]), [1, 3])
    assert np.allclose(dense_mvm(gen_fourier(2), [1, 1]), [2, 0])


def test_dense_mvm_shape_error():
    with pytest.raises(ValueError):
        dense_mvm(np.eye(2), [1, 2, 3])


def test_sparse_mvm_examples():
    assert np.array_equal(sparse_mvm(SparseMatrix(3, 2), [1, 2]), np.zeros(3))
    S = SparseMatrix(2, 2, [(0, 1, 5), (1, 0, 7)])
    assert np.array_equal(sparse_mvm(S, [1, 2]), [10, 7])


def test_sparse_matches_dense_exactly():
    rng = np.random.default_rng(1)
    for _ in range(20):
        S = random_sparse(rng, 8, 10)
        x = crandn(rng, 8)
        assert np.array_equal(dense_mvm(S.to_dense(), x), sparse_mvm(S, x))


def test_sparse_invariants():
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, [(0, 0, 1), (0, 0, 2)])
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, [(2, 0, 1)])
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, [(0, 0, 0)])
    with pytest.raises(NonFiniteError):
        SparseMatrix(2, 2, [(0, 0, np.inf)])


def test_fourier():
    assert np.array_equal(gen_fourier(1), [[1]])
    assert np.array_equal(gen_fourier(2), [[1, 1], [1, -1]])
    assert gen_fourier(4)[1, 1] == -1j
    for n in (2, 4, 8, 16, 32):
        F = gen_fourier(n)
        assert np.array_equal(F, F.T)
        assert np.allclose(F @ F.conj().T, n * np.eye(n))
    with pytest.raises(ValueError):
        gen_fourier(6)


def test_vandermonde():
    assert np.array_equal(gen_vandermonde([1], 3), [[1, 1, 1]])
    assert np.array_equal(gen_vandermonde([0, 1], 2), [[1, 0], [1, 1]])
    assert np.array_equal(gen_vandermonde([2, 3], 3), [[1, 2, 4], [1, 3, 9]])


def test_vandermonde_displacement_uses_transposed_shift():
    rng = np.random.default_rng(3)
    n = 6
    a = crandn(rng, n) / 2
    V = gen_vandermonde(a, n)
    Z = gen_shift(n).to_dense()
    E = displacement_residual(V, np.diag(a), Z.T)
    assert numeric_rank(E) == 1
    assert np.allclose(E[:, :-1], 0) and np.allclose(E[:, -1], a**n)


def test_cauchy():
    assert np.array_equal(gen_cauchy([0], [1]), [[-1]])
    assert np.allclose(gen_cauchy([1, 2], [3, 4]), [[-1 / 2, -1 / 3], [-1, -1 / 2]])
    with pytest.raises(ValueError):
        gen_cauchy([1, 2], [2, 5])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_cauchy_residual_is_all_ones(n, seed):
    rng = np.random.default_rng(seed)
    s, t = rng.uniform(0, 1, n), rng.uniform(2, 3, n)
    C = gen_cauchy(s, t)
    E = displacement_residual(C, np.diag(s), np.diag(t))
    assert np.allclose(E, np.ones((n, n)))
    assert numeric_rank(E) == 1


def test_shift():
    assert gen_shift(1).nnz == 0
    assert gen_shift(3).triples == ((0, 1, 1), (1, 2, 1))
    assert np.array_equal(sparse_mvm(gen_shift(3), [5, 6, 7]), [6, 7, 0])


def test_displacement_identity_operators_give_zero():
    rng = np.random.default_rng(0)
    W = crandn(rng, 5, 5)
    assert np.array_equal(displacement_residual(W, np.eye(5), np.eye(5)), np.zeros((5, 5)))


def test_diag_shift_residual():
    # Z D - D Z has entries D[i+1] - D[i] on the superdiagonal, i.e. -D' Z with D'[i] = D[i] - D[i+1]
    n = 6
    d = np.arange(1, n + 1, dtype=float)
    Z = gen_shift(n).to_dense()
    E = displacement_residual(np.diag(d), Z, Z)
    dprime = np.append(d[:-1] - d[1:], 0)
    assert np.array_equal(E, -np.diag(dprime) @ Z)
    assert numeric_rank(E) == n - 1


def test_numeric_rank():
    assert numeric_rank(np.zeros((4, 4))) == 0
    assert numeric_rank(np.ones((5, 5))) == 1
    assert numeric_rank(np.eye(7)) == 7


def test_lowrank():
    assert np.array_equal(gen_lowrank(np.zeros((3, 0)), np.zeros((0, 3))), np.zeros((3, 3)))
    assert np.array_equal(gen_lowrank([[1], [1]], [[1, 1]]), np.ones((2, 2)))
    rng = np.random.default_rng(2)
    for r in range(0, 9):
        M = gen_lowrank(crandn(rng, 8, r), crandn(rng, r, 8))
        assert numeric_rank(M) <= min(r, 8)
    assert numeric_rank(gen_lowrank(crandn(rng, 8, 3), crandn(rng, 3, 8))) == 3


def test_frobenius():
    A = np.eye(3)
    assert frobenius_distance(A, A) == 0
    assert frobenius_distance([[1]], [[0]]) == 1
    assert frobenius_distance([[3, 0], [0, 4]], np.zeros((2, 2))) == 5
    with pytest.raises(ValueError):
        frobenius_distance(np.eye(2), np.eye(3))


@settings(max_examples=200)
@given(st.complex_numbers(allow_nan=False, allow_infinity=False))
def test_scalar_round_trip(v):
    assert parse_scalar(format_scalar(v)) == v


def test_scalar_format_examples():
    assert format_scalar(-1j) == "0:-1"
    assert format_scalar(2.5) == "2.5"
    with pytest.raises(FormatError):
        parse_scalar("abc")


def test_dense_round_trip():
    rng = np.random.default_rng(5)
    W = crandn(rng, 3, 4)
    assert np.array_equal(parse_dense(dump_dense(W)), W)


def test_sparse_round_trip():
    rng = np.random.default_rng(6)
    S = random_sparse(rng, 5, 7)
    assert parse_sparse(dump_sparse(S)) == S


def test_vector_round_trip():
    x = np.array([1, -2.5j, 3 + 4j])
    assert np.array_equal(parse_vector(dump_vector(x)), x)


@pytest.mark.parametrize(
    "text",
    ["", "dense 2 2\n1 2\n", "dense 1 2\n1 x\n", "sparse 2 2 1\n0 5 1\n", "sparse 2 2 2\n0 0 1\n0 0 2\n"],
)
def test_malformed_matrix_files(text):
    with pytest.raises(FormatError):
        (parse_sparse if text.startswith("sparse") else parse_dense)(text)
