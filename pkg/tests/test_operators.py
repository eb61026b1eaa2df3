import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_ias.exceptions import DegenerateGrid, DomainError, NotSPD, RankDeficient
from hybrid_ias.operators import (
    PinvOperator,
    adjoint_mismatch,
    apply_pinv,
    apply_pinv_adjoint,
    build_increment_graph,
    circulation_residual,
    diff_1d,
    diff_matrix_1d,
    scale_by_prior,
    weighted_increments,
    whiten,
    whitening_factor,
)


def dense(op):
    return op.matmat(np.eye(op.shape[1]))


def test_whiten_identity_and_scalar():
    rng = np.random.default_rng(0)
    A, b = rng.standard_normal((4, 3)), rng.standard_normal(4)
    Aw, bw = whiten(A, b, np.eye(4))
    assert np.allclose(dense(Aw), A) and np.allclose(bw, b)
    Aw, bw = whiten(A, b, 0.25)
    assert np.allclose(dense(Aw), A / 0.5) and np.allclose(bw, b / 0.5)


def test_whiten_full_covariance():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((4, 4))
    Sigma = G @ G.T + 4 * np.eye(4)
    S = whitening_factor(Sigma)
    assert np.allclose(S.T @ S @ Sigma, np.eye(4), atol=1e-10)
    A, b = rng.standard_normal((4, 2)), rng.standard_normal(4)
    Aw, bw = whiten(A, b, Sigma)
    assert np.allclose(dense(Aw), S @ A) and np.allclose(bw, S @ b)
    with pytest.raises(NotSPD):
        whiten(A, b, -np.eye(4))
    with pytest.raises(NotSPD):
        whiten(A, b, np.zeros(4))


def test_scale_by_prior():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 9))
    theta = rng.uniform(0.1, 2, 9)
    op = scale_by_prior(A, theta)
    D = np.diag(np.sqrt(theta))
    assert np.allclose(dense(op), A @ D)
    u = rng.standard_normal(6)
    assert np.allclose(op.rmatvec(u), D @ A.T @ u)
    assert np.allclose(np.linalg.norm(dense(op), axis=0), np.sqrt(theta) * np.linalg.norm(A, axis=0))
    assert np.allclose(dense(scale_by_prior(A, np.ones(9))), A)
    assert adjoint_mismatch(op, 0) < 1e-12
    with pytest.raises(DomainError):
        scale_by_prior(A, np.zeros(9))


def test_diff_1d():
    L, C = diff_1d(4)
    assert np.array_equal(L.matvec(np.ones(3 + 1))[:3], [1, 0, 0])
    assert np.array_equal(C.matvec(np.array([1.0, 0, -1, 0])), [1, 1, 0, 0])
    z = np.random.default_rng(3).standard_normal(100)
    L, C = diff_1d(100)
    assert np.max(np.abs(L.matvec(C.matvec(z)) - z)) < 1e-14
    assert np.max(np.abs(C.matvec(L.matvec(z)) - z)) < 1e-13
    assert adjoint_mismatch(L, 0) < 1e-12 and adjoint_mismatch(C, 0) < 1e-12
    assert np.allclose(dense(L), diff_matrix_1d(100).toarray())


def test_graph_3x3():
    g = build_increment_graph((3, 3))
    assert (g.n_v, g.n_e, g.n_t) == (1, 4, 4)
    assert np.array_equal(np.sort(g.L.toarray().ravel()), [-1, -1, 1, 1])
    assert not np.any(g.L @ np.zeros(1))


def count_edges(shape):
    """Edges with at least one interior endpoint, counted directly."""
    R, C = shape
    free = lambda i, j: 0 < i < R - 1 and 0 < j < C - 1
    n = 0
    for i in range(R):
        for j in range(C):
            n += j + 1 < C and (free(i, j) or free(i, j + 1))
            n += i + 1 < R and (free(i, j) or free(i + 1, j))
    return n


@pytest.mark.parametrize("shape", [(3, 3), (4, 4), (5, 5), (4, 6), (6, 6), (3, 7)])
def test_graph_counts_and_exactness(shape):
    g = build_increment_graph(shape)
    R, C = shape
    assert g.n_v == (R - 2) * (C - 2)
    assert g.n_e == count_edges(shape)
    assert (g.M @ g.L).nnz == 0 or not np.any((g.M @ g.L).toarray())
    Ld, Md = g.L.toarray(), g.M.toarray()
    assert np.linalg.svd(Ld, compute_uv=False).min() > 1e-8
    assert np.linalg.matrix_rank(Ld) == g.n_v
    assert np.linalg.matrix_rank(Md) == g.n_e - g.n_v
    assert g.n_e - np.linalg.matrix_rank(Md) == g.n_v


def test_graph_embedding_roundtrip():
    g = build_increment_graph((5, 6))
    x = np.arange(g.n_v, dtype=float)
    img = g.embed(x)
    assert img[0].sum() == 0 and np.array_equal(g.restrict(img), x)
    assert np.array_equal(g.embedding() @ x, img.ravel())


def test_graph_errors():
    with pytest.raises(DegenerateGrid):
        build_increment_graph((2, 2))
    with pytest.raises(DegenerateGrid):
        build_increment_graph((0, 3))


def test_pinv_on_range():
    g = build_increment_graph((6, 6))
    rng = np.random.default_rng(4)
    theta = rng.uniform(0.1, 2, g.n_e)
    Lt = weighted_increments(g.L, theta)
    x = rng.standard_normal(g.n_v)
    for method in ("dense", "direct", "cg"):
        assert np.allclose(apply_pinv(Lt, Lt @ x, method), x, atol=1e-8)


def test_pinv_chain_matches_triangular_solve():
    n = 30
    L = diff_matrix_1d(n)
    theta = np.random.default_rng(5).uniform(0.5, 2, n)
    Lt = weighted_increments(L, theta)
    beta = np.random.default_rng(6).standard_normal(n)
    ref = sla.solve_triangular(Lt.toarray(), beta, lower=True)
    assert np.allclose(apply_pinv(Lt, beta), ref)
    v = np.random.default_rng(7).standard_normal(n)
    assert np.allclose(apply_pinv_adjoint(Lt, v), np.linalg.solve(Lt.toarray().T, v))


def test_pinv_kills_orthogonal_complement():
    g = build_increment_graph((4, 4))
    theta = np.random.default_rng(8).uniform(0.5, 2, g.n_e)
    Lt = weighted_increments(g.L, theta)
    Q, _ = np.linalg.qr(Lt.toarray(), mode="complete")
    beta = Q[:, g.n_v]
    assert np.linalg.norm(apply_pinv(Lt, beta)) < 1e-12


@pytest.mark.parametrize("method", ["dense", "direct", "cg"])
def test_pinv_adjoint_pair(method):
    g = build_increment_graph((6, 5))
    rng = np.random.default_rng(9)
    P = PinvOperator(weighted_increments(g.L, rng.uniform(0.2, 3, g.n_e)), method)
    beta, v = rng.standard_normal(g.n_e), rng.standard_normal(g.n_v)
    assert abs(np.dot(P.matvec(beta), v) - np.dot(beta, P.rmatvec(v))) <= 1e-8
    assert not np.any(P.rmatvec(np.zeros(g.n_v)))
    assert np.allclose(dense(P), np.linalg.pinv(P.Lmat.toarray()), atol=1e-9)


def test_pinv_rank_deficient():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(RankDeficient):
        PinvOperator(L, "dense")


def test_circulation_residual():
    g = build_increment_graph((7, 7))
    rng = np.random.default_rng(10)
    assert circulation_residual(g, g.L @ rng.standard_normal(g.n_v)) < 1e-12
    assert circulation_residual(g, rng.standard_normal(g.n_e)) > 1e-3
    assert circulation_residual(g, np.zeros(g.n_e)) == 0


@settings(max_examples=30, deadline=None)
@given(
    rows=st.integers(3, 8),
    cols=st.integers(3, 8),
    seed=st.integers(0, 2**31),
)
def test_pinv_is_least_squares_solution(rows, cols, seed):
    g = build_increment_graph((rows, cols))
    rng = np.random.default_rng(seed)
    Lt = weighted_increments(g.L, rng.uniform(0.1, 10, g.n_e))
    beta = rng.standard_normal(g.n_e)
    ref, *_ = np.linalg.lstsq(Lt.toarray(), beta, rcond=None)
    assert np.allclose(apply_pinv(Lt, beta), ref, atol=1e-9)
    assert adjoint_mismatch(PinvOperator(Lt), seed) < 1e-10
