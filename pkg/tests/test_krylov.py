import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_ias.krylov import StopReason, StoppingRule, cgls, g_functional


def test_g_functional():
    rng = np.random.default_rng(0)
    A, b = rng.standard_normal((5, 7)), rng.standard_normal(5)
    assert g_functional(A, b, np.zeros(7)) == pytest.approx(b @ b, rel=1e-14)
    v = rng.standard_normal(5)
    assert g_functional(np.eye(5), np.zeros(5), v) == pytest.approx(2 * v @ v, rel=1e-14)
    w = rng.standard_normal(7)
    r = b - A @ w
    assert abs(g_functional(A, b, w) - (r @ r + w @ w)) < 1e-12


def test_rule_validation():
    with pytest.raises(ValueError):
        StoppingRule(tau=1.0)
    with pytest.raises(ValueError):
        StoppingRule(discrepancy_target=-1)
    assert StoppingRule().target(49) == 7


def test_orthogonal_exact():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    b = rng.standard_normal(12)
    res = cgls(Q, b, StoppingRule.disabled())
    assert res.iters <= 12
    assert np.linalg.norm(b - Q @ res.w) < 1e-10


def test_min_norm_underdetermined():
    rng = np.random.default_rng(2)
    A, b = rng.standard_normal((30, 50)), rng.standard_normal(30)
    res = cgls(A, b, StoppingRule.disabled(max_iters=200))
    ref = np.linalg.pinv(A) @ b
    assert np.linalg.norm(res.w - ref) / np.linalg.norm(ref) < 1e-6


def test_krylov_optimality():
    rng = np.random.default_rng(3)
    G = rng.standard_normal((10, 10))
    A = G @ G.T + 0.5 * np.eye(10)
    b = rng.standard_normal(10)
    for k in range(1, 6):
        w = cgls(A, b, StoppingRule.disabled(max_iters=k)).w
        # power basis of K_k(A^T b, A^T A), orthonormalized for stability
        s = A.T @ b
        K = np.column_stack([np.linalg.matrix_power(A.T @ A, i) @ s for i in range(k)])
        K, _ = np.linalg.qr(K)
        best = np.linalg.norm(b - A @ w)
        for _ in range(100):
            v = K @ rng.standard_normal(k)
            assert best <= np.linalg.norm(b - A @ v) + 1e-12
        # and w itself lies in the subspace
        assert np.linalg.norm(w - K @ (K.T @ w)) <= 1e-8 * np.linalg.norm(w)


def test_rks_rule_index_convention():
    rng = np.random.default_rng(4)
    m, n = 40, 60
    A = rng.standard_normal((m, n)) * np.exp(-np.arange(n) / 6)
    x = np.zeros(n)
    x[[2, 5]] = [8.0, -6.0]
    b = A @ x + rng.standard_normal(m)
    rule = StoppingRule(tau=1.1)
    res = cgls(A, b, rule)
    k = res.iters
    if res.stop_reason == StopReason.DISCREPANCY:
        rh, gh = res.residual_history, res.g_history
        assert rh[k + 1] <= np.sqrt(m) and gh[k + 1] > 1.1 * gh[k]
        for j in range(k):
            assert not (rh[j + 1] <= np.sqrt(m) and gh[j + 1] > 1.1 * gh[j])
        assert g_functional(A, b, res.w) == pytest.approx(gh[k], rel=1e-9)
    assert np.all(np.diff(res.residual_history) <= 1e-12 * res.residual_history[0])


def test_zero_data_and_max_iters():
    A = np.random.default_rng(5).standard_normal((6, 4))
    res = cgls(A, np.zeros(6))
    assert res.iters == 0 and not np.any(res.w) and res.stop_reason == StopReason.EXACT
    res = cgls(A, np.ones(6), StoppingRule.disabled(max_iters=2))
    assert res.iters == 2 and res.stop_reason == StopReason.MAX_ITERS


def test_reorthogonalized_agrees():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((25, 20)) @ np.diag(np.logspace(0, -6, 20))
    b = rng.standard_normal(25)
    plain = cgls(A, b, StoppingRule.disabled(max_iters=8))
    ortho = cgls(A, b, StoppingRule.disabled(max_iters=8, reorthogonalize=True))
    assert np.linalg.norm(b - A @ ortho.w) <= np.linalg.norm(b - A @ plain.w) * (1 + 1e-6)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 60), n=st.integers(1, 60), seed=st.integers(0, 2**31))
def test_unrestricted_matches_lstsq(m, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    res = cgls(A, b, StoppingRule.disabled(max_iters=10 * max(m, n), reorthogonalize=True))
    ref = np.linalg.lstsq(A, b, rcond=None)[0]
    assert np.linalg.norm(res.w - ref) <= 1e-6 * max(np.linalg.norm(ref), 1e-300)
    assert np.all(np.diff(res.residual_history) <= 1e-10 * res.residual_history[0])
