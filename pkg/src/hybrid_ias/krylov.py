"""CGLS with the reduced Krylov subspace (RKS) early-stopping rule.

With whitened noise the iteration stops at the first ``k`` for which the next
iterate both meets the discrepancy ``||b - A w_{k+1}|| <= sqrt(m)`` and raises
``G(w) = ||b - A w||^2 + ||w||^2`` by more than the factor `tau`; ``w_k`` is
returned. Both conditions are tested at ``k + 1`` together.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .validation import as_operator, as_vector


class StopReason(str, Enum):
    DISCREPANCY = "discrepancy+g_safeguard"
    MAX_ITERS = "max_iters"
    EXACT = "exact_convergence"
    BREAKDOWN = "breakdown"


@dataclass(frozen=True)
class StoppingRule:
    """Parameters of the RKS stopping rule.

    ``discrepancy_target=None`` means ``sqrt(m)``; ``0`` disables the rule so
    that CGLS runs to convergence or `max_iters` (``None`` means ``min(m, n)``).
    """

    discrepancy_target: float | None = None
    tau: float = 1.1
    max_iters: int | None = None
    reorthogonalize: bool = False
    rtol: float = 1e-14

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if self.discrepancy_target is not None and self.discrepancy_target < 0:
            raise ValueError("discrepancy_target must be nonnegative")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def target(self, m):
        return np.sqrt(m) if self.discrepancy_target is None else self.discrepancy_target

    @classmethod
    def disabled(cls, max_iters=None, reorthogonalize=False):
        return cls(discrepancy_target=0.0, max_iters=max_iters, reorthogonalize=reorthogonalize)


@dataclass
class CglsResult:
    w: np.ndarray
    iters: int
    residual_history: np.ndarray = field(repr=False)
    g_history: np.ndarray = field(repr=False)
    stop_reason: StopReason


def g_functional(op, b, w):
    """``||b - A w||^2 + ||w||^2``."""
    r = np.asarray(b, dtype=float) - as_operator(op).matvec(w)
    return float(np.dot(r, r) + np.dot(w, w))


def cgls(op, b, rule=None):
    """Approximate least-squares solution of ``op w = b`` started from zero.

    Returns
    -------
    CglsResult
        ``residual_history[k]`` and ``g_history[k]`` refer to ``w_k``; the
        histories may extend one step past the returned iterate, because the
        stopping test looks ahead.
    """
    rule = StoppingRule() if rule is None else rule
    A = as_operator(op)
    m, n = A.shape
    b = as_vector(b, "b", m)
    max_iters = min(m, n) if rule.max_iters is None else rule.max_iters
    target = rule.target(m)
    use_rule = target > 0

    w = np.zeros(n)
    r = b.copy()
    s = A.rmatvec(r)
    p = s.copy()
    gamma = float(np.dot(s, s))
    gamma0 = gamma
    res = [float(np.linalg.norm(r))]
    g = [res[0] ** 2]
    basis = []
    if rule.reorthogonalize and gamma > 0:
        basis.append(s / np.sqrt(gamma))

    if gamma == 0:
        return CglsResult(w, 0, np.array(res), np.array(g), StopReason.EXACT)

    k = 0
    reason = StopReason.MAX_ITERS
    while k < max_iters:
        q = A.matvec(p)
        qq = float(np.dot(q, q))
        if qq <= np.finfo(float).tiny:
            reason = StopReason.BREAKDOWN
            break
        alpha = gamma / qq
        w_next = w + alpha * p
        r = r - alpha * q
        res.append(float(np.linalg.norm(r)))
        g.append(res[-1] ** 2 + float(np.dot(w_next, w_next)))
        if use_rule and res[-1] <= target and g[-1] > rule.tau * g[-2]:
            reason = StopReason.DISCREPANCY
            break
        w = w_next
        k += 1
        s = A.rmatvec(r)
        if basis:
            for v in basis:
                s -= np.dot(v, s) * v
        gamma_next = float(np.dot(s, s))
        if gamma_next <= (rule.rtol**2) * gamma0:
            reason = StopReason.EXACT
            break
        if basis:
            basis.append(s / np.sqrt(gamma_next))
        p = s + (gamma_next / gamma) * p
        gamma = gamma_next
    return CglsResult(w, k, np.array(res), np.array(g), reason)
