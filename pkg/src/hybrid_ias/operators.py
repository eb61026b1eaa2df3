"""Linear maps, whitening, prior scaling and the increment machinery.

Linear maps are :class:`scipy.sparse.linalg.LinearOperator` instances; the
helpers below compose them without forming products.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import LinearOperator

from .exceptions import DegenerateGrid, DomainError, NonConvergence, NotSPD, RankDeficient
from .validation import as_operator, as_vector

DENSE_PINV_MAX = 500
INNER_TOL = 1e-10


def diagonal(d):
    """Diagonal matrix as a LinearOperator."""
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    return LinearOperator((n, n), matvec=lambda v: d * v.ravel(), rmatvec=lambda v: d * v.ravel(), dtype=float)


def adjoint_mismatch(A, rng=None, trials=3):
    """Largest normalized gap ``|<Av,u> - <v,A^T u>| / (|v||u|)`` over random pairs."""
    rng = np.random.default_rng(rng)
    A = as_operator(A)
    m, n = A.shape
    worst = 0.0
    for _ in range(trials):
        v, u = rng.standard_normal(n), rng.standard_normal(m)
        gap = abs(np.dot(A.matvec(v), u) - np.dot(v, A.rmatvec(u)))
        worst = max(worst, gap / (np.linalg.norm(v) * np.linalg.norm(u)))
    return worst


def whiten(A, b, Sigma):
    """Whiten a linear model with noise covariance `Sigma`.

    `Sigma` may be a scalar variance, a vector of variances, or a full SPD
    matrix. Returns ``(S A, S b)`` where ``S^T S = Sigma^{-1}``.
    """
    A = as_operator(A)
    b = as_vector(b, "b", A.shape[0])
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim <= 1:
        var = np.broadcast_to(Sigma, b.shape)
        if np.any(var <= 0):
            raise NotSPD("noise variances must be positive")
        s = 1.0 / np.sqrt(var)
        return diagonal(s) @ A, s * b
    if Sigma.shape != (b.size, b.size) or not np.allclose(Sigma, Sigma.T):
        raise NotSPD("covariance must be a symmetric m-by-m matrix")
    try:
        Lc = sla.cholesky(Sigma, lower=True)
    except sla.LinAlgError as exc:
        raise NotSPD(str(exc)) from None
    S = sla.solve_triangular(Lc, np.eye(b.size), lower=True)
    return as_operator(S) @ A, S @ b


def whitening_factor(Sigma):
    """Dense factor ``S`` with ``S^T S = Sigma^{-1}``."""
    Lc = sla.cholesky(np.asarray(Sigma, dtype=float), lower=True)
    return sla.solve_triangular(Lc, np.eye(Lc.shape[0]), lower=True)


def scale_by_prior(A, theta):
    """``A D_theta^{1/2}`` as a composition."""
    A = as_operator(A)
    theta = as_vector(theta, "theta", A.shape[1])
    if np.any(theta <= 0):
        raise DomainError("theta must be strictly positive")
    return A @ diagonal(np.sqrt(theta))


def diff_1d(n):
    """First-difference map ``L`` (with ``x_0 = 0``) and its inverse, cumulative summation."""
    if n < 1:
        raise ValueError("n must be positive")

    def L(v):
        return np.diff(v.ravel(), prepend=0.0)

    def Lt(u):
        u = u.ravel()
        return u - np.append(u[1:], 0.0)

    def C(z):
        return np.cumsum(z.ravel())

    def Ct(u):
        return np.cumsum(u.ravel()[::-1])[::-1]

    Lop = LinearOperator((n, n), matvec=L, rmatvec=Lt, dtype=float)
    Cop = LinearOperator((n, n), matvec=C, rmatvec=Ct, dtype=float)
    return Lop, Cop


def diff_matrix_1d(n):
    """Sparse lower-bidiagonal first-difference matrix."""
    return sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], format="csr")


@dataclass(eq=False)
class IncrementGraph:
    """Free nodes and free edges of a rectangular grid with clamped boundary.

    Edges are oriented left to right and top to bottom; ``L @ x`` gives the
    increment ``x_head - x_tail`` along each free edge, with bound nodes
    contributing zero. ``M`` has one row per grid square and sums increments
    clockwise, so ``M @ L = 0``.
    """

    shape: tuple
    free: np.ndarray = field(repr=False)
    node_index: np.ndarray = field(repr=False)
    L: sp.csr_matrix = field(repr=False)
    M: sp.csr_matrix = field(repr=False)
    h_edge: np.ndarray = field(repr=False)
    v_edge: np.ndarray = field(repr=False)

    @property
    def n_v(self):
        return self.L.shape[1]

    @property
    def n_e(self):
        return self.L.shape[0]

    @property
    def n_t(self):
        return self.M.shape[0]

    @property
    def n_h(self):
        """Number of horizontal free edges; they come first in edge order."""
        return int(np.count_nonzero(self.h_edge >= 0))

    def embed(self, x_free):
        """Free nodal values to a full image (bound nodes set to zero)."""
        img = np.zeros(self.shape)
        img[self.free] = x_free
        return img

    def restrict(self, img):
        return np.asarray(img).reshape(self.shape)[self.free]

    def embedding(self):
        """Sparse ``(rows*cols) x n_v`` injection of free values into the image."""
        rows = np.flatnonzero(self.free.ravel())
        return sp.csr_matrix((np.ones(rows.size), (rows, np.arange(rows.size))), shape=(self.free.size, rows.size))


def outer_ring(shape):
    mask = np.zeros(shape, dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return mask


def build_increment_graph(shape, bound=None):
    """Build the free-node/free-edge graph of a ``rows x cols`` grid.

    Parameters
    ----------
    shape : (int, int)
    bound : ndarray of bool, optional
        Mask of nodes clamped to zero; defaults to the outer ring.
    """
    R, C = shape
    if R < 1 or C < 1:
        raise DegenerateGrid("grid must be nonempty")
    bound = outer_ring(shape) if bound is None else np.asarray(bound, dtype=bool)
    if bound.shape != (R, C):
        raise ValueError("boundary mask does not match the grid")
    free = ~bound
    n_v = int(free.sum())
    if n_v == 0:
        raise DegenerateGrid("no free nodes")
    node = np.full((R, C), -1, dtype=np.int64)
    node[free] = np.arange(n_v)

    h_free = free[:, :-1] | free[:, 1:]
    v_free = free[:-1, :] | free[1:, :]
    n_h, n_vert = int(h_free.sum()), int(v_free.sum())
    h_edge = np.full((R, C - 1), -1, dtype=np.int64)
    h_edge[h_free] = np.arange(n_h)
    v_edge = np.full((R - 1, C), -1, dtype=np.int64)
    v_edge[v_free] = n_h + np.arange(n_vert)
    n_e = n_h + n_vert

    rows, cols, vals = [], [], []

    def add(edge_ids, tail, head):
        for ids, nodes, sign in ((edge_ids, head, 1.0), (edge_ids, tail, -1.0)):
            keep = (ids >= 0) & (nodes >= 0)
            rows.append(ids[keep])
            cols.append(nodes[keep])
            vals.append(np.full(int(keep.sum()), sign))

    add(h_edge, node[:, :-1], node[:, 1:])
    add(v_edge, node[:-1, :], node[1:, :])
    L = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_e, n_v)
    )

    # clockwise around square (i, j): top (+), right (+), bottom (-), left (-)
    n_t = (R - 1) * (C - 1)
    loop = np.arange(n_t).reshape(R - 1, C - 1) if n_t else np.zeros((0, 0), dtype=np.int64)
    mr, mc, mv = [], [], []
    for ids, sign in (
        (h_edge[:-1, :], 1.0),
        (v_edge[:, 1:], 1.0),
        (h_edge[1:, :], -1.0),
        (v_edge[:, :-1], -1.0),
    ):
        keep = ids >= 0
        mr.append(loop[keep])
        mc.append(ids[keep])
        mv.append(np.full(int(keep.sum()), sign))
    M = sp.csr_matrix((np.concatenate(mv), (np.concatenate(mr), np.concatenate(mc))), shape=(n_t, n_e))
    return IncrementGraph((R, C), free, node, L, M, h_edge, v_edge)


def weighted_increments(L, theta):
    """``L_theta = D_theta^{-1/2} L`` as a sparse matrix."""
    theta = as_vector(theta, "theta", L.shape[0])
    if np.any(theta <= 0):
        raise DomainError("theta must be strictly positive")
    return sp.diags(1.0 / np.sqrt(theta)) @ sp.csr_matrix(L)


class _NormalSolver:
    """Solves ``(L^T L) w = v`` for a sparse full-column-rank ``L``."""

    def __init__(self, L, method="auto"):
        self.L = sp.csr_matrix(L)
        n = self.L.shape[1]
        N = (self.L.T @ self.L).tocsc()
        if method == "auto":
            method = "dense" if n <= DENSE_PINV_MAX else "direct"
        self.method = method
        if method == "dense":
            try:
                self._chol = sla.cho_factor(N.toarray(), lower=True)
            except sla.LinAlgError as exc:
                raise RankDeficient(str(exc)) from None
            # a pivot that is tiny next to its own diagonal entry means a
            # (numerically) dependent column; edge weights alone cannot cause it
            piv = np.abs(np.diag(self._chol[0])) / np.sqrt(N.diagonal())
            if piv.min() <= np.sqrt(n * np.finfo(float).eps):
                raise RankDeficient("increment map is numerically rank deficient")
            self._solve = lambda v: sla.cho_solve(self._chol, v)
        elif method == "direct":
            try:
                self._solve = spla.factorized(N)
            except RuntimeError as exc:
                raise RankDeficient(str(exc)) from None
        elif method == "cg":
            d = N.diagonal()
            if np.any(d <= 0):
                raise RankDeficient("zero column in the increment map")
            P = sp.diags(1.0 / d)

            def solve(v):
                if not np.any(v):
                    return np.zeros(n)
                w, info = spla.cg(N, v, rtol=INNER_TOL, atol=0.0, M=P, maxiter=20 * n)
                if info > 0:
                    raise NonConvergence(f"inner CG did not converge in {info} iterations")
                return w

            self._solve = solve
        else:
            raise ValueError(f"unknown method {method!r}")

    def __call__(self, v):
        w = self._solve(np.asarray(v, dtype=float))
        if not np.all(np.isfinite(w)):
            raise RankDeficient("normal matrix is numerically singular")
        return w


class PinvOperator(LinearOperator):
    """Action of the pseudo-inverse ``L^+`` of a full-column-rank sparse ``L``.

    ``matvec`` solves ``L a = b`` in the least-squares sense; ``rmatvec`` uses
    ``(L^+)^T v = L (L^T L)^{-1} v``. The normal matrix is factored once.
    """

    def __init__(self, L, method="auto"):
        self.Lmat = sp.csr_matrix(L)
        self._normal = _NormalSolver(self.Lmat, method)
        n_e, n_v = self.Lmat.shape
        super().__init__(dtype=float, shape=(n_v, n_e))

    def _matvec(self, b):
        return self._normal(self.Lmat.T @ b.ravel())

    def _rmatvec(self, v):
        return self.Lmat @ self._normal(v.ravel())


def apply_pinv(L_theta, beta_vec, method="auto"):
    """Least-squares solution ``alpha`` of ``L_theta alpha = beta_vec``."""
    if isinstance(L_theta, PinvOperator):
        return L_theta.matvec(beta_vec)
    return PinvOperator(L_theta, method).matvec(np.asarray(beta_vec, dtype=float))


def apply_pinv_adjoint(L_theta, v, method="auto"):
    """``(L_theta^+)^T v`` via a solve with ``L_theta^T L_theta``."""
    if isinstance(L_theta, PinvOperator):
        return L_theta.rmatvec(v)
    return PinvOperator(L_theta, method).rmatvec(np.asarray(v, dtype=float))


def circulation_residual(graph, y):
    """Relative circulation ``||M y|| / ||y||`` of edge increments `y`."""
    y = as_vector(y, "y", graph.n_e)
    return float(np.linalg.norm(graph.M @ y) / max(np.linalg.norm(y), np.finfo(float).eps))
