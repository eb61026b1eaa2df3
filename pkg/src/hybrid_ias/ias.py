"""Iterative Alternating Sequential (IAS) MAP solver and its hybrid variants.

Each outer step updates the sparse unknown ``u`` for fixed variances ``theta``
(a least-squares problem in the prior-whitened variable ``w = theta^{-1/2} u``)
and then updates ``theta`` componentwise for fixed ``u``.

Modes
-----
``plain``
    One hypermodel throughout.
``local``
    Start with the convex model and move component ``j`` to the greedy model
    as soon as its greedy variance update falls below the convexity bound;
    a component never moves back.
``global``
    Convex model for the first ``t_bar`` steps, greedy model afterwards.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, cg

from .forward import DIRECT, INCREMENTS_1D, INCREMENTS_2D, Problem
from .hyperprior import HybridPair, HyperModel, convexity_bound, penalty_terms, theta_update
from .krylov import StoppingRule, cgls
from .operators import PinvOperator, diagonal, weighted_increments
from .validation import as_positive_vector, as_vector

log = logging.getLogger(__name__)

PLAIN, LOCAL, GLOBAL = "plain", "local", "global"
MODES = (PLAIN, LOCAL, GLOBAL)

# Local-hybrid projection keeps |u_j| strictly inside the bound so that the
# greedy variance stays strictly below the convexity bound.
_PROJECTION_SHRINK = 1.0 - 1e-9


@dataclass
class SolverControls:
    """Outer-iteration settings.

    Parameters
    ----------
    mode : {"plain", "local", "global"}
    model : HyperModel, optional
        Hypermodel for plain mode.
    pair : HybridPair, optional
        Convex/greedy pair for the hybrid modes.
    t_bar : int
        Switch iteration of the global hybrid.
    outer_tol : float
        Stop when the relative changes of ``u`` and ``theta`` fall below this.
    max_outer : int
    box : (float, float), optional
        Interval the signal is projected onto after every signal update.
    projection : bool
        Local hybrid only: clip switched components to ``[-x_bar, x_bar]``.
    rule : StoppingRule
        Early stopping of the inner CGLS.
    x_solver : {"rks", "dense"}
        ``"dense"`` solves each signal update exactly with a dense Cholesky
        factorization (small problems only).
    monotone : bool
        If the early-stopped signal update raises the signal-update objective,
        replace it by a conjugate-gradient solve of that subproblem started at
        the previous iterate; if a projection still raises it, fall back to the
        best point on the segment from the previous iterate. This makes the
        objective non-increasing for a fixed model assignment.
    exact_tol : float
        Relative residual tolerance of the fallback solve.
    """

    mode: str = PLAIN
    model: HyperModel | None = None
    pair: HybridPair | None = None
    t_bar: int = 10
    outer_tol: float = 1e-6
    max_outer: int = 200
    box: tuple | None = None
    projection: bool = False
    rule: StoppingRule = field(default_factory=StoppingRule)
    x_solver: str = "rks"
    monotone: bool = True
    exact_tol: float = 1e-8
    stall_step: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == PLAIN and self.model is None:
            raise ValueError("plain mode needs a hypermodel")
        if self.mode != PLAIN and self.pair is None:
            raise ValueError(f"{self.mode} mode needs a hybrid pair")
        if self.mode == GLOBAL and self.t_bar < 1:
            raise ValueError("t_bar must be at least 1")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.x_solver not in ("rks", "dense"):
            raise ValueError(f"unknown x_solver {self.x_solver!r}")
        if self.box is not None and not self.box[0] < self.box[1]:
            raise ValueError("box must be an increasing interval")

    @property
    def first_model(self):
        return self.model if self.mode == PLAIN else self.pair.m1

    def convexity_bounds(self):
        """Per-component bound on theta used for the convexity bitmap, or None."""
        if self.mode != PLAIN:
            return self.pair.theta_bar
        if self.model.r < 1 and (self.model.r < 0 or self.model.eta > 0):
            return convexity_bound(self.model)
        return None


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    residual: float
    cgls_iters: int
    cgls_stop: str
    x_source: str
    exact_iters: int
    step: float
    n_switched: int
    n_convex: int
    rel_change: float
    model_tag: str
    convex: np.ndarray | None = field(default=None, repr=False)


@dataclass
class IasState:
    """Solver state; `x` is the sparse unknown and `signal` the reconstructed signal."""

    x: np.ndarray
    theta: np.ndarray
    switched: np.ndarray
    t: int = 0
    signal: np.ndarray | None = None
    converged: bool = False
    trace: list = field(default_factory=list)

    @property
    def switched_set(self):
        return set(np.flatnonzero(self.switched).tolist())


def _component_params(controls, switched, t):
    """Per-component ``(r, beta, vartheta)`` arrays of the active hypermodels."""
    if controls.mode == PLAIN:
        m = controls.model
        return m.r, m.beta, m.vartheta
    m1, m2 = controls.pair.m1, controls.pair.m2
    if controls.mode == GLOBAL:
        m = m1 if t < controls.t_bar else m2
        return m.r, m.beta, m.vartheta
    r = np.where(switched, m2.r, m1.r)
    beta = np.where(switched, m2.beta, m1.beta)
    vt = np.where(switched, m2.vartheta, m1.vartheta)
    return r, beta, vt


def objective(problem, u, theta, params, signal=None):
    """``1/2 ||b - A x||^2 + sum_j p(u_j, theta_j | model_j)``.

    `params` is an ``(r, beta, vartheta)`` triple, scalars or per-component
    arrays; `signal` is the signal matching `u` (computed when omitted).
    """
    u = as_vector(u, "u", problem.n)
    theta = as_positive_vector(theta, "theta", problem.n)
    if signal is None:
        signal = latent_to_signal(problem, u)
    r = problem.b - problem.A.matvec(signal)
    return 0.5 * float(np.dot(r, r)) + float(np.sum(penalty_terms(u, theta, *params)))


def latent_to_signal(problem, u):
    if problem.representation == DIRECT:
        return np.asarray(u, dtype=float)
    if problem.representation == INCREMENTS_1D:
        return np.cumsum(u)
    return PinvOperator(problem.graph.L).matvec(u)


def _prior_scaled_operator(problem, theta):
    """Operator acting on ``w = theta^{-1/2} u`` and the map ``w -> (u, x)``."""
    sq = np.sqrt(theta)
    if problem.representation == DIRECT:
        op = problem.A @ diagonal(sq)

        def recover(w):
            u = sq * w
            return u, u

    elif problem.representation == INCREMENTS_1D:
        op = problem.latent_operator() @ diagonal(sq)

        def recover(w):
            u = sq * w
            return u, np.cumsum(u)

    else:
        pinv = PinvOperator(weighted_increments(problem.graph.L, theta))
        op = problem.A @ pinv

        def recover(w):
            return sq * w, pinv.matvec(w)

    return op, recover


def x_update(problem, theta, rule=None, solver="rks"):
    """Minimize the data misfit plus ``sum u_j^2 / (2 theta_j)`` over the unknown.

    Returns
    -------
    u : ndarray
        Sparse unknown.
    x : ndarray
        Corresponding signal.
    result : CglsResult or None
        Inner solver record (None for the dense solver).
    """
    theta = as_positive_vector(theta, "theta", problem.n)
    op, recover = _prior_scaled_operator(problem, theta)
    if solver == "dense":
        Ad = op.matmat(np.eye(op.shape[1]))
        N = Ad.T @ Ad + np.eye(op.shape[1])
        w = sla.cho_solve(sla.cho_factor(N), Ad.T @ problem.b)
        u, x = recover(w)
        return u, x, None
    res = cgls(op, problem.b, rule)
    u, x = recover(res.w)
    return u, x, res


def exact_x_update(problem, theta, u_start, tol=1e-8, maxiter=None):
    """Solve the signal subproblem by CG on ``(I + A_theta^T A_theta) w = A_theta^T b``.

    The iteration starts from ``w = theta^{-1/2} u_start``, so every iterate
    has a subproblem objective no larger than that of `u_start`.

    Returns
    -------
    u, x : ndarray
    iters : int
    """
    theta = as_positive_vector(theta, "theta", problem.n)
    op, recover = _prior_scaled_operator(problem, theta)
    n = op.shape[1]
    N = LinearOperator((n, n), matvec=lambda v: v + op.rmatvec(op.matvec(v)), dtype=float)
    count = [0]

    def tick(_):
        count[0] += 1

    w0 = as_vector(u_start, "u_start", n) / np.sqrt(theta)
    w, _ = cg(N, op.rmatvec(problem.b), x0=w0, rtol=tol, atol=0.0, maxiter=maxiter or 10 * n, callback=tick)
    u, x = recover(w)
    return u, x, count[0]


def _subproblem_value(problem, theta, u, Ax):
    r = problem.b - Ax
    return 0.5 * float(np.dot(r, r)) + 0.5 * float(np.dot(u / theta, u))


def switch_decision(x_j, pair, j):
    """Greedy-model variance if it lies strictly below the convexity bound.

    Returns ``(True, theta2)`` when component `j` moves to the greedy model,
    else ``(False, theta1)``.
    """
    th2 = theta_update(x_j, pair.m2, j)
    if th2 < pair.theta_bar[j]:
        return True, th2
    return False, theta_update(x_j, pair.m1, j)


def _theta_step(u, controls, switched, t):
    mode = controls.mode
    if mode == PLAIN:
        return theta_update(u, controls.model), switched
    pair = controls.pair
    if mode == GLOBAL:
        return theta_update(u, pair.m1 if t < controls.t_bar else pair.m2), switched
    cand2 = theta_update(u, pair.m2)
    switched = switched | (cand2 < pair.theta_bar)
    theta = cand2.copy()
    rest = ~switched
    if rest.any():
        theta[rest] = theta_update(u, pair.m1)[rest]
    return theta, switched


def _safeguard(problem, theta, u_prev, Ax_prev, u, Ax):
    """Step length in [0, 1] minimizing the signal-update objective on the segment.

    The objective ``1/2 ||b - A x||^2 + 1/2 sum u_j^2 / theta_j`` is a convex
    quadratic along the segment, so the minimizer is explicit.
    """
    du = u - u_prev
    Adx = Ax - Ax_prev
    r_prev = problem.b - Ax_prev
    slope = -float(np.dot(r_prev, Adx)) + float(np.dot(u_prev / theta, du))
    curv = float(np.dot(Adx, Adx)) + float(np.dot(du / theta, du))
    if curv <= 0 or slope + 0.5 * curv <= 0:
        return 1.0
    return min(1.0, max(0.0, -slope / curv))


def _project(problem, controls, switched, x_bar, u, x):
    """Box projection of the signal, then (local hybrid) clipping of switched components."""
    if controls.box is not None:
        x = np.clip(x, *controls.box)
        u = problem.to_latent(x)
    if controls.projection and x_bar is not None and switched.any():
        lim = _PROJECTION_SHRINK * x_bar
        clipped = np.where(switched, np.clip(u, -lim, lim), u)
        if not np.array_equal(clipped, u):
            u = clipped
            x = latent_to_signal(problem, u)
    return u, x


def _model_tag(controls, switched, t):
    if controls.mode == PLAIN:
        return "m"
    if controls.mode == GLOBAL:
        return "m1" if t < controls.t_bar else "m2"
    return f"I{int(switched.sum())}"


def _rel(new, old):
    d = np.linalg.norm(new - old)
    s = np.linalg.norm(new)
    return d / s if s > 0 else d


def run(problem, controls, theta0=None, callback=None):
    """Run IAS on `problem`.

    Parameters
    ----------
    problem : Problem
    controls : SolverControls
    theta0 : array_like, optional
        Initial variances; defaults to the scale vector of the first model.
    callback : callable, optional
        Called with each :class:`TraceRecord` as it is produced.

    Returns
    -------
    IasState
        Final state; ``state.trace`` holds one record per outer iteration.
        If a solver error interrupts the run, the partial trace is attached to
        the exception as ``exc.trace``.
    """
    if not isinstance(problem, Problem):
        raise TypeError("problem must be a Problem")
    n = problem.n
    first = controls.first_model
    if first.n != n:
        raise ValueError(f"hypermodel has length {first.n}, problem unknown has length {n}")
    theta = first.vartheta.copy() if theta0 is None else as_positive_vector(theta0, "theta0", n)
    theta = np.maximum(theta, first.theta_min)
    bounds = controls.convexity_bounds()
    x_bar = controls.pair.x_bar if controls.mode == LOCAL else None

    state = IasState(x=np.zeros(n), theta=theta, switched=np.zeros(n, dtype=bool))
    trace = state.trace
    u_old = state.x
    x_old = np.zeros(problem.n_signal)
    Ax_old = np.zeros(problem.m)
    try:
        for t in range(controls.max_outer):
            u, x, res = x_update(problem, theta, controls.rule, controls.x_solver)
            u, x = _project(problem, controls, state.switched, x_bar, u, x)
            Ax = problem.A.matvec(x)
            source, exact_iters, step = "rks" if res is not None else "dense", 0, 1.0
            if controls.monotone:
                step = _safeguard(problem, theta, u_old, Ax_old, u, Ax)
                if step < controls.stall_step:
                    u, x, exact_iters = exact_x_update(problem, theta, u_old, controls.exact_tol)
                    u, x = _project(problem, controls, state.switched, x_bar, u, x)
                    Ax = problem.A.matvec(x)
                    source = "exact"
                    step = _safeguard(problem, theta, u_old, Ax_old, u, Ax)
                if step < 1.0:
                    u = u_old + step * (u - u_old)
                    x = x_old + step * (x - x_old)
                    Ax = Ax_old + step * (Ax - Ax_old)
            theta_new, switched = _theta_step(u, controls, state.switched, t)
            tag = _model_tag(controls, switched, t)
            params = _component_params(controls, switched, t)
            resid = problem.b - Ax
            obj = 0.5 * float(np.dot(resid, resid)) + float(np.sum(penalty_terms(u, theta_new, *params)))
            change = max(_rel(u, u_old), _rel(theta_new, theta))
            convex = None if bounds is None else theta_new < bounds
            rec = TraceRecord(
                iteration=t + 1,
                objective=obj,
                residual=float(np.linalg.norm(resid)),
                cgls_iters=0 if res is None else res.iters,
                cgls_stop="dense" if res is None else res.stop_reason.value,
                x_source=source,
                exact_iters=exact_iters,
                step=step,
                n_switched=int(switched.sum()),
                n_convex=-1 if convex is None else int(convex.sum()),
                rel_change=float(change),
                model_tag=tag,
                convex=convex,
            )
            trace.append(rec)
            if callback is not None:
                callback(rec)
            log.debug("iter %d obj %.6e cgls %d |I| %d change %.2e", t + 1, obj, rec.cgls_iters, rec.n_switched, change)
            state.x, state.theta, state.switched, state.signal, state.t = u, theta_new, switched, x, t + 1
            u_old, x_old, Ax_old, theta = u, x, Ax, theta_new
            past_switch = controls.mode != GLOBAL or t + 1 > controls.t_bar
            if past_switch and change < controls.outer_tol:
                state.converged = True
                break
    except Exception as exc:
        exc.trace = trace
        raise
    return state
