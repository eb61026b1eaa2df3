"""Scikit-learn style estimator around the IAS solvers."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .forward import DIRECT, INCREMENTS_1D, Problem
from .hyperprior import HybridPair, HyperModel, sensitivity_scaling
from .ias import GLOBAL, LOCAL, MODES, PLAIN, SolverControls, run
from .krylov import StoppingRule


class IASRegressor(RegressorMixin, BaseEstimator):
    """Sparse MAP estimate of ``coef`` in ``y = X coef + noise`` by (hybrid) IAS.

    ``X`` is the forward matrix (rows are observations) and ``y`` the data.
    The noise is assumed white with standard deviation `noise_std`.

    Parameters
    ----------
    mode : {"plain", "local", "global"}
        Solver variant. Plain mode uses only the first hypermodel.
    r1, eta1 : float
        First (for the hybrids: convex) hypermodel.
    vartheta1 : float or "sensitivity"
        Scale of the first hypermodel; ``"sensitivity"`` uses
        ``C / ||X e_j||^2`` with ``C = sensitivity_c``.
    sensitivity_c : float
    r2, eta2 : float
        Greedy hypermodel of the hybrid modes; its scale is matched to the first.
    t_bar : int
        Switch iteration of the global hybrid.
    noise_std : float
    representation : {"direct", "increments1d"}
        ``"increments1d"`` promotes sparse first differences of ``coef``.
    tau : float
        Safeguard factor of the CGLS stopping rule.
    max_cgls_iters : int, optional
    outer_tol : float
    max_outer : int
    box : (float, float), optional
    projection : bool
    monotone : bool

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    latent_coef_ : ndarray
        The sparse unknown (``coef_`` itself or its increments).
    theta_ : ndarray
        Final prior variances.
    active_set_ : ndarray of int
        Components moved to the greedy model (local hybrid).
    n_iter_ : int
    converged_ : bool
    trace_ : list of TraceRecord
    """

    def __init__(
        self,
        mode="global",
        r1=1.0,
        eta1=1e-2,
        vartheta1=1e-5,
        sensitivity_c=1.0,
        r2=-1.0,
        eta2=-4.5,
        t_bar=10,
        noise_std=1.0,
        representation="direct",
        tau=1.1,
        max_cgls_iters=None,
        outer_tol=1e-6,
        max_outer=200,
        box=None,
        projection=False,
        monotone=True,
    ):
        self.mode = mode
        self.r1 = r1
        self.eta1 = eta1
        self.vartheta1 = vartheta1
        self.sensitivity_c = sensitivity_c
        self.r2 = r2
        self.eta2 = eta2
        self.t_bar = t_bar
        self.noise_std = noise_std
        self.representation = representation
        self.tau = tau
        self.max_cgls_iters = max_cgls_iters
        self.outer_tol = outer_tol
        self.max_outer = max_outer
        self.box = box
        self.projection = projection
        self.monotone = monotone

    def _check_params(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.representation not in (DIRECT, INCREMENTS_1D):
            raise ValueError(f"representation must be 'direct' or 'increments1d', got {self.representation!r}")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")

    def fit(self, X, y):
        self._check_params()
        X, y = validate_data(self, X, y, y_numeric=True)
        prob = Problem(X / self.noise_std, y / self.noise_std, self.representation, sigma=self.noise_std)
        n = prob.n
        if isinstance(self.vartheta1, str):
            if self.vartheta1 != "sensitivity":
                raise ValueError("vartheta1 must be a positive number or 'sensitivity'")
            vt = sensitivity_scaling(prob.latent_operator(), self.sensitivity_c)
        else:
            vt = self.vartheta1
        m1 = HyperModel.from_eta(self.r1, self.eta1, vt, n)
        common = dict(
            t_bar=self.t_bar,
            outer_tol=self.outer_tol,
            max_outer=self.max_outer,
            box=self.box,
            projection=self.projection,
            rule=StoppingRule(tau=self.tau, max_iters=self.max_cgls_iters),
            monotone=self.monotone,
        )
        if self.mode == PLAIN:
            controls = SolverControls(mode=PLAIN, model=m1, **common)
        else:
            pair = HybridPair.from_eta(m1, self.r2, self.eta2)
            controls = SolverControls(mode=LOCAL if self.mode == "local" else GLOBAL, pair=pair, **common)
        state = run(prob, controls)
        self.coef_ = state.signal
        self.latent_coef_ = state.x
        self.theta_ = state.theta
        self.active_set_ = np.flatnonzero(state.switched)
        self.n_iter_ = state.t
        self.converged_ = state.converged
        self.trace_ = state.trace
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_
