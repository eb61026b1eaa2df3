"""Generalized gamma hypermodels and the componentwise variance update.

A hypermodel is the triple ``(r, beta, vartheta)`` of the generalized gamma
density on the prior variances ``theta``. Everything here works in the scaled
variables ``xi = theta / vartheta`` and ``z = x / sqrt(vartheta)``, where the
stationarity condition of the variance update reads

    r * xi**r - eta - z**2 / (2 * xi) = 0,        eta = r * beta - 3/2,

whose left-hand side is strictly increasing in ``log(xi)``; the root is unique
whenever it exists.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .exceptions import DomainError, IntegrationFailure, InvalidModel, NonConvergence, ZeroColumn
from .validation import as_operator, as_vector, broadcast_positive

THETA_FLOOR = 1e-16

_NEWTON_TOL = 1e-12
_NEWTON_MAXITER = 100


def eta(r, beta):
    """Return ``r * beta - 3/2``."""
    return r * beta - 1.5


@dataclass(frozen=True, eq=False)
class HyperModel:
    """Generalized gamma hypermodel.

    Parameters
    ----------
    r : float
        Exponent, nonzero.
    beta : float
        Shape parameter, positive.
    vartheta : array_like
        Positive scale parameters, one per unknown.
    """

    r: float
    beta: float
    vartheta: np.ndarray = field(repr=False)

    def __post_init__(self):
        r, beta = float(self.r), float(self.beta)
        if r == 0 or not np.isfinite(r):
            raise InvalidModel("r must be finite and nonzero")
        if not beta > 0:
            raise InvalidModel("beta must be positive")
        try:
            vt = broadcast_positive(self.vartheta, np.size(self.vartheta), "vartheta")
        except (DomainError, ValueError) as exc:
            raise InvalidModel(str(exc)) from None
        # eta == 0 is the weighted lp-penalty case and is allowed for every r > 0.
        if 0 < r < 1 and eta(r, beta) < 0:
            raise InvalidModel("0 < r < 1 requires eta = r*beta - 3/2 >= 0")
        vt.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "vartheta", vt)

    @classmethod
    def from_eta(cls, r, eta_value, vartheta, n=None):
        """Build a model from ``(r, eta)``; a scalar `vartheta` is broadcast to `n`."""
        if r == 0:
            raise InvalidModel("r must be nonzero")
        if n is not None:
            vartheta = broadcast_positive(vartheta, n, "vartheta")
        return cls(r, (eta_value + 1.5) / r, vartheta)

    @property
    def eta(self):
        return eta(self.r, self.beta)

    @property
    def n(self):
        return self.vartheta.shape[0]

    @property
    def globally_convex(self):
        return self.r >= 1

    @property
    def locally_convex(self):
        return self.r < 1

    @property
    def theta_min(self):
        return THETA_FLOOR * float(self.vartheta.max())

    def with_vartheta(self, vartheta):
        return HyperModel(self.r, self.beta, vartheta)

    def __repr__(self):
        return f"HyperModel(r={self.r:g}, beta={self.beta:g}, eta={self.eta:g}, n={self.n})"


def _scaled_background(r, eta_value):
    """``(eta / r) ** (1 / r)``, the scaled variance at ``x = 0`` (0 if undefined)."""
    ratio = eta_value / r
    if ratio <= 0:
        return 0.0
    return ratio ** (1.0 / r)


def _solve_scaled(z2, r, eta_value):
    """Positive root ``xi`` of ``r xi^r - eta - z2 / (2 xi) = 0`` for each entry of `z2`."""
    z2 = np.asarray(z2, dtype=float)
    if r == 1.0:
        s = np.sqrt(eta_value * eta_value + 2.0 * z2)
        if eta_value >= 0:
            return 0.5 * (eta_value + s)
        # avoid cancellation in eta + s when eta < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(z2 > 0, z2 / (s - eta_value), 0.0)
    if r == -1.0:
        return (1.0 + 0.5 * z2) / (-eta_value)

    xi0 = _scaled_background(r, eta_value)
    out = np.empty_like(z2)
    zero = z2 == 0
    out[zero] = xi0
    if np.all(zero):
        return out

    h = 0.5 * z2[~zero]
    if xi0 > 0:
        u = np.full_like(h, np.log(xi0))
    elif r != -1.0:
        # eta = 0: exact lp root xi^(r+1) = z^2 / (2r)
        u = np.log(h / r) / (r + 1.0)
    else:
        u = np.zeros_like(h)

    def F(u):
        return r * np.exp(r * u) - eta_value - h * np.exp(-u)

    def dF(u):
        return r * r * np.exp(r * u) + h * np.exp(-u)

    # bracket the root; F is increasing in u
    lo, hi = u.copy(), u.copy()
    step = np.ones_like(u)
    for _ in range(200):
        need = F(lo) > 0
        if not need.any():
            break
        lo[need] -= step[need]
        step[need] *= 2
    step[:] = 1.0
    for _ in range(200):
        need = F(hi) < 0
        if not need.any():
            break
        hi[need] += step[need]
        step[need] *= 2
    if (F(lo) > 0).any() or (F(hi) < 0).any():
        raise NonConvergence("could not bracket the variance update root")

    u = np.clip(u, lo, hi)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(_NEWTON_MAXITER):
            f = F(u)
            lo = np.where(f < 0, u, lo)
            hi = np.where(f > 0, u, hi)
            un = u - f / dF(u)
            bad = ~np.isfinite(un) | (un <= lo) | (un >= hi)
            un = np.where(bad, 0.5 * (lo + hi), un)
            done = np.abs(un - u) <= _NEWTON_TOL * np.maximum(1.0, np.abs(u))
            u = un
            if done.all() or (f == 0).all():
                break
        else:
            raise NonConvergence(f"variance update did not converge in {_NEWTON_MAXITER} iterations")
    out[~zero] = np.exp(u)
    return out


def theta_update(x, model, j=None):
    """Minimize the penalty over ``theta`` for fixed `x`, componentwise.

    Parameters
    ----------
    x : float or array_like
        Signal component(s). If `j` is None, `x` must have length ``model.n``.
    model : HyperModel
    j : int, optional
        Component index; when given, `x` is the scalar ``x_j`` and a float is
        returned.

    Returns
    -------
    theta : float or ndarray
        Updated variance(s), floored at ``model.theta_min``.
    """
    if j is None:
        x = as_vector(x, "x", model.n)
        vt = model.vartheta
    else:
        x = as_vector(x, "x", 1)
        vt = model.vartheta[j : j + 1]
    xi = _solve_scaled(x * x / vt, model.r, model.eta)
    theta = np.maximum(vt * xi, model.theta_min)
    return float(theta[0]) if j is not None else theta


def phi_ivp(z_abs, r, eta_value, h_max=1e-3, tol=1e-10):
    """Scaled variance update obtained by integrating its defining ODE.

    Integrates ``phi'(z) = 2 z phi / (2 r^2 phi^(r+1) + z^2)`` from
    ``phi(0) = (eta / r)^(1/r)`` with classical RK4, accepting a step only when
    it agrees with two half steps to `tol`. Meant as an independent check on
    :func:`theta_update` via ``theta_j = vartheta_j * phi(|x_j| / sqrt(vartheta_j))``.

    Parameters
    ----------
    z_abs : float or array_like
        Nonnegative evaluation points.
    r, eta_value : float
        Hypermodel exponent and ``eta``.

    Returns
    -------
    float or ndarray
        ``phi`` at each point of `z_abs`.
    """
    if r == 0:
        raise InvalidModel("r must be nonzero")
    if 0 < r < 1 and not eta_value > 0:
        raise InvalidModel("0 < r < 1 requires eta > 0")
    if eta_value / r <= 0:
        raise InvalidModel("eta / r must be positive for the initial value to exist")
    scalar = np.ndim(z_abs) == 0
    z = np.atleast_1d(np.asarray(z_abs, dtype=float))
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise DomainError("z_abs must be finite and nonnegative")

    def f(s, p):
        return 2.0 * s * p / (2.0 * r * r * p ** (r + 1.0) + s * s)

    def rk4(s, p, dh):
        k1 = f(s, p)
        k2 = f(s + 0.5 * dh, p + 0.5 * dh * k1)
        k3 = f(s + 0.5 * dh, p + 0.5 * dh * k2)
        k4 = f(s + dh, p + dh * k3)
        return p + dh * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    order = np.argsort(z)
    out = np.empty_like(z)
    zmax = float(z.max())
    h0 = min(h_max, zmax / 1000.0) if zmax > 0 else h_max
    s, p = 0.0, _scaled_background(r, eta_value)
    h = h0
    for idx in order:
        target = z[idx]
        while s < target:
            dh = min(h, target - s)
            full = rk4(s, p, dh)
            half = rk4(s + 0.5 * dh, rk4(s, p, 0.5 * dh), 0.5 * dh)
            if abs(full - half) <= tol * max(1.0, abs(half)):
                s, p = (target if dh == target - s else s + dh), half
                h = min(h0, 2 * h)
            else:
                h = 0.5 * dh
                if h < 1e-14 * max(1.0, s):
                    raise IntegrationFailure(f"step size underflow at z={s:g}")
        out[idx] = p
    return float(out[0]) if scalar else out


def convexity_bound(model, j=None):
    """Upper bound on ``theta_j`` below which the objective is convex in that component.

    Only meaningful for ``r < 1``.
    """
    r, e = model.r, model.eta
    if r >= 1:
        raise InvalidModel("the convexity bound applies to models with r < 1")
    if 0 < r < 1 and e <= 0:
        raise InvalidModel("0 < r < 1 requires eta > 0 for a convexity bound")
    base = e / (r * abs(r - 1.0))
    xi_bar = base ** (1.0 / r)
    if j is None:
        return model.vartheta * xi_bar
    return float(model.vartheta[j] * xi_bar)


def x_bound(model, j=None):
    """Signal magnitude at which the variance update reaches the convexity bound."""
    r, e = model.r, model.eta
    xi_bar = convexity_bound(model, j) / (model.vartheta if j is None else model.vartheta[j])
    xi_bar = np.asarray(xi_bar, dtype=float)
    # x^2 / vartheta = 2 r xi^(r+1) - 2 eta xi, from the stationarity condition
    rad = 2.0 * r * xi_bar ** (r + 1.0) - 2.0 * e * xi_bar
    if np.any(rad < 0):
        raise InvalidModel("negative radicand: inconsistent hyperparameters")
    vt = model.vartheta if j is None else model.vartheta[j]
    xb = np.sqrt(rad * vt)
    return float(xb) if j is not None else xb


def sensitivity_scaling(A, C=1.0, block=256):
    """Scale parameters ``vartheta_j = C / ||A e_j||^2``.

    Explicit matrices use their column norms; a ``LinearOperator`` is applied
    to blocks of unit vectors.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    if isinstance(A, LinearOperator):
        n = A.shape[1]
        norms2 = np.empty(n)
        for start in range(0, n, block):
            stop = min(n, start + block)
            E = np.zeros((n, stop - start))
            E[np.arange(start, stop), np.arange(stop - start)] = 1.0
            cols = A.matmat(E)
            norms2[start:stop] = np.sum(cols * cols, axis=0)
    elif hasattr(A, "multiply") and hasattr(A, "tocsc"):
        A = A.tocsc()
        norms2 = np.asarray(A.multiply(A).sum(axis=0)).ravel()
    else:
        A = np.asarray(A, dtype=float)
        norms2 = np.sum(A * A, axis=0)
    zero = np.flatnonzero(norms2 == 0)
    if zero.size:
        raise ZeroColumn(f"forward map has zero columns at indices {zero[:10].tolist()}")
    return C / norms2


def match_vartheta2(m1, r2, beta2):
    """Scales for a second model whose variance update agrees with `m1` at ``x = 0``."""
    e1, e2 = m1.eta, eta(r2, beta2)
    if r2 == 0:
        raise InvalidModel("r2 must be nonzero")
    b1, b2 = e1 / m1.r, r2 / e2 if e2 != 0 else 0.0
    if b1 <= 0 or b2 <= 0:
        raise InvalidModel("background matching needs eta1/r1 > 0 and r2/eta2 > 0")
    return b1 ** (1.0 / m1.r) * b2 ** (1.0 / r2) * m1.vartheta


def penalty_terms(x, theta, r, beta, vartheta):
    """Componentwise penalty ``x^2/(2 theta) - eta log(theta/vartheta) + (theta/vartheta)^r``.

    `r`, `beta` may be arrays (one model per component).
    """
    if np.any(theta <= 0):
        raise DomainError("theta must be strictly positive")
    ratio = theta / vartheta
    return 0.5 * x * x / theta - (r * beta - 1.5) * np.log(ratio) + ratio**r


def penalty(x, theta, model):
    """Total penalty of `x` under variances `theta` for a single hypermodel."""
    x = as_vector(x, "x", model.n)
    theta = as_vector(theta, "theta", model.n)
    if np.any(theta <= 0):
        raise DomainError("theta must be strictly positive")
    return float(np.sum(penalty_terms(x, theta, model.r, model.beta, model.vartheta)))


def lp_constant(r):
    """Constant ``C_r`` and exponent ``p`` of the weighted lp-penalty reached when ``r beta = 3/2``."""
    return (r + 1.0) / (2.0 * r) ** (r / (r + 1.0)), 2.0 * r / (r + 1.0)


@dataclass(frozen=True, eq=False)
class HybridPair:
    """A convex hypermodel paired with a greedier one for the hybrid solvers.

    Build with :meth:`from_models` so that the second scale vector is matched
    to the first at ``x = 0``.
    """

    m1: HyperModel
    m2: HyperModel
    theta_bar: np.ndarray = field(repr=False)
    x_bar: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.m2.r < 1 <= self.m1.r:
            raise InvalidModel("hybrid pair needs r2 < 1 <= r1")
        if self.m1.n != self.m2.n:
            raise InvalidModel("hypermodels must have the same length")
        if np.any(self.theta_bar <= 0) or np.any(self.x_bar <= 0):
            raise InvalidModel("convexity bounds must be positive")

    @classmethod
    def from_models(cls, m1, r2, beta2):
        m2 = HyperModel(r2, beta2, match_vartheta2(m1, r2, beta2))
        return cls(m1, m2, convexity_bound(m2), x_bound(m2))

    @classmethod
    def from_eta(cls, m1, r2, eta2):
        return cls.from_models(m1, r2, (eta2 + 1.5) / r2)
