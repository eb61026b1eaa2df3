"""Forward models and synthetic data for the three test problems.

* 1D deconvolution with the Airy-disk kernel ``(J1(kappa|t|) / (kappa|t|))^2``.
* 2D Gaussian blur of a piecewise-constant phantom, sparse in its increments.
* 2D Gaussian blur of a "starry night" impulse image, sparse in itself.

Random numbers come from NumPy's PCG64 generator (``numpy.random.default_rng``)
so a fixed seed reproduces data bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.sparse.linalg import LinearOperator

from .exceptions import DegenerateSignal
from .operators import IncrementGraph, PinvOperator, diff_1d, diff_matrix_1d
from .validation import as_operator, as_vector

DIRECT = "direct"
INCREMENTS_1D = "increments1d"
INCREMENTS_2D = "increments2d"
REPRESENTATIONS = (DIRECT, INCREMENTS_1D, INCREMENTS_2D)

# Example 1 ground truth, chosen for this package (not published data):
# the signal jumps to LEVELS[i] at JUMPS[i] and is zero before the first jump.
EXAMPLE1_JUMPS = (0.10, 0.15, 0.40, 0.65, 0.85)
EXAMPLE1_LEVELS = (1.0, -0.6, 0.8, -0.4, 0.5)
EXAMPLE1_N_DENSE = 1253


def bessel_j1(t):
    """Bessel function of the first kind of order one."""
    return special.j1(t)


def airy_kernel(t, kappa):
    """``(J1(kappa |t|) / (kappa |t|))^2`` with the removable singularity filled by 1/4."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    s = kappa * np.abs(np.asarray(t, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(s == 0, 0.25, (special.j1(s) / np.where(s == 0, 1.0, s)) ** 2)
    return float(val) if np.ndim(val) == 0 else val


def trapezoid_weights(n):
    h = 1.0 / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def observation_points_1d(m):
    """``s_j = (4 + j) / 100`` for ``j = 1..m``."""
    return (4.0 + np.arange(1, m + 1)) / 100.0


def build_deconv_1d(n, m, kappa, s=None):
    """Trapezoid discretization ``A[j, k] = w_k A(s_j - t_k)`` on ``t_k = k / (n - 1)``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    t = np.linspace(0.0, 1.0, n)
    s = observation_points_1d(m) if s is None else np.asarray(s, dtype=float)
    return airy_kernel(s[:, None] - t[None, :], kappa) * trapezoid_weights(n)[None, :]


def gaussian_kernel(p, q, w):
    """Isotropic Gaussian ``exp(-|p - q|^2 / (2 w^2)) / (2 pi w^2)``."""
    if not w > 0:
        raise ValueError("w must be positive")
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    r2 = np.sum(d * d, axis=-1)
    return np.exp(-r2 / (2 * w * w)) / (2 * np.pi * w * w)


def cell_centers(k):
    return (np.arange(k) + 0.5) / k


class SeparableBlur(LinearOperator):
    """Gaussian blur from a ``grid_n^2`` pixel image to an ``obs_m^2`` lattice.

    The kernel factorizes, so ``A = kron(K, K)`` with
    ``K[i, k] = exp(-(q_i - p_k)^2 / (2 w^2)) / (sqrt(2 pi) w grid_n)``;
    images are flattened row by row.
    """

    def __init__(self, grid_n, obs_m, w):
        if grid_n < 1 or obs_m < 1:
            raise ValueError("grid sizes must be positive")
        self.grid_n, self.obs_m, self.w = grid_n, obs_m, w
        q, p = cell_centers(obs_m), cell_centers(grid_n)
        self.K = np.exp(-((q[:, None] - p[None, :]) ** 2) / (2 * w * w)) / (np.sqrt(2 * np.pi) * w * grid_n)
        super().__init__(dtype=float, shape=(obs_m * obs_m, grid_n * grid_n))

    def _matvec(self, x):
        X = x.reshape(self.grid_n, self.grid_n)
        return (self.K @ X @ self.K.T).ravel()

    def _rmatvec(self, y):
        Y = y.reshape(self.obs_m, self.obs_m)
        return (self.K.T @ Y @ self.K).ravel()

    def _matmat(self, X):
        return np.column_stack([self._matvec(X[:, i]) for i in range(X.shape[1])])

    def _rmatmat(self, Y):
        return np.column_stack([self._rmatvec(Y[:, i]) for i in range(Y.shape[1])])

    def toarray(self):
        return np.kron(self.K, self.K)

    def column_norms2(self):
        c = np.sum(self.K * self.K, axis=0)
        return np.outer(c, c).ravel()


def build_blur_2d(grid_n, obs_m, w=0.015):
    """``A[j, l] = |Omega_l| * gaussian_kernel(q_j, q'_l, w)`` as a separable operator."""
    return SeparableBlur(grid_n, obs_m, w)


def point_source_matrix(positions, obs_m, w=0.015):
    """Kernel samples ``A(q_j, p_k)`` from point sources to the observation lattice."""
    q = cell_centers(obs_m)
    Q = np.stack(np.meshgrid(q, q, indexing="ij"), axis=-1).reshape(-1, 2)
    # lattice points as (row coordinate, column coordinate); positions as (y, x)
    return gaussian_kernel(Q[:, None, :], np.asarray(positions)[None, :, :], w)


def synth_data(A, x_true, noise_pct, seed):
    """Noisy data with noise level `noise_pct` percent of the peak noiseless value.

    Returns
    -------
    b : ndarray
        Whitened data ``(A x_true + sigma e) / sigma``; for ``noise_pct == 0``
        the clean data itself.
    sigma : float
        Noise standard deviation (1 for noiseless data).
    """
    if noise_pct < 0:
        raise ValueError("noise_pct must be nonnegative")
    clean = as_operator(A).matvec(np.asarray(x_true, dtype=float))
    if noise_pct == 0:
        return clean, 1.0
    peak = np.max(np.abs(clean))
    if peak == 0:
        raise DegenerateSignal("noiseless signal is identically zero")
    sigma = noise_pct / 100.0 * peak
    rng = np.random.default_rng(seed)
    b = clean + sigma * rng.standard_normal(clean.shape)
    return b / sigma, float(sigma)


def snr_db(clean, noisy):
    """``20 log10(||clean|| / ||noisy - clean||)``."""
    clean = np.asarray(clean, dtype=float)
    return float(20 * np.log10(np.linalg.norm(clean) / np.linalg.norm(np.asarray(noisy) - clean)))


def example1_signal(t, jumps=EXAMPLE1_JUMPS, levels=EXAMPLE1_LEVELS):
    """Piecewise-constant generative signal, right-continuous, zero before the first jump."""
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(np.asarray(jumps), t, side="right")
    return np.concatenate(([0.0], levels))[idx]


def draw_stars(J, rng):
    """Positions uniform on the unit square and amplitudes uniform on [1.5, 2]."""
    if J < 1:
        raise ValueError("J must be positive")
    positions = rng.uniform(0.0, 1.0, size=(J, 2))
    amplitudes = rng.uniform(1.5, 2.0, size=J)
    return positions, amplitudes


def bin_stars(positions, amplitudes, grid):
    """Pixel-averaged density of a sum of point masses on a ``grid x grid`` partition."""
    idx = np.minimum((np.asarray(positions) * grid).astype(np.int64), grid - 1)
    x = np.zeros((grid, grid))
    np.add.at(x, (idx[:, 0], idx[:, 1]), amplitudes)
    return (x * grid * grid).ravel()


def starry_night(J, seed, grid):
    """Starry-night impulse image as a pixel density vector of length ``grid**2``."""
    positions, amplitudes = draw_stars(J, np.random.default_rng(seed))
    return bin_stars(positions, amplitudes, grid)


def phantom_2d(grid):
    """Piecewise-constant test image with values in [0, 1] sampled at pixel centers."""
    c = cell_centers(grid)
    Y, X = np.meshgrid(c, c, indexing="ij")
    img = np.zeros((grid, grid))
    img[(X > 0.18) & (X < 0.46) & (Y > 0.20) & (Y < 0.62)] = 0.6
    img[(X > 0.30) & (X < 0.80) & (Y > 0.68) & (Y < 0.84)] = 0.35
    img[(X - 0.66) ** 2 + (Y - 0.36) ** 2 < 0.15**2] = 1.0
    img[(X > 0.60) & (X < 0.72) & (Y > 0.30) & (Y < 0.42)] = 0.5
    return img


@dataclass(eq=False)
class Problem:
    """A whitened linear inverse problem and the representation of its unknown.

    ``A`` maps the signal ``x`` (for 2D increments: the free nodal values) to
    whitened data ``b``. The IAS unknown is ``x`` itself (direct), its first
    differences (1D increments) or the free-edge increments (2D).
    """

    A: LinearOperator
    b: np.ndarray
    representation: str = DIRECT
    graph: IncrementGraph | None = None
    truth: np.ndarray | None = None
    sigma: float = 1.0
    image_shape: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = as_operator(self.A)
        self.b = as_vector(self.b, "b", self.A.shape[0])
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.representation == INCREMENTS_2D:
            if self.graph is None:
                raise ValueError("2D increments need an increment graph")
            if self.graph.n_v != self.A.shape[1]:
                raise ValueError("forward map must act on the free nodes of the graph")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n_signal(self):
        return self.A.shape[1]

    @property
    def n(self):
        """Dimension of the sparse unknown."""
        return self.graph.n_e if self.representation == INCREMENTS_2D else self.n_signal

    def to_latent(self, x):
        """Map a signal to the sparse unknown."""
        if self.representation == DIRECT:
            return np.asarray(x, dtype=float)
        if self.representation == INCREMENTS_1D:
            return np.diff(x, prepend=0.0)
        return self.graph.L @ x

    def latent_operator(self):
        """Forward map acting on the sparse unknown."""
        if self.representation == DIRECT:
            return self.A
        if self.representation == INCREMENTS_1D:
            return self.A @ diff_1d(self.n_signal)[1]
        return self.A @ PinvOperator(self.graph.L)

    def increment_matrix(self):
        if self.representation == INCREMENTS_1D:
            return diff_matrix_1d(self.n_signal)
        if self.representation == INCREMENTS_2D:
            return self.graph.L
        return None

    @property
    def truth_latent(self):
        return None if self.truth is None else self.to_latent(self.truth)
