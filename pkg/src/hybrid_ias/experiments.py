"""Build problems and solver settings from an :class:`ExperimentConfig` and score runs."""

import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.sparse.linalg import aslinearoperator

from .exceptions import ConfigError
from .forward import (
    DIRECT,
    INCREMENTS_1D,
    INCREMENTS_2D,
    Problem,
    bin_stars,
    build_blur_2d,
    build_deconv_1d,
    draw_stars,
    example1_signal,
    phantom_2d,
    point_source_matrix,
    snr_db,
    synth_data,
)
from .hyperprior import HybridPair, HyperModel, sensitivity_scaling
from .ias import GLOBAL, LOCAL, PLAIN, SolverControls, run
from .io import read_keyvalue, read_matrix, read_vector
from .krylov import StoppingRule
from .operators import build_increment_graph


@dataclass
class Experiment:
    """A built problem with everything needed to run and score it."""

    config: object
    problem: Problem
    clean: np.ndarray | None = None
    sources: tuple | None = None
    info: dict = field(default_factory=dict)


def _noise_seed(seed):
    # phantom draws and noise draws come from independent child streams
    return np.random.SeedSequence(seed).spawn(2)


def _deconv1d(cfg):
    t_dense = np.linspace(0.0, 1.0, cfg.n_dense)
    A_dense = build_deconv_1d(cfg.n_dense, cfg.m, cfg.kappa)
    x_dense = example1_signal(t_dense, cfg.jumps, cfg.levels)
    b, sigma = synth_data(A_dense, x_dense, cfg.noise_pct, cfg.seed)
    clean = A_dense @ x_dense
    t = np.linspace(0.0, 1.0, cfg.n)
    A = build_deconv_1d(cfg.n, cfg.m, cfg.kappa) / sigma
    rep = INCREMENTS_1D if cfg.representation == "auto" else cfg.representation
    if rep == INCREMENTS_2D:
        raise ConfigError("representation: increments2d needs a 2D problem")
    truth = example1_signal(t, cfg.jumps, cfg.levels)
    prob = Problem(A, b, rep, truth=truth, sigma=sigma, meta={"t": t})
    return Experiment(cfg, prob, clean=clean)


def _deblur2d(cfg):
    synth = cfg.synth_grid or cfg.grid
    img_synth = phantom_2d(synth)
    blur_synth = build_blur_2d(synth, cfg.obs, cfg.width)
    b, sigma = synth_data(blur_synth, img_synth.ravel(), cfg.noise_pct, cfg.seed)
    clean = blur_synth.matvec(img_synth.ravel())
    truth_img = phantom_2d(cfg.grid)
    blur = build_blur_2d(cfg.grid, cfg.obs, cfg.width)
    rep = INCREMENTS_2D if cfg.representation == "auto" else cfg.representation
    if rep == INCREMENTS_2D:
        graph = build_increment_graph((cfg.grid, cfg.grid))
        A = (blur @ aslinearoperator(graph.embedding())) * (1.0 / sigma)
        prob = Problem(A, b, rep, graph=graph, truth=graph.restrict(truth_img), sigma=sigma,
                       image_shape=(cfg.grid, cfg.grid))
    elif rep == DIRECT:
        prob = Problem(blur * (1.0 / sigma), b, rep, truth=truth_img.ravel(), sigma=sigma,
                       image_shape=(cfg.grid, cfg.grid))
    else:
        raise ConfigError("representation: increments1d needs a 1D problem")
    return Experiment(cfg, prob, clean=clean)


def _starry(cfg):
    phantom_seq, noise_seq = _noise_seed(cfg.seed)
    positions, amplitudes = draw_stars(cfg.stars, np.random.default_rng(phantom_seq))
    P = point_source_matrix(positions, cfg.obs, cfg.width)
    b, sigma = synth_data(P, amplitudes, cfg.noise_pct, noise_seq)
    clean = P @ amplitudes
    density = bin_stars(positions, amplitudes, cfg.grid)
    blur = build_blur_2d(cfg.grid, cfg.obs, cfg.width)
    # "mass" measures each pixel by its integral instead of its average value
    scale = float(cfg.grid) ** 2 if cfg.units == "mass" else 1.0
    if cfg.representation not in ("auto", DIRECT):
        raise ConfigError("representation: the impulse problem is solved directly")
    prob = Problem(blur * (scale / sigma), b, DIRECT, truth=density / scale, sigma=sigma,
                   image_shape=(cfg.grid, cfg.grid))
    return Experiment(cfg, prob, clean=clean, sources=(positions, amplitudes))


def _matrix(cfg):
    A = read_matrix(cfg.matrix_path)
    b = read_vector(cfg.data_path)
    if b.size != A.shape[0]:
        raise ConfigError(f"data_path: {b.size} values for a matrix with {A.shape[0]} rows")
    truth = read_vector(cfg.truth_path) if cfg.truth_path else None
    rep = DIRECT if cfg.representation == "auto" else cfg.representation
    if rep == INCREMENTS_2D:
        raise ConfigError("representation: increments2d is not available for matrix problems")
    prob = Problem(A / cfg.sigma, b / cfg.sigma, rep, truth=truth, sigma=cfg.sigma)
    return Experiment(cfg, prob)


_BUILDERS = {"deconv1d": _deconv1d, "deblur2d": _deblur2d, "starry": _starry, "matrix": _matrix}


def build_experiment(cfg):
    """Synthesize (or load) the data of `cfg` and return an :class:`Experiment`."""
    exp = _BUILDERS[cfg.problem](cfg)
    if cfg.data_dir:
        _load_pinned(exp, cfg.data_dir)
    prob = exp.problem
    exp.info["sigma"] = prob.sigma
    if exp.clean is not None and cfg.noise_pct > 0:
        exp.info["snr_db"] = snr_db(exp.clean, prob.b * prob.sigma)
    return exp


def _load_pinned(exp, data_dir):
    meta = read_keyvalue(os.path.join(data_dir, "data_meta.csv"))
    b = read_vector(os.path.join(data_dir, "data.csv"))
    prob = exp.problem
    if b.size != prob.m:
        raise ConfigError(f"data_dir: pinned data has {b.size} values, problem expects {prob.m}")
    sigma = float(meta["sigma"])
    if not np.isclose(sigma, prob.sigma, rtol=1e-12, atol=0):
        raise ConfigError("data_dir: pinned data was generated with a different noise level")
    prob.b = b


def build_controls(cfg, problem):
    """Hypermodels and :class:`SolverControls` for `cfg` on `problem`."""
    n = problem.n
    if cfg.vartheta1 == "sensitivity":
        vt1 = sensitivity_scaling(problem.latent_operator(), cfg.sensitivity_c)
    else:
        vt1 = float(cfg.vartheta1)
    if cfg.eta1 is not None:
        m1 = HyperModel.from_eta(cfg.r1, cfg.eta1, vt1, n)
    else:
        m1 = HyperModel(cfg.r1, cfg.beta1, np.broadcast_to(vt1, (n,)).copy())
    rule = StoppingRule(tau=cfg.tau, max_iters=cfg.cgls_max_iters, reorthogonalize=cfg.reorthogonalize)
    common = dict(
        t_bar=cfg.t_bar,
        outer_tol=cfg.outer_tol,
        max_outer=cfg.max_outer,
        box=cfg.box,
        projection=cfg.projection,
        rule=rule,
        monotone=cfg.monotone,
        stall_step=cfg.stall_step,
        exact_tol=cfg.exact_tol,
    )
    if cfg.mode == PLAIN:
        return SolverControls(mode=PLAIN, model=m1, **common)
    if cfg.eta2 is not None:
        pair = HybridPair.from_eta(m1, cfg.r2, cfg.eta2)
    else:
        pair = HybridPair.from_models(m1, cfg.r2, cfg.beta2)
    return SolverControls(mode=LOCAL if cfg.mode == "local" else GLOBAL, pair=pair, **common)


def latent_coordinates(problem):
    """Integer grid coordinates and a group label for each entry of the sparse unknown.

    Entries match within the support tolerance when they share a group and
    their coordinates differ by at most the tolerance in every direction.
    """
    n = problem.n
    if problem.representation == INCREMENTS_2D:
        g = problem.graph
        coords = np.zeros((n, 2), dtype=np.int64)
        group = np.zeros(n, dtype=np.int64)
        for label, edges in enumerate((g.h_edge, g.v_edge)):
            ii, jj = np.nonzero(edges >= 0)
            ids = edges[ii, jj]
            coords[ids] = np.column_stack([ii, jj])
            group[ids] = label
        return coords, group
    if problem.image_shape is not None:
        rows, cols = problem.image_shape
        ii, jj = np.divmod(np.arange(n), cols)
        return np.column_stack([ii, jj]), np.zeros(n, dtype=np.int64)
    return np.arange(n)[:, None], np.zeros(n, dtype=np.int64)


def _matched(coords, group, from_idx, to_idx, tol):
    """Boolean mask over `from_idx`: has a partner in `to_idx` within `tol`."""
    hit = np.zeros(from_idx.size, dtype=bool)
    if from_idx.size == 0 or to_idx.size == 0:
        return hit
    for g in np.unique(group[from_idx]):
        src = np.flatnonzero(group[from_idx] == g)
        dst = to_idx[group[to_idx] == g]
        if dst.size == 0:
            continue
        tree = cKDTree(coords[dst])
        d, _ = tree.query(coords[from_idx[src]], k=1, p=np.inf)
        hit[src] = d <= tol
    return hit


def support_metrics(problem, u, threshold=1e-3, tolerance=1):
    """Detected support ``|u_j| > threshold * max|u|`` scored against the true support."""
    u = np.asarray(u, dtype=float)
    peak = np.abs(u).max()
    detected = np.flatnonzero(np.abs(u) > threshold * peak) if peak > 0 else np.zeros(0, dtype=np.int64)
    out = {"support_size": int(detected.size)}
    truth = problem.truth_latent
    if truth is None:
        return out, detected
    tpeak = np.abs(truth).max()
    true = np.flatnonzero(np.abs(truth) > 1e-12 * tpeak) if tpeak > 0 else np.zeros(0, dtype=np.int64)
    coords, group = latent_coordinates(problem)
    good = _matched(coords, group, detected, true, tolerance)
    found = _matched(coords, group, true, detected, tolerance)
    fp = int(detected.size - good.sum())
    missed = int(true.size - found.sum())
    out.update(
        true_support_size=int(true.size),
        true_positives=int(good.sum()),
        false_positives=fp,
        missed=missed,
        precision=float(good.mean()) if detected.size else 1.0,
        recall=float(found.mean()) if true.size else 1.0,
    )
    return out, detected


def source_recovery(problem, x, sources, fraction=0.5):
    """Per-source recovery for the impulse problem.

    A source counts as recovered when the reconstructed mass in the 3x3 pixel
    block around it reaches `fraction` of its amplitude (in the problem's units).
    """
    positions, amplitudes = sources
    rows, cols = problem.image_shape
    img = np.asarray(x, dtype=float).reshape(rows, cols)
    truth = problem.truth.reshape(rows, cols)
    # amplitude of each source expressed in the units of the unknown
    unit = amplitudes.sum() / truth.sum() if truth.sum() > 0 else 1.0
    pix = np.minimum((positions * np.array([rows, cols])).astype(np.int64), [rows - 1, cols - 1])
    got = np.empty(len(amplitudes))
    for k, (i, j) in enumerate(pix):
        block = img[max(i - 1, 0): i + 2, max(j - 1, 0): j + 2]
        got[k] = block.sum() * unit / amplitudes[k]
    return got >= fraction, got


def score(exp, state, runtime):
    """Metrics dictionary (ordered) for a finished run."""
    prob, cfg = exp.problem, exp.config
    trace = state.trace
    sig = state.signal
    m = {}
    m["problem"] = cfg.problem
    m["mode"] = cfg.mode
    m["preset"] = cfg.preset or ""
    m["seed"] = cfg.seed
    m["n_unknown"] = prob.n
    m["m_data"] = prob.m
    m["iterations"] = state.t
    m["converged"] = int(state.converged)
    m["objective_final"] = trace[-1].objective if trace else float("nan")
    m["residual_final"] = trace[-1].residual if trace else float("nan")
    m["discrepancy_target"] = float(np.sqrt(prob.m))
    if prob.truth is not None:
        denom = np.linalg.norm(prob.truth)
        m["rel_error"] = float(np.linalg.norm(sig - prob.truth) / denom) if denom > 0 else float("nan")
    sup, detected = support_metrics(prob, state.x, cfg.support_threshold, cfg.support_tolerance)
    m.update(sup)
    if exp.sources is not None:
        ok, _ = source_recovery(prob, state.x, exp.sources)
        m["sources_total"] = int(ok.size)
        m["sources_missed"] = int((~ok).sum())
    m["cgls_total"] = int(sum(r.cgls_iters for r in trace))
    m["cgls_final"] = trace[-1].cgls_iters if trace else 0
    m["exact_updates"] = int(sum(r.x_source == "exact" for r in trace))
    m["n_switched_final"] = int(state.switched.sum())
    m["sigma"] = prob.sigma
    if "snr_db" in exp.info:
        m["snr_db"] = exp.info["snr_db"]
    m["runtime_s"] = runtime
    return m, detected


def run_experiment(cfg, callback=None):
    """Build, solve and score; returns ``(experiment, state, metrics, detected)``."""
    exp = build_experiment(cfg)
    controls = build_controls(cfg, exp.problem)
    t0 = time.perf_counter()
    state = run(exp.problem, controls, callback=callback)
    runtime = time.perf_counter() - t0
    metrics, detected = score(exp, state, runtime)
    return exp, state, metrics, detected
