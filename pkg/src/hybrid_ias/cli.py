"""Command line runner: ``generate``, ``run`` and ``compare``.

Exit codes: 0 success, 2 usage or configuration error, 3 missing or
unreadable artifact, 4 solver failure.

The thread count of the numerical libraries can be capped with the
environment variable ``HYBRID_IAS_THREADS``.
"""

import argparse
import contextlib
import logging
import os
import sys

import numpy as np

from .config import load_config, preset_names
from .exceptions import ConfigError, IASError, MissingArtifact
from .experiments import build_experiment, run_experiment
from .forward import INCREMENTS_2D
from .io import (
    METRICS_SCHEMA,
    TRACE_SCHEMA,
    atomic_write,
    fmt,
    read_keyvalue,
    table_text,
    write_keyvalue,
    write_pgm,
    write_vector,
)

log = logging.getLogger("hybrid_ias")

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_SOLVER = 0, 2, 3, 4

TRACE_COLUMNS = (
    "iteration",
    "objective",
    "residual",
    "cgls_iters",
    "cgls_stop",
    "x_source",
    "exact_iters",
    "step",
    "n_switched",
    "n_convex",
    "rel_change",
    "model_tag",
)

# metrics shown by `compare`, in order
COMPARE_KEYS = (
    "rel_error",
    "support_size",
    "false_positives",
    "missed",
    "precision",
    "recall",
    "sources_missed",
    "iterations",
    "cgls_total",
    "cgls_final",
    "objective_final",
    "runtime_s",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p):
    p.add_argument("--preset", choices=preset_names(), metavar="NAME", help="built-in preset")
    p.add_argument("--config", metavar="PATH", help="key = value config file")
    p.add_argument("--seed", type=int, metavar="N", help="random seed")
    p.add_argument("--out", metavar="DIR", required=True, help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser():
    parser = _Parser(prog="hybrid-ias", description="Hybrid IAS sparse reconstruction experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    g = sub.add_parser("generate", help="synthesize and pin data")
    _add_common(g)
    r = sub.add_parser("run", help="solve and write reconstructions, traces and metrics")
    _add_common(r)
    c = sub.add_parser("compare", help="side-by-side metrics of two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--out", metavar="FILE", help="also write the table here")
    sub.add_parser("presets", help="list preset names")
    return parser


def _config(args):
    return load_config(args.config, args.preset, args.override, args.seed)


def _image(exp, values):
    """Full image of a 2D signal (bound nodes filled with zero)."""
    prob = exp.problem
    if prob.representation == INCREMENTS_2D:
        return prob.graph.embed(values)
    return np.asarray(values).reshape(prob.image_shape)


def cmd_generate(args):
    cfg = _config(args)
    exp = build_experiment(cfg)
    prob, out = exp.problem, args.out
    atomic_write(os.path.join(out, "config.cfg"), cfg.to_text())
    write_vector(os.path.join(out, "data.csv"), prob.b, "b")
    meta = [("sigma", prob.sigma), ("m", prob.m), ("n_signal", prob.n_signal), ("seed", cfg.seed)]
    meta += [(k, v) for k, v in exp.info.items() if k != "sigma"]
    write_keyvalue(os.path.join(out, "data_meta.csv"), meta)
    if prob.truth is not None:
        write_vector(os.path.join(out, "truth.csv"), prob.truth, "x")
        write_vector(os.path.join(out, "truth_latent.csv"), prob.truth_latent, "u")
    if exp.sources is not None:
        pos, amp = exp.sources
        rows = [(k, pos[k, 0], pos[k, 1], amp[k]) for k in range(amp.size)]
        atomic_write(os.path.join(out, "sources.csv"), table_text(["index", "row", "col", "amplitude"], rows))
    if prob.image_shape is not None:
        if prob.truth is not None:
            write_pgm(os.path.join(out, "truth.pgm"), _image(exp, prob.truth))
        side = int(round(np.sqrt(prob.m)))
        write_pgm(os.path.join(out, "data.pgm"), prob.b.reshape(side, side))
    print(f"wrote data to {out}")
    return EXIT_OK


def _bits(mask):
    return "".join("1" if v else "0" for v in mask)


def write_run(out, cfg, exp, state, metrics):
    """Write every artifact of a finished run to directory `out`."""
    prob = exp.problem
    atomic_write(os.path.join(out, "config.cfg"), cfg.to_text())
    write_vector(os.path.join(out, "reconstruction.csv"), state.signal, "x")
    write_vector(os.path.join(out, "latent.csv"), state.x, "u")
    write_vector(os.path.join(out, "theta.csv"), state.theta, "theta")
    rows = [tuple(getattr(r, c) for c in TRACE_COLUMNS) for r in state.trace]
    atomic_write(os.path.join(out, "trace.csv"), table_text(TRACE_COLUMNS, rows, f"schema={TRACE_SCHEMA}"))
    bitmap = [
        (r.iteration, r.model_tag, "" if r.convex is None else _bits(r.convex)) for r in state.trace
    ]
    atomic_write(
        os.path.join(out, "convexity.csv"),
        table_text(["iteration", "model_tag", "convex"], bitmap, f"schema={TRACE_SCHEMA}"),
    )
    write_vector(os.path.join(out, "index_set.csv"), state.switched.astype(int), "switched")
    if prob.image_shape is not None:
        write_pgm(os.path.join(out, "reconstruction.pgm"), _image(exp, state.signal))
        if prob.representation != INCREMENTS_2D:
            write_pgm(os.path.join(out, "theta.pgm"), np.log10(state.theta).reshape(prob.image_shape))
    write_keyvalue(os.path.join(out, "metrics.csv"), metrics.items(), f"schema={METRICS_SCHEMA}")


def cmd_run(args):
    cfg = _config(args)

    def progress(rec):
        log.info("iter %d  objective %.6e  cgls %d  |I| %d", rec.iteration, rec.objective, rec.cgls_iters, rec.n_switched)

    exp, state, metrics, _ = run_experiment(cfg, callback=progress)
    write_run(args.out, cfg, exp, state, metrics)
    print(
        f"{cfg.preset or cfg.problem}: {metrics['iterations']} iterations, "
        f"support {metrics['support_size']}, rel_error {metrics.get('rel_error', float('nan')):.4g}"
    )
    return EXIT_OK


def _number(v):
    for kind in (int, float):
        try:
            return kind(v)
        except (TypeError, ValueError):
            pass
    return None


def compare_table(dir_a, dir_b):
    """Rows ``(metric, a, b, b - a)`` for the metrics present in both runs."""
    a = read_keyvalue(os.path.join(dir_a, "metrics.csv"))
    b = read_keyvalue(os.path.join(dir_b, "metrics.csv"))
    rows = []
    for key in COMPARE_KEYS:
        if key not in a or key not in b:
            continue
        x, y = _number(a[key]), _number(b[key])
        delta = "" if x is None or y is None else fmt(y - x)
        rows.append((key, a[key], b[key], delta))
    return rows


def cmd_compare(args):
    rows = compare_table(args.run_a, args.run_b)
    text = table_text(["metric", "a", "b", "delta"], rows)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _limit_threads():
    n = os.environ.get("HYBRID_IAS_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        return threadpool_limits(limits=int(n))
    except ValueError:
        raise ConfigError(f"HYBRID_IAS_THREADS: expected an integer, got {n!r}") from None


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
    handlers = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare}
    try:
        with _limit_threads():
            if args.command == "presets":
                print("\n".join(preset_names()))
                return EXIT_OK
            return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, OSError) as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except IASError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
