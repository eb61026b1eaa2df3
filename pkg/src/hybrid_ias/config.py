"""Flat ``key = value`` experiment configuration with preset inheritance.

A configuration file is a list of ``key = value`` lines; ``#`` starts a
comment. The optional key ``preset`` (which must come first) names a built-in
preset whose values are loaded before the file's own lines are applied, so a
file only has to state what differs::

    preset = example1-global-hybrid
    seed = 3
    t_bar = 12

Values are parsed according to the field type; lists are comma separated and
``none`` clears an optional field.
"""

import dataclasses
import math
from dataclasses import dataclass, fields

from .exceptions import ConfigError
from .forward import EXAMPLE1_JUMPS, EXAMPLE1_LEVELS

PROBLEMS = ("deconv1d", "deblur2d", "starry", "matrix")
REPRESENTATION_CHOICES = ("auto", "direct", "increments1d", "increments2d")
MODE_CHOICES = ("plain", "local", "global")
UNITS = ("mass", "density")


@dataclass
class ExperimentConfig:
    """All settings of one experiment.

    In ``plain`` mode the single hypermodel is ``(r1, eta1 | beta1, vartheta1)``;
    the hybrid modes add ``(r2, eta2 | beta2)`` and match the second scale
    vector to the first. ``vartheta1 = sensitivity`` selects sensitivity
    scaling ``C / ||A e_j||^2`` with ``C = sensitivity_c``.
    """

    problem: str = "deconv1d"
    seed: int = 0
    noise_pct: float = 2.0
    representation: str = "auto"
    # 1D deconvolution
    n: int = 500
    m: int = 91
    kappa: float = 40.0
    n_dense: int = 1253
    jumps: tuple = EXAMPLE1_JUMPS
    levels: tuple = EXAMPLE1_LEVELS
    # 2D problems
    grid: int = 136
    obs: int = 68
    width: float = 0.015
    synth_grid: int | None = None
    stars: int = 80
    units: str = "mass"
    # explicit matrix problem
    matrix_path: str | None = None
    data_path: str | None = None
    truth_path: str | None = None
    sigma: float = 1.0
    # hypermodels
    mode: str = "plain"
    r1: float = 1.0
    eta1: float | None = 1e-2
    beta1: float | None = None
    vartheta1: str = "1e-05"
    sensitivity_c: float = 1.0
    r2: float = -1.0
    eta2: float | None = -4.5
    beta2: float | None = None
    # solver controls
    t_bar: int = 10
    tau: float = 1.1
    cgls_max_iters: int | None = None
    reorthogonalize: bool = False
    outer_tol: float = 1e-6
    max_outer: int = 200
    box: tuple | None = None
    projection: bool = False
    monotone: bool = True
    stall_step: float = 0.0
    exact_tol: float = 1e-8
    # reporting
    support_threshold: float = 1e-3
    support_tolerance: int = 1
    data_dir: str | None = None
    preset: str | None = None

    def validate(self):
        """Raise :class:`ConfigError` on inconsistent settings; return self."""
        _choice("problem", self.problem, PROBLEMS)
        _choice("representation", self.representation, REPRESENTATION_CHOICES)
        _choice("mode", self.mode, MODE_CHOICES)
        _choice("units", self.units, UNITS)
        for name in ("n", "m", "n_dense", "grid", "obs", "stars", "max_outer", "t_bar"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be a positive integer")
        if self.n < 2:
            raise ConfigError("n: must be at least 2")
        for name in ("kappa", "width", "sigma", "tau", "outer_tol", "sensitivity_c", "support_threshold", "exact_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.tau <= 1:
            raise ConfigError("tau: must exceed 1")
        if self.noise_pct < 0:
            raise ConfigError("noise_pct: must be nonnegative")
        if not 0 <= self.stall_step <= 1:
            raise ConfigError("stall_step: must lie in [0, 1]")
        if self.support_tolerance < 0:
            raise ConfigError("support_tolerance: must be nonnegative")
        if len(self.jumps) != len(self.levels):
            raise ConfigError("levels: need one level per jump")
        if list(self.jumps) != sorted(self.jumps) or any(not 0 < j < 1 for j in self.jumps):
            raise ConfigError("jumps: must be increasing points inside (0, 1)")
        if self.box is not None and (len(self.box) != 2 or not self.box[0] < self.box[1]):
            raise ConfigError("box: expected 'lo, hi' with lo < hi")
        if self.cgls_max_iters is not None and self.cgls_max_iters < 1:
            raise ConfigError("cgls_max_iters: must be positive")
        if self.r1 == 0:
            raise ConfigError("r1: must be nonzero")
        if (self.eta1 is None) == (self.beta1 is None):
            raise ConfigError("eta1/beta1: give exactly one of them")
        if self.mode != "plain":
            if self.r2 == 0:
                raise ConfigError("r2: must be nonzero")
            if (self.eta2 is None) == (self.beta2 is None):
                raise ConfigError("eta2/beta2: give exactly one of them")
        if self.vartheta1 != "sensitivity":
            try:
                v = float(self.vartheta1)
            except ValueError:
                raise ConfigError("vartheta1: expected a positive number or 'sensitivity'") from None
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError("vartheta1: must be positive")
        if self.problem == "matrix" and (self.matrix_path is None or self.data_path is None):
            raise ConfigError("matrix problem needs matrix_path and data_path")
        return self

    def to_text(self):
        """Serialize every field; :func:`parse_config` reads the result back losslessly."""
        lines = []
        for f in fields(self):
            if f.name == "preset":
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _choice(name, value, options):
    if value not in options:
        raise ConfigError(f"{name}: {value!r} is not one of {', '.join(options)}")


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _kind(name):
    t = _FIELDS[name].type
    text = t if isinstance(t, str) else getattr(t, "__name__", str(t))
    optional = "None" in str(t)
    for base in ("bool", "int", "float", "tuple", "str"):
        if base in str(text):
            return base, optional
    return "str", optional


def _parse_value(name, raw):
    kind, optional = _kind(name)
    raw = raw.strip()
    if optional and raw.lower() == "none":
        return None
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError("expected true or false")
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("value must be finite")
            return v
        if kind == "tuple":
            if not raw:
                return ()
            return tuple(float(p) for p in raw.split(","))
        if not raw:
            raise ValueError("empty value")
        return raw
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} ({exc})") from None


def _base_values():
    return {
        f.name: (f.default if f.default is not dataclasses.MISSING else f.default_factory())
        for f in fields(ExperimentConfig)
    }


_EXAMPLE_BASE = {
    "example1": {
        "problem": "deconv1d",
        "noise_pct": "2",
        "eta1": "1e-2",
        "vartheta1": "1e-5",
        "r2": "-1",
        "eta2": "-4.5",
        "tau": "1.1",
    },
    "example2": {
        "problem": "deblur2d",
        "grid": "136",
        "obs": "68",
        "noise_pct": "2",
        "eta1": "1e-4",
        "vartheta1": "1e-3",
        "r2": "-1",
        "eta2": "-6.5",
        "box": "0, 1",
        "tau": "1.01",
    },
    "example3": {
        "problem": "starry",
        "grid": "128",
        "obs": "64",
        "stars": "80",
        "noise_pct": "1.8",
        "eta1": "1e-5",
        "vartheta1": "1e-4",
        "r2": "-1",
        "eta2": "-4.5",
        "tau": "1.001",
    },
}

# scale of the inverse gamma model when it is run on its own
_INVGAMMA_VARTHETA = {"example1": "1e-5", "example2": "1e-4", "example3": "1e-6"}


def _build_presets():
    presets = {}
    for ex, base in _EXAMPLE_BASE.items():
        presets[f"{ex}-plain-gamma"] = dict(base, mode="plain")
        presets[f"{ex}-plain-invgamma"] = dict(
            base, mode="plain", r1=base["r2"], eta1=base["eta2"], vartheta1=_INVGAMMA_VARTHETA[ex]
        )
        presets[f"{ex}-local-hybrid"] = dict(base, mode="local")
        presets[f"{ex}-global-hybrid"] = dict(base, mode="global")
    return presets


PRESETS = _build_presets()


def preset_names():
    return sorted(PRESETS)


def _lines(text, source):
    """Yield ``(lineno, key, raw_value)`` from config text."""
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        yield lineno, key, raw


def _apply(values, key, raw, where):
    if key not in _FIELDS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        values[key] = _parse_value(key, raw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _with_preset(name, where="preset"):
    if name not in PRESETS:
        raise ConfigError(f"{where}: unknown preset {name!r}; choose from {', '.join(preset_names())}")
    values = _base_values()
    for key, raw in PRESETS[name].items():
        _apply(values, key, raw, f"preset {name}")
    values["preset"] = name
    return values


def parse_config(text, source="<config>", preset=None):
    """Parse config text into a validated :class:`ExperimentConfig`.

    Parameters
    ----------
    text : str
    source : str
        Name used in diagnostics.
    preset : str, optional
        Preset applied before the file; a ``preset`` line in the file wins.
    """
    entries = list(_lines(text, source))
    seen = {}
    for lineno, key, _ in entries:
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
    if "preset" in seen:
        lineno = seen["preset"]
        if entries[0][1] != "preset":
            raise ConfigError(f"{source}:{lineno}: 'preset' must be the first entry")
        preset = entries[0][2]
        entries = entries[1:]
        values = _with_preset(preset, f"{source}:{lineno}")
    else:
        values = _with_preset(preset) if preset else _base_values()
    for lineno, key, raw in entries:
        _apply(values, key, raw, f"{source}:{lineno}")
    return _finish(values, source)


def _finish(values, source):
    try:
        cfg = ExperimentConfig(**values)
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path=None, preset=None, overrides=(), seed=None):
    """Resolve preset, file, ``key=value`` overrides and seed, in that order."""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        cfg = parse_config(text, str(path), preset)
    elif preset is not None:
        cfg = _finish(_with_preset(preset, "--preset"), "--preset")
    else:
        cfg = _finish(_base_values(), "<defaults>")
    values = dataclasses.asdict(cfg)
    values = {k: (tuple(v) if isinstance(v, list) else v) for k, v in values.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--override {item!r}: expected key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        _apply(values, key, raw, f"--override {key}")
    if seed is not None:
        values["seed"] = int(seed)
    return _finish(values, "<resolved>")
