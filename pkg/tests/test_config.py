import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_ias.config import ExperimentConfig, PRESETS, load_config, parse_config, preset_names
from hybrid_ias.exceptions import ConfigError


def same_values(a, b):
    da, db = dataclasses.asdict(a), dataclasses.asdict(b)
    da.pop("preset"), db.pop("preset")
    return da == db


def test_preset_names():
    names = preset_names()
    assert len(names) == 12
    for ex in ("example1", "example2", "example3"):
        for kind in ("plain-gamma", "plain-invgamma", "local-hybrid", "global-hybrid"):
            assert f"{ex}-{kind}" in names


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_roundtrip(name):
    cfg = load_config(preset=name)
    assert cfg.preset == name
    back = parse_config(cfg.to_text())
    assert same_values(cfg, back)
    assert back.to_text() == cfg.to_text()


def test_experiment_parameter_defaults():
    c = load_config(preset="example1-global-hybrid")
    assert (c.eta1, float(c.vartheta1), c.r2, c.eta2, c.t_bar) == (1e-2, 1e-5, -1.0, -4.5, 10)
    assert (c.n, c.m, c.kappa, c.noise_pct) == (500, 91, 40.0, 2.0)
    c = load_config(preset="example2-local-hybrid")
    assert (c.eta1, float(c.vartheta1), c.eta2, c.box, c.grid, c.obs) == (1e-4, 1e-3, -6.5, (0.0, 1.0), 136, 68)
    c = load_config(preset="example3-plain-invgamma")
    assert (c.r1, c.eta1, float(c.vartheta1), c.grid, c.obs, c.stars) == (-1.0, -4.5, 1e-6, 128, 64, 80)
    c = load_config(preset="example3-plain-gamma")
    assert (c.eta1, float(c.vartheta1), c.noise_pct) == (1e-5, 1e-4, 1.8)


def test_file_inherits_preset_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("preset = example1-global-hybrid\n# a comment\nt_bar = 12  # trailing\nbox = none\n")
    cfg = load_config(path, overrides=["tau=1.2", "levels = 1, 2, 3, 4, 5"], seed=9)
    assert (cfg.t_bar, cfg.tau, cfg.seed, cfg.mode, cfg.box) == (12, 1.2, 9, "global", None)
    assert cfg.levels == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert load_config(preset="example1-plain-gamma", seed=4).seed == 4


@pytest.mark.parametrize(
    "text,needle",
    [
        ("mode = sideways\n", "mode"),
        ("t_bar = ten\n", ":1: t_bar"),
        ("seed = 1\nfoo = 3\n", ":2: unknown key 'foo'"),
        ("seed = 1\nseed = 2\n", ":2: duplicate key 'seed'"),
        ("just words\n", ":1: expected 'key = value'"),
        ("seed = 1\npreset = example1-plain-gamma\n", "must be the first entry"),
        ("preset = nope\n", "unknown preset"),
        ("tau = 1.0\n", "tau"),
        ("eta1 = none\n", "eta1/beta1"),
        ("vartheta1 = banana\n", "vartheta1"),
        ("box = 1, 0\n", "box"),
        ("levels = 1, 2\n", "levels"),
        ("problem = matrix\n", "matrix_path"),
        ("noise_pct = nan\n", "noise_pct"),
    ],
)
def test_malformed_config_diagnostics(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg")
    assert needle in str(info.value)


def test_override_errors():
    with pytest.raises(ConfigError, match="expected key=value"):
        load_config(preset="example1-plain-gamma", overrides=["tau"])
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(preset="example1-plain-gamma", overrides=["nope=1"])
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/file.cfg")


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32),
    tau=st.floats(1.0001, 10, allow_nan=False),
    eta1=st.floats(1e-8, 10),
    t_bar=st.integers(1, 100),
    box=st.one_of(st.none(), st.tuples(st.floats(-5, 0), st.floats(0.5, 5))),
    proj=st.booleans(),
    vt=st.one_of(st.just("sensitivity"), st.floats(1e-12, 1e3).map(repr)),
)
def test_roundtrip_property(seed, tau, eta1, t_bar, box, proj, vt):
    cfg = ExperimentConfig(seed=seed, tau=tau, eta1=eta1, t_bar=t_bar, box=box, projection=proj, vartheta1=vt).validate()
    assert same_values(parse_config(cfg.to_text()), cfg)
