import subprocess
import sys

import numpy as np
import pytest

from hybrid_ias.cli import compare_table, main
from hybrid_ias.experiments import source_recovery
from hybrid_ias.io import read_keyvalue, read_pgm, read_table, read_vector, write_vector


def metrics(path):
    return read_keyvalue(path / "metrics.csv")


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    assert len(capsys.readouterr().out.split()) == 12


def test_console_script_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "hybrid_ias.cli", "presets"], capture_output=True, text=True, check=True
    )
    assert "example3-global-hybrid" in out.stdout


def test_run_example1_global(tmp_path):
    assert main(["run", "--preset", "example1-global-hybrid", "--out", str(tmp_path)]) == 0
    m = metrics(tmp_path)
    assert m["support_size"] == "5" and m["false_positives"] == "0"
    for name in ("reconstruction.csv", "latent.csv", "theta.csv", "index_set.csv", "config.cfg"):
        assert (tmp_path / name).is_file()
    rows = read_table(tmp_path / "trace.csv")
    assert rows[0]["model_tag"] == "m1" and rows[-1]["model_tag"] == "m2"
    assert (tmp_path / "trace.csv").read_text().startswith("# schema=")


def test_trace_bytes_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--preset", "example1-plain-gamma", "--seed", "7", "--out", str(d)]) == 0
    for name in ("trace.csv", "convexity.csv", "reconstruction.csv", "theta.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert metrics(a)["seed"] == "7"


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("preset = example1-plain-gamma\ntau = 0.5\nmode = sideways\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "mode" in capsys.readouterr().err
    cfg.write_text("seed = 1\nnot a pair\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_argument_errors_exit_code(tmp_path):
    assert main(["run", "--preset", "example1-plain-gamma"]) == 2
    assert main(["run", "--preset", "nope", "--out", str(tmp_path)]) == 2
    assert main(["run", "--preset", "example1-plain-gamma", "--override", "tau", "--out", str(tmp_path)]) == 2
    assert main([]) == 2


def test_thread_limit_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("HYBRID_IAS_THREADS", "many")
    assert main(["run", "--preset", "example1-global-hybrid", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("HYBRID_IAS_THREADS", "1")
    assert main(["run", "--preset", "example1-global-hybrid", "--out", str(tmp_path)]) == 0


def test_compare(tmp_path, capsys):
    a = tmp_path / "a"
    main(["run", "--preset", "example1-global-hybrid", "--out", str(a)])
    rows = compare_table(a, a)
    assert rows and all(float(r[3]) == 0 for r in rows if r[3] not in ("",) and r[0] != "runtime_s")
    capsys.readouterr()
    assert main(["compare", str(a), str(a), "--out", str(tmp_path / "cmp.csv")]) == 0
    assert capsys.readouterr().out == (tmp_path / "cmp.csv").read_text()
    assert main(["compare", str(a), str(tmp_path / "missing")]) == 3


def test_generate_then_run_on_pinned_data(tmp_path):
    data, direct, pinned = tmp_path / "data", tmp_path / "direct", tmp_path / "pinned"
    assert main(["generate", "--preset", "example1-local-hybrid", "--seed", "3", "--out", str(data)]) == 0
    assert (data / "truth.csv").is_file() and (data / "data_meta.csv").is_file()
    main(["run", "--preset", "example1-local-hybrid", "--seed", "3", "--out", str(direct)])
    main(["run", "--preset", "example1-local-hybrid", "--seed", "3", "--override", f"data_dir={data}",
          "--out", str(pinned)])
    assert (direct / "reconstruction.csv").read_bytes() == (pinned / "reconstruction.csv").read_bytes()


def test_pinned_data_mismatch(tmp_path):
    data = tmp_path / "data"
    main(["generate", "--preset", "example1-plain-gamma", "--out", str(data)])
    code = main(["run", "--preset", "example1-plain-gamma", "--override", "noise_pct=5",
                 "--override", f"data_dir={data}", "--out", str(tmp_path / "o")])
    assert code == 2
    assert main(["run", "--preset", "example1-plain-gamma", "--override", f"data_dir={tmp_path / 'none'}",
                 "--out", str(tmp_path / "o")]) == 3


def test_generate_writes_images(tmp_path):
    assert main(["generate", "--preset", "example3-plain-gamma", "--out", str(tmp_path)]) == 0
    img, _ = read_pgm(tmp_path / "data.pgm")
    assert img.shape == (64, 64)
    assert read_pgm(tmp_path / "truth.pgm")[0].shape == (128, 128)
    assert len(read_table(tmp_path / "sources.csv")) == 80


def write_matrix_problem(tmp_path, A, b):
    np.savetxt(tmp_path / "A.csv", A, delimiter=",")
    write_vector(tmp_path / "b.csv", b, "b")
    cfg = tmp_path / "m.cfg"
    cfg.write_text(
        f"problem = matrix\nmatrix_path = {tmp_path / 'A.csv'}\ndata_path = {tmp_path / 'b.csv'}\n"
        "sigma = 0.01\nmode = plain\nvartheta1 = sensitivity\neta1 = 0.01\n"
    )
    return cfg


def test_matrix_problem_from_config(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 40))
    x = np.zeros(40)
    x[[5, 20]] = [1.0, -2.0]
    cfg = write_matrix_problem(tmp_path, A, A @ x + 0.01 * rng.standard_normal(30))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rec = read_vector(tmp_path / "o" / "reconstruction.csv")
    assert set(np.argsort(-np.abs(rec))[:2]) == {5, 20}


def test_zero_column_is_solver_error(tmp_path, capsys):
    A = np.random.default_rng(1).standard_normal((10, 12))
    A[:, 3] = 0
    cfg = write_matrix_problem(tmp_path, A, np.ones(10))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
    assert "ZeroColumn" in capsys.readouterr().err


def test_hybrid_fewer_false_positives_than_gamma(preset_run):
    fp = {k: preset_run(f"example1-{k}")[2]["false_positives"] for k in ("plain-gamma", "global-hybrid")}
    assert fp["global-hybrid"] < fp["plain-gamma"]


@pytest.mark.slow
def test_invgamma_misses_recoverable_sources(preset_run):
    exp, st_inv, _, _ = preset_run("example3-plain-invgamma")
    ok_inv, _ = source_recovery(exp.problem, st_inv.x, exp.sources)
    better = [
        source_recovery(exp.problem, preset_run(f"example3-{k}")[1].x, exp.sources)[0]
        for k in ("plain-gamma", "global-hybrid", "local-hybrid")
    ]
    assert np.any(~ok_inv & np.logical_or.reduce(better))


@pytest.mark.xfail(strict=True, reason="the documented noise level gives an SNR below the stated range")
def test_example3_snr_range(preset_run):
    from hybrid_ias.config import load_config
    from hybrid_ias.experiments import build_experiment

    snr = build_experiment(load_config(preset="example3-plain-gamma")).info["snr_db"]
    assert 20 <= snr <= 30
