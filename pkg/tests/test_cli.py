import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amspec.cli import RunConfig, main

SMALL = ["--set", "N=256", "--set", "T=16", "--kmax", "4"]


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    return main([*argv, "--out", str(out)]), out


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def signal_file(tmp_path):
    code, out = run(tmp_path, "signal", *SMALL, sub="sig")
    assert code == 0
    return out / "signal_seed0.amsig"


# -- configuration --------------------------------------------------------------------
finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(alpha=finite, s=finite, p=st.lists(st.floats(0.1, 10.0), min_size=1, max_size=3), q=st.floats(0.1, 10.0),
       kmax=st.integers(1, 64), N=st.integers(8, 4096), T=st.floats(0.5, 100.0), seed=st.integers(0, 2**31),
       c1=st.one_of(st.none(), st.floats(0.1, 5.0)))
def test_config_text_round_trip(alpha, s, p, q, kmax, N, T, seed, c1):
    cfg = RunConfig(alpha, s, tuple(p), q, kmax, N, T, seed, "somewhere", c1)
    back = RunConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_config_comments_and_blank_lines():
    cfg = RunConfig.from_text("# header\n\nalpha = 0.5  # trailing\np = 1.5, 2\nc1 = auto\n")
    assert cfg.alpha == 0.5 and cfg.p == (1.5, 2.0) and cfg.dim == 2 and cfg.c1 is None


def test_digest_ignores_output_directory():
    a = RunConfig(out="x")
    b = RunConfig(out="y")
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig(kmax=8).digest()


@pytest.mark.parametrize("text", ["alpha 0.5\n", "kmax = many\n", "colour = red\n", "p = \n"])
def test_bad_config_file_exit_one(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _ = run(tmp_path, "cover", "--config", str(cfg))
    assert code == 1


@pytest.mark.parametrize("item", ["colour=red", "kmax", "N=abc"])
def test_bad_set_exit_one(tmp_path, item):
    assert run(tmp_path, "cover", "--set", item)[0] == 1


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    RunConfig(N=256, T=16.0, kmax=8).save(cfg)
    code, out = run(tmp_path, "cover", "--config", str(cfg), "--kmax", "4")
    assert code == 0
    m = read_json(out / "manifest.json")
    assert m["config"]["kmax"] == 4 and m["config"]["N"] == 256


# -- exit codes -----------------------------------------------------------------------
def test_help_exit_zero(capsys):
    assert main(["--help"]) == 0
    assert "Exit codes" in capsys.readouterr().out
    assert main(["cover", "--help"]) == 0


@pytest.mark.parametrize("argv", [[], ["nonsense"], ["cover", "--kmax", "x"], ["cover", "--threads", "0"]])
def test_usage_errors_exit_one(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == 1


def test_cover_ok(tmp_path, capsys):
    code, out = run(tmp_path, "cover", *SMALL)
    assert code == 0
    rep = read_json(out / "cover.json")
    assert rep["support_overlap"] >= 1 and rep["probes"] > 0
    assert "covering certified" in capsys.readouterr().out
    assert (out / "cover_balls.csv").read_text().startswith("k1,xi1,radius")


def test_coverage_gap_exit_two(tmp_path, capsys):
    code, _ = run(tmp_path, "cover", *SMALL, "--set", "c1=0.3")
    assert code == 2
    assert "uncovered" in capsys.readouterr().err


def test_undersampled_grid_exit_two(tmp_path):
    assert run(tmp_path, "cover", "--alpha", "0.5", "--set", "N=1024", "--set", "c1=1")[0] == 0
    assert run(tmp_path, "analyze", "--alpha", "0.5", "--set", "N=1024", "--set", "c1=1", "--in", __file__)[0] == 2


@pytest.mark.parametrize("alpha", ["1.0", "-0.2"])
def test_bad_alpha_exit_two(tmp_path, alpha):
    assert run(tmp_path, "cover", "--alpha", alpha)[0] == 2


def test_missing_input_exit_one(tmp_path):
    assert run(tmp_path, "analyze", *SMALL, "--in", str(tmp_path / "nope.amsig"))[0] == 1
    assert run(tmp_path, "analyze", *SMALL)[0] == 1


def test_malformed_signal_exit_one(tmp_path):
    bad = tmp_path / "bad.amsig"
    bad.write_bytes(b"not a signal at all")
    assert run(tmp_path, "analyze", *SMALL, "--in", str(bad))[0] == 1


def test_fit_target_missed_exit_three(tmp_path):
    code, _ = run(tmp_path, "csupp-fit", *SMALL, "--K", "8", "--m", "1", "--eps-target", "0.05")
    assert code == 3


# -- outputs --------------------------------------------------------------------------
def test_manifest_schema(tmp_path, signal_file):
    code, out = run(tmp_path, "analyze", *SMALL, "--in", str(signal_file))
    assert code == 0
    m = read_json(out / "manifest.json")
    assert set(m) == {"schema", "command", "config", "config_hash", "options", "versions", "fitted_constants",
                      "outputs"}
    assert m["schema"] == "amspec/1" and m["command"] == "analyze"
    assert m["outputs"] == ["analyze.json", "coeffs.csv"]
    assert set(m["versions"]) == {"amspec", "numpy", "scipy", "python"}
    assert m["config_hash"] == RunConfig(N=256, T=16.0, kmax=4).digest()
    for name in m["outputs"]:
        assert (out / name).is_file()


def test_outputs_byte_identical_on_rerun(tmp_path, signal_file):
    out = run(tmp_path, "analyze", *SMALL, "--in", str(signal_file), sub="a")[1]
    names = ("analyze.json", "coeffs.csv", "manifest.json")
    first = {n: (out / n).read_bytes() for n in names}
    run(tmp_path, "analyze", *SMALL, "--in", str(signal_file), sub="a")
    assert all((out / n).read_bytes() == first[n] for n in names)
    # a different output directory changes only the recorded location, not the hash
    other = run(tmp_path, "analyze", *SMALL, "--in", str(signal_file), sub="b")[1]
    assert (other / "coeffs.csv").read_bytes() == first["coeffs.csv"]
    assert read_json(other / "manifest.json")["config_hash"] == read_json(out / "manifest.json")["config_hash"]


def test_signal_is_seeded_and_unit_norm(tmp_path):
    a = run(tmp_path, "signal", *SMALL, "--csv", sub="a")[1]
    b = run(tmp_path, "signal", *SMALL, sub="b")[1]
    assert (a / "signal_seed0.amsig").read_bytes() == (b / "signal_seed0.amsig").read_bytes()
    assert read_json(a / "signal.json")["l2_norm"] == pytest.approx(1.0, rel=1e-14)
    rows = np.loadtxt(a / "signal_seed0.csv", delimiter=",", skiprows=1)
    assert rows.shape == (256, 3)
    c = run(tmp_path, "signal", *SMALL, "--set", "seed=1", sub="c")[1]
    assert (c / "signal_seed1.amsig").read_bytes() != (a / "signal_seed0.amsig").read_bytes()


def test_analyze_synthesize_round_trip(tmp_path, signal_file, capsys):
    code, out = run(tmp_path, "analyze", *SMALL, "--in", str(signal_file), sub="an")
    assert code == 0
    rep = read_json(out / "analyze.json")
    assert rep["parseval_rel_error"] <= 1e-10 and rep["roundtrip_rel_error"] <= 1e-8
    code, syn = run(tmp_path, "synthesize", *SMALL, "--in", str(out / "coeffs.csv"), "--reference",
                    str(signal_file), "--csv", sub="syn")
    assert code == 0
    assert read_json(syn / "synthesize.json")["relative_error"] <= 1e-8
    assert (syn / "synth.amsig").is_file() and (syn / "synth.csv").is_file()
    assert "relative error" in capsys.readouterr().out


def test_synthesize_rejects_foreign_coefficients(tmp_path, signal_file):
    out = run(tmp_path, "analyze", *SMALL, "--in", str(signal_file), sub="an")[1]
    # an index outside the truncation is a usage error, not a crash
    bad = tmp_path / "bad.csv"
    bad.write_text("k1,l1,re,im\n99,0,1,0\n")
    assert run(tmp_path, "synthesize", *SMALL, "--in", str(bad))[0] == 1
    assert (out / "coeffs.csv").is_file()


def test_norm_in_l2_bracket_two_dimensional(tmp_path):
    cfg = ["--set", "p=2,2", "--set", "N=64", "--set", "T=16", "--kmax", "3", "--set", "c1=1"]
    code, sig = run(tmp_path, "signal", *cfg, sub="sig")
    assert code == 0
    code, out = run(tmp_path, "norm", *cfg, "--in", str(sig / "signal_seed0.amsig"), sub="norm")
    assert code == 0
    rep = read_json(out / "norm.json")
    assert rep["in_bracket"]
    lo, hi = rep["l2_bracket"]
    assert lo <= rep["mod_norm"] * (1 + 1e-9) and rep["mod_norm"] <= hi * (1 + 1e-9)
    assert rep["l2_norm"] == pytest.approx(1.0, rel=1e-12)
    assert (out / "norm_bands.csv").is_file()


def test_admat_report(tmp_path):
    code, out = run(tmp_path, "admat", *SMALL, "--export-matrix")
    assert code == 0
    rep = read_json(out / "admat.json")
    assert rep["identity_C"] == 1.0 and rep["gram_membership"]["member"]
    assert (out / "gram.csv").is_file()
    m = read_json(out / "manifest.json")
    assert m["fitted_constants"]["identity_C"] == 1.0


def test_admat_rejects_zero_delta(tmp_path):
    assert run(tmp_path, "admat", *SMALL, "--delta", "0")[0] == 2


@pytest.mark.parametrize("symbol", [["one"], ["bracket-power", "1"]])
def test_multiply_routes_agree(tmp_path, signal_file, symbol):
    code, out = run(tmp_path, "multiply", *SMALL, "--in", str(signal_file), "--symbol", *symbol, "--route", "matrix")
    assert code == 0
    rep = read_json(out / "multiply.json")
    assert rep["route_difference"] <= 1e-6 and rep["class_check"]["in_class"]


def test_multiply_symbol_file(tmp_path, signal_file):
    sym = tmp_path / "sym.csv"
    sym.write_text("xi,re,im\n-100,1,0\n100,1,0\n")
    code, out = run(tmp_path, "multiply", *SMALL, "--in", str(signal_file), "--symbol", "file", str(sym), "--csv")
    assert code == 0
    rep = read_json(out / "multiply.json")
    assert rep["l2_out"] == pytest.approx(rep["l2_in"], rel=1e-12)
    assert (out / "multiplied.csv").is_file()


@pytest.mark.parametrize("symbol", [["cube"], ["bracket-power", "x"], ["file"]])
def test_multiply_bad_symbol_exit_one(tmp_path, signal_file, symbol):
    assert run(tmp_path, "multiply", *SMALL, "--in", str(signal_file), "--symbol", *symbol)[0] == 1


def test_csupp_fit_and_expand(tmp_path, signal_file):
    code, out = run(tmp_path, "csupp-fit", *SMALL, "--eps-target", "0.05", sub="fit")
    assert code == 0
    assert read_json(out / "csupp_fit.json")["eps_max"] <= 0.05
    code, out = run(tmp_path, "csupp-expand", *SMALL, "--in", str(signal_file), "--tol", "1e-8", sub="ex")
    assert code == 0
    rep = read_json(out / "csupp_expand.json")
    assert rep["contraction"] < 1.0 and rep["reconstruction_error"] <= 1e-6


def test_csupp_two_dimensional_rejected(tmp_path):
    assert run(tmp_path, "csupp-fit", "--set", "p=2,2", "--set", "N=64", "--set", "T=16", "--kmax", "2")[0] == 2


def test_threads_sets_environment(tmp_path, monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    assert run(tmp_path, "cover", *SMALL, "--threads", "1")[0] == 0
    import os

    assert os.environ["OMP_NUM_THREADS"] == "1"


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "amspec.cli", "cover", *SMALL, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "manifest.json").is_file()
