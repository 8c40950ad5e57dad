import csv
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsgalerkin import cli
from nsgalerkin import config as cfgmod
from nsgalerkin.errors import ConfigurationError
from nsgalerkin.stokes_basis import load_basis

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(argv):
    return cli.main([str(a) for a in argv])


def outputs(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


# -- config grammar -------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_roundtrip(path):
    cfg = cfgmod.load_config(path)
    assert cfgmod.parse_config(cfgmod.serialize_config(cfg)) == cfg


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(
    nu=st.floats(1e-4, 10.0),
    T=st.floats(0.01, 10.0),
    seed=st.integers(0, 2**31 - 1),
    coeffs=st.lists(finite, max_size=6),
    loc=st.tuples(st.floats(0.1, 0.9), st.floats(0.1, 0.9)),
    vec=st.tuples(finite, finite),
    profile=st.sampled_from(cfgmod.PROFILES),
)
def test_roundtrip_property(nu, T, seed, coeffs, loc, vec, profile):
    cfg = cfgmod.RunConfig(
        nu=nu,
        T=T,
        dt=T / 10,
        seed=seed,
        initial=cfgmod.DataBlock(preset="coefficients", coefficients=tuple(coeffs)),
        force=(cfgmod.ForceTerm(name="a", location=loc, vector=vec, profile=profile),),
        direction=(cfgmod.ForceTerm(name="b", type="field", preset="mode", mode=2),),
    )
    assert cfgmod.parse_config(cfgmod.serialize_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[run]\nbogus = 1\n", "bogus"),
        ("[mystery]\n", "mystery"),
        ("[initial]\ncolour = red\n", "colour"),
        ("[output]\nformat = csv\n", "format"),
        ("[force.x]\nstrength = 2\n", "strength"),
    ],
)
def test_unknown_names_rejected(text, needle):
    with pytest.raises(ConfigurationError, match=needle):
        cfgmod.parse_config(text)


@pytest.mark.parametrize(
    "text",
    [
        "[run]\nn = 4\n",
        "[run]\nk = 0\n",
        "[run]\nnu = -1\n",
        "[run]\ndt = 0\n",
        "[run]\nmodel = euler\n",
        "[run]\nn = abc\n",
        "[initial]\npreset = sideways\n",
        "[force.x]\ntype = wave\n",
        "[force.x]\nlocation = 0.5\n",
        "[force.x]\nprofile = power\nexponent = -0.2\n[run]\nq = 5\n",
        "not an ini file",
    ],
)
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigurationError):
        cfgmod.parse_config(text)


def test_point_force_requires_admissible_pair():
    text = "[run]\np = 2.0\nq = 100\n[force.x]\ntype = point\n"
    with pytest.raises(ConfigurationError, match="p < 2"):
        cfgmod.parse_config(text)
    # without a rough force the pair is not constrained
    cfgmod.parse_config("[run]\np = 2.0\nq = 100\n")


def test_integrable_power_accepted():
    cfg = cfgmod.parse_config("[run]\nq = 7\n[force.x]\nprofile = power\nexponent = -0.1\n")
    assert cfg.force[0].exponent == -0.1


def test_build_coefficients(basis16):
    cfg = cfgmod.RunConfig(n=16, k=8, initial=cfgmod.DataBlock(preset="mode", mode=3, amplitude=2.0))
    c = cfgmod.build_coefficients(cfg, basis16)
    assert c.tolist() == [0, 0, 2.0, 0, 0, 0, 0, 0]
    cfg = replace(cfg, initial=cfgmod.DataBlock(preset="random", amplitude=1.5))
    a = cfgmod.build_coefficients(cfg, basis16)
    assert np.linalg.norm(a) == pytest.approx(1.5)
    assert np.array_equal(a, cfgmod.build_coefficients(cfg, basis16))
    assert not np.array_equal(a, cfgmod.build_coefficients(replace(cfg, seed=1), basis16))
    cfg = replace(cfg, initial=cfgmod.DataBlock(preset="coefficients", coefficients=(1.0,) * 9))
    with pytest.raises(ConfigurationError):
        cfgmod.build_coefficients(cfg, basis16)
    cfg = replace(cfg, initial=cfgmod.DataBlock(preset="mode", mode=9))
    with pytest.raises(ConfigurationError):
        cfgmod.build_coefficients(cfg, basis16)


def test_build_force(basis16):
    assert cfgmod.build_force(cfgmod.RunConfig(n=16, k=8), basis16) is None
    cfg = cfgmod.load_config(CONFIGS / "split.ini")
    F = cfgmod.build_force(cfg, basis16)
    assert len(F.terms) == 2


# -- command line -----------------------------------------------------------------


def test_eigs(tmp_path, capsys):
    out = tmp_path / "basis.stkb"
    assert run(["eigs", "--n", 16, "--k", 8, "--nu", 0.05, "--out", out]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    B = load_basis(out, n=16, k=8, nu=0.05)
    assert lines == [f"lambda_{j + 1} = {float(B.lambdas[j])!r}" for j in range(5)]


def test_simulate_zero(tmp_path):
    cfgfile = tmp_path / "zero.ini"
    cfgfile.write_text("[run]\nn = 16\nk = 8\nT = 0.05\ndt = 0.01\n[output]\nprefix = z\n")
    assert run(["simulate", "--config", cfgfile, "--out-dir", tmp_path / "o"]) == 0
    with open(tmp_path / "o" / "z_timeseries.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert all(float(r["L2"]) == 0.0 and float(r["H1"]) == 0.0 for r in rows)


@pytest.mark.parametrize("model", ["stokes", "oseen", "navier-stokes"])
def test_simulate_models(tmp_path, model):
    text = (CONFIGS / "simulate.ini").read_text().replace("[run]", f"[run]\nmodel = {model}")
    text += "\n[advect]\npreset = mode\nmode = 1\n"
    cfgfile = tmp_path / "m.ini"
    cfgfile.write_text(text)
    assert run(["simulate", "--config", cfgfile, "--out-dir", tmp_path]) == 0
    assert (tmp_path / "forced_summary.json").exists()


def test_unknown_key_exit_code(tmp_path, capsys):
    cfgfile = tmp_path / "bad.ini"
    cfgfile.write_text("[run]\nviscosity = 1\n")
    assert run(["simulate", "--config", cfgfile]) == 1
    assert "viscosity" in capsys.readouterr().err


def test_unknown_flag_exit_code(capsys):
    assert run(["simulate", "--frobnicate"]) == 1
    assert "frobnicate" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run(["simulate", "--config", tmp_path / "absent.ini"]) == 1


def test_inadmissible_pair_exit_code(tmp_path, capsys):
    text = (CONFIGS / "point_force.ini").read_text().replace("q = 7", "q = 5")
    cfgfile = tmp_path / "pq.ini"
    cfgfile.write_text(text)
    assert run(["simulate", "--config", cfgfile, "--out-dir", tmp_path]) == 1
    assert "q > 2p/(p-1)" in capsys.readouterr().err
    assert not any(tmp_path.glob("*.csv"))


def test_numerical_failure_exit_code(tmp_path):
    cfgfile = tmp_path / "blow.ini"
    cfgfile.write_text(
        "[run]\nn = 16\nk = 8\nnu = 0.0001\nT = 5\ndt = 0.05\n[initial]\npreset = random\namplitude = 200\n"
    )
    assert run(["simulate", "--config", cfgfile, "--out-dir", tmp_path]) == 2


def test_sensitivity_needs_direction(tmp_path):
    assert run(["sensitivity", "--config", CONFIGS / "simulate.ini", "--out-dir", tmp_path]) == 1


def test_check_exit_codes(tmp_path, monkeypatch):
    argv = ["check", "--config", CONFIGS / "check.ini", "--out-dir", tmp_path, "--k", 8, "--samples", 100]
    assert run(argv + ["--skew"]) == 0
    from nsgalerkin import inequalities

    real = inequalities.saturation

    def strict(*args, **kw):
        return real(*args, **dict(kw, tol=0.0))

    monkeypatch.setattr(inequalities, "saturation", strict)
    assert run(argv + ["--gagliardo"]) == 3


SUBCOMMANDS = [
    (["simulate", "--config", CONFIGS / "simulate.ini", "--figures"], "forced"),
    (["split", "--config", CONFIGS / "split.ini", "--figures"], "mixed"),
    (["split", "--config", CONFIGS / "split.ini", "--initial-into", "stokes"], "mixed"),
    (["sensitivity", "--config", CONFIGS / "sensitivity.ini", "--figures"], "taylor"),
    (["stability", "--config", CONFIGS / "stability.ini", "--figures", "--samples", 100, "--sweep", "0.5,1,2"], "steady"),
    (["check", "--config", CONFIGS / "check.ini", "--all", "--k", 8, "--samples", 100], "harness"),
]


@pytest.mark.parametrize("argv, prefix", SUBCOMMANDS, ids=lambda v: v[0] if isinstance(v, list) else None)
def test_subcommand_deterministic(tmp_path, argv, prefix):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(argv + ["--out-dir", a]) == 0
    assert run(argv + ["--out-dir", b]) == 0
    first = outputs(a)
    assert first and all(name.startswith(prefix) for name in first)
    assert first == outputs(b)


def test_split_summary_within_tolerance(tmp_path):
    import json

    assert run(["split", "--config", CONFIGS / "split.ini", "--out-dir", tmp_path]) == 0
    summary = json.loads((tmp_path / "mixed_split_summary.json").read_text())
    assert summary["within_tolerance"]
    assert summary["max_discrepancy"] <= 10 * summary["self_convergence_error"]
