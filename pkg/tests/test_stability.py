import json

import numpy as np
import pytest

from nsgalerkin.errors import ConfigurationError, PreconditionError
from nsgalerkin.forcing import Profile, RegularField
from nsgalerkin.galerkin import GalerkinConfig
from nsgalerkin.stability import (
    STEADY_TOL,
    amplitude_sweep,
    decay_experiment,
    empirical_constants,
    export_decay_csv,
    export_summary_json,
    gronwall_fit,
    separation_experiment,
    smallness_report,
    solve_steady,
)

NU = 0.05


def smooth(B, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    c = B.lambdas[0] / B.lambdas * rng.standard_normal(B.k)
    return scale * c / np.linalg.norm(c)


def steady_force(B, seed, amplitude):
    return RegularField(B.field(smooth(B, seed, amplitude)))


@pytest.fixture(scope="module")
def cfg():
    return GalerkinConfig(nu=NU, dt=1e-2, T=5.0)


@pytest.fixture(scope="module")
def consts(basis32, tensor32):
    return empirical_constants(basis32.grid, basis32, 200, tensor32)


def test_zero_force_zero_state(basis32, tensor32, cfg):
    st = solve_steady(None, cfg, tensor32, basis32)
    assert not np.any(st.coeffs)
    assert st.converged and st.regime == "small"


@pytest.mark.parametrize("amp", [0.5, 2.0, 4.0])
def test_small_force_residual(basis32, tensor32, cfg, amp):
    F = steady_force(basis32, 40, amp)
    st = solve_steady(F, cfg, tensor32, basis32)
    f = basis32.coefficients(F.field)
    res = NU * basis32.lambdas * st.coeffs + tensor32.contract(st.coeffs, st.coeffs) - f
    assert np.max(np.abs(res)) <= STEADY_TOL * max(1.0, np.linalg.norm(f))
    assert st.residual == pytest.approx(np.max(np.abs(res)), abs=1e-15)
    assert set(st.norms) == {"L2", "H1", "L4"}


def test_picard_newton_agree(basis32, tensor32, cfg):
    F = steady_force(basis32, 41, 2.0)
    a = solve_steady(F, cfg, tensor32, basis32, method="picard")
    b = solve_steady(F, cfg, tensor32, basis32, method="newton")
    assert a.converged and b.converged
    assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-9


def test_random_starts_same_state(basis32, tensor32, cfg):
    F = steady_force(basis32, 42, 2.0)
    ref = solve_steady(F, cfg, tensor32, basis32)
    rng = np.random.default_rng(0)
    for _ in range(10):
        start = ref.coeffs + rng.standard_normal(32) * 0.5 * np.linalg.norm(ref.coeffs) / np.sqrt(32)
        st = solve_steady(F, cfg, tensor32, basis32, method="picard", start=start)
        assert st.converged
        assert np.max(np.abs(st.coeffs - ref.coeffs)) <= 1e-8


def test_steady_preconditions(basis32, tensor32, cfg):
    with pytest.raises(PreconditionError):
        solve_steady(RegularField(basis32.mode(0), Profile("sine")), cfg, tensor32, basis32)
    with pytest.raises(ConfigurationError):
        solve_steady(None, cfg, tensor32, basis32, method="anderson")


def test_large_force_flagged(basis32, tensor32, cfg):
    st = solve_steady(steady_force(basis32, 44, 60.0), cfg, tensor32, basis32)
    assert st.regime == "outside smallness regime"


def test_constants(basis32, tensor32, consts):
    lam1 = basis32.lambdas[0]
    assert consts.C3**2 >= (1.0 / lam1) * 0.95
    assert consts.C3**2 == pytest.approx(1.0 / lam1, rel=0.05)
    more = empirical_constants(basis32.grid, basis32, 400, tensor32)
    assert more.C1 == pytest.approx(consts.C1, rel=0.10)
    assert more.C3 == pytest.approx(consts.C3, rel=0.10)
    scaled = empirical_constants(basis32.grid, basis32, 200, tensor32, scale=7.0)
    assert abs(scaled.C1 - consts.C1) <= 1e-12 * consts.C1
    assert abs(scaled.C3 - consts.C3) <= 1e-12 * consts.C3


def test_constants_need_samples(basis32, tensor32):
    with pytest.raises(ConfigurationError):
        empirical_constants(basis32.grid, basis32, 50, tensor32)


@pytest.mark.parametrize("nu0", [0.0, 1.0])
def test_unforced_decay_rate(basis32, tensor32, cfg, nu0):
    rate = NU * basis32.lambdas[0]
    c0 = np.zeros(32)
    c0[0] = 1.0
    res = decay_experiment(None, c0, cfg.replace(nu0=nu0), tensor32, basis32)
    if nu0 == 0.0:
        assert res.alpha_fit == pytest.approx(rate, rel=0.02)
    c0 = smooth(basis32, 50, 0.5)
    res = decay_experiment(None, c0, cfg.replace(nu0=nu0), tensor32, basis32)
    assert res.alpha_fit >= 0.95 * rate
    assert res.passed


def test_smallness_zero_force(basis32, tensor32, cfg, consts):
    st = solve_steady(None, cfg, tensor32, basis32)
    rep = smallness_report(st, consts, NU)
    assert rep.margin == NU
    assert rep.alpha_pred == pytest.approx(NU / consts.C3**2, rel=1e-15)


def test_small_force_decay(basis32, tensor32, cfg, consts, tmp_path):
    for seed, amp in zip(range(40, 45), (0.5, 1.0, 1.5, 2.0, 2.5)):
        F = steady_force(basis32, seed, amp)
        st = solve_steady(F, cfg, tensor32, basis32)
        rep = smallness_report(st, consts, NU)
        assert rep.margin > 0 and st.regime == "small"
        res = decay_experiment(F, st.coeffs + smooth(basis32, seed + 100, 0.5), cfg, tensor32, basis32, st)
        assert res.passed and res.r2 >= 0.99
        assert res.monotone_all
        assert rep.alpha_pred <= 1.1 * res.alpha_fit
    export_decay_csv(res, tmp_path / "d.csv")
    rows = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    assert np.array_equal(rows[:, 1], res.distance)
    summary = export_summary_json(tmp_path / "s.json", res, rep, st)
    assert json.loads((tmp_path / "s.json").read_text())["alpha_fit"] == summary["alpha_fit"]


def test_sweep_monotone(basis32, tensor32, cfg, consts):
    F = steady_force(basis32, 43, 1.0)
    sweep = amplitude_sweep(F, [0.1, 0.3, 1.0, 3.0, 10.0], consts, cfg, tensor32, basis32)
    margins = [rep.margin for _, _, rep in sweep]
    assert np.all(np.diff(margins) < 0)


def test_separation_and_fit(basis32, tensor32):
    cfg = GalerkinConfig(nu=NU, dt=5e-3, T=0.5)
    results = []
    for s in range(4):
        rng = np.random.default_rng(200 + s)
        c0 = smooth(basis32, 300 + s, 2.0)
        delta = rng.standard_normal(32)
        delta *= 1e-6 / np.linalg.norm(delta)
        res = separation_experiment(c0, delta, None, cfg, tensor32, basis32)
        bound = res.separation[0] * np.exp(res.K * res.h1_integral)
        assert np.all(res.separation <= bound * (1 + 1e-12))
        results.append(res)
    fit = gronwall_fit(results)
    assert fit.K == max(r.K for r in results)
    assert fit.leave_one_out.size == 4
    with pytest.raises(ConfigurationError):
        gronwall_fit(results[:1])
