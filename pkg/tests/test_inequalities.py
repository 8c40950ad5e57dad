import json

import numpy as np
import pytest

from nsgalerkin.errors import ConfigurationError
from nsgalerkin.forcing import validate_params
from nsgalerkin.grid import build_grid, flat_norm_H1, flat_norm_Lr
from nsgalerkin.inequalities import (
    ESTIMATES,
    dual_convection_norm,
    gagliardo_check,
    gagliardo_ratio,
    saturation,
    skew_check,
    trilinear_bounds_check,
    write_json,
)
from nsgalerkin.sampling import point_stokes_field, sine_field, stream_field

PARAMS = validate_params(1.5, 7.0)


@pytest.fixture(scope="module")
def sat32():
    return {r.name: r for r in saturation(32, 200, PARAMS)}


@pytest.mark.parametrize("r", [3.0, 4.0, 6.0])
def test_gagliardo_scale_invariance(r):
    g = build_grid(32)
    y = sine_field(g, np.random.default_rng(0), 1.0)
    assert abs(gagliardo_ratio(g, 5 * y, r) - gagliardo_ratio(g, y, r)) <= 1e-12
    a = gagliardo_check(g, r, 100, seed=3)
    b = gagliardo_check(g, r, 100, seed=3, scale=5.0)
    assert abs(a.max_ratio - b.max_ratio) <= 1e-12 * a.max_ratio
    assert a.argmax == b.argmax


def test_gagliardo_r2_limit():
    g = build_grid(16)
    res = gagliardo_check(g, 2.0, 100, allow_r2=True)
    assert res.max_ratio == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("r, samples", [(2.0, 100), (1.5, 100), (4.0, 99)])
def test_gagliardo_preconditions(r, samples):
    with pytest.raises(ConfigurationError):
        gagliardo_check(build_grid(16), r, samples)


def test_gagliardo_zero_field():
    g = build_grid(16)
    assert np.isnan(gagliardo_ratio(g, np.zeros(g.n_dof), 4.0))


def test_gagliardo_saturation(sat32):
    rep = sat32["gagliardo_r4"]
    assert np.isfinite(rep.max_ratio)
    assert rep.sample_change <= 0.10
    assert rep.grid_change <= 0.10


def test_skew_ground_mode(basis32, tensor32):
    assert abs(tensor32.form(*(np.eye(32)[0],) * 3)) <= 1e-10


def test_skew_random(basis32, tensor32):
    rep = skew_check(tensor32, basis32, 200, seed=1)
    assert rep["max_normalized_b_uvv"] <= 1e-10
    assert rep["max_polarization_defect"] <= 1e-10
    # the harness and the tensor invariant describe the same identity
    assert tensor32.skew_defect() <= 1e-10


def test_skew_needs_samples(basis32, tensor32):
    with pytest.raises(ConfigurationError):
        skew_check(tensor32, basis32, 10)


def test_field_classes_are_admissible():
    g = build_grid(32)
    rng = np.random.default_rng(4)
    for y in (stream_field(g, rng, 1.0), point_stokes_field(g, rng)):
        assert np.max(np.abs(g.div_matrix @ y)) <= 1e-10 * max(1.0, np.max(np.abs(y)))
    # same seed, same continuum field on every grid
    a = stream_field(build_grid(32), np.random.default_rng(9), 1.0)
    b = stream_field(build_grid(64), np.random.default_rng(9), 1.0)
    assert flat_norm_Lr(build_grid(32), a, 2.0) == pytest.approx(flat_norm_Lr(build_grid(64), b, 2.0), rel=0.02)
    assert flat_norm_H1(build_grid(32), a) == pytest.approx(flat_norm_H1(build_grid(64), b), rel=0.02)


def test_dual_norm_zero_and_homogeneity():
    g = build_grid(32)
    rng = np.random.default_rng(5)
    a, b = stream_field(g, rng, 1.0), stream_field(g, rng, 1.0)
    z = np.zeros(g.n_dof)
    assert dual_convection_norm(g, z, b) == 0.0
    assert dual_convection_norm(g, a, z) == 0.0
    base = dual_convection_norm(g, a, b)
    assert dual_convection_norm(g, 2 * a, -3 * b) == pytest.approx(6 * base, rel=1e-12)


def test_dual_norm_is_supremum():
    g = build_grid(16)
    rng = np.random.default_rng(6)
    a, b = stream_field(g, rng, 1.0), stream_field(g, rng, 1.0)
    sup = dual_convection_norm(g, a, b)
    from nsgalerkin.grid import convect_flat

    r = convect_flat(g, a, b)
    for _ in range(50):
        psi = rng.standard_normal(g.n_dof)
        assert abs(g.cell_area * (r @ psi)) <= sup * flat_norm_H1(g, psi) * (1 + 1e-12)


def test_trilinear_ratios_finite():
    res = trilinear_bounds_check(build_grid(16), PARAMS, 100, seed=2)
    assert set(res) == set(ESTIMATES)
    for rr in res.values():
        assert np.isfinite(rr.max_ratio) and rr.max_ratio > 0
        assert 0 <= rr.argmax < 100


@pytest.mark.parametrize("name", ESTIMATES)
def test_trilinear_saturation(sat32, name):
    rep = sat32[f"trilinear_{name}"]
    assert rep.sample_change <= 0.15
    assert rep.grid_change <= 0.15
    assert rep.saturated


def test_report_json(sat32, tmp_path):
    write_json(tmp_path / "r.json", {"ratios": sat32})
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["ratios"]["trilinear_W_W"]["samples"] == 200
    assert set(data["ratios"]["gagliardo_r4"]) >= {"max_ratio", "samples", "n", "trend"}
