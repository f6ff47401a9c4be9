import numpy as np
import pytest

from degenlab.cases import get_case
from degenlab.grid import GridSpec, build_grid
from degenlab.rates import (
    cell_center_gradients,
    conormal_decay,
    dyadic_scales,
    epsilon_sweep,
    gradient_holder_fit,
    holder_exponent_fit,
    limiting_bc_residual,
    oscillation_profile,
)
from conftest import make_problem


@pytest.fixture(scope="module")
def grid257():
    return build_grid(GridSpec(2, 2, 257))


def test_holder_fit_sqrt_profile(grid257):
    rep = holder_exponent_fit(grid257.node_y_norm**0.5, grid257)
    assert abs(rep.exponent - 0.5) <= 0.1


def test_holder_fit_linear_saturates(grid257):
    rep = holder_exponent_fit(grid257.coords[:, 0] + 0.5 * grid257.coords[:, 1], grid257)
    assert rep.exponent >= 0.99


def test_holder_fit_cap_engages():
    # a profile steeper than first order is reported at the cap
    from degenlab.rates import OscillationProfile, _fit_profile

    scales = np.array([0.25, 0.125, 0.0625, 0.03125])
    rep = _fit_profile(OscillationProfile(scales=scales, osc=scales**1.5), cap=1.0)
    assert rep.exponent == 1.0 and rep.capped


def test_holder_fit_c1_field_caps(grid257):
    # |y|^1.5 is C^1 on the analysis ball: exponent within the cap band
    rep = holder_exponent_fit(grid257.node_y_norm**1.5, grid257)
    assert rep.exponent >= 0.9


def test_holder_fit_scale_invariance(grid257):
    f = grid257.node_y_norm**0.5
    r1 = holder_exponent_fit(f, grid257)
    r2 = holder_exponent_fit(-17.0 * f, grid257)
    assert r1.exponent == pytest.approx(r2.exponent, abs=1e-12)


def test_holder_fit_too_few_scales():
    g = build_grid(GridSpec(2, 2, 33))  # only 2 dyadic scales above 4h
    with pytest.raises(ValueError, match="scales"):
        holder_exponent_fit(g.node_y_norm, g)


def test_oscillation_profile_monotone(grid257):
    scales = dyadic_scales(grid257.h)
    prof = oscillation_profile(grid257.coords, grid257.node_y_norm**0.5, scales)
    assert np.all(np.diff(prof.osc) <= 1e-14)  # decreasing toward small scales


def test_gradient_fit_c1_regime(grid257):
    rep = gradient_holder_fit(grid257.node_y_norm**1.5, grid257)
    assert abs(rep.exponent - 0.5) <= 0.1


def test_gradient_fit_smooth_field(grid257):
    rep = gradient_holder_fit(grid257.coords[:, 0] ** 2, grid257)
    assert rep.exponent >= 0.99


def test_gradient_fit_flags_non_c1(grid257):
    rep = gradient_holder_fit(grid257.node_y_norm**0.5, grid257)
    assert rep.flag == "non_c1"
    assert rep.exponent <= 0.05


def test_cell_center_gradients_exact_for_multilinear():
    g = build_grid(GridSpec(2, 2, 17))
    f = 2.0 * g.coords[:, 0] - 3.0 * g.coords[:, 1]
    grads = cell_center_gradients(f, g)
    np.testing.assert_allclose(grads[:, 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(grads[:, 1], -3.0, atol=1e-12)


def test_epsilon_sweep_zero_data():
    case = get_case("radial_homogeneous", 2, 2, -1.5)
    prob = make_problem(case, 33)
    prob.g = 0.0
    sw = epsilon_sweep(prob, [0.25, 0.125])
    np.testing.assert_allclose(sw.h1_diff, 0.0, atol=1e-12)


def test_epsilon_sweep_decreasing_gaps():
    case = get_case("radial_homogeneous", 2, 2, -1.5)
    sw = epsilon_sweep(make_problem(case, 65), [0.25, 0.125, 0.0625])
    assert np.all(np.diff(sw.h1_diff) < 0)
    assert sw.uniform_factor <= 2.0


def test_epsilon_sweep_schedule_validation():
    case = get_case("radial_homogeneous", 2, 2, -1.5)
    prob = make_problem(case, 33)
    with pytest.raises(ValueError):
        epsilon_sweep(prob, [0.6])
    with pytest.raises(ValueError):
        epsilon_sweep(prob, [0.01])  # below h = 1/16


def test_conormal_regime_guard():
    case = get_case("radial_homogeneous", 2, 2, -0.5)  # a+n = 1.5
    with pytest.raises(ValueError, match="a\\+n"):
        conormal_decay(make_problem(case, 65), [0.25, 0.125])


def test_conormal_radial_decays_counterexample_does_not():
    sched = [0.25, 0.125, 0.0625]
    tr = conormal_decay(make_problem(get_case("radial_homogeneous", 2, 2, -1.5), 129), sched)
    tc = conormal_decay(make_problem(get_case("counterexample_F", 2, 2, -1.5), 129), sched)
    assert tr.fitted_rate >= 0.25
    assert np.all(np.diff(tr.max_grad) < 0)
    assert np.all(tc.max_grad >= 0.5)
    assert tc.fitted_rate < tr.fitted_rate  # strict separation


def test_limiting_bc_quadratic_flux_linear_decay(solve_cache):
    case, res = solve_cache("quadratic_y", 2, 2, -1.5, 129)
    prob = make_problem(case, 129)
    bp = limiting_bc_residual(res.u, prob, res.grid, [0.25, 0.125, 0.0625])
    # flux = 2|y| decays linearly with the band radius
    assert bp.flux_residual[0] / bp.flux_residual[-1] >= 3.5
    assert np.all(np.diff(bp.flux_residual) < 0)


def test_limiting_bc_radial_flux_decreases(solve_cache):
    case, res = solve_cache("radial_homogeneous", 2, 2, -1.5, 129)
    prob = make_problem(case, 129)
    bp = limiting_bc_residual(res.u, prob, res.grid, [0.25, 0.125, 0.0625])
    assert np.all(np.diff(bp.flux_residual) < 0)


def test_limiting_bc_linear_x_exact(solve_cache):
    case, res = solve_cache("linear_x", 3, 2, -1.5, 17)
    prob = make_problem(case, 17)
    bp = limiting_bc_residual(
        res.u, prob, res.grid, [0.25, 0.125],
        psi_grad=lambda x: np.ones(np.atleast_2d(x).shape),
    )
    assert np.max(bp.x_residual) < 1e-8
