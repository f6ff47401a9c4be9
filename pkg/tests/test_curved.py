import numpy as np
import pytest

from degenlab.curved import (
    CurvedProblem,
    Straightening,
    admissibility_check,
    curved_bc_residual,
    gamma_distance,
    make_parametrization,
    pullback_field,
    push_problem,
)
from degenlab.grid import GridSpec, build_grid
from degenlab.solver import CoefficientField, identity_coefficients, solve_problem

D, N = 3, 2


def sine_param(amp=0.2, freq=1.0):
    return make_parametrization("sine", D, N, amplitude=amp, frequency=freq)


def shear_metric(param):
    st = Straightening(param)

    def A(pts):
        pts = np.asarray(pts, float)
        J = st.jacobian(pts[..., :1])
        return np.einsum("...ij,...kj->...ik", J, J)

    return CoefficientField(func=A, name="shear-metric")


def test_parametrization_registry_and_guards():
    for name in ("zero", "sine", "poly"):
        p = make_parametrization(name, D, N)
        assert np.max(np.abs(p.phi(np.zeros((1, 1))))) < 1e-12
    with pytest.raises(KeyError):
        make_parametrization("spline", D, N)
    with pytest.raises(ValueError):
        make_parametrization("zero", 2, 2)  # needs d > n


def test_straightening_roundtrip_and_determinant(rng):
    st = Straightening(sine_param())
    pts = rng.uniform(-1, 1, size=(1000, D))
    np.testing.assert_allclose(st.inverse(st.forward(pts)), pts, atol=1e-12)
    np.testing.assert_allclose(st.forward(st.inverse(pts)), pts, atol=1e-12)
    J = st.jacobian(pts[:, :1])
    np.testing.assert_allclose(np.linalg.det(J), 1.0, atol=1e-14)
    Ji = st.jacobian_inverse(pts[:, :1])
    np.testing.assert_allclose(np.einsum("nij,njk->nik", J, Ji),
                               np.broadcast_to(np.eye(D), (len(pts), D, D)), atol=1e-14)


def test_push_identity_for_flat_parametrization(rng):
    param = make_parametrization("zero", D, N)
    f = lambda p: np.cos(p[..., 0]) + p[..., 2]
    F = lambda p: np.stack([p[..., 0], p[..., 1], np.sin(p[..., 2])], axis=-1)
    cp = CurvedProblem(
        grid=GridSpec(D, N, 9), a=-1.5, param=param, A=identity_coefficients(D),
        f=f, F=F, psi=lambda x: np.zeros(len(np.atleast_2d(x))), g_straight=0.0,
        delta=None,
    )
    push = push_problem(cp)
    pts = rng.uniform(-0.9, 0.9, size=(50, D))
    np.testing.assert_allclose(push.problem.A.at(pts),
                               np.broadcast_to(np.eye(D), (50, D, D)), atol=1e-14)
    np.testing.assert_allclose(push.problem.f(pts), f(pts), atol=1e-14)
    np.testing.assert_allclose(push.problem.F(pts), F(pts), atol=1e-14)
    assert push.problem.weight.mode == "straight"


def test_push_shear_distance_ratio_is_one(rng):
    param = sine_param()
    delta = lambda z: np.linalg.norm(
        np.asarray(z)[..., 1:] - param.phi(np.asarray(z)[..., :1]), axis=-1
    )
    cp = CurvedProblem(grid=GridSpec(D, N, 9), a=-1.75, param=param,
                       A=identity_coefficients(D), delta=delta,
                       psi=lambda x: np.zeros(len(np.atleast_2d(x))))
    push = push_problem(cp)
    pts = rng.uniform(-0.8, 0.8, size=(100, D))
    pts = pts[np.linalg.norm(pts[:, 1:], axis=1) > 1e-2]
    np.testing.assert_allclose(push.delta_tilde(pts), 1.0, atol=1e-12)


def test_pushed_coefficients_stay_elliptic():
    param = sine_param()
    cp = CurvedProblem(grid=GridSpec(D, N, 9), a=-1.75, param=param,
                       A=identity_coefficients(D), delta=None,
                       psi=lambda x: np.zeros(len(np.atleast_2d(x))))
    push = push_problem(cp)
    assert push.lam > 0
    # pointwise eigensolve oracle on the graph itself
    x = np.linspace(-0.9, 0.9, 7)[:, None]
    pts = np.concatenate([x, np.full((7, 1), 1e-6), np.zeros((7, 1))], axis=1)
    eigs = np.linalg.eigvalsh(push.problem.A.at(pts))
    assert np.min(eigs) > 0


def test_push_rejects_dimension_mismatch():
    param = sine_param()
    cp = CurvedProblem(grid=GridSpec(2, 2, 9), a=-1.5, param=param,
                       A=identity_coefficients(2), delta=None)
    with pytest.raises(ValueError):
        push_problem(cp)


def test_admissibility_estimates():
    param = sine_param()
    adm = admissibility_check(lambda z: gamma_distance(z, param), param, n_samples=300)
    assert 0.95 <= adm.c0 <= adm.c1 <= 1.05
    adm2 = admissibility_check(lambda z: 2.0 * gamma_distance(z, param), param,
                               n_samples=300)
    assert 1.9 <= adm2.c0 <= adm2.c1 <= 2.1
    shear = lambda z: np.linalg.norm(
        np.asarray(z)[..., 1:] - param.phi(np.asarray(z)[..., :1]), axis=-1
    )
    adm3 = admissibility_check(shear, param, n_samples=300)
    assert 0.9 <= adm3.c0 <= adm3.c1 <= 1.1
    assert np.isfinite(adm3.holder_estimate)


def test_admissibility_rejects_sign_changing_weight():
    param = sine_param()
    with pytest.raises(ValueError, match="admissible"):
        admissibility_check(lambda z: np.asarray(z)[:, 1], param, n_samples=300)


def test_pullback_identity_and_composition(rng):
    zero = make_parametrization("zero", D, N)
    g = build_grid(GridSpec(D, N, 17))
    field = rng.normal(size=g.nnodes)
    vals, ok = pullback_field(field, zero, g, g)
    assert np.all(ok)
    np.testing.assert_allclose(vals, field, atol=1e-12)

    param = sine_param()
    sfield = np.linalg.norm(g.coords[:, 1:], axis=1) ** 1.5
    vals2, ok2 = pullback_field(sfield, param, g, g)
    expect = np.linalg.norm(g.coords[:, 1:] - param.phi(g.coords[:, :1]), axis=1) ** 1.5
    sel = ok2
    assert np.max(np.abs(vals2[sel] - expect[sel])) < 5 * g.h**1.5
    assert np.any(~ok2)  # shifted preimages leave the box near the y boundary

    cfield = np.full(g.nnodes, 4.2)
    vals3, ok3 = pullback_field(cfield, param, g, g)
    np.testing.assert_allclose(vals3[ok3], 4.2, atol=1e-12)


def test_curved_bc_flat_reduction_matches_limiting_residual(solve_cache):
    # phi = 0 reduces the curved residual to the flat thin-set residual
    from degenlab.rates import limiting_bc_residual
    from conftest import make_problem
    from degenlab.cases import get_case

    case, res = solve_cache("quadratic_y", 3, 2, -1.75, 17)
    prob = make_problem(case, 17)
    zero = make_parametrization("zero", D, N)
    flat = limiting_bc_residual(res.u, prob, res.grid, [0.4, 0.2], region_R=0.7)
    curved = curved_bc_residual(res.u, res.grid, case.A, None, zero, [0.4, 0.2])
    np.testing.assert_allclose(curved.normal_residual, flat.flux_residual, rtol=1e-10)


def test_curved_equivalence_small_grid():
    # straight solve + pullback matches the composed exact solution
    a = -1.75
    kappa = 2.0 - a - N
    param = sine_param()
    cp = CurvedProblem(
        grid=GridSpec(D, N, 33), a=a, param=param, A=shear_metric(param),
        psi=lambda x: np.zeros(len(np.atleast_2d(x))),
        g_straight=lambda z: np.linalg.norm(np.asarray(z)[..., 1:], axis=-1) ** kappa,
        delta=None,
    )
    push = push_problem(cp)
    res = solve_problem(push.problem)
    cg = build_grid(GridSpec(D, N, 33))
    vals, ok = pullback_field(res.u, param, res.grid, cg)
    exact = np.linalg.norm(cg.coords[:, 1:] - param.phi(cg.coords[:, :1]), axis=1) ** kappa
    sel = ok & (np.linalg.norm(cg.coords, axis=1) <= 0.7)
    rel = np.linalg.norm((vals - exact)[sel]) / np.linalg.norm(exact[sel])
    assert rel <= 0.10
    prof = curved_bc_residual(vals, cg, shear_metric(param), None, param,
                              [0.4, 0.2, 0.1])
    assert np.all(np.diff(prof.normal_residual) < 0)
