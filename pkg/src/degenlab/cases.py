"""Catalog of exact solution/forcing pairs used as solver oracles.

Every case carries the analytic solution, its gradient, the matching data
(f, F, psi, A) and the expected Hoelder exponents. The strong-form identity
-div(w A grad u) = w f + div(w F) is checked numerically away from {y = 0}
by ``forcing_consistency`` before a case is trusted in solver tests.
"""

from dataclasses import dataclass

import numpy as np
import sympy

from .grid import Grid
from .quadrature import WeightSpec, linf_norm, weighted_h1_norm, weighted_lp_norm
from .solver import CoefficientField, identity_coefficients


@dataclass(frozen=True)
class ManufacturedCase:
    """One exact pair, bound to concrete (d, n, a)."""

    name: str
    d: int
    n: int
    a: float
    u: object
    grad_u: object
    f: object                  # callable, scalar or None
    F: object                  # callable or None
    psi: object                # callable of x, or scalar (n = d)
    A: CoefficientField
    expected_holder: float
    expected_grad_holder: float | None
    regime: str                # 'C0alpha' or 'C1alpha'
    description: str = ""

    @property
    def kappa(self):
        return 2.0 - self.a - self.n


def _ynorm(pts, n):
    pts = np.asarray(pts, float)
    d = pts.shape[-1]
    return np.linalg.norm(pts[..., d - n :], axis=-1)


def _regime(a, n):
    return "C1alpha" if 0.0 < a + n < 1.0 else "C0alpha"


def _check_an(a, n):
    if not (0.0 < a + n < 2.0):
        raise ValueError(f"a+n must lie in (0,2), got {a + n}")


def _radial_homogeneous(d, n, a):
    _check_an(a, n)
    kappa = 2.0 - a - n

    def u(pts):
        return _ynorm(pts, n) ** kappa

    def grad_u(pts):
        pts = np.asarray(pts, float)
        r = _ynorm(pts, n)
        out = np.zeros_like(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = kappa * r ** (kappa - 2.0)
        fac = np.where(r > 0, fac, 0.0)
        out[..., d - n :] = fac[..., None] * pts[..., d - n :]
        return out

    return ManufacturedCase(
        name="radial_homogeneous", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=None, F=None, psi=0.0 if n == d else (lambda x: np.zeros(len(x))),
        A=identity_coefficients(d),
        expected_holder=min(1.0, kappa),
        expected_grad_holder=(kappa - 1.0) if kappa > 1.0 else None,
        regime=_regime(a, n),
        description="homogeneous profile |y|^(2-a-n); the least regular solution",
    )


def _anisotropic(d, n, a, matrix=None):
    _check_an(a, n)
    if n != d:
        raise ValueError("anisotropic case requires n = d")
    if matrix is None:
        matrix = np.diag([4.0] + [1.0] * (d - 1))
    A = np.asarray(matrix, float)
    Ainv = np.linalg.inv(A)
    kappa = 2.0 - a - n

    def rho(pts):
        pts = np.asarray(pts, float)
        return np.sqrt(np.einsum("...i,ij,...j->...", pts, Ainv, pts))

    def u(pts):
        return rho(pts) ** kappa

    def grad_u(pts):
        pts = np.asarray(pts, float)
        r = rho(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = kappa * r ** (kappa - 2.0)
        fac = np.where(r > 0, fac, 0.0)
        return fac[..., None] * np.einsum("ij,...j->...i", Ainv, pts)

    return ManufacturedCase(
        name="anisotropic", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=None, F=None, psi=0.0, A=CoefficientField(matrix=A, name="anisotropic"),
        expected_holder=min(1.0, kappa),
        expected_grad_holder=(kappa - 1.0) if kappa > 1.0 else None,
        regime=_regime(a, n),
        description="ellipsoidal homogeneous profile |A^(-1/2)y|^(2-a-n)",
    )


def _linear_x(d, n, a, c=None):
    _check_an(a, n)
    if d <= n:
        raise ValueError("linear_x requires d > n")
    cvec = np.ones(d - n) if c is None else np.atleast_1d(np.asarray(c, float))

    def u(pts):
        pts = np.asarray(pts, float)
        return pts[..., : d - n] @ cvec

    def grad_u(pts):
        pts = np.asarray(pts, float)
        out = np.zeros_like(pts)
        out[..., : d - n] = cvec
        return out

    return ManufacturedCase(
        name="linear_x", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=None, F=None, psi=lambda x: np.asarray(x) @ cvec,
        A=identity_coefficients(d),
        expected_holder=1.0, expected_grad_holder=1.0, regime=_regime(a, n),
        description="solution linear in the weight-neutral x directions",
    )


def _quadratic_y(d, n, a):
    _check_an(a, n)

    def u(pts):
        return _ynorm(pts, n) ** 2

    def grad_u(pts):
        pts = np.asarray(pts, float)
        out = np.zeros_like(pts)
        out[..., d - n :] = 2.0 * pts[..., d - n :]
        return out

    return ManufacturedCase(
        name="quadratic_y", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=-2.0 * (n + a), F=None,
        psi=0.0 if n == d else (lambda x: np.zeros(len(x))),
        A=identity_coefficients(d),
        expected_holder=1.0, expected_grad_holder=1.0, regime=_regime(a, n),
        description="|y|^2 with constant source -2(n+a)",
    )


def _quadratic_x(d, n, a):
    _check_an(a, n)
    if d <= n:
        raise ValueError("quadratic_x requires d > n")

    def u(pts):
        pts = np.asarray(pts, float)
        return pts[..., 0] ** 2

    def grad_u(pts):
        pts = np.asarray(pts, float)
        out = np.zeros_like(pts)
        out[..., 0] = 2.0 * pts[..., 0]
        return out

    return ManufacturedCase(
        name="quadratic_x", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=-2.0, F=None, psi=lambda x: np.asarray(x)[..., 0] ** 2,
        A=identity_coefficients(d),
        expected_holder=1.0, expected_grad_holder=1.0, regime=_regime(a, n),
        description="x1^2 with constant source -2",
    )


def _counterexample_F(d, n, a):
    if d != 2 or n != 2:
        raise ValueError("counterexample_F requires d = n = 2")
    if not (-2.0 < a < -1.0):
        raise ValueError("counterexample_F requires a in (-2,-1)")

    def u(pts):
        pts = np.asarray(pts, float)
        return pts[..., 0] + pts[..., 1]

    def grad_u(pts):
        pts = np.asarray(pts, float)
        return np.ones_like(pts)

    def F(pts):
        pts = np.asarray(pts, float)
        return -np.ones_like(pts)

    return ManufacturedCase(
        name="counterexample_F", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=None, F=F, psi=0.0, A=identity_coefficients(d),
        expected_holder=1.0, expected_grad_holder=None, regime=_regime(a, n),
        description="y1+y2 driven by F=(-1,-1); gradient does not vanish on the thin set",
    )


def _compliant_F(d, n, a):
    """Smooth pair whose field F is tangentially trivial on {y = 0}.

    F = (0_x, y) vanishes against every e_{y_i} at y = 0; the matching
    source comes from the symbolic divergence oracle.
    """
    _check_an(a, n)

    def u(pts):
        return _ynorm(pts, n) ** 2

    def grad_u(pts):
        pts = np.asarray(pts, float)
        out = np.zeros_like(pts)
        out[..., d - n :] = 2.0 * pts[..., d - n :]
        return out

    def F(pts):
        pts = np.asarray(pts, float)
        out = np.zeros_like(pts)
        out[..., d - n :] = pts[..., d - n :]
        return out

    def u_expr(zs):
        return sum(zs[k] ** 2 for k in range(d - n, d))

    def F_expr(zs):
        return [sympy.Integer(0)] * (d - n) + [zs[k] for k in range(d - n, d)]

    f = divergence_forcing(d, n, a, u_expr, F_expr)
    return ManufacturedCase(
        name="compliant_F", d=d, n=n, a=a, u=u, grad_u=grad_u,
        f=f, F=F, psi=0.0 if n == d else (lambda x: np.zeros(len(x))),
        A=identity_coefficients(d),
        expected_holder=1.0, expected_grad_holder=1.0, regime=_regime(a, n),
        description="|y|^2 with F=(0,y) vanishing normally on the thin set",
    )


CATALOG = {
    "radial_homogeneous": (_radial_homogeneous, "any 2<=n<=d, a+n in (0,2)"),
    "anisotropic": (_anisotropic, "n=d, a+n in (0,2)"),
    "linear_x": (_linear_x, "d>n, a+n in (0,2)"),
    "quadratic_y": (_quadratic_y, "any 2<=n<=d, a+n in (0,2)"),
    "quadratic_x": (_quadratic_x, "d>n, a+n in (0,2)"),
    "counterexample_F": (_counterexample_F, "d=n=2, a in (-2,-1)"),
    "compliant_F": (_compliant_F, "any 2<=n<=d, a+n in (0,2)"),
}


def get_case(name, d, n, a, **params) -> ManufacturedCase:
    """Instantiate a catalog case; raises if (d, n, a) violate its validity."""
    if name not in CATALOG:
        raise KeyError(f"unknown case {name!r}; known: {sorted(CATALOG)}")
    factory, _ = CATALOG[name]
    return factory(d, n, a, **params)


def divergence_forcing(d, n, a, u_expr_fn, F_expr_fn=None):
    """Symbolic oracle: the source f matching given u and F under A = I.

    Solves -div(|y|^a grad u) = |y|^a f + div(|y|^a F) for f and returns a
    vectorized numpy callable. Valid away from {y = 0}.
    """
    zs = sympy.symbols(f"z0:{d}", real=True)
    y2 = sum(zs[k] ** 2 for k in range(d - n, d))
    w = y2 ** (sympy.Rational(1, 2) * sympy.nsimplify(a, rational=True))
    u = u_expr_fn(zs)
    G = [w * sympy.diff(u, zk) for zk in zs]
    if F_expr_fn is not None:
        Fe = F_expr_fn(zs)
        G = [G[k] + w * Fe[k] for k in range(d)]
    divG = sum(sympy.diff(G[k], zs[k]) for k in range(d))
    f_expr = sympy.simplify(-divG / w)
    fn = sympy.lambdify(zs, f_expr, modules="numpy")

    def f(pts):
        pts = np.asarray(pts, float)
        vals = fn(*[pts[..., k] for k in range(d)])
        return np.broadcast_to(np.asarray(vals, float), pts.shape[:-1]).copy()

    return f


def case_fields(case: ManufacturedCase, grid: Grid):
    """Sample u, grad u, psi on the grid nodes (gradient 0 on {y=0})."""
    coords = grid.coords
    u = np.asarray(case.u(coords), float)
    gu = np.asarray(case.grad_u(coords), float)
    if callable(case.psi):
        psi = np.asarray(case.psi(coords[:, : grid.d - grid.n]), float)
    else:
        psi = np.full(grid.nnodes, float(case.psi))
    return u, gu, psi


def forcing_consistency(case: ManufacturedCase, sample_count=200, seed=0,
                        fd_step=2e-4, rmin=0.1):
    """Max scaled strong-form residual at random points with |y| >= rmin.

    The flux w (A grad u + F) is differentiated by fourth-order central
    differences of the analytic fields; values above ~1e-6 flag a broken
    catalog entry.
    """
    d, n = case.d, case.n
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < sample_count:
        cand = rng.uniform(-0.85, 0.85, size=(4 * sample_count, d))
        r = _ynorm(cand, n)
        cand = cand[r >= rmin]
        pts.extend(cand[: sample_count - len(pts)])
    pts = np.asarray(pts)
    w = WeightSpec(case.a, n)

    def flux(z):
        from .quadrature import weight_eval

        wv = weight_eval(w, z)
        Amat = case.A.at(z)
        gu = np.asarray(case.grad_u(z), float)
        G = np.einsum("...ij,...j->...i", Amat, gu)
        if case.F is not None:
            G = G + np.asarray(case.F(z), float)
        return wv[..., None] * G

    div = np.zeros(len(pts))
    for k in range(d):
        e = np.zeros(d)
        e[k] = fd_step
        gk = (
            -flux(pts + 2 * e)[:, k]
            + 8 * flux(pts + e)[:, k]
            - 8 * flux(pts - e)[:, k]
            + flux(pts - 2 * e)[:, k]
        ) / (12 * fd_step)
        div += gk

    from .quadrature import weight_eval

    wv = weight_eval(w, pts)
    if case.f is None:
        wf = np.zeros(len(pts))
    elif callable(case.f):
        wf = wv * np.asarray(case.f(pts), float)
    else:
        wf = wv * float(case.f)
    residual = div + wf

    gu = np.asarray(case.grad_u(pts), float)
    Fv = np.asarray(case.F(pts), float) if case.F is not None else np.zeros_like(gu)
    scale = (
        1.0
        + np.max(np.abs(wf))
        + np.max(wv * (np.linalg.norm(gu, axis=-1) + np.linalg.norm(Fv, axis=-1))) / rmin
    )
    return float(np.max(np.abs(residual)) / scale)


def build_case_table():
    """Catalog listing for the CLI: name, validity range, description."""
    probe = {
        "radial_homogeneous": (2, 2, -1.5),
        "anisotropic": (2, 2, -1.5),
        "linear_x": (3, 2, -1.5),
        "quadratic_y": (2, 2, -1.5),
        "quadratic_x": (3, 2, -1.5),
        "counterexample_F": (2, 2, -1.5),
        "compliant_F": (2, 2, -1.5),
    }
    lines = [f"{'case':<18} {'validity':<28} description"]
    for name in sorted(CATALOG):
        factory, validity = CATALOG[name]
        case = factory(*probe[name])
        lines.append(f"{name:<18} {validity:<28} {case.description}")
    return lines


def exact_error(u_h, case: ManufacturedCase, grid: Grid, norm_id="Linf_half",
                weight: WeightSpec = None):
    """Error between a nodal field and the sampled exact solution."""
    diff = np.asarray(u_h, float) - np.asarray(case.u(grid.coords), float)
    if norm_id == "Linf_half":
        return linf_norm(grid, diff, region=0.5).value
    if weight is None:
        weight = WeightSpec(case.a, case.n)
    if norm_id == "L2a":
        return weighted_lp_norm(grid, diff, 2, weight).value
    if norm_id == "H1a":
        return weighted_h1_norm(grid, diff, weight).value
    raise ValueError(f"unknown norm id {norm_id!r}")
