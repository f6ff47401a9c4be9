"""Graph parametrizations, the straightening change of variables, admissible
distance weights, and curved boundary-condition residuals.

Curved problems are never meshed: the diffeomorphism (x, y) -> (x, y + phi(x))
straightens the graph manifold onto {y = 0}, the data are pushed forward, the
straight problem is solved on the tensor grid, and fields are pulled back by
interpolation. The Jacobian is block unitriangular, so its determinant is
exactly one and the inverse is closed-form.
"""

from dataclasses import dataclass
from functools import partial

import numpy as np

from .grid import Grid, interpolate_nodal
from .quadrature import QuadratureRule, WeightSpec
from .rates import cell_center_gradients
from .solver import CoefficientField, ProblemSpec


@dataclass(frozen=True)
class Parametrization:
    """Graph map phi: R^(d-n) -> R^n with phi(0) = 0, plus its Jacobian."""

    name: str
    d: int
    n: int
    phi: object          # (..., d-n) -> (..., n)
    jac: object          # (..., d-n) -> (..., n, d-n)
    holder_class: str = "C1"

    def __post_init__(self):
        if not self.d > self.n:
            raise ValueError("graph parametrizations require d > n")
        z0 = np.zeros((1, self.d - self.n))
        if np.max(np.abs(self.phi(z0))) > 1e-12:
            raise ValueError("parametrization must satisfy phi(0) = 0")


def _phi_zero(x, n):
    x = np.atleast_2d(np.asarray(x, float))
    return np.zeros(x.shape[:-1] + (n,))


def _jac_zero(x, n):
    x = np.atleast_2d(np.asarray(x, float))
    m = x.shape[-1]
    return np.zeros(x.shape[:-1] + (n, m))


def make_parametrization(name, d, n, amplitude=0.2, frequency=1.0, coeff=0.2):
    """Small registry: 'zero', 'sine' (amp*sin(freq*x1)) and 'poly' (c*x1^2)."""
    m = d - n
    if name == "zero":
        return Parametrization("zero", d, n, partial(_phi_zero, n=n), partial(_jac_zero, n=n))
    if name == "sine":

        def phi(x):
            x = np.atleast_2d(np.asarray(x, float))
            out = np.zeros(x.shape[:-1] + (n,))
            out[..., 0] = amplitude * np.sin(frequency * x[..., 0])
            return out

        def jac(x):
            x = np.atleast_2d(np.asarray(x, float))
            out = np.zeros(x.shape[:-1] + (n, m))
            out[..., 0, 0] = amplitude * frequency * np.cos(frequency * x[..., 0])
            return out

        return Parametrization("sine", d, n, phi, jac, holder_class="C1a")
    if name == "poly":

        def phi(x):
            x = np.atleast_2d(np.asarray(x, float))
            out = np.zeros(x.shape[:-1] + (n,))
            out[..., 0] = coeff * x[..., 0] ** 2
            return out

        def jac(x):
            x = np.atleast_2d(np.asarray(x, float))
            out = np.zeros(x.shape[:-1] + (n, m))
            out[..., 0, 0] = 2.0 * coeff * x[..., 0]
            return out

        return Parametrization("poly", d, n, phi, jac, holder_class="C1a")
    raise KeyError(f"unknown parametrization {name!r}; known: zero, sine, poly")


@dataclass(frozen=True)
class Straightening:
    """The shear (x, y) -> (x, y + phi(x)) and its exact inverse."""

    param: Parametrization

    @property
    def d(self):
        return self.param.d

    @property
    def n(self):
        return self.param.n

    def forward(self, pts):
        pts = np.asarray(pts, float)
        m = self.d - self.n
        out = pts.copy()
        out[..., m:] += self.param.phi(pts[..., :m])
        return out

    def inverse(self, pts):
        pts = np.asarray(pts, float)
        m = self.d - self.n
        out = pts.copy()
        out[..., m:] -= self.param.phi(pts[..., :m])
        return out

    def jacobian(self, x):
        """Block lower-unitriangular J at given x values: (..., d, d)."""
        x = np.atleast_2d(np.asarray(x, float))
        m = self.d - self.n
        J = np.zeros(x.shape[:-1] + (self.d, self.d))
        J[..., range(self.d), range(self.d)] = 1.0
        J[..., m:, :m] = self.param.jac(x)
        return J

    def jacobian_inverse(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        m = self.d - self.n
        J = np.zeros(x.shape[:-1] + (self.d, self.d))
        J[..., range(self.d), range(self.d)] = 1.0
        J[..., m:, :m] = -self.param.jac(x)
        return J


@dataclass
class CurvedProblem:
    """Weighted problem whose singular set is the graph of phi.

    ``delta`` is the admissible weight in physical coordinates; None means
    delta = |y - phi(x)| exactly, whose straightened ratio is identically 1.
    Outer Dirichlet data is prescribed in straightened coordinates (the solve
    happens on the straight tensor grid).
    """

    grid: object  # GridSpec of the straight solve
    a: float
    param: Parametrization
    A: CoefficientField
    f: object = None
    F: object = None
    psi: object = 0.0
    g_straight: object = 0.0
    delta: object = None
    eps: float = 0.0
    quadrature: QuadratureRule = None
    cg_tol: float = 1e-10
    cg_maxit: int = 20000


@dataclass
class PushResult:
    problem: ProblemSpec
    lam: float
    Lam: float
    delta_tilde: object
    straightening: Straightening


def push_problem(curved: CurvedProblem) -> PushResult:
    """Transform a curved problem to the straight model grid.

    Coefficients become Jinv (A o Phi) Jinv^T, data are composed with Phi and
    the weight picks up the bounded factor (delta o Phi / |y|)^a. Loss of
    ellipticity at any sample aborts.
    """
    d, n = curved.param.d, curved.param.n
    if curved.grid.d != d or curved.grid.n != n:
        raise ValueError("grid and parametrization dimensions disagree")
    st = Straightening(curved.param)
    m = d - n

    base_A = curved.A

    def A_bar(pts):
        pts = np.asarray(pts, float)
        x = pts[..., :m]
        Jinv = st.jacobian_inverse(x)
        Ac = base_A.at(st.forward(pts))
        return np.einsum("...ij,...jk,...lk->...il", Jinv, Ac, Jinv)

    if curved.delta is None:
        weight = WeightSpec(curved.a, n)
        delta_tilde = None
    else:
        delta_fn = curved.delta

        def delta_tilde(pts):
            pts = np.asarray(pts, float)
            y = pts[..., m:]
            r = np.linalg.norm(y, axis=-1)
            return np.asarray(delta_fn(st.forward(pts)), float) / r

        weight = WeightSpec(curved.a, n, mode="composed", delta_tilde=delta_tilde)

    f_bar = None
    if curved.f is not None:
        fc = curved.f
        f_bar = (lambda pts: np.asarray(fc(st.forward(pts)), float)) if callable(fc) else fc

    F_bar = None
    if curved.F is not None:
        Fc = curved.F

        def F_bar(pts):
            pts = np.asarray(pts, float)
            Jinv = st.jacobian_inverse(pts[..., :m])
            return np.einsum("...ij,...j->...i", Jinv, np.asarray(Fc(st.forward(pts)), float))

    problem = ProblemSpec(
        grid=curved.grid,
        weight=weight,
        A=CoefficientField(func=A_bar, name="straightened"),
        f=f_bar,
        F=F_bar,
        psi=curved.psi,
        g=curved.g_straight,
        eps=curved.eps,
        quadrature=curved.quadrature if curved.quadrature is not None else QuadratureRule(),
        cg_tol=curved.cg_tol,
        cg_maxit=curved.cg_maxit,
    )
    rng = np.random.default_rng(0)
    probe = rng.uniform(-0.9, 0.9, size=(512, d))
    probe = probe[np.linalg.norm(probe[:, m:], axis=1) > 1e-3]
    lam, Lam = problem.A.ellipticity_bounds(probe)
    return PushResult(problem=problem, lam=lam, Lam=Lam, delta_tilde=delta_tilde,
                      straightening=st)


@dataclass
class AdmissibleWeight:
    c0: float
    c1: float
    holder_estimate: float
    alpha: float


def gamma_distance(pts, param: Parametrization, n_gamma=10000, extent=1.2):
    """Brute-force distance to the graph over a fine parameter sampling."""
    pts = np.atleast_2d(np.asarray(pts, float))
    m = param.d - param.n
    if m != 1:
        raise NotImplementedError("distance sampling implemented for d - n = 1")
    t = np.linspace(-extent, extent, n_gamma)[:, None]
    gamma = np.concatenate([t, param.phi(t)], axis=1)
    out = np.empty(len(pts))
    chunk = 256
    for s in range(0, len(pts), chunk):
        block = pts[s : s + chunk]
        d2 = np.sum((block[:, None, :] - gamma[None, :, :]) ** 2, axis=2)
        out[s : s + chunk] = np.sqrt(np.min(d2, axis=1))
    return out


def admissibility_check(delta, param: Parametrization, alpha=0.0, n_gamma=10000,
                        n_samples=1500, seed=0) -> AdmissibleWeight:
    """Estimate c0 <= delta/dist <= c1 and the Hoelder quotient of the ratio.

    Sampled estimates only; c0 <= 0 signals a non-admissible weight and is
    rejected.
    """
    d, n = param.d, param.n
    m = d - n
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.9, 0.9, size=(n_samples, d))
    dist = gamma_distance(pts, param, n_gamma=n_gamma)
    keep = dist > 1e-6
    ratio = np.asarray(delta(pts[keep]), float) / dist[keep]
    c0, c1 = float(np.min(ratio)), float(np.max(ratio))
    if c0 <= 0:
        raise ValueError(f"weight is not admissible: sampled delta/dist minimum {c0:g} <= 0")

    st = Straightening(param)

    def dtilde(p):
        y = p[..., m:]
        return np.asarray(delta(st.forward(p)), float) / np.linalg.norm(y, axis=-1)

    zp = rng.uniform(-0.9, 0.9, size=(n_samples, d))
    zp = zp[np.linalg.norm(zp[:, m:], axis=1) > 1e-3]
    zq = zp[rng.permutation(len(zp))]
    dv = np.abs(dtilde(zp) - dtilde(zq))
    sep = np.linalg.norm(zp - zq, axis=1)
    ok = sep > 1e-9
    quot = dv[ok] / sep[ok] ** alpha if alpha > 0 else dv[ok]
    return AdmissibleWeight(c0=c0, c1=c1, holder_estimate=float(np.max(quot)), alpha=alpha)


def pullback_field(values, param: Parametrization, straight_grid: Grid,
                   curved_grid: Grid):
    """Straight nodal field composed with the inverse shear, on curved nodes.

    Returns (values, in_range); nodes whose preimages leave the straight grid
    are flagged and set to zero.
    """
    st = Straightening(param)
    pre = st.inverse(curved_grid.coords)
    return interpolate_nodal(straight_grid, values, pre)


@dataclass
class CurvedBCProfile:
    rho: np.ndarray
    normal_residual: np.ndarray
    tangential_residual: np.ndarray | None


def _frames(param: Parametrization, x):
    """Orthonormal tangent and normal frames of the graph at given x.

    Tangents span {(xi, J_phi xi)}; normals complete them by Gram-Schmidt
    seeded with the y coordinate directions.
    """
    d, n = param.d, param.n
    m = d - n
    x = np.atleast_2d(np.asarray(x, float))
    J = param.jac(x)
    k = x.shape[0]
    tangents = np.zeros((k, m, d))
    for j in range(m):
        v = np.zeros((k, d))
        v[:, j] = 1.0
        v[:, m:] = J[:, :, j]
        tangents[:, j, :] = v / np.linalg.norm(v, axis=1, keepdims=True)
    # orthonormalize the tangents among themselves (already near-orthogonal
    # for graph maps, but keep it exact)
    for j in range(m):
        v = tangents[:, j, :].copy()
        for jj in range(j):
            v -= np.einsum("ki,ki->k", v, tangents[:, jj, :])[:, None] * tangents[:, jj, :]
        tangents[:, j, :] = v / np.linalg.norm(v, axis=1, keepdims=True)
    normals = np.zeros((k, n, d))
    for i in range(n):
        v = np.zeros((k, d))
        v[:, m + i] = 1.0
        for j in range(m):
            v -= np.einsum("ki,ki->k", v, tangents[:, j, :])[:, None] * tangents[:, j, :]
        for ii in range(i):
            v -= np.einsum("ki,ki->k", v, normals[:, ii, :])[:, None] * normals[:, ii, :]
        normals[:, i, :] = v / np.linalg.norm(v, axis=1, keepdims=True)
    return tangents, normals


def curved_bc_residual(values, curved_grid: Grid, A: CoefficientField, F,
                       param: Parametrization, band_radii, psi_grad=None,
                       region_R=0.7) -> CurvedBCProfile:
    """Flux and tangential-gradient residuals over shrinking graph bands.

    Bands are measured by the shear distance |y - phi(x)|; frames are taken
    at the graph point with the same x. For phi = 0 this reduces to the flat
    thin-set residuals.
    """
    d, n = param.d, param.n
    m = d - n
    grads = cell_center_gradients(values, curved_grid)
    centers = curved_grid.cell_center
    s = np.linalg.norm(centers[:, m:] - param.phi(centers[:, :m]), axis=1)
    inside = np.linalg.norm(centers, axis=1) <= region_R
    tangents, normals = _frames(param, centers[:, :m])
    Av = A.at(centers)
    flux = np.einsum("cij,cj->ci", Av, grads)
    if F is not None:
        flux = flux + np.asarray(F(centers), float)
    res_n = np.max(np.abs(np.einsum("cnd,cd->cn", normals, flux)), axis=1)
    gx = grads.copy()
    if psi_grad is not None:
        gx[:, :m] -= np.asarray(psi_grad(centers[:, :m]), float)
    res_t = np.max(np.abs(np.einsum("cmd,cd->cm", tangents, gx)), axis=1)
    band_radii = np.asarray(sorted(band_radii, reverse=True), float)
    out_n = np.empty(len(band_radii))
    out_t = np.empty(len(band_radii))
    for i, rho in enumerate(band_radii):
        sel = inside & (s <= rho)
        if not np.any(sel):
            raise ValueError(f"empty band at rho={rho:g}")
        out_n[i] = float(np.max(res_n[sel]))
        out_t[i] = float(np.max(res_t[sel]))
    return CurvedBCProfile(rho=band_radii, normal_residual=out_n, tangential_residual=out_t)
