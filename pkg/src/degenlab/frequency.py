"""Frequency quantities over ellipsoids, growth validation and the
functional-inequality battery.

Surface integrals over ellipsoid boundaries are replaced by co-area shell
averages of thickness h: (1/D) * integral over {r-D/2 < rho_A < r+D/2} of
w u^2 |grad rho_A|, with rho_A(y) = sqrt(A^{-1}y.y). Volume integrals over
ellipsoids use per-cell membership fractions. Everything reduces in fixed
cell order.
"""

from dataclasses import dataclass

import numpy as np

from .grid import (
    NODE_HOLE,
    EllipsoidRegion,
    Grid,
    ball_cell_fractions,
    ellipsoid_membership,
)
from .quadrature import (
    GridQuadrature,
    QuadratureRule,
    WeightSpec,
    sobolev_exponent,
    weighted_lp_norm,
)
from .solver import CoefficientField, ProblemSpec, solve_problem


@dataclass
class FrequencyProfile:
    """Scaled energy E, boundary mass H and their ratio N over radii."""

    A: np.ndarray
    a: float
    radii: np.ndarray
    E: np.ndarray
    H: np.ndarray
    N: np.ndarray
    E_raw: np.ndarray
    H_raw: np.ndarray


def _require_nd(grid):
    if grid.n != grid.d:
        raise ValueError("frequency quantities require n = d")


def _check_radii_inside(grid, A, radii, delta):
    lo, hi = grid.spec.bounds
    ext = np.sqrt(np.max(np.linalg.eigvalsh(np.asarray(A, float))))
    rmax = (np.max(radii) + 0.5 * delta) * ext
    if rmax > min(-lo, hi):
        raise ValueError(
            f"ellipsoid of radius {np.max(radii):g} (extent {rmax:g}) leaves the grid"
        )


def _point_cloud(quad: GridQuadrature, values, A, active=None):
    """Per-quadrature-point shell data: rho_A and w*u^2*qw*h^d.

    The boundary mass uses the co-area measure of rho_A (plain shell volume
    averages). With that normalization the derivative identity and the
    trace-inequality equality case hold exactly for anisotropic A; for
    A = I it coincides with the ordinary surface integral.
    """
    grid = quad.grid
    Ainv = np.linalg.inv(np.asarray(A, float))
    hd = grid.h**grid.d
    rhos, contribs = [], []
    for grp, idx, pts, wvals in quad.iter_chunks(active=active):
        y = pts  # n = d: every coordinate is a y coordinate
        rho = np.sqrt(np.einsum("cpi,ij,cpj->cp", y, Ainv, y))
        u = quad.field_values(values, grp, idx)
        c = hd * grp.ref_wts[None, :] * wvals * u * u
        rhos.append(rho.reshape(-1))
        contribs.append(c.reshape(-1))
    return np.concatenate(rhos), np.concatenate(contribs)


def _shell_sums(rho, contrib, radii, delta):
    """Triangular-kernel shell averages of half-width delta at each radius.

    Equivalent to (1/delta) * integral over the moving shell, with the hard
    window replaced by a hat so that finite differences in r are stable.
    """
    order = np.argsort(rho, kind="stable")
    rs = rho[order]
    c = contrib[order]
    cs = np.concatenate([[0.0], np.cumsum(c)])
    crs = np.concatenate([[0.0], np.cumsum(c * rs)])
    out = np.empty(len(radii))
    for i, r in enumerate(radii):
        lo = np.searchsorted(rs, r - delta, side="left")
        mid = np.searchsorted(rs, r, side="right")
        hi = np.searchsorted(rs, r + delta, side="right")
        if hi <= lo:
            raise ValueError(f"empty quadrature shell at radius {r:g}")
        # left half: weights (1 - (r - rho)/delta), right half mirrored
        left = (cs[mid] - cs[lo]) * (1.0 - r / delta) + (crs[mid] - crs[lo]) / delta
        right = (cs[hi] - cs[mid]) * (1.0 + r / delta) - (crs[hi] - crs[mid]) / delta
        out[i] = (left + right) / delta
    return out


def _energy_density(quad: GridQuadrature, values, Afield: CoefficientField, active=None):
    """Per-cell integrals of w A grad(u).grad(u)."""
    grid = quad.grid
    out = np.zeros(grid.ncells)
    hd = grid.h**grid.d
    for grp, idx, pts, wvals in quad.iter_chunks(active=active):
        gv = quad.field_gradients(values, grp, idx)
        Av = Afield.at(pts)
        dens = np.einsum("cpi,cpij,cpj->cp", gv, Av, gv)
        out[idx] = hd * ((wvals * dens) @ grp.ref_wts)
    return out


def frequency_profile(values, grid: Grid, weight: WeightSpec, A, radii,
                      rule: QuadratureRule = None, active=None) -> FrequencyProfile:
    """E, H, N over ellipsoids Omega_r = {A^{-1}y.y < r^2} (n = d).

    E(r) = r^-(n+a-2) * fraction-weighted energy over Omega_r;
    H(r) = r^-(n+a-1) * co-area shell average of w u^2 at rho_A = r.
    """
    _require_nd(grid)
    radii = np.asarray(radii, float)
    A = np.asarray(A, float)
    delta = grid.h
    _check_radii_inside(grid, A, radii, delta)
    quad = GridQuadrature(grid, weight, rule)
    Af = CoefficientField(matrix=A)
    cell_e = _energy_density(quad, values, Af, active=active)
    rho, contrib = _point_cloud(quad, values, A, active=active)
    H_raw = _shell_sums(rho, contrib, radii, delta)
    E_raw = np.empty(len(radii))
    for i, r in enumerate(radii):
        frac = ellipsoid_membership(grid, EllipsoidRegion(A=A, r=r))
        E_raw[i] = float(cell_e @ frac)
    n, a = grid.n, weight.a
    E = E_raw / radii ** (n + a - 2.0)
    H = H_raw / radii ** (n + a - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        N = np.where(H > 0, E / H, 0.0)
    return FrequencyProfile(A=A, a=a, radii=radii, E=E, H=H, N=N, E_raw=E_raw, H_raw=H_raw)


@dataclass
class IdentityCheck:
    passed: bool
    max_rel_error: float
    scale: float


def check_derivative_identity(profile: FrequencyProfile, tol=0.05) -> IdentityCheck:
    """Central-difference dH/dr against 2E/r at interior radii."""
    r = profile.radii
    if len(r) < 5:
        raise ValueError("need at least 5 radii")
    dr = np.diff(r)
    if not np.allclose(dr, dr[0], rtol=1e-8):
        raise ValueError("radii must be uniformly spaced")
    dH = (profile.H[2:] - profile.H[:-2]) / (r[2:] - r[:-2])
    rhs = 2.0 * profile.E[1:-1] / r[1:-1]
    span = float(r[-1] - r[0])
    scale = max(float(np.max(np.abs(rhs))), float(np.max(profile.H)) / span, 1e-300)
    err = float(np.max(np.abs(dH - rhs))) / scale
    return IdentityCheck(passed=err <= tol, max_rel_error=err, scale=scale)


@dataclass
class SpectralCheck:
    margin: float
    scale: float
    E_raw: float
    H_raw: float


def spectral_trace_check(values, grid: Grid, weight: WeightSpec, A, r, mask=None,
                         rule: QuadratureRule = None) -> SpectralCheck:
    """Scaled trace-inequality margin E(v,r) - (2-a-n) H(v,r) at one radius.

    In the dilation-invariant scaling the energy dominates (2-a-n) times the
    boundary mass for every admissible field; at r = 1 this is the raw-form
    statement. The test field must vanish on the constrained tube (or
    thin-set) nodes. Equality is approached exactly when the field is
    proportional to the ellipsoidal homogeneous profile.
    """
    _require_nd(grid)
    values = np.asarray(values, float)
    if mask is not None:
        con = mask.hole_nodes if mask.eps > 0 else mask.sigma0_nodes
        if len(con) and np.max(np.abs(values[con])) > 1e-12 * (1.0 + np.max(np.abs(values))):
            raise ValueError("test field does not vanish on the constrained tube nodes")
    A = np.asarray(A, float)
    delta = grid.h
    _check_radii_inside(grid, A, [r], delta)
    quad = GridQuadrature(grid, weight, rule)
    cell_e = _energy_density(quad, values, CoefficientField(matrix=A))
    frac = ellipsoid_membership(grid, EllipsoidRegion(A=A, r=r))
    E_raw = float(cell_e @ frac)
    rho, contrib = _point_cloud(quad, values, A)
    H_raw = float(_shell_sums(rho, contrib, [r], delta)[0])
    n, a = grid.n, weight.a
    E_sc = E_raw / r ** (n + a - 2.0)
    H_sc = H_raw / r ** (n + a - 1.0)
    kappa = 2.0 - a - n
    margin = E_sc - kappa * H_sc
    scale = E_sc + kappa * H_sc
    return SpectralCheck(margin=margin, scale=scale, E_raw=E_raw, H_raw=H_raw)


@dataclass
class GrowthRecord:
    r0: float
    radii: np.ndarray
    H: np.ndarray
    bound: np.ndarray
    passed: bool
    degenerate: bool


def growth_validator(problem: ProblemSpec, radii, tol=0.05) -> GrowthRecord:
    """Solve the homogeneous problem and test the minimal-growth bound.

    Checks H(u, r) >= H(u, r0) (r/r0)^(2(2-a-n)) (1 - tol), the Gronwall
    consequence of the trace inequality that forbids sub-homogeneous growth
    of nontrivial solutions. Zero data yields the degenerate record.
    """
    if problem.f is not None or problem.F is not None:
        raise ValueError("growth validation requires homogeneous data (f = F = None)")
    result = solve_problem(problem)
    grid = result.grid
    weight = problem.weight
    A = problem.A.matrix
    if A is None:
        raise ValueError("growth validation requires a constant coefficient matrix")
    radii = np.asarray(radii, float)
    prof = frequency_profile(result.u, grid, weight, A, radii)
    H0 = prof.H[0]
    kappa = 2.0 - weight.a - grid.n
    bound = H0 * (radii / radii[0]) ** (2.0 * kappa)
    hscale = float(np.max(prof.H))
    if H0 <= 1e-14 * (1.0 + hscale):
        return GrowthRecord(r0=radii[0], radii=radii, H=prof.H, bound=bound,
                            passed=True, degenerate=True)
    passed = bool(np.all(prof.H >= bound * (1.0 - tol)))
    return GrowthRecord(r0=radii[0], radii=radii, H=prof.H, bound=bound,
                        passed=passed, degenerate=False)


@dataclass
class InequalityReport:
    inequality: str
    field_id: str
    lhs: float
    rhs: float

    @property
    def ratio(self):
        return self.lhs / self.rhs


def inequality_battery(fields, grid: Grid, weight: WeightSpec, mask=None, R=0.8,
                       sobolev_p=4.0, rule: QuadratureRule = None):
    """Hardy / Poincare / trace / Sobolev ratios LHS/RHS over test fields.

    ``fields`` is a list of (field_id, nodal values). Fields must vanish on
    the constrained tube nodes; identically zero fields are skipped. For
    d = 2 the embedding exponent is the configurable ``sobolev_p``.
    """
    quad = GridQuadrature(grid, weight, rule)
    frac = ball_cell_fractions(grid, R)
    pstar = sobolev_exponent(grid.d)
    if pstar is None:
        pstar = float(sobolev_p)
    hd = grid.h**grid.d
    d, n = grid.d, grid.n
    reports = []
    for fid, vals in fields:
        vals = np.asarray(vals, float)
        vmax = float(np.max(np.abs(vals)))
        if vmax == 0.0:
            continue
        if mask is not None:
            con = mask.hole_nodes if mask.eps > 0 else mask.sigma0_nodes
            if len(con) and np.max(np.abs(vals[con])) > 1e-12 * vmax:
                raise ValueError(f"field {fid!r} does not vanish on the constrained tube")
        grad2 = 0.0
        hardy = 0.0
        mass = 0.0
        sob = 0.0
        rho_all, trace_c = [], []
        for grp, idx, pts, wvals in quad.iter_chunks():
            u = quad.field_values(vals, grp, idx)
            gv = quad.field_gradients(vals, grp, idx)
            yy = pts[..., d - n :]
            y2 = np.sum(yy * yy, axis=2)
            fr = frac[idx]
            wq = grp.ref_wts
            grad2 += float((hd * (wvals * np.sum(gv * gv, axis=2)) @ wq) @ fr)
            mass += float((hd * (wvals * u * u) @ wq) @ fr)
            hardy += float((hd * (wvals * u * u / y2) @ wq) @ fr)
            sob += float((hd * (wvals * np.abs(u) ** pstar) @ wq) @ fr)
            rho = np.linalg.norm(pts, axis=2)
            rho_all.append(rho.reshape(-1))
            trace_c.append((hd * wq[None, :] * wvals * u * u).reshape(-1))
        trace = float(
            _shell_sums(np.concatenate(rho_all), np.concatenate(trace_c), [R], grid.h)[0]
        )
        reports.append(InequalityReport("hardy", fid, hardy, grad2))
        reports.append(InequalityReport("poincare", fid, mass, grad2))
        reports.append(InequalityReport("trace_poincare", fid, trace, grad2))
        reports.append(InequalityReport("sobolev", fid, sob ** (2.0 / pstar), grad2))
    return reports


def caccioppoli_ratio(values, grid: Grid, weight: WeightSpec, R1, R2, f=None, F=None,
                      p=2.0, rule: QuadratureRule = None):
    """Energy over B_R1 against the zero-order bracket over B_R2.

    Bracket: (R2-R1)^-2 mass + ||f||_{p,a} ||u||_{p',a} + field term with
    the support indicator. The 0/0 case reports 0 by convention.
    """
    if not (0 < R1 < R2):
        raise ValueError("need 0 < R1 < R2")
    quad = GridQuadrature(grid, weight, rule)
    frac1 = ball_cell_fractions(grid, R1)
    frac2 = ball_cell_fractions(grid, R2)
    hd = grid.h**grid.d
    vals = np.asarray(values, float)
    num = 0.0
    mass2 = 0.0
    fnorm_p = 0.0
    unorm_pp = 0.0
    fterm = 0.0
    pp = p / (p - 1.0)
    for grp, idx, pts, wvals in quad.iter_chunks():
        u = quad.field_values(vals, grp, idx)
        gv = quad.field_gradients(vals, grp, idx)
        wq = grp.ref_wts
        num += float((hd * (wvals * np.sum(gv * gv, axis=2)) @ wq) @ frac1[idx])
        mass2 += float((hd * (wvals * u * u) @ wq) @ frac2[idx])
        if f is not None:
            fv = np.asarray(f(pts), float) if callable(f) else np.full(u.shape, float(f))
            fnorm_p += float((hd * (wvals * np.abs(fv) ** p) @ wq) @ frac2[idx])
            unorm_pp += float((hd * (wvals * np.abs(u) ** pp) @ wq) @ frac2[idx])
        if F is not None:
            Fv = np.asarray(F(pts), float)
            chi = (np.abs(u) > 1e-14).astype(float)
            fterm += float(
                (hd * (wvals * np.sum(Fv * Fv, axis=2) * chi) @ wq) @ frac2[idx]
            )
    denom = mass2 / (R2 - R1) ** 2 + fterm
    if f is not None:
        denom += fnorm_p ** (1.0 / p) * unorm_pp ** (1.0 / pp)
    if denom == 0.0:
        return 0.0
    return num / denom


def moser_ratio(values, grid: Grid, weight: WeightSpec, r=0.5, R=0.9,
                f=None, F=None, p=4.0, q=8.0, mask=None, rule: QuadratureRule = None):
    """Sup bound constant: ||u||_inf(B_r) over the L2 + data norm combination."""
    vals = np.asarray(values, float)
    zr = np.linalg.norm(grid.coords, axis=1)
    sel = zr <= r
    if mask is not None and mask.eps > 0:
        sel &= mask.classes != NODE_HOLE
    sup = float(np.max(np.abs(vals[sel])))
    denom = weighted_lp_norm(grid, vals, 2, weight, region=R, rule=rule).value
    quad = GridQuadrature(grid, weight, rule)
    frac = ball_cell_fractions(grid, R)
    hd = grid.h**grid.d
    if f is not None:
        tot = 0.0
        for grp, idx, pts, wvals in quad.iter_chunks():
            fv = np.asarray(f(pts), float) if callable(f) else np.full(wvals.shape, float(f))
            tot += float((hd * (wvals * np.abs(fv) ** p) @ grp.ref_wts) @ frac[idx])
        denom += tot ** (1.0 / p)
    if F is not None:
        tot = 0.0
        for grp, idx, pts, wvals in quad.iter_chunks():
            Fv = np.asarray(F(pts), float)
            mag = np.linalg.norm(Fv, axis=2)
            tot += float((hd * (wvals * mag**q) @ grp.ref_wts) @ frac[idx])
        denom += tot ** (1.0 / q)
    if denom == 0.0:
        return 0.0
    return sup / denom


def random_smooth_fields(grid: Grid, count, seed=0, ramp_width=0.15, eps=0.0):
    """Seeded analytic test fields vanishing on the constrained tube.

    Each field is a short random trigonometric sum times a ramp in |y| that
    vanishes for |y| <= eps. Parameters are drawn independently of the grid,
    so the same seed reproduces the same continuum fields under refinement.
    """
    rng = np.random.default_rng(seed)
    d, n = grid.d, grid.n
    coords = grid.coords
    y = coords[:, d - n :]
    r = np.linalg.norm(y, axis=1)
    ramp = np.clip((r - eps) / ramp_width, 0.0, 1.0)
    fields = []
    for j in range(count):
        c = rng.normal(size=4)
        w = rng.uniform(0.5, 2.5, size=(4, d))
        p = rng.uniform(0.0, 2 * np.pi, size=(4, d))
        u = np.zeros(grid.nnodes)
        for k in range(4):
            u += c[k] * np.prod(np.sin(w[k] * coords + p[k]), axis=1)
        fields.append((f"rand{j:03d}", u * ramp))
    return fields


def x_quotient_residual(result, axis=0):
    """Weak residual of an x-difference-quotient of a solved field (d > n).

    Difference quotients along weight-neutral axes of a homogeneous solution
    solve the same equation; the stiffness applied to the quotient must
    vanish on rows whose stencil avoids shifted constraints.
    """
    grid = result.grid
    if grid.d <= grid.n:
        raise ValueError("x-difference quotients require d > n")
    N = grid.nodes_per_axis
    u = result.u.reshape((N,) * grid.d)
    v = np.zeros_like(u)
    sl_lo = [slice(None)] * grid.d
    sl_hi = [slice(None)] * grid.d
    sl_lo[axis] = slice(0, N - 1)
    sl_hi[axis] = slice(1, N)
    v[tuple(sl_lo)] = (u[tuple(sl_hi)] - u[tuple(sl_lo)]) / grid.h
    vflat = v.reshape(-1)
    r = result.system.K @ vflat
    # deep interior rows: away from every boundary and two layers off the
    # shifted end of the quotient axis
    idx = np.indices((N,) * grid.d).reshape(grid.d, -1)
    deep = np.all((idx >= 2) & (idx <= N - 3), axis=0)
    deep &= result.mask.free_mask
    # drop rows whose stencil touches constrained nodes
    nbr_con = np.zeros((N,) * grid.d, dtype=bool)
    con = ~result.mask.free_mask.reshape((N,) * grid.d)
    nbr_con |= con
    for k in range(grid.d):
        for s in (-1, 1):
            nbr_con |= np.roll(con, s, axis=k)
    deep &= ~nbr_con.reshape(-1)
    scale = float(np.max(np.abs(result.system.K @ result.u))) + 1e-300
    return float(np.max(np.abs(r[deep]))) / scale
