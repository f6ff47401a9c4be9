"""Hoelder-exponent estimation, tube-shrinking sweeps and boundary-condition
residuals.

Regularity exponents are read off dyadic oscillation profiles: the slope of
log max-oscillation against log cube size over the window [4h, 0.25]. For a
Hoelder function both the all-pairs seminorm and the oscillation profile
produce the same exponent, and the profile costs O(N) per scale.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .grid import NODE_HOLE, Grid
from .quadrature import weighted_h1_norm
from .solver import ProblemSpec, SolveResult, solve_problem

FIT_WINDOW_TOP = 0.25
MIN_FIT_SCALES = 4


@dataclass
class OscillationProfile:
    scales: np.ndarray
    osc: np.ndarray


@dataclass
class RateReport:
    exponent: float
    scales: np.ndarray
    osc: np.ndarray
    fit_residual: float
    capped: bool
    flag: str = ""


def dyadic_scales(h, r_max=FIT_WINDOW_TOP, floor_cells=4):
    """Dyadic scales r_max, r_max/2, ... not below floor_cells * h."""
    scales = []
    r = r_max
    while r >= floor_cells * h - 1e-12:
        scales.append(r)
        r *= 0.5
    return np.asarray(scales)


def oscillation_profile(positions, values, scales, region_R=0.5):
    """Max oscillation of a sampled field over closed cube tilings per scale.

    Cubes are anchored at -region_R so successive dyadic tilings nest, which
    makes the profile nonincreasing toward smaller scales. Samples sitting
    exactly on a cube face count for both neighbours (closed cubes), realized
    by merging the 2^d floor/ceil index assignments; otherwise each cube
    would silently lose a grid layer and bias the fitted slope.
    """
    positions = np.asarray(positions, float)
    values = np.asarray(values, float)
    # sup-norm region: dyadic cubes tile it exactly, so no cube is clipped
    # and branch constants stay scale-independent
    sel = np.max(np.abs(positions), axis=1) <= region_R + 1e-12
    pos = positions[sel]
    val = values[sel]
    if len(val) == 0:
        raise ValueError("no samples inside the analysis region")
    d = pos.shape[1]
    out = np.empty(len(scales))
    for i, r in enumerate(scales):
        rel = (pos + region_R) / r
        lo_codes = np.floor(rel + 1e-9).astype(np.int64)
        hi_codes = np.ceil(rel - 1e-9).astype(np.int64) - 1
        ncubes_axis = int(np.ceil(2 * region_R / r + 1e-9)) + 1
        lo_codes = np.clip(lo_codes, 0, ncubes_axis - 1)
        hi_codes = np.clip(hi_codes, 0, ncubes_axis - 1)
        strides = np.array([ncubes_axis ** (d - 1 - k) for k in range(d)], dtype=np.int64)
        ncubes = ncubes_axis**d
        mins = np.full(ncubes, np.inf)
        maxs = np.full(ncubes, -np.inf)
        for variant in range(2**d):
            codes_nd = lo_codes.copy()
            for k in range(d):
                if (variant >> k) & 1:
                    codes_nd[:, k] = hi_codes[:, k]
            codes = codes_nd @ strides
            vmin, vmax = _kernels.group_minmax(codes, val, ncubes)
            mins = np.minimum(mins, vmin)
            maxs = np.maximum(maxs, vmax)
        occupied = np.isfinite(mins)
        out[i] = float(np.max(maxs[occupied] - mins[occupied]))
    return OscillationProfile(scales=np.asarray(scales, float), osc=out)


def _fit_profile(profile: OscillationProfile, cap):
    scales = profile.scales
    osc = profile.osc
    if len(scales) < MIN_FIT_SCALES:
        raise ValueError(
            f"need at least {MIN_FIT_SCALES} scales in the fit window, got {len(scales)}"
        )
    if np.max(osc) == 0.0:
        # constant field at every granularity: saturates the estimator
        return RateReport(exponent=cap, scales=scales, osc=osc, fit_residual=0.0,
                          capped=True, flag="constant")
    logs = np.log(np.maximum(osc, 1e-300))
    logr = np.log(scales)
    coef = np.polyfit(logr, logs, 1)
    resid = float(np.max(np.abs(np.polyval(coef, logr) - logs)))
    slope = float(coef[0])
    capped = slope > cap
    flag = ""
    if slope < 0.05:
        flag = "non_holder_scale" if slope >= 0 else "non_decaying"
    exponent = min(max(slope, 0.0), cap)
    return RateReport(exponent=exponent, scales=scales, osc=osc, fit_residual=resid,
                      capped=capped, flag=flag)


def holder_exponent_fit(values, grid: Grid, region_R=0.5, cap=1.0) -> RateReport:
    """Estimated Hoelder exponent of a nodal field on the ball of radius region_R."""
    scales = dyadic_scales(grid.h)
    prof = oscillation_profile(grid.coords, values, scales, region_R)
    return _fit_profile(prof, cap)


def cell_center_gradients(values, grid: Grid):
    """Gradient of the multilinear interpolant at cell centers: (ncells, d)."""
    vals = np.asarray(values, float)[grid.cell_nodes]
    offs = grid.corner_offsets
    scale = 1.0 / (2 ** (grid.d - 1) * grid.h)
    out = np.empty((grid.ncells, grid.d))
    for k in range(grid.d):
        sign = np.where(offs[:, k] == 1, 1.0, -1.0)
        out[:, k] = (vals @ sign) * scale
    return out


def node_averaged_gradients(values, grid: Grid):
    """Gradient recovery at nodes: mean of the adjacent cell-center gradients.

    Unlike raw cell centers, the node set reaches {y = 0}, where symmetric
    averaging recovers the correct (vanishing) odd gradient components.
    """
    cc = cell_center_gradients(values, grid)
    acc = np.zeros((grid.nnodes, grid.d))
    cnt = np.zeros(grid.nnodes)
    nodes = grid.cell_nodes
    for c in range(2**grid.d):
        np.add.at(acc, nodes[:, c], cc)
        np.add.at(cnt, nodes[:, c], 1.0)
    return acc / cnt[:, None]


def gradient_holder_fit(values, grid: Grid, region_R=0.5, cap=1.0) -> RateReport:
    """Minimum Hoelder exponent over the components of the recovered gradient.

    A fitted exponent near zero means the gradient oscillation does not decay
    with scale; the report flags that as non-C1 behaviour.
    """
    grads = node_averaged_gradients(values, grid)
    scales = dyadic_scales(grid.h)
    reports = []
    for k in range(grid.d):
        prof = oscillation_profile(grid.coords, grads[:, k], scales, region_R)
        reports.append(_fit_profile(prof, cap))
    worst = min(reports, key=lambda r: r.exponent)
    if worst.exponent <= 0.05 and worst.flag != "constant":
        worst = replace(worst, flag="non_c1")
    return worst


@dataclass
class SweepResult:
    eps: np.ndarray
    h1_diff: np.ndarray
    sol_norms: np.ndarray
    data_norm: float
    uniform_factor: float
    base: SolveResult
    results: list


def epsilon_sweep(problem: ProblemSpec, schedule) -> SweepResult:
    """Solve with shrinking tube radii and track the H^1 gap to the eps=0 solve.

    Tube solutions are identified with their zero extensions, so differences
    live on the common grid. Also records the uniform-bound factor
    max ||u_eps|| / (||u_0|| + ||f|| + ||F||) in the weighted norms.
    """
    schedule = list(schedule)
    h = problem.grid.h
    for e in schedule:
        if not (h < e < 0.5):
            raise ValueError(f"schedule entry {e:g} outside (h, 0.5)")
    base = solve_problem(replace(problem, eps=0.0))
    grid = base.grid
    w = problem.weight
    diffs, norms, results = [], [], []
    for e in schedule:
        res = solve_problem(replace(problem, eps=float(e)))
        results.append(res)
        diffs.append(weighted_h1_norm(grid, res.u - base.u, w).value)
        norms.append(weighted_h1_norm(grid, res.u, w).value)
    data_norm = weighted_h1_norm(grid, base.u, w).value
    if problem.f is not None:
        data_norm += _data_l2(grid, w, problem.f, scalar=True)
    if problem.F is not None:
        data_norm += _data_l2(grid, w, problem.F, scalar=False)
    factor = float(np.max(norms) / data_norm) if data_norm > 0 else 0.0
    return SweepResult(
        eps=np.asarray(schedule, float),
        h1_diff=np.asarray(diffs),
        sol_norms=np.asarray(norms),
        data_norm=data_norm,
        uniform_factor=factor,
        base=base,
        results=results,
    )


def _data_l2(grid, w, fn, scalar):
    """Weighted L^2 norm of analytic data evaluated at quadrature points."""
    from .quadrature import GridQuadrature

    quad = GridQuadrature(grid, w)
    hd = grid.h**grid.d
    tot = 0.0
    for grp, idx, pts, wvals in quad.iter_chunks():
        if scalar:
            v = np.asarray(fn(pts), float) if callable(fn) else np.full(wvals.shape, float(fn))
            dens = v * v
        else:
            v = np.asarray(fn(pts), float)
            dens = np.sum(v * v, axis=2)
        tot += float(np.sum(hd * (wvals * dens) @ grp.ref_wts))
    return np.sqrt(tot)


@dataclass
class ConormalTrace:
    eps: np.ndarray
    max_grad: np.ndarray
    max_flux: np.ndarray
    fitted_rate: float
    results: list


def _hole_adjacent_gradients(res: SolveResult, problem: ProblemSpec):
    """One-sided gradients at free nodes adjacent to the constrained tube."""
    grid = res.grid
    N = grid.nodes_per_axis
    shape = (N,) * grid.d
    u = res.u.reshape(shape)
    hole = (res.mask.classes == NODE_HOLE).reshape(shape)
    free = res.mask.free_mask.reshape(shape)
    adj = np.zeros(shape, dtype=bool)
    for k in range(grid.d):
        for s in (-1, 1):
            shifted = np.roll(hole, s, axis=k)
            # roll wraps around; kill the wrapped layer
            sl = [slice(None)] * grid.d
            sl[k] = 0 if s == 1 else N - 1
            shifted[tuple(sl)] = False
            adj |= shifted
    adj &= free
    nodes = np.argwhere(adj)
    h = grid.h
    grads = np.zeros((len(nodes), grid.d))
    for j, mi in enumerate(nodes):
        for k in range(grid.d):
            ip = mi.copy()
            ip[k] += 1
            im = mi.copy()
            im[k] -= 1
            has_p = ip[k] < N and not hole[tuple(ip)]
            has_m = im[k] >= 0 and not hole[tuple(im)]
            if has_p and has_m:
                grads[j, k] = (u[tuple(ip)] - u[tuple(im)]) / (2 * h)
            elif has_p:
                grads[j, k] = (u[tuple(ip)] - u[tuple(mi)]) / h
            elif has_m:
                grads[j, k] = (u[tuple(mi)] - u[tuple(im)]) / h
    coords = grid.axis[nodes]
    return coords, grads


def conormal_decay(problem: ProblemSpec, schedule) -> ConormalTrace:
    """Max gradient and radial flux on the tube boundary along an eps schedule.

    Requires the gradient-regularity regime a + n in (0, 1); fits the decay
    rate of max |grad u_eps| against eps.
    """
    a, n = problem.weight.a, problem.weight.n
    if not (0.0 < a + n < 1.0):
        raise ValueError(f"tube-gradient decay requires a+n in (0,1), got {a + n}")
    schedule = sorted(schedule, reverse=True)
    d = problem.grid.d
    max_grad, max_flux, results = [], [], []
    for e in schedule:
        res = solve_problem(replace(problem, eps=float(e)))
        results.append(res)
        coords, grads = _hole_adjacent_gradients(res, problem)
        Av = problem.A.at(coords)
        flux_vec = np.einsum("nij,nj->ni", Av, grads)
        if problem.F is not None:
            flux_vec = flux_vec + np.asarray(problem.F(coords), float)
        y = coords[:, d - n :]
        yhat = y / np.linalg.norm(y, axis=1, keepdims=True)
        flux = np.abs(np.einsum("ni,ni->n", flux_vec[:, d - n :], yhat))
        max_grad.append(float(np.max(np.linalg.norm(grads, axis=1))))
        max_flux.append(float(np.max(flux)))
    rate = float(np.polyfit(np.log(schedule), np.log(max_grad), 1)[0])
    return ConormalTrace(
        eps=np.asarray(schedule, float),
        max_grad=np.asarray(max_grad),
        max_flux=np.asarray(max_flux),
        fitted_rate=rate,
        results=results,
    )


@dataclass
class BandProfile:
    rho: np.ndarray
    flux_residual: np.ndarray
    x_residual: np.ndarray | None


def limiting_bc_residual(values, problem: ProblemSpec, grid: Grid, band_radii,
                         psi_grad=None, region_R=0.5) -> BandProfile:
    """Emergent boundary-condition residuals over shrinking bands {|y| <= rho}.

    Reports max |(A grad u + F) . e_{y_i}| over cell centers in the band and,
    for d > n, max |grad_x u - grad_x psi|. Both decay for compliant data.
    """
    d, n = grid.d, grid.n
    grads = cell_center_gradients(values, grid)
    centers = grid.cell_center
    Av = problem.A.at(centers)
    flux_vec = np.einsum("cij,cj->ci", Av, grads)
    if problem.F is not None:
        flux_vec = flux_vec + np.asarray(problem.F(centers), float)
    flux = np.max(np.abs(flux_vec[:, d - n :]), axis=1)
    ynorm = np.linalg.norm(centers[:, d - n :], axis=1)
    inside = np.linalg.norm(centers, axis=1) <= region_R
    x_res = None
    if d > n:
        gx = grads[:, : d - n]
        if psi_grad is not None:
            gx = gx - np.asarray(psi_grad(centers[:, : d - n]), float)
        xerr = np.max(np.abs(gx), axis=1)
    band_radii = np.asarray(sorted(band_radii, reverse=True), float)
    flux_out = np.empty(len(band_radii))
    x_out = np.empty(len(band_radii)) if d > n else None
    for i, rho in enumerate(band_radii):
        sel = inside & (ynorm <= rho)
        if not np.any(sel):
            raise ValueError(f"empty band at rho={rho:g}")
        flux_out[i] = float(np.max(flux[sel]))
        if x_out is not None:
            x_out[i] = float(np.max(xerr[sel]))
    return BandProfile(rho=band_radii, flux_residual=flux_out, x_residual=x_out)
