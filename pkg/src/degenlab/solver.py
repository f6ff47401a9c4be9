"""Weighted Galerkin assembly, Dirichlet elimination and preconditioned CG.

Multilinear nodal elements on the tensor grid; the divergence-form right
hand side div(w F) is handled weakly (the weight is never differentiated).
Dirichlet values are imposed nodally on the outer boundary, on {|y|=0}
(eps = 0) or on the tube nodes (eps > 0), and eliminated symmetrically.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .grid import (
    NODE_EXCLUDED,
    Grid,
    GridSpec,
    DomainMask,
    build_grid,
    classify_nodes,
)
from .quadrature import GridQuadrature, QuadratureRule, WeightSpec


class SolverError(RuntimeError):
    """Raised when the linear solve cannot be completed as requested."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history


@dataclass
class CoefficientField:
    """Symmetric elliptic coefficient matrix, constant or as a callback.

    ``func`` maps points (..., d) to matrices (..., d, d). Ellipticity is
    checked by eigenvalue sampling before assembly.
    """

    matrix: np.ndarray = None
    func: object = None
    name: str = ""

    def __post_init__(self):
        if (self.matrix is None) == (self.func is None):
            raise ValueError("provide exactly one of matrix or func")
        if self.matrix is not None:
            m = np.asarray(self.matrix, float)
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError("coefficient matrix must be symmetric")
            self.matrix = m

    @property
    def is_constant(self):
        return self.matrix is not None

    def at(self, pts):
        pts = np.asarray(pts, float)
        if self.is_constant:
            shape = pts.shape[:-1]
            return np.broadcast_to(self.matrix, shape + self.matrix.shape)
        return np.asarray(self.func(pts), float)

    def ellipticity_bounds(self, sample_pts):
        """(lambda, Lambda) from eigenvalue sampling; raises if not SPD."""
        mats = self.at(sample_pts)
        sym_err = np.max(np.abs(mats - np.swapaxes(mats, -1, -2)))
        if sym_err > 1e-10:
            raise ValueError(f"coefficient matrix not symmetric (max dev {sym_err:g})")
        eigs = np.linalg.eigvalsh(mats)
        lam, Lam = float(np.min(eigs)), float(np.max(eigs))
        if lam <= 0:
            raise ValueError(f"ellipticity violated: min sampled eigenvalue {lam:g} <= 0")
        return lam, Lam


def identity_coefficients(d):
    return CoefficientField(matrix=np.eye(d), name="identity")


@dataclass
class ProblemSpec:
    """A full discrete instance of the weighted Dirichlet problem."""

    grid: GridSpec
    weight: WeightSpec
    A: CoefficientField
    f: object = None          # scalar source, callable or None
    F: object = None          # vector field, callable or None
    psi: object = 0.0         # thin-set data, callable of x or scalar
    g: object = 0.0           # outer boundary data, callable of z or scalar
    eps: float = 0.0
    shape: str = "box"
    ball_radius: float = None
    quadrature: QuadratureRule = field(default_factory=QuadratureRule)
    cg_tol: float = 1e-10
    cg_maxit: int = 20000

    def __post_init__(self):
        if self.weight.n != self.grid.n:
            raise ValueError("weight and grid codimension disagree")
        if self.grid.n == self.grid.d:
            scalar = not callable(self.psi)
            if not scalar or float(self.psi) != 0.0:
                raise ValueError("for n = d the thin-set datum is the single value 0")

    def psi_at(self, coords):
        """Thin-set data at node coordinates (uses the x part only)."""
        if callable(self.psi):
            x = coords[:, : self.grid.d - self.grid.n]
            return np.asarray(self.psi(x), float)
        return np.full(len(coords), float(self.psi))

    def g_at(self, coords):
        if callable(self.g):
            return np.asarray(self.g(coords), float)
        return np.full(len(coords), float(self.g))


@dataclass
class LinearSystem:
    """Assembled (unconstrained) weighted Galerkin system."""

    K: sp.csr_matrix
    b: np.ndarray
    grid: Grid
    mask: DomainMask
    quad: GridQuadrature
    lam: float
    Lam: float


@dataclass
class ReducedSystem:
    """Dirichlet-eliminated SPD system on the free unknowns."""

    K_ff: sp.csr_matrix
    rhs: np.ndarray
    free_idx: np.ndarray
    values: np.ndarray  # full-length vector holding constrained values
    full: LinearSystem

    @property
    def constraint_count(self):
        return self.full.grid.nnodes - len(self.free_idx)


@dataclass
class SolveResult:
    u: np.ndarray
    rel_residual: float
    iterations: int
    energy: float
    wall_time: float
    converged: bool
    grid: Grid = None
    mask: DomainMask = None
    system: LinearSystem = None


def _eval_scalar(fn, pts):
    if fn is None:
        return None
    if callable(fn):
        return np.asarray(fn(pts), float)
    return np.full(pts.shape[:-1], float(fn))


def _eval_vector(fn, pts):
    if fn is None:
        return None
    return np.asarray(fn(pts), float)


def assemble(problem: ProblemSpec) -> LinearSystem:
    """Assemble stiffness and load over the active cells of the mask.

    K_ij = sum over elements of the weighted gradient products; the load is
    b_i = sum of w (f phi_i - F . grad phi_i). Symmetry is structural.
    """
    grid = build_grid(problem.grid)
    mask = classify_nodes(grid, problem.shape, problem.eps, problem.ball_radius)
    quad = GridQuadrature(grid, problem.weight, problem.quadrature)

    # ellipticity check on a quadrature-point sample
    grp0 = quad.groups[0]
    probe_cells = grp0.cells[:: max(1, len(grp0.cells) // 64)]
    probe = grid.cell_origin[probe_cells][:, None, :] + grp0.ref_pts[None, :, :] * grid.h
    lam, Lam = problem.A.ellipticity_bounds(probe.reshape(-1, grid.d))

    h = grid.h
    d = grid.d
    hd = h**d
    hd2 = h ** (d - 2)
    hd1 = h ** (d - 1)
    active = mask.active_cells if mask.shape == "ball" else None

    rows, cols, vals = [], [], []
    bvec = np.zeros(grid.nnodes)
    const_A = problem.A.matrix if problem.A.is_constant else None

    for grp, idx, pts, wvals in quad.iter_chunks(active=active):
        if const_A is not None:
            G = np.einsum("pid,de,pje->pij", grp.dphi, const_A, grp.dphi)
            local = hd2 * _kernels.stiffness_const(grp.ref_wts, wvals, G)
        else:
            apts = problem.A.at(pts)
            local = hd2 * _kernels.stiffness_var(grp.ref_wts, wvals, apts, grp.dphi)
        nodes = grid.cell_nodes[idx]
        nb = nodes.shape[1]
        rows.append(np.repeat(nodes, nb, axis=1).reshape(-1))
        cols.append(np.tile(nodes, (1, nb)).reshape(-1))
        vals.append(local.reshape(-1))

        fv = _eval_scalar(problem.f, pts)
        Fv = _eval_vector(problem.F, pts)
        if fv is not None or Fv is not None:
            bloc = _kernels.load_terms(grp.ref_wts, wvals, fv, Fv, grp.phi, grp.dphi, hd, hd1)
            np.add.at(bvec, nodes.reshape(-1), bloc.reshape(-1))

    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.nnodes, grid.nnodes),
    ).tocsr()
    K.sum_duplicates()
    return LinearSystem(K=K, b=bvec, grid=grid, mask=mask, quad=quad, lam=lam, Lam=Lam)


def apply_dirichlet(system: LinearSystem, mask: DomainMask, psi, g) -> ReducedSystem:
    """Constrain sigma0/hole nodes to the thin-set datum and outer nodes to g.

    Elimination keeps the reduced operator symmetric positive definite.
    Conflicting prescriptions on one node are rejected.
    """
    grid = system.grid
    coords = grid.coords
    values = np.zeros(grid.nnodes)
    prescribed = np.zeros(grid.nnodes, dtype=bool)

    def _set(idx, vals):
        clash = prescribed[idx] & (values[idx] != vals)
        if np.any(clash):
            raise ValueError("conflicting Dirichlet constraints on nodes "
                             f"{idx[clash][:5]}")
        values[idx] = vals
        prescribed[idx] = True

    def _psi_values(idx):
        if callable(psi):
            x = coords[idx, : grid.d - grid.n]
            return np.asarray(psi(x), float)
        return np.full(len(idx), float(psi))

    sig = mask.sigma0_nodes
    if len(sig):
        _set(sig, _psi_values(sig))
    hole = mask.hole_nodes
    if len(hole):
        _set(hole, _psi_values(hole))
    outer = mask.outer_nodes
    if len(outer):
        gv = np.asarray(g(coords[outer]), float) if callable(g) else np.full(len(outer), float(g))
        _set(outer, gv)
    excl = mask.nodes_of(NODE_EXCLUDED)
    if len(excl):
        _set(excl, np.zeros(len(excl)))

    free_idx = np.nonzero(~prescribed)[0]
    K = system.K
    rhs = system.b[free_idx] - K[free_idx][:, np.nonzero(prescribed)[0]] @ values[prescribed]
    K_ff = K[free_idx][:, free_idx].tocsr()
    return ReducedSystem(K_ff=K_ff, rhs=rhs, free_idx=free_idx, values=values, full=system)


def solve_cg(reduced: ReducedSystem, tol=1e-10, maxit=20000) -> SolveResult:
    """Jacobi-preconditioned conjugate gradients on the reduced system.

    Deterministic given the fixed elimination order. Non-convergence and
    indefiniteness raise SolverError with the residual history attached.
    """
    t0 = time.perf_counter()
    K = reduced.K_ff
    b = reduced.rhs
    nfree = len(b)
    u_full = reduced.values.copy()

    def finish(x, res, iters, converged=True):
        u_full[reduced.free_idx] = x
        J = energy(u_full, reduced.full)
        return SolveResult(
            u=u_full,
            rel_residual=res,
            iterations=iters,
            energy=J,
            wall_time=time.perf_counter() - t0,
            converged=converged,
            grid=reduced.full.grid,
            mask=reduced.full.mask,
            system=reduced.full,
        )

    bnorm = float(np.linalg.norm(b))
    if nfree == 0 or bnorm == 0.0:
        return finish(np.zeros(nfree), 0.0, 0)

    diag = K.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has nonpositive diagonal entries; not SPD")
    minv = 1.0 / diag

    x = np.zeros(nfree)
    r = b.copy()
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    history = [1.0]
    for it in range(1, maxit + 1):
        Kp = K @ p
        pKp = float(p @ Kp)
        if pKp <= 0:
            raise SolverError(
                f"negative curvature encountered at iteration {it}; matrix not SPD",
                residual_history=history,
            )
        alpha = rz / pKp
        x += alpha * p
        r -= alpha * Kp
        res = float(np.linalg.norm(r)) / bnorm
        history.append(res)
        if res <= tol:
            return finish(x, res, it)
        z = minv * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    raise SolverError(
        f"CG did not reach tol={tol:g} in {maxit} iterations (residual {history[-1]:.3e})",
        residual_history=history,
    )


def energy(values, system: LinearSystem):
    """Discrete energy J(v) = 1/2 v'Kv - v'b of the assembled functional."""
    v = np.asarray(values, float)
    return float(0.5 * v @ (system.K @ v) - v @ system.b)


def solve_problem(problem: ProblemSpec) -> SolveResult:
    """Assemble, constrain and solve; the standard pipeline."""
    system = assemble(problem)
    reduced = apply_dirichlet(system, system.mask, problem.psi, problem.g)
    return solve_cg(reduced, tol=problem.cg_tol, maxit=problem.cg_maxit)
