"""Tensor-product grids on axis-aligned boxes and node classification.

Coordinates are split positionally: a point z in R^d is (x, y) with the
first d-n axes labelled x and the last n labelled y. The thin set
{|y| = 0} carries Dirichlet data; for eps > 0 the tube {|y| <= eps} is
removed and its nodes are constrained instead. All geometry objects are
immutable after construction.
"""

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

NODE_INTERIOR = 0
NODE_SIGMA0 = 1
NODE_HOLE = 2
NODE_OUTER = 3
NODE_EXCLUDED = 4

CLASS_NAMES = {
    NODE_INTERIOR: "interior",
    NODE_SIGMA0: "sigma0",
    NODE_HOLE: "hole_constrained",
    NODE_OUTER: "outer_boundary",
    NODE_EXCLUDED: "excluded",
}

_COORD_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid over [lo, hi]^d with an odd node count per axis.

    The odd count guarantees that the hyperplane {y = 0} passes through
    grid nodes exactly.
    """

    d: int
    n: int
    nodes_per_axis: int
    bounds: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if not (2 <= self.d <= 3):
            raise ValueError(f"dimension d={self.d} out of supported range [2, 3]")
        if not (2 <= self.n <= self.d):
            raise ValueError(f"codimension n={self.n} must satisfy 2 <= n <= d={self.d}")
        if self.nodes_per_axis < 5 or self.nodes_per_axis % 2 == 0:
            raise ValueError(
                f"nodes_per_axis={self.nodes_per_axis} must be an odd integer >= 5"
            )
        lo, hi = self.bounds
        if not hi > lo:
            raise ValueError(f"empty axis interval {self.bounds}")

    @property
    def h(self):
        lo, hi = self.bounds
        return (hi - lo) / (self.nodes_per_axis - 1)


class Grid:
    """Realized grid: node coordinates, cells and index bookkeeping.

    Nodes and cells are numbered in C order (last axis fastest), which fixes
    the deterministic reduction order used everywhere downstream.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.d = spec.d
        self.n = spec.n
        self.h = spec.h
        lo, hi = spec.bounds
        N = spec.nodes_per_axis
        self.axis = lo + spec.h * np.arange(N)
        # snap the symmetric midpoint to exactly zero so {y=0} tests are exact
        mid = (N - 1) // 2
        if abs(lo + hi) < _COORD_TOL:
            self.axis[mid] = 0.0
        self.nodes_per_axis = N
        self.cells_per_axis = N - 1
        self.nnodes = N**self.d
        self.ncells = (N - 1) ** self.d
        self.node_strides = np.array(
            [N ** (self.d - 1 - k) for k in range(self.d)], dtype=np.int64
        )

    @cached_property
    def coords(self):
        """(nnodes, d) node coordinates in C order."""
        grids = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    @cached_property
    def node_y_norm(self):
        y = self.coords[:, self.d - self.n :]
        return np.linalg.norm(y, axis=1)

    @cached_property
    def cell_origin_idx(self):
        """(ncells, d) multi-index of each cell's lower corner node."""
        M = self.cells_per_axis
        grids = np.meshgrid(*([np.arange(M)] * self.d), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int64)

    @cached_property
    def cell_origin(self):
        return self.axis[self.cell_origin_idx]

    @cached_property
    def cell_center(self):
        return self.cell_origin + 0.5 * self.h

    @cached_property
    def corner_offsets(self):
        """(2^d, d) binary corner offsets, C order (axis d-1 fastest)."""
        nb = 2**self.d
        out = np.zeros((nb, self.d), dtype=np.int64)
        for c in range(nb):
            for k in range(self.d):
                out[c, k] = (c >> (self.d - 1 - k)) & 1
        return out

    @cached_property
    def cell_nodes(self):
        """(ncells, 2^d) global node indices of each cell's corners."""
        origin_flat = self.cell_origin_idx @ self.node_strides
        corner_flat = self.corner_offsets @ self.node_strides
        return origin_flat[:, None] + corner_flat[None, :]

    def node_flat_index(self, multi_idx):
        return np.asarray(multi_idx, dtype=np.int64) @ self.node_strides

    def find_node(self, point):
        """Flat index of the node at the given coordinates (must exist)."""
        idx = np.rint((np.asarray(point, float) - self.axis[0]) / self.h).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= self.nodes_per_axis):
            raise ValueError(f"point {point} outside the grid")
        if not np.allclose(self.axis[idx], point, atol=1e-9):
            raise ValueError(f"point {point} is not a grid node")
        return int(idx @ self.node_strides)


def build_grid(spec: GridSpec) -> Grid:
    """Build the grid for a validated spec."""
    return Grid(spec)


@dataclass(frozen=True)
class DomainMask:
    """Per-node classification for a given domain shape and hole radius."""

    grid: Grid
    eps: float
    shape: str  # 'box' or 'ball'
    ball_radius: float | None
    classes: np.ndarray = field(repr=False)

    def nodes_of(self, cls):
        return np.nonzero(self.classes == cls)[0]

    @property
    def sigma0_nodes(self):
        return self.nodes_of(NODE_SIGMA0)

    @property
    def hole_nodes(self):
        return self.nodes_of(NODE_HOLE)

    @property
    def outer_nodes(self):
        return self.nodes_of(NODE_OUTER)

    @property
    def constrained_nodes(self):
        return np.nonzero(np.isin(self.classes, (NODE_SIGMA0, NODE_HOLE, NODE_OUTER)))[0]

    @cached_property
    def active_cells(self):
        """Boolean per-cell flag: no excluded corner."""
        excl = self.classes[self.grid.cell_nodes] == NODE_EXCLUDED
        return ~np.any(excl, axis=1)

    @cached_property
    def free_mask(self):
        out = self.classes == NODE_INTERIOR
        return out


def classify_nodes(grid: Grid, shape="box", eps=0.0, ball_radius=None) -> DomainMask:
    """Classify every node as interior / sigma0 / hole / outer / excluded.

    Priority: hole > sigma0 > outer > interior. For ball shapes, nodes with
    |z| >= R that touch an inside cell become outer_boundary carriers; the
    rest are excluded.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if shape not in ("box", "ball"):
        raise ValueError(f"unknown shape {shape!r}")
    if shape == "ball":
        if ball_radius is None or ball_radius <= 0:
            raise ValueError("ball shape requires a positive ball_radius")
        if eps >= ball_radius:
            raise ValueError("eps must be smaller than the ball radius")

    classes = np.full(grid.nnodes, NODE_INTERIOR, dtype=np.int8)
    ynorm = grid.node_y_norm

    if shape == "box":
        lo, hi = grid.spec.bounds
        on_bdry = np.any(
            (np.abs(grid.coords - lo) < _COORD_TOL) | (np.abs(grid.coords - hi) < _COORD_TOL),
            axis=1,
        )
        classes[on_bdry] = NODE_OUTER
    else:
        R = ball_radius
        znorm = np.linalg.norm(grid.coords, axis=1)
        inside = znorm < R - _COORD_TOL
        outside = ~inside
        # exterior nodes sharing a cell with an inside node carry data
        touch = np.zeros(grid.nnodes, dtype=bool)
        cn = grid.cell_nodes
        has_inside = np.any(inside[cn], axis=1)
        touch_nodes = np.unique(cn[has_inside])
        touch[touch_nodes] = True
        classes[outside & touch] = NODE_OUTER
        classes[outside & ~touch] = NODE_EXCLUDED

    if eps > 0:
        hole = ynorm <= eps + _COORD_TOL
        if shape == "ball":
            hole &= classes != NODE_EXCLUDED
        classes[hole] = NODE_HOLE
    else:
        sig = ynorm < _COORD_TOL
        if shape == "ball":
            sig &= classes != NODE_EXCLUDED
        classes[sig] = NODE_SIGMA0

    return DomainMask(grid=grid, eps=eps, shape=shape, ball_radius=ball_radius, classes=classes)


@dataclass(frozen=True)
class EllipsoidRegion:
    """Sublevel set {A^{-1} y . y < r^2} of a constant SPD matrix; n = d only."""

    A: np.ndarray
    r: float

    def __post_init__(self):
        A = np.asarray(self.A, float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be a square matrix")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        if np.min(np.linalg.eigvalsh(A)) <= 0:
            raise ValueError("A must be positive definite")
        if self.r <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "A", A)

    @cached_property
    def A_inv(self):
        return np.linalg.inv(self.A)

    def rho(self, y):
        """Anisotropic radius sqrt(A^{-1} y . y), vectorized over rows."""
        y = np.asarray(y, float)
        return np.sqrt(np.einsum("...i,ij,...j->...", y, self.A_inv, y))

    def contains(self, y):
        return self.rho(y) < self.r


def _subsample_offsets(d, k=4):
    """k^d midpoint offsets in (0,1)^d, deterministic."""
    pts1 = (np.arange(k) + 0.5) / k
    grids = np.meshgrid(*([pts1] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def ellipsoid_membership(grid: Grid, region: EllipsoidRegion):
    """Per-cell fraction of the cell inside the ellipsoid (n = d required).

    Cells with all corners inside a convex region are fully inside; cells
    whose closest point to the origin lies beyond r are fully outside; the
    straddling rest is resolved by 4^d midpoint subsampling.
    """
    if grid.n != grid.d:
        raise ValueError("ellipsoid regions are defined only for n = d")
    d = grid.d
    h = grid.h
    corners = grid.cell_origin[:, None, :] + grid.corner_offsets[None, :, :] * h
    rho_c = region.rho(corners.reshape(-1, d)).reshape(grid.ncells, -1)
    frac = np.zeros(grid.ncells)
    inside = np.max(rho_c, axis=1) < region.r
    frac[inside] = 1.0
    # conservative outside test via the box point closest to the origin
    closest = np.clip(0.0, grid.cell_origin, grid.cell_origin + h)
    rho_min = region.rho(closest)
    outside = rho_min >= region.r
    frac[outside & ~inside] = 0.0
    todo = ~(inside | outside)
    if np.any(todo):
        offs = _subsample_offsets(d)
        pts = grid.cell_origin[todo][:, None, :] + offs[None, :, :] * h
        rho_s = region.rho(pts.reshape(-1, d)).reshape(-1, offs.shape[0])
        frac[todo] = np.mean(rho_s < region.r, axis=1)
    return frac


def ball_cell_fractions(grid: Grid, R, center=None):
    """Per-cell fraction of the cell inside the z-ball |z - c| < R (any n)."""
    d = grid.d
    h = grid.h
    c = np.zeros(d) if center is None else np.asarray(center, float)
    corners = grid.cell_origin[:, None, :] + grid.corner_offsets[None, :, :] * h
    dist_c = np.linalg.norm(corners - c, axis=2)
    frac = np.zeros(grid.ncells)
    inside = np.max(dist_c, axis=1) < R
    frac[inside] = 1.0
    closest = np.clip(c, grid.cell_origin, grid.cell_origin + h)
    outside = np.linalg.norm(closest - c, axis=1) >= R
    frac[outside & ~inside] = 0.0
    todo = ~(inside | outside)
    if np.any(todo):
        offs = _subsample_offsets(d)
        pts = grid.cell_origin[todo][:, None, :] + offs[None, :, :] * h
        dist_s = np.linalg.norm(pts - c, axis=2)
        frac[todo] = np.mean(dist_s < R, axis=1)
    return frac


def restrict_to_sigma0(values, mask: DomainMask):
    """Values at the sigma0 nodes in lexicographic (flat-index) order."""
    if mask.eps > 0:
        raise ValueError("sigma0 restriction requires eps = 0")
    idx = np.sort(mask.sigma0_nodes)
    return np.asarray(values)[idx]


def interpolate_nodal(grid: Grid, values, pts):
    """Multilinear interpolation of a nodal field at arbitrary points.

    Returns (vals, valid) where valid flags points inside the grid box.
    Out-of-range points get value 0 and valid=False.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    lo, hi = grid.spec.bounds
    valid = np.all((pts >= lo - _COORD_TOL) & (pts <= hi + _COORD_TOL), axis=1)
    rel = (pts - lo) / grid.h
    idx = np.clip(np.floor(rel).astype(np.int64), 0, grid.cells_per_axis - 1)
    xi = rel - idx
    flat = idx @ grid.node_strides
    corner_flat = grid.corner_offsets @ grid.node_strides
    vals_c = np.asarray(values)[flat[:, None] + corner_flat[None, :]]
    offs = grid.corner_offsets
    basis = np.prod(
        np.where(offs[None, :, :] == 1, xi[:, None, :], 1.0 - xi[:, None, :]), axis=2
    )
    out = np.einsum("qc,qc->q", vals_c, basis)
    out[~valid] = 0.0
    return out, valid


def export_grid_csv(grid: Grid, mask: DomainMask, path):
    """Debug dump: node index, coordinates and class name."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node"] + [f"z{k}" for k in range(grid.d)] + ["class"])
        coords = grid.coords
        for i in range(grid.nnodes):
            row = [i] + [f"{c:.17g}" for c in coords[i]] + [CLASS_NAMES[int(mask.classes[i])]]
            writer.writerow(row)
