"""Hot inner kernels, in two flavours: numba ``@njit`` loops and pure numpy.

The numpy implementations are the reference; the numba twins exist because
per-element quadrature contractions dominate assembly time on fine grids.
Path selection happens once at import: set ``DEGENLAB_NUMBA=0`` to force the
numpy fallback (the default is to use numba whenever it imports).
``kernel_path()`` reports the active choice so run manifests can record it.

All kernels are pure functions of ndarray inputs and allocate their outputs,
so both paths are safe to call concurrently.
"""

import os

import numpy as np

_WANT_NUMBA = os.environ.get("DEGENLAB_NUMBA", "1") != "0"

if _WANT_NUMBA:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - env without numba
        _HAVE_NUMBA = False
else:
    _HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations


def stiffness_const_np(wq, wvals, G):
    """Local stiffness blocks for a coefficient matrix constant in space.

    wq: (P,) reference quadrature weights, wvals: (C, P) weight-function
    values per cell and point, G: (P, B, B) precontracted gradient products.
    Returns (C, B, B).
    """
    return np.einsum("p,cp,pij->cij", wq, wvals, G, optimize=True)


def stiffness_var_np(wq, wvals, apts, dphi):
    """Local stiffness blocks for a pointwise coefficient matrix.

    apts: (C, P, d, d) coefficient samples, dphi: (P, B, d) reference basis
    gradients. Returns (C, B, B).
    """
    s = wq[None, :] * wvals
    t = np.einsum("cpde,pje->cpdj", apts, dphi, optimize=True)
    return np.einsum("cp,pid,cpdj->cij", s, dphi, t, optimize=True)


def load_np(wq, wvals, fvals, fpts, phi, dphi, hd, hd1):
    """Local load vectors: hd*sum w f phi_i - hd1*sum w F.grad(phi_i).

    fvals: (C, P) scalar source samples or None, fpts: (C, P, d) vector-field
    samples or None. Returns (C, B).
    """
    ncells = wvals.shape[0]
    nb = phi.shape[1]
    out = np.zeros((ncells, nb))
    s = wq[None, :] * wvals
    if fvals is not None:
        out += hd * np.einsum("cp,pi->ci", s * fvals, phi, optimize=True)
    if fpts is not None:
        out -= hd1 * np.einsum("cp,cpk,pik->ci", s, fpts, dphi, optimize=True)
    return out


def group_minmax_np(codes, vals, ngroups):
    """Per-group min and max of vals; empty groups get (+inf, -inf)."""
    mins = np.full(ngroups, np.inf)
    maxs = np.full(ngroups, -np.inf)
    np.minimum.at(mins, codes, vals)
    np.maximum.at(maxs, codes, vals)
    return mins, maxs


# ---------------------------------------------------------------------------
# numba twins

if _HAVE_NUMBA:

    @njit(cache=True)
    def _stiffness_const_nb(wq, wvals, G):
        nc, P = wvals.shape
        nb = G.shape[1]
        out = np.zeros((nc, nb, nb))
        for c in range(nc):
            for p in range(P):
                s = wq[p] * wvals[c, p]
                for i in range(nb):
                    for j in range(nb):
                        out[c, i, j] += s * G[p, i, j]
        return out

    @njit(cache=True)
    def _stiffness_var_nb(wq, wvals, apts, dphi):
        nc, P = wvals.shape
        nb = dphi.shape[1]
        d = dphi.shape[2]
        out = np.zeros((nc, nb, nb))
        for c in range(nc):
            for p in range(P):
                s = wq[p] * wvals[c, p]
                for i in range(nb):
                    for j in range(i, nb):
                        acc = 0.0
                        for k in range(d):
                            t = 0.0
                            for m in range(d):
                                t += apts[c, p, k, m] * dphi[p, j, m]
                            acc += dphi[p, i, k] * t
                        out[c, i, j] += s * acc
        for c in range(nc):
            for i in range(nb):
                for j in range(i + 1, nb):
                    out[c, j, i] = out[c, i, j]
        return out

    @njit(cache=True)
    def _load_nb(wq, wvals, fvals, fpts, phi, dphi, hd, hd1, use_f, use_F):
        nc, P = wvals.shape
        nb = phi.shape[1]
        d = dphi.shape[2]
        out = np.zeros((nc, nb))
        for c in range(nc):
            for p in range(P):
                s = wq[p] * wvals[c, p]
                if use_f:
                    sf = hd * s * fvals[c, p]
                    for i in range(nb):
                        out[c, i] += sf * phi[p, i]
                if use_F:
                    for i in range(nb):
                        acc = 0.0
                        for k in range(d):
                            acc += fpts[c, p, k] * dphi[p, i, k]
                        out[c, i] -= hd1 * s * acc
        return out

    @njit(cache=True)
    def _group_minmax_nb(codes, vals, ngroups):
        mins = np.full(ngroups, np.inf)
        maxs = np.full(ngroups, -np.inf)
        for k in range(codes.shape[0]):
            c = codes[k]
            v = vals[k]
            if v < mins[c]:
                mins[c] = v
            if v > maxs[c]:
                maxs[c] = v
        return mins, maxs

    def stiffness_const_nb(wq, wvals, G):
        return _stiffness_const_nb(
            np.ascontiguousarray(wq), np.ascontiguousarray(wvals), np.ascontiguousarray(G)
        )

    def stiffness_var_nb(wq, wvals, apts, dphi):
        return _stiffness_var_nb(
            np.ascontiguousarray(wq),
            np.ascontiguousarray(wvals),
            np.ascontiguousarray(apts),
            np.ascontiguousarray(dphi),
        )

    def load_nb(wq, wvals, fvals, fpts, phi, dphi, hd, hd1):
        use_f = fvals is not None
        use_F = fpts is not None
        nc, P = wvals.shape
        d = dphi.shape[2]
        fv = fvals if use_f else np.zeros((1, 1))
        Fv = fpts if use_F else np.zeros((1, 1, d))
        return _load_nb(
            np.ascontiguousarray(wq),
            np.ascontiguousarray(wvals),
            np.ascontiguousarray(fv),
            np.ascontiguousarray(Fv),
            np.ascontiguousarray(phi),
            np.ascontiguousarray(dphi),
            hd,
            hd1,
            use_f,
            use_F,
        )

    def group_minmax_nb(codes, vals, ngroups):
        return _group_minmax_nb(
            np.ascontiguousarray(codes, dtype=np.int64),
            np.ascontiguousarray(vals, dtype=np.float64),
            ngroups,
        )


if _HAVE_NUMBA:
    # einsum beats the loop for the small constant-coefficient contraction
    # (see benchmarks/bench_kernels.py); numba wins everywhere else
    stiffness_const = stiffness_const_np
    stiffness_var = stiffness_var_nb
    load_terms = load_nb
    group_minmax = group_minmax_nb
    _PATH = "numba"
else:
    stiffness_const = stiffness_const_np
    stiffness_var = stiffness_var_np
    load_terms = load_np
    group_minmax = group_minmax_np
    _PATH = "numpy"


def kernel_path():
    """Active kernel flavour, 'numba' or 'numpy'."""
    return _PATH
