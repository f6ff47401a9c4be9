import numpy as np
import pytest

from degenlab import _kernels


@pytest.fixture(scope="module")
def workload(request):
    rng = np.random.default_rng(11)
    ncells, P, nb, d = 37, 9, 4, 2
    wq = rng.uniform(0.5, 1.0, P)
    wvals = rng.uniform(0.1, 5.0, (ncells, P))
    G = rng.normal(size=(P, nb, nb))
    dphi = rng.normal(size=(P, nb, d))
    M = rng.normal(size=(ncells, P, d, d))
    apts = M + np.swapaxes(M, -1, -2)
    phi = rng.uniform(size=(P, nb))
    fvals = rng.normal(size=(ncells, P))
    Fvals = rng.normal(size=(ncells, P, d))
    return wq, wvals, G, dphi, apts, phi, fvals, Fvals


needs_numba = pytest.mark.skipif(
    _kernels.kernel_path() != "numba", reason="numba path inactive"
)


@needs_numba
def test_stiffness_const_paths_agree(workload):
    wq, wvals, G, dphi, apts, phi, fvals, Fvals = workload
    a = _kernels.stiffness_const_np(wq, wvals, G)
    b = _kernels.stiffness_const_nb(wq, wvals, G)
    np.testing.assert_allclose(a, b, rtol=1e-12)


@needs_numba
def test_stiffness_var_paths_agree(workload):
    wq, wvals, G, dphi, apts, phi, fvals, Fvals = workload
    a = _kernels.stiffness_var_np(wq, wvals, apts, dphi)
    b = _kernels.stiffness_var_nb(wq, wvals, apts, dphi)
    np.testing.assert_allclose(a, b, rtol=1e-12)


@needs_numba
def test_load_paths_agree(workload):
    wq, wvals, G, dphi, apts, phi, fvals, Fvals = workload
    for fv, Fv in [(fvals, Fvals), (fvals, None), (None, Fvals)]:
        a = _kernels.load_np(wq, wvals, fv, Fv, phi, dphi, 0.3, 0.7)
        b = _kernels.load_nb(wq, wvals, fv, Fv, phi, dphi, 0.3, 0.7)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_numba
def test_group_minmax_paths_agree():
    rng = np.random.default_rng(5)
    codes = rng.integers(0, 50, size=4000)
    vals = rng.normal(size=4000)
    a_min, a_max = _kernels.group_minmax_np(codes, vals, 60)
    b_min, b_max = _kernels.group_minmax_nb(codes, vals, 60)
    np.testing.assert_array_equal(a_min, b_min)
    np.testing.assert_array_equal(a_max, b_max)


def test_env_flag_selects_numpy_path():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c",
         "from degenlab._kernels import kernel_path; print(kernel_path())"],
        env={"DEGENLAB_NUMBA": "0", "PATH": "/usr/bin:/bin"},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_symmetry_of_stiffness_var(workload):
    wq, wvals, G, dphi, apts, phi, fvals, Fvals = workload
    out = _kernels.stiffness_var(wq, wvals, apts, dphi)
    np.testing.assert_allclose(out, np.swapaxes(out, 1, 2), rtol=1e-12)
