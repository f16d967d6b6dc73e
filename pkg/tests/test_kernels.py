import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_symmetric_z
from mapes import kernels
from mapes._jit import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba kernels disabled")


def _case(seed, Q=60, F=3, K=3, n=25):
    rng = np.random.default_rng(seed)
    Z = np.stack([random_symmetric_z(rng, Q) for _ in range(F)])
    perm = rng.permutation(Q)
    io, kept = perm[:K], np.sort(perm[K:K + n])
    load = np.where(rng.random(n) < 0.3, rng.uniform(0.1, 2, n) + 0j, 0)
    return Z, io.astype(np.int64), kept.astype(np.int64), load.astype(complex)


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_schur_backends_agree(seed):
    args = _case(seed)
    a = kernels.schur_sweep_numpy(*args)
    b = kernels.schur_sweep_numba(*args)
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 1e-13


@needs_numba
def test_schur_backends_empty_kept():
    Z, io, _, _ = _case(0)
    empty = np.zeros(0, dtype=np.int64)
    a = kernels.schur_sweep_numpy(Z, io, empty, np.zeros(0, complex))
    b = kernels.schur_sweep_numba(Z, io, empty, np.zeros(0, complex))
    assert np.array_equal(a, b)
    assert np.array_equal(a, Z[:, io][:, :, io])


@needs_numba
def test_stamp_backends_agree():
    rng = np.random.default_rng(0)
    n, nb, F = 12, 40, 3
    a = rng.integers(-1, n, nb)
    b = rng.integers(-1, n, nb)
    y = rng.standard_normal((F, nb)) + 1j * rng.standard_normal((F, nb))
    A = kernels.stamp_branches_numpy(n, a, b, y)
    B = kernels.stamp_branches_numba(n, a, b, y)
    assert np.allclose(A, B, rtol=0, atol=1e-13)
    assert np.allclose(A, A.transpose(0, 2, 1))


def test_stamp_single_branch():
    Y = kernels.stamp_branches_numpy(2, np.array([0, 1]), np.array([1, -1]), np.array([[2.0 + 0j, 3.0]]))
    assert np.array_equal(Y[0], np.array([[2, -2], [-2, 5]], dtype=complex))


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, MAPES_KERNELS="numpy")
    code = "from mapes import kernels; print(kernels.BACKEND, kernels.schur_sweep is kernels.schur_sweep_numpy)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_numpy_backend_end_to_end(tmp_path):
    env = dict(os.environ, MAPES_KERNELS="numpy")
    code = (
        "import numpy as np\n"
        "from mapes import *\n"
        "from mapes.synth import generate, extract_prior, oracle_solve\n"
        "sp = DesignSpace(3, 3, 1); topo = enumerate_ports(sp)\n"
        "net = generate(topo, seed=2); f = np.linspace(1e9, 50e9, 4)\n"
        "prior = extract_prior(net, f); p = random_pattern(sp, 0.7, 1)\n"
        "a = evaluate(prior, p, [28, 39]).data; b = oracle_solve(net, p, [28, 39], freqs=f).data\n"
        "print(np.max(np.abs(a - b) / np.abs(b)))\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert float(out.stdout) < 1e-9
