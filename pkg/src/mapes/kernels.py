"""Hot numeric kernels, each in a numba and a numpy flavour.

The public names (``schur_sweep``, ``stamp_branches``) dispatch to the
backend chosen in :mod:`mapes._jit`. Both flavours are always importable
so tests and the benchmark can compare them directly.
"""
import numpy as np

from ._jit import BACKEND, HAVE_NUMBA, njit

__all__ = [
    "BACKEND",
    "schur_sweep",
    "schur_sweep_numpy",
    "schur_sweep_numba",
    "stamp_branches",
    "stamp_branches_numpy",
    "stamp_branches_numba",
]


# --------------------------------------------------------------------------
# Schur-complement reduction over a frequency sweep
# --------------------------------------------------------------------------

def schur_sweep_numpy(Z, io_idx, kept_idx, kept_load):
    """Reduce ``Z[f]`` onto ``io_idx`` with ``kept_idx`` ports loaded.

    Z : (F, Q, Q) complex
    io_idx : (K,) int, kept_idx : (n,) int, kept_load : (n,) complex
    Returns (F, K, K) complex:
    ``Z_io,io - Z_io,kept (Z_kept,kept + diag(load))^-1 Z_kept,io``.
    """
    F = Z.shape[0]
    K = io_idx.shape[0]
    out = np.empty((F, K, K), dtype=np.complex128)
    n = kept_idx.shape[0]
    ix_io = np.ix_(io_idx, io_idx)
    if n == 0:
        for f in range(F):
            out[f] = Z[f][ix_io]
        return out
    ix_kk = np.ix_(kept_idx, kept_idx)
    ix_ki = np.ix_(kept_idx, io_idx)
    ix_ik = np.ix_(io_idx, kept_idx)
    diag = np.arange(n)
    for f in range(F):
        Zf = Z[f]
        A = Zf[ix_kk]
        A[diag, diag] += kept_load
        X = np.linalg.solve(A, Zf[ix_ki])
        out[f] = Zf[ix_io] - Zf[ix_ik] @ X
    return out


@njit
def _schur_sweep_jit(Z, io_idx, kept_idx, kept_load):
    F = Z.shape[0]
    K = io_idx.shape[0]
    n = kept_idx.shape[0]
    out = np.empty((F, K, K), dtype=np.complex128)
    A = np.empty((n, n), dtype=np.complex128)
    B = np.empty((n, K), dtype=np.complex128)
    C = np.empty((K, n), dtype=np.complex128)
    for f in range(F):
        for r in range(K):
            for c in range(K):
                out[f, r, c] = Z[f, io_idx[r], io_idx[c]]
        if n == 0:
            continue
        for r in range(n):
            zr = kept_idx[r]
            for c in range(n):
                A[r, c] = Z[f, zr, kept_idx[c]]
            A[r, r] += kept_load[r]
            for c in range(K):
                B[r, c] = Z[f, zr, io_idx[c]]
        for r in range(K):
            zr = io_idx[r]
            for c in range(n):
                C[r, c] = Z[f, zr, kept_idx[c]]
        X = np.linalg.solve(A, B)
        out[f] -= C @ X
    return out


def schur_sweep_numba(Z, io_idx, kept_idx, kept_load):
    if not HAVE_NUMBA:
        raise RuntimeError("numba kernels are disabled (MAPES_KERNELS=numpy or numba missing)")
    return _schur_sweep_jit(
        np.ascontiguousarray(Z, dtype=np.complex128),
        np.ascontiguousarray(io_idx, dtype=np.int64),
        np.ascontiguousarray(kept_idx, dtype=np.int64),
        np.ascontiguousarray(kept_load, dtype=np.complex128),
    )


# --------------------------------------------------------------------------
# Nodal admittance stamping
# --------------------------------------------------------------------------

def stamp_branches_numpy(n_nodes, node_a, node_b, y):
    """Stamp two-terminal admittances into a (F, n, n) nodal matrix.

    ``node_a``/``node_b`` are (nb,) ints with -1 meaning ground;
    ``y`` is (F, nb) complex.
    """
    F = y.shape[0]
    Y = np.zeros((F, n_nodes + 1, n_nodes + 1), dtype=np.complex128)
    a = np.where(node_a < 0, n_nodes, node_a)
    b = np.where(node_b < 0, n_nodes, node_b)
    for f in range(F):
        Yf = Y[f]
        yf = y[f]
        np.add.at(Yf, (a, a), yf)
        np.add.at(Yf, (b, b), yf)
        np.add.at(Yf, (a, b), -yf)
        np.add.at(Yf, (b, a), -yf)
    return np.ascontiguousarray(Y[:, :n_nodes, :n_nodes])


@njit
def _stamp_branches_jit(n_nodes, node_a, node_b, y):
    F = y.shape[0]
    nb = node_a.shape[0]
    Y = np.zeros((F, n_nodes, n_nodes), dtype=np.complex128)
    for f in range(F):
        for k in range(nb):
            a = node_a[k]
            b = node_b[k]
            v = y[f, k]
            if a >= 0:
                Y[f, a, a] += v
            if b >= 0:
                Y[f, b, b] += v
            if a >= 0 and b >= 0:
                Y[f, a, b] -= v
                Y[f, b, a] -= v
    return Y


def stamp_branches_numba(n_nodes, node_a, node_b, y):
    if not HAVE_NUMBA:
        raise RuntimeError("numba kernels are disabled (MAPES_KERNELS=numpy or numba missing)")
    return _stamp_branches_jit(
        int(n_nodes),
        np.ascontiguousarray(node_a, dtype=np.int64),
        np.ascontiguousarray(node_b, dtype=np.int64),
        np.ascontiguousarray(y, dtype=np.complex128),
    )


if BACKEND == "numba":
    schur_sweep = schur_sweep_numba
    stamp_branches = stamp_branches_numba
else:
    schur_sweep = schur_sweep_numpy
    stamp_branches = stamp_branches_numpy
