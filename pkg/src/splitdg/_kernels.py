"""Sum-factorization kernels.

Every volume and face integral in the package reduces to applying one small
1D matrix per reference axis to a batch of tensor-product coefficient blocks.
Two backends implement that contraction:

* ``numba``: explicit loops compiled with ``@njit`` (default when numba imports)
* ``numpy``: chained ``matmul`` calls

Set ``SPLITDG_BACKEND=numpy`` in the environment to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("SPLITDG_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"SPLITDG_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and numba is not None) else "numpy"


def _apply_2d_numpy(data, m0, m1):
    tmp = data @ m1.T
    return np.matmul(m0, tmp)


def _apply_3d_numpy(data, m0, m1, m2):
    b, n0, n1, _ = data.shape
    tmp = data @ m2.T
    k2 = tmp.shape[-1]
    tmp = np.matmul(m1, tmp.reshape(b * n0, n1, k2))
    k1 = tmp.shape[1]
    tmp = np.matmul(m0, tmp.reshape(b, n0, k1 * k2))
    return tmp.reshape(b, m0.shape[0], k1, k2)


if numba is not None:

    @numba.njit(cache=True, fastmath=False)
    def _apply_2d_numba(data, m0, m1):
        nb, n0, n1 = data.shape
        k0 = m0.shape[0]
        k1 = m1.shape[0]
        out = np.empty((nb, k0, k1))
        tmp = np.empty((n0, k1))
        for b in range(nb):
            for i in range(n0):
                for q in range(k1):
                    s = 0.0
                    for j in range(n1):
                        s += m1[q, j] * data[b, i, j]
                    tmp[i, q] = s
            for p in range(k0):
                for q in range(k1):
                    s = 0.0
                    for i in range(n0):
                        s += m0[p, i] * tmp[i, q]
                    out[b, p, q] = s
        return out

    @numba.njit(cache=True, fastmath=False)
    def _apply_3d_numba(data, m0, m1, m2):
        nb, n0, n1, n2 = data.shape
        k0 = m0.shape[0]
        k1 = m1.shape[0]
        k2 = m2.shape[0]
        out = np.empty((nb, k0, k1, k2))
        t2 = np.empty((n0, n1, k2))
        t1 = np.empty((n0, k1, k2))
        for b in range(nb):
            for i in range(n0):
                for j in range(n1):
                    for r in range(k2):
                        s = 0.0
                        for l in range(n2):
                            s += m2[r, l] * data[b, i, j, l]
                        t2[i, j, r] = s
            for i in range(n0):
                for q in range(k1):
                    for r in range(k2):
                        s = 0.0
                        for j in range(n1):
                            s += m1[q, j] * t2[i, j, r]
                        t1[i, q, r] = s
            for p in range(k0):
                for q in range(k1):
                    for r in range(k2):
                        s = 0.0
                        for i in range(n0):
                            s += m0[p, i] * t1[i, q, r]
                        out[b, p, q, r] = s
        return out


def tensor_apply(data, mats, backend=None):
    """Apply ``mats[a]`` along reference axis ``a`` of every block in ``data``.

    Parameters
    ----------
    data : ndarray, shape (..., n_0, ..., n_{d-1})
        Leading axes are treated as a flat batch.
    mats : sequence of ndarray
        One ``(m_a, n_a)`` matrix per trailing axis; ``d`` is 2 or 3.

    Returns
    -------
    ndarray, shape (..., m_0, ..., m_{d-1})
    """
    dim = len(mats)
    lead = data.shape[: data.ndim - dim]
    flat = np.ascontiguousarray(data, dtype=np.float64).reshape((-1,) + data.shape[data.ndim - dim:])
    mats = [np.ascontiguousarray(m, dtype=np.float64) for m in mats]
    use = backend or BACKEND
    if dim == 2:
        fn = _apply_2d_numba if use == "numba" else _apply_2d_numpy
        out = fn(flat, mats[0], mats[1])
    elif dim == 3:
        fn = _apply_3d_numba if use == "numba" else _apply_3d_numpy
        out = fn(flat, mats[0], mats[1], mats[2])
    else:
        raise ValueError(f"tensor_apply supports 2 or 3 axes, got {dim}")
    return out.reshape(lead + out.shape[1:])
