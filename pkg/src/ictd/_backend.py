"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba is importable and ``ICTD_DISABLE_NUMBA`` is
unset (or set to ``0``/``false``). Both paths compute the same quantities;
results agree to rounding (summation order differs), not bitwise.
"""
from __future__ import annotations

import os

import numpy as np

_FALSEY = {"", "0", "false", "no", "off"}


def _numba_requested() -> bool:
    return os.environ.get("ICTD_DISABLE_NUMBA", "").strip().lower() in _FALSEY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


# -- pure numpy ---------------------------------------------------------------

def gram_numpy(keys: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Inner products between columns: ``out[j, i] = keys[:, j] @ queries[:, i]``."""
    return keys.T @ queries


def residual_sweep_numpy(k_ctx, k_next, k_query, k_pad, b0, head1, head2):
    layers = head1.shape[0]
    n = b0.shape[0]
    n_query = k_query.shape[1]
    b_trace = np.empty((layers + 1, n))
    e_trace = np.empty((layers + 1, n_query))
    b = b0.copy()
    e = np.zeros(n_query)
    b_trace[0] = b
    e_trace[0] = e
    for ell in range(layers):
        c1 = head1[ell]
        c2 = head2[ell]
        e = e + (c2 * (b @ k_pad) + c1 * (b @ k_query))
        b = b + (c2 * (b @ k_next) + c1 * (b @ k_ctx))
        b_trace[ell + 1] = b
        e_trace[ell + 1] = e
    return b_trace, e_trace


# -- numba ----------------------------------------------------------------------

if HAVE_NUMBA:

    @_numba.njit(cache=True, fastmath=False)
    def gram_numba(keys, queries):
        d, p = keys.shape
        q = queries.shape[1]
        out = np.zeros((p, q))
        for j in range(p):
            for i in range(q):
                acc = 0.0
                for r in range(d):
                    acc += keys[r, j] * queries[r, i]
                out[j, i] = acc
        return out

    @_numba.njit(cache=True, fastmath=False)
    def residual_sweep_numba(k_ctx, k_next, k_query, k_pad, b0, head1, head2):
        layers = head1.shape[0]
        n = b0.shape[0]
        n_query = k_query.shape[1]
        b_trace = np.empty((layers + 1, n))
        e_trace = np.zeros((layers + 1, n_query))
        b = b0.copy()
        e = np.zeros(n_query)
        b_trace[0, :] = b
        acc_q = np.empty(n_query)
        upd = np.empty(n)
        for ell in range(layers):
            c1 = head1[ell]
            c2 = head2[ell]
            # row-major sweeps: k[j, :] is contiguous
            pad_acc = 0.0
            acc_q[:] = 0.0
            upd[:] = 0.0
            for j in range(n):
                bj = b[j]
                pad_acc += bj * k_pad[j]
                for i in range(n_query):
                    acc_q[i] += bj * k_query[j, i]
                for i in range(n):
                    upd[i] += bj * (c2 * k_next[j, i] + c1 * k_ctx[j, i])
            for i in range(n_query):
                e[i] += c2 * pad_acc + c1 * acc_q[i]
            for i in range(n):
                b[i] += upd[i]
            b_trace[ell + 1, :] = b
            e_trace[ell + 1, :] = e
        return b_trace, e_trace

else:  # pragma: no cover
    gram_numba = None
    residual_sweep_numba = None


def gram(keys: np.ndarray, queries: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    use = USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if use:
        return gram_numba(keys, queries)
    return gram_numpy(keys, queries)


def residual_sweep(k_ctx, k_next, k_query, k_pad, b0, head1, head2, use_numba: bool | None = None):
    """Run the last-row recursion of the constructed transformer.

    ``head1[l]`` and ``head2[l]`` are the effective scalar gains of the two heads in
    layer ``l`` (value-matrix corner times residual scale). Kernel matrices are
    indexed ``[key, query]``. Returns the residual trace ``(L+1, n)`` and the
    query-entry trace ``(L+1, n_query)``.
    """
    use = USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    args = [np.ascontiguousarray(a, dtype=np.float64)
            for a in (k_ctx, k_next, k_query, k_pad, b0, head1, head2)]
    if use:
        return residual_sweep_numba(*args)
    return residual_sweep_numpy(*args)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
