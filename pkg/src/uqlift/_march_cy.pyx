# cython: boundscheck=False, wraparound=False, cdivision=True, nonecheck=False
"""Compiled explicit-march kernel: fused CSR matvec, boundary add, finiteness
check, and slice recording, with no per-step interpreter dispatch."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite


def march_csr(double[::1] data, long long[::1] indices, long long[::1] indptr,
              double[::1] f, bint has_f, double[::1] u0, long long n_steps,
              long long[::1] record, double[:, ::1] out):
    """Returns 0 on success or the 1-based index of the first unstable step."""
    cdef Py_ssize_t m = u0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.array(u0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.empty(m, dtype=np.float64)
    cdef double[::1] x = xa
    cdef double[::1] y = ya
    cdef double[::1] tmp
    cdef Py_ssize_t nrec = record.shape[0]
    cdef Py_ssize_t r = 0
    cdef long long step
    cdef Py_ssize_t i, jj
    cdef double acc
    cdef bint bad

    if nrec > 0 and record[0] == 0:
        for i in range(m):
            out[0, i] = x[i]
        r = 1
    for step in range(1, n_steps + 1):
        bad = 0
        for i in range(m):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc += data[jj] * x[indices[jj]]
            if has_f:
                acc += f[i]
            y[i] = acc
        for i in range(m):
            if not isfinite(y[i]):
                bad = 1
                break
        if bad:
            return step
        tmp = x
        x = y
        y = tmp
        if r < nrec and record[r] == step:
            for i in range(m):
                out[r, i] = x[i]
            r += 1
    return 0
