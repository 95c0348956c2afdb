# cython: language_level=3
"""Compiled versions of the two hot loops.

Both functions mirror ``breakbayes._pykernels`` exactly; see that module for
the algebra.  Inputs are assumed validated and C-contiguous float64/int64.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()


def break_sweep(
    const double[::1] e,
    const double[:, ::1] Q,
    const double[:, ::1] Z,
    const long long[::1] ks,
    const double[:, ::1] zz0,
    const double[:, ::1] qz0,
    const double[::1] ze0,
    const double[:, ::1] rinv,
    const double[::1] beta_x,
    double ee,
    double rel_tol,
):
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t dz = Z.shape[1]
    cdef Py_ssize_t dx = Q.shape[1]
    cdef Py_ssize_t p = dx + dz
    cdef Py_ssize_t nk = ks.shape[0]

    ssr_arr = np.empty(nk, dtype=np.float64)
    logdet_arr = np.empty(nk, dtype=np.float64)
    coef_arr = np.empty((nk, p), dtype=np.float64)
    hinv_arr = np.zeros((nk, p, p), dtype=np.float64)
    ok_arr = np.ones(nk, dtype=np.uint8)
    cdef double[::1] ssr = ssr_arr
    cdef double[::1] logdet = logdet_arr
    cdef double[:, ::1] coef = coef_arr
    cdef double[:, :, ::1] hinv = hinv_arr
    cdef unsigned char[::1] ok = ok_arr

    szz_arr = np.array(zz0, dtype=np.float64, copy=True)
    c_arr = np.array(qz0, dtype=np.float64, copy=True)
    b_arr = np.array(ze0, dtype=np.float64, copy=True)
    cdef double[:, ::1] szz = szz_arr
    cdef double[:, ::1] C = c_arr
    cdef double[::1] b = b_arr

    cdef double[:, ::1] L = np.zeros((dz, dz), dtype=np.float64)
    cdef double[:, ::1] Ainv = np.zeros((dz, dz), dtype=np.float64)
    cdef double[:, ::1] B = np.zeros((dx, dz), dtype=np.float64)
    cdef double[:, ::1] BA = np.zeros((dx, dz), dtype=np.float64)
    cdef double[::1] w = np.zeros(dz, dtype=np.float64)
    cdef double[::1] delta = np.zeros(dz, dtype=np.float64)

    cdef Py_ssize_t row = n
    cdef Py_ssize_t j, i, a, c, r, kk
    cdef long long k
    cdef double s, piv, scale, ld, quad, tmp
    cdef bint good

    for j in range(nk - 1, -1, -1):
        k = ks[j]
        # accumulate rows k..row-1 (0-based) into the suffix sums
        while row > k:
            row -= 1
            for a in range(dz):
                tmp = Z[row, a]
                if tmp == 0.0:
                    continue
                b[a] += tmp * e[row]
                for c in range(dz):
                    szz[a, c] += tmp * Z[row, c]
                for i in range(dx):
                    C[i, a] += Q[row, i] * tmp

        scale = 0.0
        for a in range(dz):
            if szz[a, a] > scale:
                scale = szz[a, a]
        good = scale > 0.0
        ld = 0.0
        # Cholesky of A = szz - C'C
        if good:
            for a in range(dz):
                for c in range(a + 1):
                    s = szz[a, c]
                    for i in range(dx):
                        s -= C[i, a] * C[i, c]
                    for r in range(c):
                        s -= L[a, r] * L[c, r]
                    if a == c:
                        if s <= rel_tol * scale:
                            good = False
                            break
                        L[a, a] = sqrt(s)
                        ld += log(s)
                    else:
                        L[a, c] = s / L[c, c]
                if not good:
                    break
        if not good:
            ok[j] = 0
            ssr[j] = np.nan
            logdet[j] = np.nan
            for a in range(p):
                coef[j, a] = np.nan
            continue
        logdet[j] = ld

        # delta = A^{-1} b via two triangular solves
        for a in range(dz):
            s = b[a]
            for r in range(a):
                s -= L[a, r] * w[r]
            w[a] = s / L[a, a]
        quad = 0.0
        for a in range(dz):
            quad += w[a] * w[a]
        for a in range(dz - 1, -1, -1):
            s = w[a]
            for r in range(a + 1, dz):
                s -= L[r, a] * delta[r]
            delta[a] = s / L[a, a]
        s = ee - quad
        ssr[j] = s if s > 0.0 else 0.0

        # A^{-1} column by column
        for c in range(dz):
            for a in range(dz):
                s = 1.0 if a == c else 0.0
                for r in range(a):
                    s -= L[a, r] * w[r]
                w[a] = s / L[a, a]
            for a in range(dz - 1, -1, -1):
                s = w[a]
                for r in range(a + 1, dz):
                    s -= L[r, a] * Ainv[r, c]
                Ainv[a, c] = s / L[a, a]

        # B = rinv @ C, BA = B @ Ainv
        for i in range(dx):
            for a in range(dz):
                s = 0.0
                for r in range(dx):
                    s += rinv[i, r] * C[r, a]
                B[i, a] = s
        for i in range(dx):
            for a in range(dz):
                s = 0.0
                for r in range(dz):
                    s += B[i, r] * Ainv[r, a]
                BA[i, a] = s

        for i in range(dx):
            s = beta_x[i]
            for a in range(dz):
                s -= B[i, a] * delta[a]
            coef[j, i] = s
        for a in range(dz):
            coef[j, dx + a] = delta[a]

        # inverse Gram blocks
        for i in range(dx):
            for r in range(dx):
                s = 0.0
                for kk in range(dx):
                    s += rinv[i, kk] * rinv[r, kk]
                for a in range(dz):
                    s += BA[i, a] * B[r, a]
                hinv[j, i, r] = s
            for a in range(dz):
                hinv[j, i, dx + a] = -BA[i, a]
                hinv[j, dx + a, i] = -BA[i, a]
        for a in range(dz):
            for c in range(dz):
                hinv[j, dx + a, dx + c] = Ainv[a, c]

    return ssr_arr, logdet_arr, coef_arr, hinv_arr, ok_arr.astype(bool)


def walk_argmax(const double[:, ::1] incr):
    cdef Py_ssize_t n = incr.shape[0]
    cdef Py_ssize_t m = incr.shape[1]
    best_arr = np.empty(n, dtype=np.float64)
    arg_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] arg = arg_arr
    cdef Py_ssize_t i, t
    cdef double s, bmax
    cdef long long bidx
    for i in range(n):
        s = 0.0
        bmax = incr[i, 0]
        bidx = 1
        for t in range(m):
            s += incr[i, t]
            if s > bmax:
                bmax = s
                bidx = t + 1
        best[i] = bmax
        arg[i] = bidx
    return best_arr, arg_arr
