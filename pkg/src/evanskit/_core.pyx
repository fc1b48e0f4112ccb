# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled backend for stiff mode-block propagation.

Same contract as evanskit._integrate (the numpy reference): adaptive
Dormand-Prince 4(5) on Theta(x) W' = (N(x) - lam*S) W with QR
renormalization into (M, logs) bookkeeping.  All hot-loop arithmetic is
C on small stack-free buffers; no Python objects are touched between
steps.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, sqrt

cnp.import_array()

STATUS_OK = 0
STATUS_STEP_COLLAPSE = 1
STATUS_NON_FINITE = 2
STATUS_RANK_DROP = 3

cdef int ST_OK = 0
cdef int ST_STEP_COLLAPSE = 1
cdef int ST_NON_FINITE = 2
cdef int ST_RANK_DROP = 3

DEF NORM_HI = 1e2
DEF NORM_LO = 1e-2
DEF ORTH_EVERY = 1000

cdef double[7] C_NODES
C_NODES = [0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0]

cdef double[6][6] A_COEF
A_COEF[0][:] = [0, 0, 0, 0, 0, 0]
A_COEF[1][:] = [1.0 / 5, 0, 0, 0, 0, 0]
A_COEF[2][:] = [3.0 / 40, 9.0 / 40, 0, 0, 0, 0]
A_COEF[3][:] = [44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0]
A_COEF[4][:] = [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561,
                -212.0 / 729, 0, 0]
A_COEF[5][:] = [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                -5103.0 / 18656, 0]

cdef double[6] B_COEF
B_COEF = [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
          11.0 / 84]

cdef double[7] E_COEF
E_COEF = [71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
          -17253.0 / 339200, 22.0 / 525, -1.0 / 40]


cdef inline int _interval(double[::1] bp, double x) noexcept nogil:
    cdef int lo = 0, hi = bp.shape[0] - 2, mid
    if x <= bp[0]:
        return 0
    if x >= bp[bp.shape[0] - 1]:
        return hi
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if bp[mid] <= x:
            lo = mid
        else:
            hi = mid - 1
    return lo


cdef inline void _rhs(double[::1] bp,
                      double complex[:, :, :, ::1] cN,
                      double[:, :, ::1] cd,
                      int n_lam, double complex lam, double x,
                      double complex[:, ::1] W,
                      double complex[:, ::1] out,
                      double complex[:, ::1] Nbuf,
                      double[::1] dbuf) noexcept nogil:
    cdef int seg = _interval(bp, x)
    cdef double t = x - bp[seg]
    cdef int m = W.shape[0], k = W.shape[1]
    cdef int i, j, c
    cdef double complex acc
    for i in range(m):
        dbuf[i] = ((cd[seg, 0, i] * t + cd[seg, 1, i]) * t
                   + cd[seg, 2, i]) * t + cd[seg, 3, i]
        for j in range(m):
            Nbuf[i, j] = ((cN[seg, 0, i, j] * t + cN[seg, 1, i, j]) * t
                          + cN[seg, 2, i, j]) * t + cN[seg, 3, i, j]
    for i in range(m):
        for j in range(k):
            acc = 0
            for c in range(m):
                acc = acc + Nbuf[i, c] * W[c, j]
            if i < n_lam:
                acc = acc - lam * W[i, j]
            out[i, j] = acc / dbuf[i]


cdef inline double _cabs2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef int _renorm(double complex[:, ::1] W, double complex[:, ::1] M,
                 double[::1] logs, double complex[:, ::1] R,
                 double complex[:, ::1] tmp) noexcept nogil:
    """Modified Gram-Schmidt with positive diagonal; returns 0 on rank drop."""
    cdef int m = W.shape[0], k = W.shape[1]
    cdef int i, j, l, rep
    cdef double complex s
    cdef double nrm, dmax
    for i in range(k):
        for j in range(k):
            R[i, j] = 0
    dmax = 0.0
    for j in range(k):
        for rep in range(2):
            for i in range(j):
                s = 0
                for l in range(m):
                    s = s + W[l, i].conjugate() * W[l, j]
                R[i, j] = R[i, j] + s
                for l in range(m):
                    W[l, j] = W[l, j] - s * W[l, i]
        nrm = 0.0
        for l in range(m):
            nrm += _cabs2(W[l, j])
        nrm = sqrt(nrm)
        if nrm > dmax:
            dmax = nrm
        if nrm <= 1e-290 or nrm < 1e-15 * (dmax if dmax > 1.0 else 1.0):
            return 0
        R[j, j] = nrm
        for l in range(m):
            W[l, j] = W[l, j] / nrm
    # M <- R @ M, then unit-normalize columns into logs
    for i in range(k):
        for j in range(k):
            s = 0
            for l in range(i, k):
                s = s + R[i, l] * M[l, j]
            tmp[i, j] = s
    for j in range(k):
        nrm = 0.0
        for i in range(k):
            nrm += _cabs2(tmp[i, j])
        nrm = sqrt(nrm)
        if nrm <= 0.0:
            return 0
        for i in range(k):
            M[i, j] = tmp[i, j] / nrm
        logs[j] = logs[j] + log(nrm)
    return 1


def integrate_segment(bp_in, cN_in, cd_in, int n_lam, double complex lam,
                      W_in, M_in, logs_in, double x_from, double x_to,
                      double rtol, double atol, int max_steps):
    """Mirror of evanskit._integrate.integrate_segment (see its docstring)."""
    cdef double[::1] bp = np.ascontiguousarray(bp_in, dtype=float)
    cdef double complex[:, :, :, ::1] cN = np.ascontiguousarray(
        cN_in, dtype=complex)
    cdef double[:, :, ::1] cd = np.ascontiguousarray(cd_in, dtype=float)

    W_arr = np.array(W_in, dtype=complex, order="C")
    M_arr = np.array(M_in, dtype=complex, order="C")
    logs_arr = np.array(logs_in, dtype=float)
    cdef double complex[:, ::1] W = W_arr
    cdef double complex[:, ::1] M = M_arr
    cdef double[::1] logs = logs_arr

    cdef int m = W.shape[0], k = W.shape[1]
    if x_to == x_from:
        return W_arr, M_arr, logs_arr, ST_OK, 0, 0, 0

    stage_arr = np.empty((7, m, k), dtype=complex)
    cdef double complex[:, :, ::1] stage = stage_arr
    work = np.empty((4, m, k), dtype=complex)
    cdef double complex[:, ::1] Ws = work[0]
    cdef double complex[:, ::1] err = work[1]
    cdef double complex[:, ::1] Nbuf = np.empty((m, m), dtype=complex)
    cdef double[::1] dbuf = np.empty(m, dtype=float)
    cdef double complex[:, ::1] Rbuf = np.empty((k, k), dtype=complex)
    cdef double complex[:, ::1] Mtmp = np.empty((k, k), dtype=complex)

    cdef double direction = 1.0 if x_to > x_from else -1.0
    cdef double span = fabs(x_to - x_from)
    cdef double x = x_from
    cdef int steps = 0, nfev = 0, renorms = 0, since_orth = 0
    cdef int status = ST_OK
    cdef int i, j, s, c, finite
    cdef double complex acc
    cdef double rate, h, nw, nrm_hi, nrm_lo, err_norm, scale, factor
    cdef double e2, w0n

    with nogil:
        _rhs(bp, cN, cd, n_lam, lam, x, W, stage[0], Nbuf, dbuf)
    nfev = 1
    rate = 0.0
    w0n = 0.0
    for i in range(m):
        for j in range(k):
            rate += _cabs2(stage[0, i, j])
            w0n += _cabs2(W[i, j])
    rate = sqrt(rate) / (sqrt(w0n) if w0n > 1e-300 else 1e-300)
    if rate < 1e-3:
        rate = 1e-3
    h = 0.1 / rate
    if h > span:
        h = span
    h = h * direction

    with nogil:
        while (x_to - x) * direction > 0:
            if steps >= max_steps:
                status = ST_STEP_COLLAPSE
                break
            if fabs(h) < 1e-14 * (fabs(x) if fabs(x) > 1.0 else 1.0):
                status = ST_STEP_COLLAPSE
                break
            if (x + h - x_to) * direction > 0:
                h = x_to - x

            for s in range(1, 7):
                for i in range(m):
                    for j in range(k):
                        acc = 0
                        if s < 6:
                            for c in range(s):
                                acc = acc + A_COEF[s][c] * stage[c, i, j]
                        else:
                            for c in range(6):
                                acc = acc + B_COEF[c] * stage[c, i, j]
                        Ws[i, j] = W[i, j] + h * acc
                _rhs(bp, cN, cd, n_lam, lam, x + C_NODES[s] * h,
                     Ws, stage[s], Nbuf, dbuf)
            nfev += 6

            err_norm = 0.0
            finite = 1
            for i in range(m):
                for j in range(k):
                    acc = 0
                    for c in range(7):
                        acc = acc + E_COEF[c] * stage[c, i, j]
                    err[i, j] = h * acc
                    e2 = _cabs2(Ws[i, j]) + _cabs2(err[i, j])
                    if not (e2 == e2 and e2 < 1e600):
                        finite = 0
            if not finite:
                status = ST_NON_FINITE
                break
            for i in range(m):
                for j in range(k):
                    scale = sqrt(_cabs2(W[i, j]))
                    nw = sqrt(_cabs2(Ws[i, j]))
                    if nw > scale:
                        scale = nw
                    scale = atol + rtol * scale
                    nw = sqrt(_cabs2(err[i, j])) / scale
                    err_norm += nw * nw
            err_norm = sqrt(err_norm / (m * k))

            if err_norm <= 1.0:
                x = x + h
                for i in range(m):
                    for j in range(k):
                        W[i, j] = Ws[i, j]
                        stage[0, i, j] = stage[6, i, j]
                steps += 1
                since_orth += 1
                nrm_hi = 0.0
                nrm_lo = 1e308
                for j in range(k):
                    nw = 0.0
                    for i in range(m):
                        nw += _cabs2(W[i, j])
                    nw = sqrt(nw)
                    if nw > nrm_hi:
                        nrm_hi = nw
                    if nw < nrm_lo:
                        nrm_lo = nw
                if (nrm_hi > NORM_HI or nrm_lo < NORM_LO
                        or since_orth >= ORTH_EVERY):
                    if not _renorm(W, M, logs, Rbuf, Mtmp):
                        status = ST_RANK_DROP
                        break
                    _rhs(bp, cN, cd, n_lam, lam, x, W, stage[0], Nbuf, dbuf)
                    nfev += 1
                    renorms += 1
                    since_orth = 0
            if err_norm > 0:
                factor = 0.9 * err_norm ** -0.2
            else:
                factor = 5.0
            if factor > 5.0:
                factor = 5.0
            if factor < 0.2:
                factor = 0.2
            h = h * factor

    return W_arr, M_arr, logs_arr, status, steps, nfev, renorms
