# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence.

Same contract as ``_lstm_py``. The per-step matmuls go through BLAS dgemm
with strided leading dimensions so no per-step slices are copied. Gate math
runs over contiguous rows so the compiler can vectorize exp/tanh.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _tanh(double x) noexcept nogil:
    # exp-based form vectorizes with libmvec; saturates to +-1 without NaN
    return 1.0 - 2.0 / (1.0 + exp(2.0 * x))


cdef inline void _activate_row(double* z, int H) noexcept nogil:
    cdef int j
    for j in range(2 * H):
        z[j] = 1.0 / (1.0 + exp(-z[j]))
    for j in range(2 * H, 3 * H):
        z[j] = _tanh(z[j])
    for j in range(3 * H, 4 * H):
        z[j] = 1.0 / (1.0 + exp(-z[j]))


def lstm_forward(xproj, U, hmask, bint reverse):
    cdef double[:, :, ::1] xp = np.ascontiguousarray(xproj, dtype=np.float64)
    cdef double[:, ::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] mask = np.ascontiguousarray(hmask, dtype=np.float64)
    cdef int B = xp.shape[0], T = xp.shape[1], G = xp.shape[2]
    cdef int H = G // 4

    gates_a = np.array(xp, dtype=np.float64, copy=True)
    h_a = np.empty((B, T, H))
    c_a = np.empty((B, T, H))
    hprev_a = np.zeros((B, T, H))
    zero_a = np.zeros(H)
    cdef double[:, :, ::1] gates = gates_a
    cdef double[:, :, ::1] h = h_a
    cdef double[:, :, ::1] c = c_a
    cdef double[:, :, ::1] hprev = hprev_a
    cdef double[::1] zero = zero_a

    cdef int step, t, t_prev, b, j
    cdef double* z
    cdef double* cp
    cdef double* ct
    cdef double* ht
    cdef double* hp
    cdef double* hm
    cdef double* mk
    cdef double one = 1.0
    cdef char transn = b'N'
    cdef int ldb = T * H, ldc = T * G

    with nogil:
        for step in range(T):
            t = T - 1 - step if reverse else step
            t_prev = t + 1 if reverse else t - 1
            if step > 0:
                for b in range(B):
                    hp = &h[b, t_prev, 0]
                    hm = &hprev[b, t, 0]
                    mk = &mask[b, 0]
                    for j in range(H):
                        hm[j] = hp[j] * mk[j]
                # gates[:, t, :] += hprev[:, t, :] @ U   (column-major view)
                dgemm(&transn, &transn, &G, &B, &H, &one,
                      &Uv[0, 0], &G, &hprev[0, t, 0], &ldb,
                      &one, &gates[0, t, 0], &ldc)
            for b in range(B):
                z = &gates[b, t, 0]
                _activate_row(z, H)
                cp = &c[b, t_prev, 0] if step > 0 else &zero[0]
                ct = &c[b, t, 0]
                ht = &h[b, t, 0]
                for j in range(H):
                    ct[j] = z[H + j] * cp[j] + z[j] * z[2 * H + j]
                for j in range(H):
                    ht[j] = z[3 * H + j] * _tanh(ct[j])
    return h_a, c_a, gates_a, hprev_a


def lstm_backward(dh_ext, gates, c, U, hmask, bint reverse):
    cdef double[:, :, ::1] dhe = np.ascontiguousarray(dh_ext, dtype=np.float64)
    cdef double[:, :, ::1] gv = np.ascontiguousarray(gates, dtype=np.float64)
    cdef double[:, :, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] mask = np.ascontiguousarray(hmask, dtype=np.float64)
    cdef int B = gv.shape[0], T = gv.shape[1], G = gv.shape[2]
    cdef int H = G // 4

    dz_a = np.empty((B, T, G))
    dhrec_a = np.zeros((B, H))
    dcn_a = np.zeros((B, H))
    tc_a = np.empty(H)
    dh_a = np.empty(H)
    zero_a = np.zeros(H)
    cdef double[:, :, ::1] dz = dz_a
    cdef double[:, ::1] dhrec = dhrec_a
    cdef double[:, ::1] dcn = dcn_a
    cdef double[::1] tcv = tc_a
    cdef double[::1] dhv = dh_a
    cdef double[::1] zero = zero_a

    cdef int step, t, t_prev, b, j
    cdef double* gr
    cdef double* dr
    cdef double* cr
    cdef double* cp
    cdef double* de
    cdef double* dhr
    cdef double* dcr
    cdef double* mk
    cdef double* tc = &tcv[0]
    cdef double* dh = &dhv[0]
    cdef double dc, ig, fg, gg, og
    cdef double one = 1.0, zero_s = 0.0
    cdef char transn = b'N'
    cdef char transt = b'T'
    cdef int ldb = T * G

    with nogil:
        for step in range(T):
            t = step if reverse else T - 1 - step
            t_prev = t + 1 if reverse else t - 1
            for b in range(B):
                gr = &gv[b, t, 0]
                dr = &dz[b, t, 0]
                cr = &cv[b, t, 0]
                cp = &cv[b, t_prev, 0] if step < T - 1 else &zero[0]
                de = &dhe[b, t, 0]
                dhr = &dhrec[b, 0]
                dcr = &dcn[b, 0]
                for j in range(H):
                    tc[j] = _tanh(cr[j])
                for j in range(H):
                    ig = gr[j]
                    fg = gr[H + j]
                    gg = gr[2 * H + j]
                    og = gr[3 * H + j]
                    dh[j] = de[j] + dhr[j]
                    dc = dcr[j] + dh[j] * og * (1.0 - tc[j] * tc[j])
                    dr[j] = dc * gg * ig * (1.0 - ig)
                    dr[H + j] = dc * cp[j] * fg * (1.0 - fg)
                    dr[2 * H + j] = dc * ig * (1.0 - gg * gg)
                    dr[3 * H + j] = dh[j] * tc[j] * og * (1.0 - og)
                    dcr[j] = dc * fg
            # dhrec = dz[:, t, :] @ U.T   (column-major view)
            dgemm(&transt, &transn, &H, &B, &G, &one,
                  &Uv[0, 0], &G, &dz[0, t, 0], &ldb,
                  &zero_s, &dhrec[0, 0], &H)
            for b in range(B):
                dhr = &dhrec[b, 0]
                mk = &mask[b, 0]
                for j in range(H):
                    dhr[j] = dhr[j] * mk[j]
    return dz_a
