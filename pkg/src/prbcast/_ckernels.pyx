# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: fused LSTM cell (BLAS dgemm + C loops) and AR(1) filter.

Arrays are C-contiguous float64. Row-major products are expressed as
column-major dgemm calls on the transposed problem.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fmax, fmin
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "cython"


cdef inline double _sig(double a) noexcept nogil:
    # branch-free so the gate loops vectorize; |a| <= 40 keeps exp finite
    return 1.0 / (1.0 + exp(-fmin(fmax(a, -40.0), 40.0)))


cdef inline double _tanh(double a) noexcept nogil:
    return 2.0 / (1.0 + exp(-2.0 * fmin(fmax(a, -20.0), 20.0))) - 1.0


cdef void _rowmajor_gemm(char* ta, char* tb, int m, int n, int k,
                         double* A, int lda, double* B, int ldb,
                         double beta, double* C, int ldc) noexcept nogil:
    cdef double one = 1.0
    dgemm(ta, tb, &m, &n, &k, &one, A, &lda, B, &ldb, &beta, C, &ldc)


def lstm_cell_forward(x, h, c, W, b):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef int B = xv.shape[0]
    cdef int I = xv.shape[1]
    cdef int H = hv.shape[1]
    cdef int K = I + H
    cdef int G = 4 * H
    if Wv.shape[0] != K or Wv.shape[1] != G or bv.shape[0] != G:
        raise ValueError("lstm_cell_forward: weight shape mismatch")
    xh_arr = np.empty((B, K))
    acts_arr = np.empty((B, G))
    h_arr = np.empty((B, H))
    c_arr = np.empty((B, H))
    tc_arr = np.empty((B, H))
    cdef double[:, ::1] xh = xh_arr
    cdef double[:, ::1] a = acts_arr
    cdef double[:, ::1] hn = h_arr
    cdef double[:, ::1] cn = c_arr
    cdef double[:, ::1] tc = tc_arr
    cdef int r, j
    cdef double *ar
    cdef double *cr
    cdef double *tr
    cdef double *hr
    cdef const double *cp
    with nogil:
        for r in range(B):
            for j in range(I):
                xh[r, j] = xv[r, j]
            for j in range(H):
                xh[r, I + j] = hv[r, j]
            for j in range(G):
                a[r, j] = bv[j]
        # acts^T (G x B) = W^T (G x K) @ xh^T (K x B)
        _rowmajor_gemm(b"N", b"N", G, B, K, &Wv[0, 0], G, &xh[0, 0], K, 1.0, &a[0, 0], G)
        for r in range(B):
            ar = &a[r, 0]
            for j in range(2 * H):
                ar[j] = _sig(ar[j])
            for j in range(2 * H, 3 * H):
                ar[j] = _tanh(ar[j])
            for j in range(3 * H, G):
                ar[j] = _sig(ar[j])
            cr = &cn[r, 0]
            tr = &tc[r, 0]
            hr = &hn[r, 0]
            cp = &cv[r, 0]
            for j in range(H):
                cr[j] = ar[H + j] * cp[j] + ar[j] * ar[2 * H + j]
            for j in range(H):
                tr[j] = _tanh(cr[j])
            for j in range(H):
                hr[j] = ar[3 * H + j] * tr[j]
    return h_arr, c_arr, xh_arr, acts_arr, tc_arr


def lstm_cell_backward(dh, dc_out, c, W, xh, acts, tanh_c):
    cdef double[:, ::1] dhv = np.ascontiguousarray(dh, dtype=np.float64)
    cdef double[:, ::1] dcv = np.ascontiguousarray(dc_out, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[:, ::1] xhv = np.ascontiguousarray(xh, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(acts, dtype=np.float64)
    cdef double[:, ::1] tcv = np.ascontiguousarray(tanh_c, dtype=np.float64)
    cdef int B = cv.shape[0]
    cdef int H = cv.shape[1]
    cdef int K = xhv.shape[1]
    cdef int I = K - H
    cdef int G = 4 * H
    da_arr = np.empty((B, G))
    dcp_arr = np.empty((B, H))
    dW_arr = np.empty((K, G))
    db_arr = np.zeros(G)
    dxh_arr = np.empty((B, K))
    cdef double[:, ::1] da = da_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef double[:, ::1] dW = dW_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dxh = dxh_arr
    cdef int r, j
    cdef double ig, fg, gg, og, t, dcell
    with nogil:
        for r in range(B):
            for j in range(H):
                ig = av[r, j]
                fg = av[r, H + j]
                gg = av[r, 2 * H + j]
                og = av[r, 3 * H + j]
                t = tcv[r, j]
                dcell = dcv[r, j] + dhv[r, j] * og * (1.0 - t * t)
                da[r, j] = dcell * gg * ig * (1.0 - ig)
                da[r, H + j] = dcell * cv[r, j] * fg * (1.0 - fg)
                da[r, 2 * H + j] = dcell * ig * (1.0 - gg * gg)
                da[r, 3 * H + j] = dhv[r, j] * t * og * (1.0 - og)
                dcp[r, j] = dcell * fg
            for j in range(G):
                db[j] += da[r, j]
        # dW^T (G x K) = da^T (G x B) @ xh (B x K)
        _rowmajor_gemm(b"N", b"T", G, K, B, &da[0, 0], G, &xhv[0, 0], K, 0.0, &dW[0, 0], G)
        # dxh^T (K x B) = W (K x G) @ da^T (G x B)
        _rowmajor_gemm(b"T", b"N", K, B, G, &Wv[0, 0], G, &da[0, 0], G, 0.0, &dxh[0, 0], K)
    return dxh_arr[:, :I], dxh_arr[:, I:], dcp_arr, dW_arr, db_arr


def ar1_filter(innovations, double coeff):
    cdef double[::1] e = np.ascontiguousarray(innovations, dtype=np.float64)
    cdef Py_ssize_t n = e.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double prev = 0.0
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            prev = coeff * prev + e[t]
            out[t] = prev
    return out_arr
