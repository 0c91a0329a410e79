# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors attncomp._kernels._pure function-for-function.  The raw PCG stream
is bit-identical with the fallback; float kernels agree to ~1e-12 relative
(summation order differs).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, log, sin, sqrt

cnp.import_array()

NAME = "compiled"

cdef extern from *:
    """
    #define PCG_MULT 0x5851f42d4c957f2dULL
    """
    unsigned long long PCG_MULT

cdef double TWO_PI = 6.283185307179586476925286766559
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline unsigned int _pcg_output(unsigned long long state) nogil:
    cdef unsigned int xorshifted = <unsigned int>(((state >> 18) ^ state) >> 27)
    cdef unsigned int rot = <unsigned int>(state >> 59)
    return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31))


def pcg_raw32(state, inc, int count):
    """Produce `count` 32-bit outputs; returns (values, advanced state)."""
    cdef unsigned long long s = <unsigned long long>state
    cdef unsigned long long c = <unsigned long long>inc
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] out = np.empty(count, dtype=np.uint32)
    cdef unsigned int[::1] view = out
    cdef int i
    with nogil:
        for i in range(count):
            view[i] = _pcg_output(s)
            s = s * PCG_MULT + c
    return out, int(s)


def pcg_uniforms(state, inc, int count):
    """Doubles in [0, 1) with 53-bit resolution; two 32-bit draws each."""
    cdef unsigned long long s = <unsigned long long>state
    cdef unsigned long long c = <unsigned long long>inc
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double[::1] view = out
    cdef unsigned long long hi, lo
    cdef int i
    with nogil:
        for i in range(count):
            hi = _pcg_output(s)
            s = s * PCG_MULT + c
            lo = _pcg_output(s)
            s = s * PCG_MULT + c
            view[i] = <double>(((hi << 32) | lo) >> 11) * INV_2_53
    return out, int(s)


def pcg_gaussians(state, inc, int count):
    """Standard normals via Box-Muller over consecutive uniform pairs."""
    cdef int pairs = (count + 1) // 2
    u_arr, new_state = pcg_uniforms(state, inc, 2 * pairs)
    cdef double[::1] u = u_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(2 * pairs, dtype=np.float64)
    cdef double[::1] view = out
    cdef double r, theta
    cdef int p
    with nogil:
        for p in range(pairs):
            r = sqrt(-2.0 * log(u[2 * p] + INV_2_53))
            theta = TWO_PI * u[2 * p + 1]
            view[2 * p] = r * cos(theta)
            view[2 * p + 1] = r * sin(theta)
    return out[:count], new_state


def fnv1a64(data):
    """64-bit FNV-1a over a byte string."""
    cdef const unsigned char[::1] view = data
    cdef unsigned long long h = 0xCBF29CE484222325ULL
    cdef Py_ssize_t i, n = view.shape[0]
    with nogil:
        for i in range(n):
            h = (h ^ view[i]) * 0x100000001B3ULL
    return int(h)


def attention_forward(x_q, x_c, w_q, w_k):
    """Scaled dot-product attention weights, averaged over heads.

    Same contract as the pure backend: returns (A, probs).
    """
    cdef double[:, ::1] xq = np.ascontiguousarray(x_q, dtype=np.float64)
    cdef double[:, ::1] xc = np.ascontiguousarray(x_c, dtype=np.float64)
    cdef double[:, :, ::1] wq = np.ascontiguousarray(w_q, dtype=np.float64)
    cdef double[:, :, ::1] wk = np.ascontiguousarray(w_k, dtype=np.float64)

    cdef int m = xq.shape[0], n = xc.shape[0]
    cdef int d_model = xq.shape[1]
    cdef int h_count = wq.shape[0], d_a = wq.shape[2]
    cdef double scale = 1.0 / sqrt(<double>d_a)

    probs_arr = np.empty((h_count, m, n), dtype=np.float64)
    avg_arr = np.zeros((m, n), dtype=np.float64)
    q_arr = np.empty((m, d_a), dtype=np.float64)
    k_arr = np.empty((n, d_a), dtype=np.float64)
    cdef double[:, :, ::1] probs = probs_arr
    cdef double[:, ::1] avg = avg_arr
    cdef double[:, ::1] q = q_arr
    cdef double[:, ::1] k = k_arr

    cdef int h, i, j, t
    cdef double acc, row_max, row_sum, inv_h = 1.0 / h_count
    with nogil:
        for h in range(h_count):
            for i in range(m):
                for t in range(d_a):
                    acc = 0.0
                    for j in range(d_model):
                        acc += xq[i, j] * wq[h, j, t]
                    q[i, t] = acc
            for i in range(n):
                for t in range(d_a):
                    acc = 0.0
                    for j in range(d_model):
                        acc += xc[i, j] * wk[h, j, t]
                    k[i, t] = acc
            for i in range(m):
                row_max = -1e308
                for j in range(n):
                    acc = 0.0
                    for t in range(d_a):
                        acc += q[i, t] * k[j, t]
                    acc *= scale
                    probs[h, i, j] = acc
                    if acc > row_max:
                        row_max = acc
                row_sum = 0.0
                for j in range(n):
                    acc = exp(probs[h, i, j] - row_max)
                    probs[h, i, j] = acc
                    row_sum += acc
                for j in range(n):
                    probs[h, i, j] /= row_sum
                    avg[i, j] += probs[h, i, j] * inv_h
    return avg_arr, probs_arr


def attention_backward(x_q, x_c, w_q, w_k, probs_in, col_grads):
    """Gradients of a column-aggregated loss w.r.t. the projection weights."""
    cdef double[:, ::1] xq = np.ascontiguousarray(x_q, dtype=np.float64)
    cdef double[:, ::1] xc = np.ascontiguousarray(x_c, dtype=np.float64)
    cdef double[:, :, ::1] wq = np.ascontiguousarray(w_q, dtype=np.float64)
    cdef double[:, :, ::1] wk = np.ascontiguousarray(w_k, dtype=np.float64)
    cdef double[:, :, ::1] probs = np.ascontiguousarray(probs_in, dtype=np.float64)
    cdef double[::1] cg = np.ascontiguousarray(col_grads, dtype=np.float64)

    cdef int m = xq.shape[0], n = xc.shape[0]
    cdef int d_model = xq.shape[1]
    cdef int h_count = wq.shape[0], d_a = wq.shape[2]
    cdef double scale = 1.0 / sqrt(<double>d_a)

    d_wq_arr = np.zeros((h_count, d_model, d_a), dtype=np.float64)
    d_wk_arr = np.zeros((h_count, d_model, d_a), dtype=np.float64)
    q_arr = np.empty((m, d_a), dtype=np.float64)
    k_arr = np.empty((n, d_a), dtype=np.float64)
    g_logits_arr = np.empty((m, n), dtype=np.float64)
    g_q_arr = np.empty((m, d_a), dtype=np.float64)
    g_k_arr = np.empty((n, d_a), dtype=np.float64)
    g_row_arr = np.empty(n, dtype=np.float64)
    cdef double[:, :, ::1] d_wq3 = d_wq_arr
    cdef double[:, :, ::1] d_wk3 = d_wk_arr
    cdef double[:, ::1] q = q_arr
    cdef double[:, ::1] k = k_arr
    cdef double[:, ::1] g_logits = g_logits_arr
    cdef double[:, ::1] g_q = g_q_arr
    cdef double[:, ::1] g_k = g_k_arr
    cdef double[::1] g_row = g_row_arr

    cdef int h, i, j, t
    cdef double acc, dot
    with nogil:
        for j in range(n):
            g_row[j] = cg[j] / (m * h_count)
        for h in range(h_count):
            for i in range(m):
                for t in range(d_a):
                    acc = 0.0
                    for j in range(d_model):
                        acc += xq[i, j] * wq[h, j, t]
                    q[i, t] = acc
            for i in range(n):
                for t in range(d_a):
                    acc = 0.0
                    for j in range(d_model):
                        acc += xc[i, j] * wk[h, j, t]
                    k[i, t] = acc
            for i in range(m):
                dot = 0.0
                for j in range(n):
                    dot += probs[h, i, j] * g_row[j]
                for j in range(n):
                    g_logits[i, j] = probs[h, i, j] * (g_row[j] - dot)
            for i in range(m):
                for t in range(d_a):
                    acc = 0.0
                    for j in range(n):
                        acc += g_logits[i, j] * k[j, t]
                    g_q[i, t] = acc * scale
            for j in range(n):
                for t in range(d_a):
                    acc = 0.0
                    for i in range(m):
                        acc += g_logits[i, j] * q[i, t]
                    g_k[j, t] = acc * scale
            for j in range(d_model):
                for t in range(d_a):
                    acc = 0.0
                    for i in range(m):
                        acc += xq[i, j] * g_q[i, t]
                    d_wq3[h, j, t] = acc
                    acc = 0.0
                    for i in range(n):
                        acc += xc[i, j] * g_k[i, t]
                    d_wk3[h, j, t] = acc
    return d_wq_arr, d_wk_arr
