# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython convolution kernels: direct-loop twins of _kernels_py.

Same signatures and float64 contract as the numpy backend; selection happens
in predrive.nn.kernels at import time. Padding bounds are hoisted out of the
hot loops, and each strided input row is gathered into a contiguous scratch
buffer once per filter tap and reused across all filters, so the innermost
loops are branch-free contiguous AXPY/dot kernels the C compiler vectorizes.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _lo(Py_ssize_t tap, Py_ssize_t pad,
                           Py_ssize_t stride) nogil:
    # smallest output index whose input index tap + out*stride - pad >= 0
    if tap >= pad:
        return 0
    return (pad - tap + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t tap, Py_ssize_t pad, Py_ssize_t stride,
                           Py_ssize_t n_in, Py_ssize_t n_out) nogil:
    # one past the largest output index with tap + out*stride - pad <= n_in-1
    cdef Py_ssize_t top = n_in - 1 - tap + pad
    if top < 0:
        return 0
    top = top // stride + 1
    return n_out if n_out < top else top


def conv2d_forward(cnp.ndarray[cnp.float64_t, ndim=4] x,
                   cnp.ndarray[cnp.float64_t, ndim=4] w,
                   int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=4] y = np.zeros((B, F, Ho, Wo))
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w)
    cdef double[:, :, :, ::1] yv = y
    cdef double[::1] buf = np.empty(max(Wo, 1))
    cdef Py_ssize_t b, f, c, i, j, u, v, hi, i0, i1, j0, j1, base
    cdef double wfc
    with nogil:
        for b in range(B):
            for c in range(C):
                for u in range(kh):
                    i0 = _lo(u, pad, stride)
                    i1 = _hi(u, pad, stride, H, Ho)
                    for v in range(kw):
                        j0 = _lo(v, pad, stride)
                        j1 = _hi(v, pad, stride, W, Wo)
                        base = v - pad
                        for i in range(i0, i1):
                            hi = i * stride + u - pad
                            for j in range(j0, j1):
                                buf[j] = xv[b, c, hi, j * stride + base]
                            for f in range(F):
                                wfc = wv[f, c, u, v]
                                for j in range(j0, j1):
                                    yv[b, f, i, j] += wfc * buf[j]
    return y


def conv2d_bwd_weights(cnp.ndarray[cnp.float64_t, ndim=4] x,
                       cnp.ndarray[cnp.float64_t, ndim=4] dy,
                       int stride, int pad, int kh, int kw):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = dy.shape[1], Ho = dy.shape[2], Wo = dy.shape[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=4] dw = np.zeros((F, C, kh, kw))
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x)
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(dy)
    cdef double[:, :, :, ::1] dwv = dw
    cdef double[::1] buf = np.empty(max(Wo, 1))
    cdef Py_ssize_t b, f, c, i, j, u, v, hi, i0, i1, j0, j1, base
    cdef double acc
    with nogil:
        for b in range(B):
            for c in range(C):
                for u in range(kh):
                    i0 = _lo(u, pad, stride)
                    i1 = _hi(u, pad, stride, H, Ho)
                    for v in range(kw):
                        j0 = _lo(v, pad, stride)
                        j1 = _hi(v, pad, stride, W, Wo)
                        base = v - pad
                        for i in range(i0, i1):
                            hi = i * stride + u - pad
                            for j in range(j0, j1):
                                buf[j] = xv[b, c, hi, j * stride + base]
                            for f in range(F):
                                acc = 0.0
                                for j in range(j0, j1):
                                    acc += buf[j] * gv[b, f, i, j]
                                dwv[f, c, u, v] += acc
    return dw


def conv2d_bwd_input(cnp.ndarray[cnp.float64_t, ndim=4] dy,
                     cnp.ndarray[cnp.float64_t, ndim=4] w,
                     int stride, int pad, int h_in, int w_in):
    cdef Py_ssize_t B = dy.shape[0], F = dy.shape[1], Ho = dy.shape[2], Wo = dy.shape[3]
    cdef Py_ssize_t C = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=4] dx = np.zeros((B, C, h_in, w_in))
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(dy)
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w)
    cdef double[:, :, :, ::1] dxv = dx
    cdef double[::1] buf = np.empty(max(Wo, 1))
    cdef Py_ssize_t b, f, c, i, j, u, v, hi, i0, i1, j0, j1, base
    cdef double wfc
    with nogil:
        for b in range(B):
            for c in range(C):
                for u in range(kh):
                    i0 = _lo(u, pad, stride)
                    i1 = _hi(u, pad, stride, h_in, Ho)
                    for v in range(kw):
                        j0 = _lo(v, pad, stride)
                        j1 = _hi(v, pad, stride, w_in, Wo)
                        base = v - pad
                        for i in range(i0, i1):
                            hi = i * stride + u - pad
                            for j in range(j0, j1):
                                buf[j] = 0.0
                            for f in range(F):
                                wfc = wv[f, c, u, v]
                                for j in range(j0, j1):
                                    buf[j] += wfc * gv[b, f, i, j]
                            for j in range(j0, j1):
                                dxv[b, c, hi, j * stride + base] += buf[j]
    return dx
