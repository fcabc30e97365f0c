# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels: matrix products through BLAS dgemm, everything
else (bias, ReLU, masks, column sums, Adam) as tight C loops.

Semantics must stay interchangeable with fedkd._kernels_np.
"""

from libc.math cimport pow, sqrt

cimport scipy.linalg.cython_blas as blas


cdef void _gemm(bint trans_a, bint trans_b, int m, int n, int k,
                double alpha, double[:, ::1] a, double[:, ::1] b,
                double beta, double[:, ::1] c) noexcept nogil:
    # Row-major C(m,n) = alpha*op(A)@op(B) + beta*C, via Fortran dgemm on the
    # transposed problem C^T = op(B)^T @ op(A)^T (trans flags carry over).
    cdef char ta = c'T' if trans_a else c'N'
    cdef char tb = c'T' if trans_b else c'N'
    cdef int lda = <int> a.shape[1]
    cdef int ldb = <int> b.shape[1]
    cdef int ldc = <int> c.shape[1]
    blas.dgemm(&tb, &ta, &n, &m, &k, &alpha,
               &b[0, 0], &ldb, &a[0, 0], &lda, &beta, &c[0, 0], &ldc)


cdef void _colsum(double[:, ::1] a, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(a.shape[1]):
        out[j] = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[j] += a[i, j]


def mlp_forward(double[:, ::1] x, double[:, ::1] w1, double[::1] b1,
                double[:, ::1] w2, double[::1] b2,
                double[:, ::1] w3, double[::1] b3,
                double[:, ::1] h1, double[:, ::1] h2, double[:, ::1] out):
    cdef int n = <int> x.shape[0]
    cdef int d = <int> x.shape[1]
    cdef int h = <int> w1.shape[0]
    cdef int c = <int> w3.shape[0]
    cdef Py_ssize_t i, j
    if n == 0:
        return
    with nogil:
        _gemm(0, 1, n, h, d, 1.0, x, w1, 0.0, h1)
        for i in range(n):
            for j in range(h):
                h1[i, j] += b1[j]
                if h1[i, j] < 0.0:
                    h1[i, j] = 0.0
        _gemm(0, 1, n, h, h, 1.0, h1, w2, 0.0, h2)
        for i in range(n):
            for j in range(h):
                h2[i, j] += b2[j]
                if h2[i, j] < 0.0:
                    h2[i, j] = 0.0
        _gemm(0, 1, n, c, h, 1.0, h2, w3, 0.0, out)
        for i in range(n):
            for j in range(c):
                out[i, j] += b3[j]


def mlp_backward(double[:, ::1] x, double[:, ::1] h1, double[:, ::1] h2,
                 double[:, ::1] w2, double[:, ::1] w3, double[:, ::1] g,
                 double[:, ::1] d1, double[:, ::1] d2,
                 double[:, ::1] gw1, double[::1] gb1,
                 double[:, ::1] gw2, double[::1] gb2,
                 double[:, ::1] gw3, double[::1] gb3):
    cdef int n = <int> x.shape[0]
    cdef int d = <int> x.shape[1]
    cdef int h = <int> w2.shape[0]
    cdef int c = <int> w3.shape[0]
    cdef Py_ssize_t i, j
    if n == 0:
        return
    with nogil:
        _gemm(1, 0, c, h, n, 1.0, g, h2, 0.0, gw3)
        _colsum(g, gb3)
        _gemm(0, 0, n, h, c, 1.0, g, w3, 0.0, d2)
        for i in range(n):
            for j in range(h):
                if h2[i, j] <= 0.0:
                    d2[i, j] = 0.0
        _gemm(1, 0, h, h, n, 1.0, d2, h1, 0.0, gw2)
        _colsum(d2, gb2)
        _gemm(0, 0, n, h, h, 1.0, d2, w2, 0.0, d1)
        for i in range(n):
            for j in range(h):
                if h1[i, j] <= 0.0:
                    d1[i, j] = 0.0
        _gemm(1, 0, h, d, n, 1.0, d1, x, 0.0, gw1)
        _colsum(d1, gb1)


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long step, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, <double> step)
    cdef double bc2 = 1.0 - pow(beta2, <double> step)
    with nogil:
        for i in range(n):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
