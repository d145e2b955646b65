# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Bessel tables and the R rho R iteration.

Same algorithms as ``_kernels_py``; see that module for the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma, sqrt, fabs
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

cdef double SERIES_MAX_X = 15.0
cdef double _RESCALE = 1e250


cdef double _series(long order, double x) noexcept nogil:
    cdef double half, q, lt, term, total
    cdef long k
    half = 0.5 * x
    # subnormal x underflows here; I_n is then its x = 0 value
    if half == 0.0:
        return 1.0 if order == 0 else 0.0
    q = half * half
    lt = order * log(half) - lgamma(order + 1.0)
    if lt < -745.0:
        return 0.0
    term = exp(lt)
    total = term
    k = 1
    while True:
        term *= q / (k * (k + order))
        total += term
        if term <= 1e-17 * total:
            break
        k += 1
    return total


cdef long _miller_start(long max_order, double x) noexcept nogil:
    return max_order + <long>x + 40 + 2 * <long>sqrt(40.0 * (max_order + x))


cdef void _miller(long max_order, double x, double* out) noexcept nogil:
    cdef long start = _miller_start(max_order, x)
    cdef long k, j
    cdef double f_next = 0.0, f = 1e-280, f_prev, total = 0.0
    cdef double two_over_x = 2.0 / x
    cdef double scale
    for j in range(max_order + 1):
        out[j] = 0.0
    k = start
    while k > 0:
        f_prev = f_next + k * two_over_x * f
        f_next = f
        f = f_prev
        if k - 1 <= max_order:
            out[k - 1] = f
        if k - 1 > 0:
            total += 2.0 * f
        else:
            total += f
        if fabs(f) > _RESCALE:
            f *= 1.0 / _RESCALE
            f_next *= 1.0 / _RESCALE
            total *= 1.0 / _RESCALE
            for j in range(max_order + 1):
                out[j] *= 1.0 / _RESCALE
        k -= 1
    scale = exp(x) / total
    for j in range(max_order + 1):
        out[j] *= scale


def bessel_i(order, x):
    cdef long n = abs(int(order))
    cdef double xv = float(x)
    cdef cnp.ndarray[double, ndim=1] buf
    if xv <= SERIES_MAX_X or n >= xv:
        return _series(n, xv)
    buf = np.empty(n + 1)
    _miller(n, xv, &buf[0])
    return float(buf[n])


def bessel_i_table(long max_order, x):
    xa = np.asarray(x, dtype=float)
    cdef double[::1] flat = np.ascontiguousarray(xa.ravel())
    cdef Py_ssize_t nx = flat.shape[0]
    out = np.empty((flat.shape[0], max_order + 1))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t j
    cdef long k
    with nogil:
        for j in range(nx):
            if flat[j] <= SERIES_MAX_X:
                for k in range(max_order + 1):
                    o[j, k] = _series(k, flat[j])
            else:
                _miller(max_order, flat[j], &o[j, 0])
    return np.ascontiguousarray(out.T).reshape((max_order + 1,) + xa.shape)


cdef void _matmul(double complex* X, double complex* Y, double complex* out, int d) noexcept nogil:
    # row-major out = X @ Y, via column-major (Y^T X^T)
    cdef char tn = b'N'
    cdef double complex one = 1.0, zero = 0.0
    zgemm(&tn, &tn, &d, &d, &d, &one, Y, &d, X, &d, &zero, out, &d)


cdef double _probs(double complex* A, double complex* sigma, double complex* B,
                   double* f, double* p, int J, int d) noexcept nogil:
    """Fill p_j = <a_j|sigma|a_j>; return sum_j f_j log p_j."""
    cdef char tn = b'N'
    cdef double complex one = 1.0, zero = 0.0
    cdef Py_ssize_t j, k
    cdef double acc, L = 0.0
    cdef double complex a, b
    zgemm(&tn, &tn, &d, &J, &d, &one, sigma, &d, A, &d, &zero, B, &d)
    for j in range(J):
        acc = 0.0
        for k in range(d):
            a = A[j * d + k]
            b = B[j * d + k]
            acc += a.real * b.real + a.imag * b.imag
        if acc < 1e-300:
            acc = 1e-300
        p[j] = acc
        if f[j] > 0.0:
            L += f[j] * log(acc)
    return L


cdef void _hermitize_normalize(double complex* X, int d) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef double complex s
    cdef double tr = 0.0
    for a in range(d):
        for b in range(a, d):
            s = 0.5 * (X[a * d + b] + X[b * d + a].conjugate())
            X[a * d + b] = s
            X[b * d + a] = s.conjugate()
        tr += X[a * d + a].real
    for a in range(d * d):
        X[a] = X[a] / tr


def rrr_iterate(A_in, f_in, sigma0, long max_iter, double tol):
    cdef double complex[:, ::1] A = np.ascontiguousarray(A_in, dtype=complex)
    cdef double[::1] f = np.ascontiguousarray(f_in, dtype=float)
    cdef int J = A.shape[0]
    cdef int d = A.shape[1]
    sigma_arr = np.array(sigma0, dtype=complex, order="C")
    cdef double complex[:, ::1] sigma = sigma_arr
    cdef double complex[:, ::1] cand = np.empty((d, d), dtype=complex)
    cdef double complex[:, ::1] R = np.empty((d, d), dtype=complex)
    cdef double complex[:, ::1] M = np.empty((d, d), dtype=complex)
    cdef double complex[:, ::1] tmp = np.empty((d, d), dtype=complex)
    cdef double complex[:, ::1] B = np.empty((J, d), dtype=complex)
    cdef double complex[:, ::1] Aw = np.empty((J, d), dtype=complex)
    cdef double[::1] p = np.empty(J)
    cdef double[::1] p_new = np.empty(J)
    hist_arr = np.empty(max_iter + 1)
    cdef double[::1] history = hist_arr
    cdef double L, L_new, eps, gain, w
    cdef long it = 0, n_diluted = 0
    cdef bint converged = False
    cdef Py_ssize_t j, k, a
    cdef char tn = b'N', tc = b'C'
    cdef double complex one = 1.0, zero = 0.0

    with nogil:
        L = _probs(&A[0, 0], &sigma[0, 0], &B[0, 0], &f[0], &p[0], J, d)
        history[0] = L
        while it < max_iter:
            for j in range(J):
                w = f[j] / p[j] if f[j] > 0.0 else 0.0
                for k in range(d):
                    Aw[j, k] = w * A[j, k]
            # buffer of R (row-major) = sum_j w_j conj(a_j)^T a_j
            zgemm(&tn, &tc, &d, &d, &J, &one, &Aw[0, 0], &d, &A[0, 0], &d, &zero, &R[0, 0], &d)
            _matmul(&R[0, 0], &sigma[0, 0], &tmp[0, 0], d)
            _matmul(&tmp[0, 0], &R[0, 0], &cand[0, 0], d)
            _hermitize_normalize(&cand[0, 0], d)
            L_new = _probs(&A[0, 0], &cand[0, 0], &B[0, 0], &f[0], &p_new[0], J, d)
            eps = 1.0
            while L_new < L and eps > 1e-12:
                for j in range(d):
                    for k in range(d):
                        M[j, k] = eps * R[j, k] / (1.0 + eps)
                    M[j, j] = M[j, j] + 1.0 / (1.0 + eps)
                _matmul(&M[0, 0], &sigma[0, 0], &tmp[0, 0], d)
                _matmul(&tmp[0, 0], &M[0, 0], &cand[0, 0], d)
                _hermitize_normalize(&cand[0, 0], d)
                L_new = _probs(&A[0, 0], &cand[0, 0], &B[0, 0], &f[0], &p_new[0], J, d)
                eps *= 0.5
                n_diluted += 1
            if L_new < L:
                converged = True
                break
            it += 1
            gain = L_new - L
            for a in range(d * d):
                (&sigma[0, 0])[a] = (&cand[0, 0])[a]
            for j in range(J):
                p[j] = p_new[j]
            L = L_new
            history[it] = L
            if gain < tol:
                converged = True
                break
    return sigma_arr, it, bool(converged), hist_arr[: it + 1].copy(), n_diluted
