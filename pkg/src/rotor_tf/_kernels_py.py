"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable. The algorithms
mirror the Cython versions step for step so both backends agree to rounding.
"""
import math

import numpy as np

SERIES_MAX_X = 15.0
_RESCALE = 1e250


def _series(order, x):
    # all terms positive: no cancellation
    half = 0.5 * x
    # subnormal x underflows here; I_n is then its x = 0 value
    if half == 0.0:
        return 1.0 if order == 0 else 0.0
    q = half * half
    lt = order * math.log(half) - math.lgamma(order + 1.0)
    if lt < -745.0:
        return 0.0
    term = math.exp(lt)
    total = term
    k = 1
    while True:
        term *= q / (k * (k + order))
        total += term
        if term <= 1e-17 * total:
            break
        k += 1
    return total


def _miller_start(max_order, x):
    return max_order + int(x) + 40 + 2 * int(math.sqrt(40.0 * (max_order + x)))


def _miller(max_order, x):
    """I_0..I_max_order at x > 0 by backward recurrence, normalized with
    I_0 + 2 sum_k I_k = exp(x)."""
    start = _miller_start(max_order, x)
    out = np.zeros(max_order + 1)
    f_next = 0.0
    f = 1e-280
    total = 0.0
    two_over_x = 2.0 / x
    for k in range(start, 0, -1):
        f_prev = f_next + k * two_over_x * f
        f_next = f
        f = f_prev
        # f now holds the (k-1)-th unnormalized value
        if k - 1 <= max_order:
            out[k - 1] = f
        if k - 1 > 0:
            total += 2.0 * f
        else:
            total += f
        if abs(f) > _RESCALE:
            f *= 1.0 / _RESCALE
            f_next *= 1.0 / _RESCALE
            total *= 1.0 / _RESCALE
            out *= 1.0 / _RESCALE
    # exp(x) / total without overflow for x <= ~700
    return out * (math.exp(x) / total)


def bessel_i(order, x):
    """Modified Bessel function I_order(x) for integer order and x >= 0."""
    n = abs(int(order))
    x = float(x)
    if x <= SERIES_MAX_X or n >= x:
        return _series(n, x)
    return float(_miller(n, x)[n])


def bessel_i_table(max_order, x):
    """Table ``t[k, ...] = I_k(x)`` for k = 0..max_order over an array of x."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.empty((max_order + 1, flat.size))
    for j, xv in enumerate(flat):
        if xv <= SERIES_MAX_X:
            for k in range(max_order + 1):
                out[k, j] = _series(k, xv)
        else:
            out[:, j] = _miller(max_order, xv)
    return out.reshape((max_order + 1,) + x.shape)


def _probabilities(A, sigma):
    B = A @ sigma
    p = np.einsum("jk,jk->j", A.conj(), B).real
    return np.maximum(p, 1e-300)


def _loglik(f, p, mask):
    return float(np.dot(f[mask], np.log(p[mask])))


def rrr_iterate(A, f, sigma0, max_iter, tol):
    """R rho R fixed-point iteration for a complete POVM ``A^H A = 1``.

    Rows of ``A`` are the scaled POVM vectors, ``f`` the relative
    frequencies. Every accepted step is non-decreasing in log-likelihood: when
    the plain step loses likelihood it is diluted, halving the step size
    until it gains.

    Returns ``(sigma, iterations, converged, history, n_diluted)`` where
    ``history`` holds the log-likelihood after each accepted step.
    """
    A = np.ascontiguousarray(A, dtype=complex)
    f = np.ascontiguousarray(f, dtype=float)
    d = A.shape[1]
    eye = np.eye(d)
    mask = f > 0
    sigma = np.array(sigma0, dtype=complex)
    p = _probabilities(A, sigma)
    L = _loglik(f, p, mask)
    history = np.empty(max_iter + 1)
    history[0] = L
    converged = False
    n_diluted = 0
    it = 0
    while it < max_iter:
        w = np.where(mask, f / p, 0.0)
        R = (A.conj().T * w) @ A
        cand = R @ sigma @ R
        cand = 0.5 * (cand + cand.conj().T)
        cand /= cand.trace().real
        p_new = _probabilities(A, cand)
        L_new = _loglik(f, p_new, mask)
        eps = 1.0
        while L_new < L and eps > 1e-12:
            M = (eye + eps * R) / (1.0 + eps)
            cand = M @ sigma @ M
            cand = 0.5 * (cand + cand.conj().T)
            cand /= cand.trace().real
            p_new = _probabilities(A, cand)
            L_new = _loglik(f, p_new, mask)
            eps *= 0.5
            n_diluted += 1
        if L_new < L:
            converged = True
            break
        it += 1
        gain = L_new - L
        sigma, p, L = cand, p_new, L_new
        history[it] = L
        if gain < tol:
            converged = True
            break
    return sigma, it, converged, history[: it + 1].copy(), n_diluted
