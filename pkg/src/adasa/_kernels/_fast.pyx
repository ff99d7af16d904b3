# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled chunk kernels.

Operation-for-operation identical to _numpy.py (same expressions, same
accumulation order, compiled with -ffp-contract=off), so traces from the two
backends are bitwise equal.  Keep the two files in sync.
"""

from libc.math cimport sqrt, fabs

import numpy as _np

PRECOND_IDENTITY = 0
PRECOND_ADAGRAD = 1
PRECOND_RMSPROP = 2

BIAS_FIXED = 0
BIAS_TOWARD_GRADIENT = 1


cdef inline double _seqdot(double[::1] x, double[::1] y, Py_ssize_t d) noexcept:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(d):
        s += x[i] * y[i]
    return s


cdef inline void _matvec_cols(double[:, ::1] q, double[::1] theta, double[::1] out, Py_ssize_t d) noexcept:
    cdef Py_ssize_t i, j
    cdef double tj
    for i in range(d):
        out[i] = 0.0
    for j in range(d):
        tj = theta[j]
        for i in range(d):
            out[i] += q[i, j] * tj


cdef inline double _estimate(double[::1] g, double gradsq, double sigma,
                             double[:, ::1] noise, Py_ssize_t k, double bias_mag,
                             double[::1] u, int bias_mode, double[::1] h,
                             Py_ssize_t d) noexcept:
    cdef double gn, scale
    cdef Py_ssize_t i
    if bias_mode == BIAS_TOWARD_GRADIENT:
        gn = sqrt(gradsq)
        if bias_mag != 0.0 and gn > 0.0:
            scale = bias_mag / gn
        else:
            scale = 0.0
        for i in range(d):
            h[i] = g[i] + sigma * noise[k, i] + scale * g[i]
        if scale != 0.0:
            return bias_mag
        return 0.0
    for i in range(d):
        h[i] = g[i] + sigma * noise[k, i] + bias_mag * u[i]
    return fabs(bias_mag)


def asa_quadratic_chunk(double[:, ::1] q, double[::1] theta, int precond,
                        double[::1] accum, long count, double delta, double rho,
                        double m_obs, double[::1] gamma, double[::1] clip_bound,
                        double[::1] bias_mag, double[::1] u, int bias_mode,
                        double sigma, double[:, ::1] noise,
                        double[::1] out_vgap, double[::1] out_gradsq,
                        double[::1] out_bias, double[::1] out_lmin,
                        double[::1] out_lmax, double[::1] out_mobs, double cap):
    """Compiled twin of _numpy.asa_quadratic_chunk."""
    cdef Py_ssize_t n = gamma.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    g_arr = _np.empty(d)
    h_arr = _np.empty(d)
    a_arr = _np.empty(d)
    cdef double[::1] g = g_arr
    cdef double[::1] h = h_arr
    cdef double[::1] a = a_arr
    cdef double capsq = cap * cap
    cdef double omr = 1.0 - rho
    cdef bint diverged = False
    cdef Py_ssize_t steps = 0, k, i
    cdef double vgap, gradsq, bias_norm, hmax, av, lmin, lmax, cb, scale, hh

    for k in range(n):
        _matvec_cols(q, theta, g, d)
        vgap = 0.5 * _seqdot(theta, g, d)
        gradsq = _seqdot(g, g, d)
        bias_norm = _estimate(g, gradsq, sigma, noise, k, bias_mag[k], u, bias_mode, h, d)

        hmax = 0.0
        for i in range(d):
            if fabs(h[i]) > hmax:
                hmax = fabs(h[i])
        if hmax > m_obs:
            m_obs = hmax

        if precond == PRECOND_ADAGRAD:
            count += 1
            for i in range(d):
                hh = h[i] * h[i]
                accum[i] += (hh - accum[i]) / count
                a[i] = 1.0 / sqrt(delta + accum[i])
        elif precond == PRECOND_RMSPROP:
            count += 1
            for i in range(d):
                hh = h[i] * h[i]
                accum[i] += omr * (hh - accum[i])
                a[i] = 1.0 / sqrt(delta + accum[i])
        else:
            for i in range(d):
                a[i] = 1.0

        lmax = a[0]
        lmin = a[0]
        for i in range(1, d):
            av = a[i]
            if av > lmax:
                lmax = av
            if av < lmin:
                lmin = av
        cb = clip_bound[k]
        if lmax > cb:
            scale = cb / lmax
            for i in range(d):
                a[i] = a[i] * scale
            lmax = a[0]
            lmin = a[0]
            for i in range(1, d):
                av = a[i]
                if av > lmax:
                    lmax = av
                if av < lmin:
                    lmin = av

        out_vgap[k] = vgap
        out_gradsq[k] = gradsq
        out_bias[k] = bias_norm
        out_lmin[k] = lmin
        out_lmax[k] = lmax
        out_mobs[k] = m_obs

        for i in range(d):
            theta[i] = theta[i] - gamma[k] * (a[i] * h[i])
        steps = k + 1
        if _seqdot(theta, theta, d) > capsq:
            diverged = True
            break

    return steps, count, m_obs, diverged


def amsgrad_quadratic_chunk(double[:, ::1] q, double[::1] theta, double[::1] mvec,
                            double[::1] accum, double[::1] vhat, long count,
                            double delta, double rho1, double rho2, double m_obs,
                            double[::1] gamma, double[::1] bias_mag, double[::1] u,
                            int bias_mode, double sigma, double[:, ::1] noise,
                            double[::1] out_vgap, double[::1] out_gradsq,
                            double[::1] out_bias, double[::1] out_lmin,
                            double[::1] out_lmax, double[::1] out_mobs, double cap):
    """Compiled twin of _numpy.amsgrad_quadratic_chunk."""
    cdef Py_ssize_t n = gamma.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    g_arr = _np.empty(d)
    h_arr = _np.empty(d)
    a_arr = _np.empty(d)
    cdef double[::1] g = g_arr
    cdef double[::1] h = h_arr
    cdef double[::1] a = a_arr
    cdef double capsq = cap * cap
    cdef double omr1 = 1.0 - rho1
    cdef double omr2 = 1.0 - rho2
    cdef bint diverged = False
    cdef Py_ssize_t steps = 0, k, i
    cdef double vgap, gradsq, bias_norm, hmax, av, lmin, lmax, hh

    for k in range(n):
        _matvec_cols(q, theta, g, d)
        vgap = 0.5 * _seqdot(theta, g, d)
        gradsq = _seqdot(g, g, d)
        bias_norm = _estimate(g, gradsq, sigma, noise, k, bias_mag[k], u, bias_mode, h, d)

        hmax = 0.0
        for i in range(d):
            if fabs(h[i]) > hmax:
                hmax = fabs(h[i])
        if hmax > m_obs:
            m_obs = hmax

        count += 1
        for i in range(d):
            mvec[i] += omr1 * (h[i] - mvec[i])
            hh = h[i] * h[i]
            accum[i] += omr2 * (hh - accum[i])
            if accum[i] > vhat[i]:
                vhat[i] = accum[i]
            a[i] = 1.0 / sqrt(delta + vhat[i])

        lmax = a[0]
        lmin = a[0]
        for i in range(1, d):
            av = a[i]
            if av > lmax:
                lmax = av
            if av < lmin:
                lmin = av

        out_vgap[k] = vgap
        out_gradsq[k] = gradsq
        out_bias[k] = bias_norm
        out_lmin[k] = lmin
        out_lmax[k] = lmax
        out_mobs[k] = m_obs

        for i in range(d):
            theta[i] = theta[i] - gamma[k] * (a[i] * mvec[i])
        steps = k + 1
        if _seqdot(theta, theta, d) > capsq:
            diverged = True
            break

    return steps, count, m_obs, diverged
