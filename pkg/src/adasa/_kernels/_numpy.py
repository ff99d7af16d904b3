"""Pure-numpy fallback kernels, bit-compatible with the compiled ones.

Both backends execute the same floating-point operations in the same order:
matvecs sweep columns, dot products accumulate left to right (cumsum), and
elementwise updates use identical expressions.  The compiled kernel is built
with -ffp-contract=off so neither side fuses multiply-adds.  Tests assert the
two backends produce bitwise-equal traces.
"""

from __future__ import annotations

import numpy as np

PRECOND_IDENTITY = 0
PRECOND_ADAGRAD = 1
PRECOND_RMSPROP = 2

BIAS_FIXED = 0
BIAS_TOWARD_GRADIENT = 1


def _seqdot(x, y):
    """Left-to-right sequential dot: matches the C accumulation order."""
    return float(np.cumsum(x * y)[-1])


def _matvec_cols(q, theta, out):
    """out = Q theta accumulated column by column (matches the C loop)."""
    out[:] = 0.0
    for j in range(theta.size):
        out += q[:, j] * theta[j]


def _estimate(g, gradsq, sigma, noise_k, bias_mag, u, bias_mode, h):
    """h = g + sigma * noise + bias; returns the recorded bias norm."""
    if bias_mode == BIAS_TOWARD_GRADIENT:
        gn = np.sqrt(gradsq)
        scale = bias_mag / gn if (bias_mag != 0.0 and gn > 0.0) else 0.0
        h[:] = g + sigma * noise_k + scale * g
        return bias_mag if scale != 0.0 else 0.0
    h[:] = g + sigma * noise_k + bias_mag * u
    return abs(bias_mag)


def asa_quadratic_chunk(
    q,
    theta,
    precond,
    accum,
    count,
    delta,
    rho,
    m_obs,
    gamma,
    clip_bound,
    bias_mag,
    u,
    bias_mode,
    sigma,
    noise,
    out_vgap,
    out_gradsq,
    out_bias,
    out_lmin,
    out_lmax,
    out_mobs,
    cap,
):
    """Run one chunk of plain/adaptive steps on a quadratic; see driver.run_asa.

    Per step k: evaluate gradient and value at theta_k, draw the estimate,
    fold it into the preconditioner, clip, record the row, then move theta.
    Returns (steps_done, count, m_obs, diverged); theta/accum update in place.
    """
    n = gamma.shape[0]
    d = theta.shape[0]
    g = np.empty(d)
    h = np.empty(d)
    a = np.empty(d)
    capsq = cap * cap
    diverged = False
    steps = 0
    omr = 1.0 - rho

    for k in range(n):
        _matvec_cols(q, theta, g)
        vgap = 0.5 * _seqdot(theta, g)
        gradsq = _seqdot(g, g)
        bias_norm = _estimate(g, gradsq, sigma, noise[k], bias_mag[k], u, bias_mode, h)

        hmax = float(np.max(np.abs(h)))
        if hmax > m_obs:
            m_obs = hmax

        if precond == PRECOND_ADAGRAD:
            count += 1
            accum += (h * h - accum) / count
            a[:] = 1.0 / np.sqrt(delta + accum)
        elif precond == PRECOND_RMSPROP:
            count += 1
            accum += omr * (h * h - accum)
            a[:] = 1.0 / np.sqrt(delta + accum)
        else:
            a.fill(1.0)

        lmax = float(np.max(a))
        lmin = float(np.min(a))
        cb = clip_bound[k]
        if lmax > cb:
            a *= cb / lmax
            lmax = float(np.max(a))
            lmin = float(np.min(a))

        out_vgap[k] = vgap
        out_gradsq[k] = gradsq
        out_bias[k] = bias_norm
        out_lmin[k] = lmin
        out_lmax[k] = lmax
        out_mobs[k] = m_obs

        theta -= gamma[k] * (a * h)
        steps = k + 1
        if _seqdot(theta, theta) > capsq:
            diverged = True
            break

    return steps, count, m_obs, diverged


def amsgrad_quadratic_chunk(
    q,
    theta,
    mvec,
    accum,
    vhat,
    count,
    delta,
    rho1,
    rho2,
    m_obs,
    gamma,
    bias_mag,
    u,
    bias_mode,
    sigma,
    noise,
    out_vgap,
    out_gradsq,
    out_bias,
    out_lmin,
    out_lmax,
    out_mobs,
    cap,
):
    """AMSGRAD chunk: EMA first moment, running-max second moment."""
    n = gamma.shape[0]
    d = theta.shape[0]
    g = np.empty(d)
    h = np.empty(d)
    a = np.empty(d)
    capsq = cap * cap
    diverged = False
    steps = 0
    omr1 = 1.0 - rho1
    omr2 = 1.0 - rho2

    for k in range(n):
        _matvec_cols(q, theta, g)
        vgap = 0.5 * _seqdot(theta, g)
        gradsq = _seqdot(g, g)
        bias_norm = _estimate(g, gradsq, sigma, noise[k], bias_mag[k], u, bias_mode, h)

        hmax = float(np.max(np.abs(h)))
        if hmax > m_obs:
            m_obs = hmax

        count += 1
        mvec += omr1 * (h - mvec)
        accum += omr2 * (h * h - accum)
        np.fmax(vhat, accum, out=vhat)
        a[:] = 1.0 / np.sqrt(delta + vhat)

        out_vgap[k] = vgap
        out_gradsq[k] = gradsq
        out_bias[k] = bias_norm
        out_lmin[k] = float(np.min(a))
        out_lmax[k] = float(np.max(a))
        out_mobs[k] = m_obs

        theta -= gamma[k] * (a * mvec)
        steps = k + 1
        if _seqdot(theta, theta) > capsq:
            diverged = True
            break

    return steps, count, m_obs, diverged
