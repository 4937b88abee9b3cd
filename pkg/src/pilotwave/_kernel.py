"""Compiled inner loops for branch-sum wave functions.

Every factor has the form ``env(s - c(t)) * exp(i (q s - q v t / 2 + phase))``
where ``s`` is the physical coordinate (arc length for ring factors),
``c(t) = c0 + v t`` and ``env`` depends on the factor kind.  The gradient
is analytic: ``d/dx f = scale * (i q + dlog env) * f``.
"""
import cmath
import math

import numpy as np
from numba import njit

RECT = 0
GAUSS = 1
RING = 2

_PI_M14 = math.pi ** -0.25


@njit(cache=True)
def _factor(kind, c0, v, q, w, birth, ph, hm, x, t, frozen):
    phase_t = -0.5 * q * v * t + ph
    if kind == RING:
        val = cmath.exp(1j * (q * w * x + phase_t)) / math.sqrt(2.0 * math.pi * w)
        return val, 1j * q * w
    r = x - (c0 + v * t)
    carrier = cmath.exp(1j * (q * x + phase_t))
    if kind == RECT:
        if frozen or abs(r) < 0.5 * w:
            return carrier / math.sqrt(w), 1j * q
        return 0j, 1j * q
    st = w * w + 1j * hm * (t - birth)
    env = _PI_M14 / math.sqrt(w) * cmath.sqrt(w * w / st) * cmath.exp(-r * r / (2.0 * st))
    return env * carrier, 1j * q - r / st


@njit(cache=True)
def amplitudes(kind, c0, v, q, w, birth, ph, coef, hm, x, t):
    """Per-branch amplitude at each point; x has shape (D, N)."""
    nb, nd = kind.shape
    npt = x.shape[1]
    out = np.empty((nb, npt), dtype=np.complex128)
    for n in range(npt):
        for b in range(nb):
            a = coef[b]
            for d in range(nd):
                f, _ = _factor(kind[b, d], c0[b, d], v[b, d], q[b, d], w[b, d],
                               birth[b, d], ph[b, d], hm[d], x[d, n], t, False)
                a *= f
            out[b, n] = a
    return out


@njit(cache=True)
def spinor_and_gradient(kind, c0, v, q, w, birth, ph, coef, group, ngroup, hm,
                        x, t, mask, use_mask):
    """Spinor components and their gradients, grouped by spin tuple.

    With ``use_mask`` only branches flagged in ``mask[b, n]`` contribute and
    their box factors are continued analytically past the support edge.
    """
    nb, nd = kind.shape
    npt = x.shape[1]
    psi = np.zeros((ngroup, npt), dtype=np.complex128)
    dpsi = np.zeros((ngroup, nd, npt), dtype=np.complex128)
    dl = np.empty(nd, dtype=np.complex128)
    for n in range(npt):
        for b in range(nb):
            if use_mask and not mask[b, n]:
                continue
            a = coef[b]
            for d in range(nd):
                f, g = _factor(kind[b, d], c0[b, d], v[b, d], q[b, d], w[b, d],
                               birth[b, d], ph[b, d], hm[d], x[d, n], t, use_mask)
                a *= f
                dl[d] = g
            gi = group[b]
            psi[gi, n] += a
            for d in range(nd):
                dpsi[gi, d, n] += a * dl[d]
    return psi, dpsi


@njit(cache=True)
def velocity(kind, c0, v, q, w, birth, ph, coef, group, ngroup, hm, scale,
             x, t, mask, use_mask):
    """Guidance-law velocity of every dof at every point, plus the density."""
    psi, dpsi = spinor_and_gradient(kind, c0, v, q, w, birth, ph, coef, group,
                                    ngroup, hm, x, t, mask, use_mask)
    nd = kind.shape[1]
    npt = x.shape[1]
    vel = np.empty((nd, npt))
    den = np.empty(npt)
    for n in range(npt):
        rho = 0.0
        for g in range(ngroup):
            rho += psi[g, n].real ** 2 + psi[g, n].imag ** 2
        den[n] = rho
        for d in range(nd):
            cur = 0.0
            for g in range(ngroup):
                cur += (psi[g, n].conjugate() * dpsi[g, d, n]).imag
            if rho > 0.0:
                vel[d, n] = hm[d] / (scale[d] * scale[d]) * cur / rho
            else:
                vel[d, n] = np.nan
    return vel, den


@njit(cache=True)
def support_mask(kind, c0, v, w, x, t, closed, gauss_reach):
    """Which branches contain each point.

    Box factors test their support; Gaussian factors count as containing the
    point when it lies within ``gauss_reach`` widths of the centre (pass
    ``inf`` to treat Gaussians as everywhere).  ``w`` must already hold the
    effective Gaussian widths at time ``t``.  Ring factors always contain it.
    """
    nb, nd = kind.shape
    npt = x.shape[1]
    out = np.ones((nb, npt), dtype=np.bool_)
    for n in range(npt):
        for b in range(nb):
            for d in range(nd):
                k = kind[b, d]
                if k == RING:
                    continue
                r = abs(x[d, n] - (c0[b, d] + v[b, d] * t))
                if k == RECT:
                    half = 0.5 * w[b, d]
                    inside = r <= half if closed else r < half
                else:
                    inside = r <= gauss_reach * w[b, d]
                if not inside:
                    out[b, n] = False
                    break
    return out
