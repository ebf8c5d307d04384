"""Independent numerical references used by the tests.

Nothing here reuses closed forms from the package: posteriors are computed
by adaptive 1-D quadrature and linear estimators by dense linear algebra.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import ndtr


def _quad(f, lo, hi, points):
    pts = sorted(p for p in points if lo < p < hi)
    val, _ = integrate.quad(f, lo, hi, points=pts or None, limit=500,
                            epsabs=1e-15, epsrel=1e-12)
    return val


def _gauss(a, mean, var):
    return math.exp(-0.5 * (a - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)


def gm_posterior_quad(r, nu, lam0, weights, means, variances):
    """Posterior mean and variance of ``x`` given ``r = x + CN(0, nu)``.

    The prior is ``lam0 delta_0 + sum_k w_k CN(mu_k, phi_k)``.  Every
    component factorizes over real and imaginary parts, so each moment is a
    product of 1-D integrals evaluated with ``scipy.integrate.quad``.
    """
    half_nu = nu / 2
    z0 = lam0 * _gauss(r.real, 0, half_nu) * _gauss(r.imag, 0, half_nu)
    z = z0
    m1 = 0j
    m2 = 0.0
    for w, mu, phi in zip(weights, means, variances):
        moments = []
        for rr, mm in ((r.real, mu.real), (r.imag, mu.imag)):
            sd = math.sqrt(max(phi, nu) / 2)
            lo = min(rr, mm) - 12 * sd
            hi = max(rr, mm) + 12 * sd

            def dens(a, rr=rr, mm=mm):
                return _gauss(a, mm, phi / 2) * _gauss(rr, a, half_nu)

            i0 = _quad(dens, lo, hi, [rr, mm])
            i1 = _quad(lambda a: a * dens(a), lo, hi, [rr, mm])
            i2 = _quad(lambda a: a * a * dens(a), lo, hi, [rr, mm])
            moments.append((i0, i1, i2))
        (a0, a1, a2), (b0, b1, b2) = moments
        z += w * a0 * b0
        m1 += w * (a1 * b0 + 1j * a0 * b1)
        m2 += w * (a2 * b0 + a0 * b2)
    mean = m1 / z
    return mean, m2 / z - abs(mean) ** 2


def quantized_posterior_quad_1d(lo, hi, p, var_z, var_w):
    """Moments of ``z ~ N(p, var_z)`` given ``z + N(0, var_w)`` fell in ``[lo, hi)``."""
    sw = math.sqrt(var_w)
    sz = math.sqrt(var_z)

    def like(a):
        up = 1.0 if math.isinf(hi) else ndtr((hi - a) / sw)
        dn = 0.0 if math.isinf(lo) else ndtr((lo - a) / sw)
        return up - dn

    a_lo = p - 14 * sz
    a_hi = p + 14 * sz
    pts = [p] + [e for e in (lo, hi) if math.isfinite(e)]

    def dens(a):
        return _gauss(a, p, var_z) * like(a)

    i0 = _quad(dens, a_lo, a_hi, pts)
    i1 = _quad(lambda a: a * dens(a), a_lo, a_hi, pts)
    i2 = _quad(lambda a: a * a * dens(a), a_lo, a_hi, pts)
    mean = i1 / i0
    return mean, i2 / i0 - mean ** 2


def quantized_posterior_quad(cells, p, nu_p, sigma_w2):
    """Complex version: real and imaginary parts are independent."""
    re_lo, re_hi, im_lo, im_hi = cells
    mr, vr = quantized_posterior_quad_1d(re_lo, re_hi, p.real, nu_p / 2, sigma_w2 / 2)
    mi, vi = quantized_posterior_quad_1d(im_lo, im_hi, p.imag, nu_p / 2, sigma_w2 / 2)
    return mr + 1j * mi, vr + vi


def dense_lmmse(A, y, prior_var, noise_var):
    """``(A^* A + (noise_var/prior_var) I)^{-1} A^* y``."""
    n = A.shape[1]
    return np.linalg.solve(A.conj().T @ A + (noise_var / prior_var) * np.eye(n),
                           A.conj().T @ y)
