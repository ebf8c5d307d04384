"""EM-GAMP and EM-VAMP with scalar (uniform) variances.

Both engines work on any object exposing ``apply``/``adjoint``/``fro2`` (and
``svd_factors`` for VAMP), a :class:`~qcs.denoisers.OutputChannel` bound to
the quantized measurements, and a prior :class:`~qcs.denoisers.PriorParams`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .denoisers import (NU_FLOOR, OutputChannel, PriorParams, em_update, input_posterior,
                        rescale_prior)

log = logging.getLogger(__name__)

DIV_CLAMP = 1e-6
VAGUE_INIT = 1e6


@dataclass
class GampOptions:
    max_iter: int = 50
    tol: float = 1e-6
    damping: float = 1.0
    learn_prior: bool = True
    # pin E|x|^2 of the learned prior (e.g. to the AGC norm estimate)
    prior_power: float | None = None
    truth: np.ndarray | None = None      # for trace NMSE only


@dataclass
class VampOptions:
    max_iter: int = 50
    tol: float = 1e-6
    damping: float = 1.0
    learn_prior: bool = True
    prior_power: float | None = None
    truth: np.ndarray | None = None


@dataclass
class IterRecord:
    iteration: int
    change: float            # ||x^{k+1} - x^k|| / ||x^k||
    nmse: float | None
    nu: float                # nu_x (GAMP) or nu_1 (VAMP)
    theta: PriorParams
    clamps: int = 0


@dataclass
class AlgoResult:
    x_hat: np.ndarray
    trace: list[IterRecord] = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False
    theta: PriorParams | None = None
    status: str = "ok"

    @property
    def nmse_trace(self) -> np.ndarray:
        return np.array([np.nan if r.nmse is None else r.nmse for r in self.trace])


def _nmse(x, truth):
    if truth is None:
        return None
    return float(np.sum(np.abs(x - truth) ** 2) / np.sum(np.abs(truth) ** 2))


def _rel_change(new, old):
    den = np.linalg.norm(old)
    num = np.linalg.norm(new - old)
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return float(num / den)


def _finite(*arrs) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrs)


def _clamp(a, counter: list) -> float:
    """Keep ``a`` inside ``[DIV_CLAMP, 1 - DIV_CLAMP]`` and count clamps."""
    if not np.isfinite(a):
        counter[0] += 1
        return 1.0 - DIV_CLAMP
    if a < DIV_CLAMP:
        counter[0] += 1
        return DIV_CLAMP
    if a > 1.0 - DIV_CLAMP:
        counter[0] += 1
        return 1.0 - DIV_CLAMP
    return float(a)


def _learn(theta, r, nu, opts):
    theta = em_update(theta, r, nu)
    if opts.prior_power is not None:
        theta = rescale_prior(theta, opts.prior_power)
    return theta


def run_gamp(op, y, ch: OutputChannel, theta0: PriorParams,
             opts: GampOptions | None = None) -> AlgoResult:
    """EM-GAMP with scalar variances; returns the posterior-mean estimate of ``x``."""
    opts = opts or GampOptions()
    out = ch.bind(y)
    n_x, n_y = op.n_x, op.n_y
    a_f2 = op.fro2
    rho = opts.damping
    if not 0 < rho <= 1:
        raise ValueError("damping must lie in (0, 1]")

    theta = theta0
    x = np.full(n_x, theta.mean, dtype=complex)
    nu_x = max(theta.variance, NU_FLOOR)
    s = np.zeros(n_y, dtype=complex)
    res = AlgoResult(x_hat=x, theta=theta)

    for k in range(opts.max_iter):
        nu_p = max(a_f2 * nu_x / n_y, NU_FLOOR)
        p = op.apply(x) - nu_p * s
        z, vz = out.posterior(p, nu_p)
        nu_z = float(np.mean(vz))
        nu_s = max((1.0 - nu_z / nu_p) / nu_p, NU_FLOOR)
        s_new = (z - p) / nu_p
        s = rho * s_new + (1 - rho) * s if k else s_new
        nu_r = 1.0 / (a_f2 * nu_s / n_x)
        r = x + nu_r * op.adjoint(s)
        x_new, vx = input_posterior(r, nu_r, theta)
        nu_x_new = max(float(np.mean(vx)), NU_FLOOR)

        if not _finite(x_new, r) or not np.isfinite(nu_x_new):
            res.status = "diverged"
            log.warning("GAMP diverged at iteration %d", k)
            break
        x_new = rho * x_new + (1 - rho) * x if k else x_new
        nu_x = rho * nu_x_new + (1 - rho) * nu_x if k else nu_x_new
        if opts.learn_prior:
            theta = _learn(theta, r, nu_r, opts)

        change = _rel_change(x_new, x)
        x = x_new
        res.trace.append(IterRecord(k + 1, change, _nmse(x, opts.truth), nu_x, theta))
        res.iterations_used = k + 1
        if change < opts.tol:
            res.converged = True
            break

    res.x_hat = x
    res.theta = theta
    return res


def run_vamp(op, y, ch: OutputChannel, theta0: PriorParams,
             opts: VampOptions | None = None, sigma_x2: float | None = None) -> AlgoResult:
    """EM-VAMP through the operator's SVD; returns the denoiser estimate ``x_1``."""
    opts = opts or VampOptions()
    out = ch.bind(y)
    n_x, n_y = op.n_x, op.n_y
    if not 0 < opts.damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    svd = op.svd_factors()
    s2 = np.abs(svd.s) ** 2

    theta = theta0
    if sigma_x2 is None:
        sigma_x2 = theta.variance
    sigma_x2 = max(sigma_x2, NU_FLOOR)
    r1 = np.zeros(n_x, dtype=complex)
    # An all-zero r1 is not "x plus Gaussian noise of variance sigma_x2" under a
    # sparse prior, and the denoiser would report a tiny extrinsic variance.  A
    # vague start makes the first LMMSE step see (r2, nu2) ~ (prior mean, sigma_x2).
    nu1 = VAGUE_INIT * sigma_x2
    p1 = np.zeros(n_y, dtype=complex)
    tau1 = sigma_x2 * op.fro2 / n_y + ch.sigma_w2
    x1 = r1.copy()
    res = AlgoResult(x_hat=x1, theta=theta)

    for k in range(opts.max_iter):
        clamps = [0]
        # scalar estimation of x
        x1_new, vx = input_posterior(r1, nu1, theta)
        a1 = _clamp(float(np.mean(vx)) / nu1, clamps)
        r2 = (x1_new - a1 * r1) / (1 - a1)
        nu2 = nu1 * a1 / (1 - a1)
        if opts.learn_prior:
            theta_next = _learn(theta, r1, nu1, opts)
        else:
            theta_next = theta

        # scalar estimation of z
        z1, vz = out.posterior(p1, tau1)
        b1 = _clamp(float(np.mean(vz)) / tau1, clamps)
        p2 = (z1 - b1 * p1) / (1 - b1)
        tau2 = tau1 * b1 / (1 - b1)

        # LMMSE estimation of x
        g = nu2 / tau2
        c = (svd.s * svd.uh(p2) * g + svd.vh(r2)) / (s2 * g + 1.0)
        x2 = svd.v(c)
        a2 = _clamp(float(np.mean(tau2 / (s2 * nu2 + tau2))), clamps)
        r1_new = (x2 - a2 * r2) / (1 - a2)
        nu1_new = nu2 * a2 / (1 - a2)

        # LMMSE estimation of z
        z2 = op.apply(x2)
        b2 = _clamp((1 - a2) * n_x / n_y, clamps)
        p1_new = (z2 - b2 * p2) / (1 - b2)
        tau1_new = tau2 * b2 / (1 - b2)

        if not _finite(x1_new, r1_new, p1_new) or not np.isfinite(nu1_new * tau1_new):
            res.status = "diverged"
            log.warning("VAMP diverged at iteration %d", k)
            break
        if clamps[0]:
            log.debug("VAMP iteration %d: %d divisor clamps", k, clamps[0])

        change = _rel_change(x1_new, x1) if k else np.inf
        x1 = x1_new
        rho = opts.damping if k else 1.0
        r1 = rho * r1_new + (1 - rho) * r1
        p1 = rho * p1_new + (1 - rho) * p1
        nu1 = max(rho * nu1_new + (1 - rho) * nu1, NU_FLOOR)
        tau1 = max(rho * tau1_new + (1 - rho) * tau1, NU_FLOOR)
        theta = theta_next
        res.trace.append(IterRecord(k + 1, change, _nmse(x1, opts.truth), nu1, theta,
                                    clamps[0]))
        res.iterations_used = k + 1
        if change < opts.tol:
            res.converged = True
            break

    res.x_hat = x1
    res.theta = theta
    return res
