"""Benchmark estimators: LS, Bussgang-linearized LMMSE, BPDN and QIHT.

All functions return coefficient vectors in the ordering of
:attr:`qcs.channel.ChannelRealization.x`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import apply_basis
from .operator import MeasurementOperator, SvdMode
from .quantizer import PowerEstimate, QuantizerSpec, quantize

log = logging.getLogger(__name__)


class RankError(ValueError):
    pass


@dataclass(frozen=True)
class LinearizedModel:
    """``y = (1 - eta) A x + w_hat`` with white effective noise."""

    gain: float
    noise_var: float

    @classmethod
    def bussgang(cls, eta: float, sigma_w2: float, sigma_x2: float, power: float,
                 L: int) -> "LinearizedModel":
        return cls(1.0 - eta, (1.0 - eta) * (sigma_w2 + eta * power * L * sigma_x2))


def _gram_solve(op: MeasurementOperator, y: np.ndarray, gain: float, reg: float) -> np.ndarray:
    """``vec(B_r^* Y C^* (gain C C^* + reg I)^{-1})``."""
    if op.svd_mode is SvdMode.FLAT_ZC:
        cc = op.training.power * op.n_p / op.n_t
        return op.adjoint(y) / (gain * cc + reg)
    C = op.c_matrix()
    k = C.shape[0]
    gram = C @ C.conj().T
    if reg == 0 and np.linalg.matrix_rank(gram) < k:
        raise RankError(f"training matrix C has rank < N_t L = {k}")
    St = apply_basis(np.asarray(y).reshape(op.n_p, op.n_r), op.rx, axis=1, conj=True)
    # transposed view: X^T = (gain C C^* + reg I)^{-T} conj(C) Y^T conj(B_r)
    M = (gain * gram + reg * np.eye(k)).T
    return np.linalg.solve(M, C.conj() @ St).ravel()


def estimate_ls(y, op: MeasurementOperator) -> np.ndarray:
    """Least squares through the pseudo-inverse of ``C``."""
    if op.n_p < op.n_t * op.L:
        raise RankError("LS needs N_p >= N_t L")
    return _gram_solve(op, np.asarray(y, dtype=complex), 1.0, 0.0)


def estimate_almmse(y, op: MeasurementOperator, sigma_w2: float, sigma_x2: float,
                    eta: float) -> np.ndarray:
    """LMMSE on the Bussgang-linearized model assuming ``E[xx^*] = sigma_x2 I``."""
    if not sigma_x2 > 0:
        raise ValueError(f"ALMMSE needs a positive coefficient variance, got {sigma_x2}")
    reg = sigma_w2 / sigma_x2 + eta * op.training.power * op.L
    return _gram_solve(op, np.asarray(y, dtype=complex), 1.0 - eta, reg)


# ---------------------------------------------------------------------------
# BPDN
# ---------------------------------------------------------------------------

@dataclass
class BpdnResult:
    x_hat: np.ndarray
    lam: float
    residual2: float
    target: float
    converged: bool
    outer_steps: int


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    mag = np.abs(v)
    scale = np.maximum(1.0 - t / np.maximum(mag, 1e-300), 0.0)
    return v * scale


def _fista(op, y, gain, lam, x0, step, max_iter, tol):
    x = x0.copy()
    zk = x0.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = gain * op.adjoint(gain * op.apply(zk) - y)
        x_new = soft_threshold(zk - step * grad, step * lam)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        zk = x_new + ((t - 1.0) / t_new) * (x_new - x)
        dx = np.linalg.norm(x_new - x)
        nx = np.linalg.norm(x_new)
        x, t = x_new, t_new
        if dx <= tol * max(nx, 1e-300):
            break
    return x


def estimate_bpdn(y, op, lin: LinearizedModel, max_outer: int = 30, max_inner: int = 500,
                  rel_tol: float = 0.01, inner_tol: float = 1e-7) -> BpdnResult:
    """``min ||x||_1  s.t.  ||y - gain A x||^2 <= noise_var N_y``.

    A LASSO weight is bisected (in log scale) until the residual meets the
    constraint within ``rel_tol``; each LASSO is solved by FISTA warm-started
    from the previous weight.
    """
    if not lin.noise_var > 0:
        raise ValueError("BPDN needs a positive effective noise variance")
    y = np.asarray(y, dtype=complex)
    target = lin.noise_var * op.n_y
    zero = np.zeros(op.n_x, dtype=complex)
    y2 = float(np.vdot(y, y).real)
    if y2 <= target:
        return BpdnResult(zero, math.inf, y2, target, True, 0)

    gain = lin.gain
    step = 1.0 / (gain ** 2 * op.spectral_norm2())
    lam_hi = float(np.max(np.abs(gain * op.adjoint(y))))   # x = 0 above this
    lo, hi = math.log(lam_hi * 1e-8), math.log(lam_hi)
    x = zero
    feasible = nearest = None
    for it in range(1, max_outer + 1):
        lam = math.exp(0.5 * (lo + hi))
        x = _fista(op, y, gain, lam, x, step, max_inner, inner_tol)
        res2 = float(np.sum(np.abs(y - gain * op.apply(x)) ** 2))
        cand = BpdnResult(x, lam, res2, target, False, it)
        if abs(res2 - target) <= rel_tol * target:
            cand.converged = True
            return cand
        if res2 > target:
            hi = math.log(lam)
        else:
            lo = math.log(lam)
            # larger weights give smaller l1 norms
            if feasible is None or lam > feasible.lam:
                feasible = cand
        if nearest is None or abs(res2 - target) < abs(nearest.residual2 - target):
            nearest = cand
    log.warning("BPDN bisection did not meet the residual target in %d steps", max_outer)
    return feasible if feasible is not None else nearest


# ---------------------------------------------------------------------------
# QIHT
# ---------------------------------------------------------------------------

def hard_threshold(v: np.ndarray, K: int) -> np.ndarray:
    """Keep the ``K`` largest-magnitude entries; ties go to the lower index."""
    v = np.asarray(v)
    out = np.zeros_like(v)
    if K <= 0:
        return out
    if K >= v.size:
        return v.copy()
    order = np.argsort(-np.abs(v), kind="stable")[:K]
    out[order] = v[order]
    return out


@dataclass
class QihtResult:
    x_hat: np.ndarray
    nmse_trace: list
    iterations_used: int


def qiht_defaults(op) -> tuple[int, float]:
    K = max(1, op.n_x // 100)
    tau = 0.1 * op.n_t / (op.training.power * op.n_p)
    return K, tau


def estimate_qiht(y, op, spec: QuantizerSpec, power: PowerEstimate | None, K: int | None = None,
                  tau: float | None = None, iters: int = 50, truth=None) -> QihtResult:
    """Quantized iterative hard thresholding from ``x = 0``."""
    K0, tau0 = qiht_defaults(op)
    K = K0 if K is None else int(K)
    tau = tau0 if tau is None else float(tau)
    if K < 1 or not tau > 0:
        raise ValueError("QIHT needs K >= 1 and tau > 0")
    y = np.asarray(y, dtype=complex)
    x = np.zeros(op.n_x, dtype=complex)
    trace = []
    t2 = None if truth is None else float(np.sum(np.abs(truth) ** 2))
    for _ in range(iters):
        s = quantize(y - op.apply(x), spec, power)
        x = hard_threshold(x + tau * op.adjoint(s), K)
        if truth is not None:
            trace.append(float(np.sum(np.abs(x - truth) ** 2)) / t2)
    return QihtResult(x, trace, iters)
