"""Norm estimation, NMSE, OFDM mutual-information and achievable-rate bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormEstimate:
    sigma_x2: float
    n_coef: int

    @property
    def norm(self) -> float:
        """Estimated ``||x|| = sigma_x sqrt(N_r N_t L)``."""
        return math.sqrt(self.sigma_x2 * self.n_coef)


def norm_estimate(z_energy: float, n_p: int, n_r: int, sigma_w2: float, power: float, L: int,
                  n_t: int, a_fro2: float | None = None) -> NormEstimate:
    """Coefficient variance from the measured pre-quantization energy ``||z_hat||^2``.

    Uses ``E||z_hat||^2 = sigma_x2 ||A||_F^2 + N_p N_r sigma_w2`` with
    ``||A||_F^2 = P_t L N_p N_r`` unless ``a_fro2`` is given.
    """
    if min(z_energy, sigma_w2, power) < 0:
        raise ValueError("norm estimation inputs must be nonnegative")
    if a_fro2 is None:
        a_fro2 = power * L * n_p * n_r
    s2 = max((z_energy - n_p * n_r * sigma_w2) / a_fro2, 0.0)
    return NormEstimate(s2, n_r * n_t * L)


def normalize(x_hat: np.ndarray, est: NormEstimate) -> np.ndarray:
    """Rescale ``x_hat`` to the estimated norm; a zero estimate is returned as is."""
    x_hat = np.asarray(x_hat)
    nrm = np.linalg.norm(x_hat)
    if nrm == 0:
        return x_hat
    return x_hat * (est.norm / nrm)


def nmse(x_est, x_true) -> float:
    x_true = np.asarray(x_true)
    den = float(np.sum(np.abs(x_true) ** 2))
    if den == 0:
        raise ValueError("NMSE is undefined for an all-zero truth")
    return float(np.sum(np.abs(np.asarray(x_est) - x_true) ** 2)) / den


def to_db(v) -> float:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(v)


def nmse_db(x_est, x_true) -> float:
    return float(to_db(nmse(x_est, x_true)))


def mean_nmse(pairs) -> float:
    """Average NMSE over ``(estimate, truth)`` pairs."""
    vals = [nmse(a, b) for a, b in pairs]
    if not vals:
        raise ValueError("no trials")
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# OFDM evaluation
# ---------------------------------------------------------------------------

def ofdm_channels(H: np.ndarray, n_b: int) -> np.ndarray:
    """``G_k = sum_l H[l] exp(-j 2 pi k l / N_b)`` for ``k = 0..N_b-1``."""
    H = np.asarray(H)
    if n_b < H.shape[0]:
        raise ValueError(f"N_b={n_b} must be at least the number of taps {H.shape[0]}")
    return np.fft.fft(H, n=n_b, axis=0)


def waterfill(gains2, noise: float, budget: float) -> np.ndarray:
    """Powers ``max(mu - noise/g, 0)`` summing to ``budget`` over channel gains ``g``."""
    g = np.asarray(gains2, dtype=float)
    p = np.zeros_like(g)
    if budget <= 0:
        return p
    with np.errstate(divide="ignore", over="ignore"):
        inv_all = np.where(g > 0, noise / np.where(g > 0, g, 1.0), np.inf)
    # channels too weak for a finite water level get nothing
    pos = np.isfinite(inv_all)
    if not np.any(pos):
        return p
    # work relative to the strongest channel so that huge noise/g stays exact
    inv = inv_all[pos]
    base = inv.min()
    rel = np.sort(inv - base)
    k = np.arange(1, rel.size + 1)
    mu_k = (budget + np.cumsum(rel)) / k
    # largest active set whose water level exceeds its worst channel (k = 1 always does)
    n_act = int(np.nonzero(mu_k > rel)[0][-1]) + 1
    p[pos] = np.maximum(mu_k[n_act - 1] - (inv - base), 0.0)
    p *= budget / p.sum()
    return p


def mi_lower_bound(G: np.ndarray, G_hat: np.ndarray, eta: float, sigma_wf2: float,
                   budget: float | None = None) -> float:
    """Per-realization MI lower bound (bits/s/Hz) with precoding on ``G_hat``.

    ``G`` and ``G_hat`` have shape ``(N_b, N_r, N_t)``.  Waterfilling runs
    over all (subcarrier, stream) pairs against ``sigma_wf2``; the effective
    noise covariance then follows from the Bussgang diagonal formula averaged
    over subcarriers.  Average over realizations to get the expectation.
    """
    G = np.asarray(G)
    G_hat = np.asarray(G_hat)
    if G.shape != G_hat.shape or G.ndim != 3:
        raise ValueError("G and G_hat must both have shape (N_b, N_r, N_t)")
    n_b, n_r, n_t = G.shape
    if budget is None:
        budget = float(n_b)
    U, sv, Vh = np.linalg.svd(G_hat)             # (n_b, n_r, n_r), (n_b, m), (n_b, n_t, n_t)
    m = sv.shape[1]
    U = U[:, :, :m]
    V = Vh.conj().transpose(0, 2, 1)[:, :, :m]
    p = waterfill((sv ** 2).ravel(), sigma_wf2, budget).reshape(n_b, m)

    # R_k = V_k diag(p_k) V_k^*;  diag(G R G^*)_i = sum_m p_m |(G V)_{im}|^2
    GV = G @ V                                    # (n_b, n_r, m)
    diag_avg = np.mean(np.sum(np.abs(GV) ** 2 * p[:, None, :], axis=2), axis=0)
    sigma = (1.0 - eta) * (sigma_wf2 + eta * diag_avg)           # (n_r,)

    cross = U.conj().transpose(0, 2, 1) @ GV      # (n_b, m, m): u_m^* G v_n
    c2 = np.abs(cross) ** 2
    g2 = (1.0 - eta) ** 2
    sig = g2 * np.einsum("kmm->km", c2) * p
    interf = g2 * (np.einsum("kmn,kn->km", c2, p)) - sig
    noise = np.einsum("kim,i->km", np.abs(U) ** 2, sigma)
    sinr = sig / (noise + np.maximum(interf, 0.0))
    return float(np.sum(np.log2(1.0 + sinr)) / n_b)


def achievable_rate(mi: float, n_p: int, n_co: int) -> float:
    if not 0 <= n_p <= n_co:
        raise ValueError(f"need 0 <= N_p <= N_co, got N_p={n_p}, N_co={n_co}")
    return (n_co - n_p) / n_co * mi
