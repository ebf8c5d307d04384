"""Scalar MMSE denoisers used inside the AMP iterations.

Input side: Bernoulli-Gaussian(-mixture) prior on each coefficient observed
through ``r = x + CN(0, nu)``, plus the EM re-estimation of its parameters.

Output side: ``z ~ CN(p, nu_p)`` observed through ``y = Q(z + w)`` with
``w ~ CN(0, sigma_w2)``; real and imaginary parts decouple into truncated
Gaussian moments over the quantizer cells.

All variances of complex quantities are ``E|x - E x|^2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erfcx, ndtr

from .quantizer import PowerEstimate, QuantizerSpec, inverse_cell

NU_FLOOR = 1e-14
MASS_FLOOR = 1e-6          # EM responsibility mass below which a component is frozen
_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class PriorKind(str, enum.Enum):
    BG = "bg"
    GM = "gm"


@dataclass(frozen=True)
class PriorParams:
    """Spike at zero with mass ``lam0`` plus a complex Gaussian mixture."""

    lam0: float
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    kind: PriorKind = PriorKind.GM

    def __post_init__(self):
        object.__setattr__(self, "weights", np.atleast_1d(np.asarray(self.weights, dtype=float)))
        object.__setattr__(self, "means", np.atleast_1d(np.asarray(self.means, dtype=complex)))
        object.__setattr__(self, "variances",
                           np.atleast_1d(np.asarray(self.variances, dtype=float)))
        k = self.weights.size
        if self.means.size != k or self.variances.size != k:
            raise ValueError("mixture weights, means and variances must have equal length")
        if self.kind is PriorKind.BG and (k != 1 or self.means[0] != 0):
            raise ValueError("Bernoulli-Gaussian prior has one zero-mean component")
        if abs(self.lam0 + self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("prior weights must sum to one")

    @property
    def mean(self) -> complex:
        return complex(np.sum(self.weights * self.means))

    @property
    def variance(self) -> float:
        second = np.sum(self.weights * (self.variances + np.abs(self.means) ** 2))
        return float(second - abs(self.mean) ** 2)

    def sample(self, n: int, rng=None) -> np.ndarray:
        rng = np.random.default_rng(rng)
        p = np.concatenate([[self.lam0], self.weights])
        comp = rng.choice(p.size, size=n, p=p / p.sum())
        x = np.zeros(n, dtype=complex)
        on = comp > 0
        k = comp[on] - 1
        g = (rng.standard_normal(on.sum()) + 1j * rng.standard_normal(on.sum())) / _SQRT2
        x[on] = self.means[k] + np.sqrt(self.variances[k]) * g
        return x


def init_prior(kind, sigma_x2: float, n_components: int = 3, lam0: float = 0.9,
               spread: float = 10.0) -> PriorParams:
    """Starting point for EM: sparse prior whose variance equals ``sigma_x2``.

    GM components are zero-mean with geometrically spaced variances (ratio
    ``spread``) whose weighted mean matches the active-coefficient power.
    """
    kind = PriorKind(kind)
    sigma_x2 = max(float(sigma_x2), 1e-30)
    active = sigma_x2 / (1.0 - lam0)
    if kind is PriorKind.BG:
        return PriorParams(lam0, [1.0 - lam0], [0.0], [active], kind)
    g = spread ** (np.arange(n_components) - (n_components - 1) / 2.0)
    g = g / g.mean()
    w = np.full(n_components, (1.0 - lam0) / n_components)
    return PriorParams(lam0, w, np.zeros(n_components), active * g, kind)


def gaussian_prior(variance: float) -> PriorParams:
    return PriorParams(0.0, [1.0], [0.0], [variance], PriorKind.BG)


# ---------------------------------------------------------------------------
# input side
# ---------------------------------------------------------------------------

def _log_cn(r, mu, v):
    return -np.log(np.pi * v) - np.abs(r - mu) ** 2 / v


def _component_terms(r, nu, theta: PriorParams):
    """Log joint weights (spike first) and per-component posterior moments."""
    r = np.asarray(r, dtype=complex)[..., None]
    nu = np.maximum(np.asarray(nu, dtype=float), NU_FLOOR)[..., None] if np.ndim(nu) else \
        max(float(nu), NU_FLOOR)
    phi, mu = theta.variances, theta.means
    with np.errstate(divide="ignore"):
        logw = np.concatenate([
            np.log(theta.lam0) + _log_cn(r, 0.0, nu),
            np.log(theta.weights) + _log_cn(r, mu, phi + nu),
        ], axis=-1)
    m = (r * phi + mu * nu) / (phi + nu)
    v = phi * nu / (phi + nu) * np.ones_like(m.real)
    return logw, m, v


def _responsibilities(logw):
    mx = np.max(logw, axis=-1, keepdims=True)
    w = np.exp(logw - mx)
    tot = w.sum(axis=-1, keepdims=True)
    return w / tot, np.log(tot[..., 0]) + mx[..., 0]


def input_posterior(r, nu, theta: PriorParams):
    """Posterior mean and variance of ``x`` given ``r = x + CN(0, nu)``."""
    logw, m, v = _component_terms(r, nu, theta)
    pi, _ = _responsibilities(logw)
    pk = pi[..., 1:]
    mean = np.sum(pk * m, axis=-1)
    second = np.sum(pk * (v + np.abs(m) ** 2), axis=-1)
    var = np.maximum(second - np.abs(mean) ** 2, 0.0)
    return mean, var


def log_evidence(r, nu, theta: PriorParams) -> float:
    """``sum_i log int p_X(x; theta) CN(x; r_i, nu) dx``."""
    logw, _, _ = _component_terms(r, nu, theta)
    _, lse = _responsibilities(logw)
    return float(np.sum(lse))


def em_update(theta: PriorParams, r, nu, var_floor: float | None = None) -> PriorParams:
    """One EM step for the prior parameters from pseudo-measurements ``r``."""
    r = np.ravel(np.asarray(r, dtype=complex))
    if r.size == 0:
        raise ValueError("EM update needs at least one pseudo-measurement")
    if var_floor is None:
        var_floor = 1e-12 * max(theta.variance, NU_FLOOR)
    logw, m, v = _component_terms(r, nu, theta)
    pi, _ = _responsibilities(logw)
    lam0 = float(np.mean(pi[:, 0]))
    pk = pi[:, 1:]
    mass = pk.sum(axis=0)
    weights = mass / r.size
    # a component explaining (almost) no coefficient keeps its shape
    live = mass > MASS_FLOOR
    safe = np.where(live, mass, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        if theta.kind is PriorKind.BG:
            means = np.zeros(1, dtype=complex)
        else:
            means = np.where(live, np.sum(pk * m, axis=0) / safe, theta.means)
        spread = np.sum(pk * (np.abs(m - means) ** 2 + v), axis=0) / safe
    variances = np.where(live, np.maximum(spread, var_floor), theta.variances)
    total = lam0 + weights.sum()
    return replace(theta, lam0=lam0 / total, weights=weights / total,
                   means=means, variances=variances)


def rescale_prior(theta: PriorParams, second_moment: float) -> PriorParams:
    """Scale the active components so that ``E|x|^2`` equals ``second_moment``.

    Shape (sparsity, weights, relative spreads) is kept; means scale by the
    square root of the variance factor.
    """
    cur = float(np.sum(theta.weights * (theta.variances + np.abs(theta.means) ** 2)))
    if cur <= 0 or second_moment <= 0:
        return theta
    c = second_moment / cur
    return replace(theta, means=theta.means * math.sqrt(c), variances=theta.variances * c)


# ---------------------------------------------------------------------------
# output side
# ---------------------------------------------------------------------------

def truncated_normal_moments(a, b):
    """Mean and variance of a standard normal restricted to ``[a, b]``.

    Intervals lying in one tail are evaluated with ``erfcx`` scaled by the
    pdf at the inner endpoint so that far-tail cells stay finite.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    tail = hi <= 0

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # straddling the origin: plain differences are well conditioned
        phi_lo = _INV_SQRT2PI * np.exp(-0.5 * lo ** 2)
        phi_hi = _INV_SQRT2PI * np.exp(-0.5 * hi ** 2)
        z_mid = ndtr(hi) - ndtr(lo)

        # one-sided: divide everything by exp(-hi^2 / 2)
        rel = np.exp(-0.5 * (lo ** 2 - hi ** 2))
        rel = np.where(np.isneginf(lo), 0.0, rel)
        e_lo = np.where(np.isneginf(lo), 0.0, erfcx(-lo / _SQRT2))
        z_tail = 0.5 * (erfcx(-hi / _SQRT2) - rel * e_lo)
        phi_lo_t = _INV_SQRT2PI * rel

        z = np.where(tail, z_tail, z_mid)
        f_lo = np.where(tail, phi_lo_t, phi_lo)
        f_hi = np.where(tail, _INV_SQRT2PI, phi_hi)
        f_hi = np.where(np.isposinf(hi), 0.0, f_hi)

        lf_lo = np.where(np.isfinite(lo), lo * f_lo, 0.0)
        lf_hi = np.where(np.isfinite(hi), hi * f_hi, 0.0)
        mean = (f_lo - f_hi) / z
        var = 1.0 + (lf_lo - lf_hi) / z - mean ** 2

    # a vanishing z only arises for empty or extremely remote cells
    bad = ~np.isfinite(mean) | ~(z > 0)
    if np.any(bad):
        near = np.where(np.abs(lo) < np.abs(hi), lo, hi)
        mean = np.where(bad, np.where(np.isfinite(near), near, 0.0), mean)
        var = np.where(bad, 0.0, var)
    var = np.clip(var, 0.0, 1.0)
    mean = np.where(flip, -mean, mean)
    return mean, var


@dataclass(frozen=True)
class OutputChannel:
    spec: QuantizerSpec
    power: PowerEstimate | None
    sigma_w2: float

    def bind(self, y) -> "BoundOutput":
        return BoundOutput(self, np.asarray(y, dtype=complex))


class BoundOutput:
    """Output channel with the quantizer cells of ``y`` precomputed."""

    def __init__(self, ch: OutputChannel, y: np.ndarray):
        self.ch = ch
        self.y = y
        if not ch.spec.is_ideal:
            self.cells = inverse_cell(y, ch.spec, ch.power)

    def posterior(self, p, nu_p):
        p = np.asarray(p, dtype=complex)
        nu_p = np.maximum(np.asarray(nu_p, dtype=float), NU_FLOOR)
        s2 = self.ch.sigma_w2
        if self.ch.spec.is_ideal:
            g = nu_p / (nu_p + s2)
            return p + g * (self.y - p), nu_p * s2 / (nu_p + s2) * np.ones(p.shape)
        half_p = 0.5 * nu_p
        vt = half_p + 0.5 * s2
        sd = np.sqrt(vt)
        gain = half_p / vt
        resid = half_p * (0.5 * s2) / vt
        re_lo, re_hi, im_lo, im_hi = self.cells
        m_re, v_re = truncated_normal_moments((re_lo - p.real) / sd, (re_hi - p.real) / sd)
        m_im, v_im = truncated_normal_moments((im_lo - p.imag) / sd, (im_hi - p.imag) / sd)
        mean = p + gain * sd * (m_re + 1j * m_im)
        var = 2.0 * resid + gain ** 2 * vt * (v_re + v_im)
        return mean, np.maximum(var, NU_FLOOR * np.ones(p.shape))


def output_posterior(y, p, nu_p, ch: OutputChannel):
    """Posterior mean and variance of ``z ~ CN(p, nu_p)`` given ``y = Q(z + w)``."""
    return ch.bind(y).posterior(p, nu_p)
