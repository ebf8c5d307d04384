"""Uniform mid-rise few-bit quantization of complex baseband samples.

The real and imaginary parts are quantized independently.  Stepsizes are
the Gaussian-optimal uniform stepsizes for a unit-variance input, scaled by
the measured per-dimension RMS (an ideal AGC).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF_BITS = math.inf

# bits -> (stepsize, nmse, sqnr_db) of the optimum uniform quantizer for a
# unit-variance Gaussian input.
_TABLE = {
    1: (math.sqrt(8.0 / math.pi), (math.pi - 2.0) / math.pi, 4.40),
    2: (0.9957, 0.1188, 9.25),
    3: (0.586, 0.03744, 14.27),
    4: (0.3352, 0.01154, 19.38),
    5: (0.1881, 0.003504, 24.55),
    6: (0.1041, 0.001035, 29.85),
    7: (0.0569, 0.0002999, 35.23),
    8: (0.0308, 0.00008543, 40.68),
}


class QuantizerError(ValueError):
    """Bad quantizer configuration or an output value that is not on the grid."""


@dataclass(frozen=True)
class QuantizerSpec:
    bits: float
    stepsize: float
    nmse: float
    sqnr_db: float

    @property
    def is_ideal(self) -> bool:
        return math.isinf(self.bits)

    @property
    def levels_per_dim(self) -> int:
        if self.is_ideal:
            raise QuantizerError("infinite-resolution quantizer has no finite alphabet")
        return 2 ** int(self.bits)


@dataclass(frozen=True)
class PowerEstimate:
    """Average power of the real and imaginary parts ahead of the ADC."""

    re_power: float
    im_power: float

    @classmethod
    def measure(cls, x) -> "PowerEstimate":
        x = np.asarray(x)
        return cls(float(np.mean(x.real ** 2)), float(np.mean(x.imag ** 2)))

    def check(self) -> None:
        if not (self.re_power > 0 and self.im_power > 0):
            raise QuantizerError(f"quantizer needs positive input power, got {self}")


def parse_bits(b) -> float:
    """Accept 1..8, ``inf``, ``"inf"`` or ``None`` (= infinite resolution)."""
    if b is None:
        return INF_BITS
    if isinstance(b, str):
        s = b.strip().lower()
        if s in ("inf", "infinity", "∞"):
            return INF_BITS
        b = int(s)
    if isinstance(b, float) and math.isinf(b):
        return INF_BITS
    if int(b) != b:
        raise QuantizerError(f"unsupported resolution {b!r}")
    return int(b)


def stepsize_table(b) -> QuantizerSpec:
    bits = parse_bits(b)
    if math.isinf(bits):
        return QuantizerSpec(INF_BITS, math.nan, 0.0, math.inf)
    if bits not in _TABLE:
        raise QuantizerError(f"no stepsize tabulated for b={bits}; expected 1..8 or inf")
    step, nmse, sqnr = _TABLE[bits]
    return QuantizerSpec(bits, step, nmse, sqnr)


def _steps(spec: QuantizerSpec, power: PowerEstimate) -> tuple[float, float]:
    power.check()
    return (math.sqrt(power.re_power) * spec.stepsize,
            math.sqrt(power.im_power) * spec.stepsize)


def _quantize_real(u: np.ndarray, step: float, half: int) -> np.ndarray:
    # cells are [k*step, (k+1)*step), so 0 maps to +step/2
    k = np.clip(np.floor(u / step), -half, half - 1)
    return (k + 0.5) * step


def quantize(x, spec: QuantizerSpec, power: PowerEstimate) -> np.ndarray:
    """Mid-rise quantize ``x`` with per-dimension stepsize ``sqrt(power) * Δ_b``."""
    x = np.asarray(x, dtype=complex)
    if spec.is_ideal:
        return x.copy()
    d_re, d_im = _steps(spec, power)
    half = 2 ** (int(spec.bits) - 1)
    return _quantize_real(x.real, d_re, half) + 1j * _quantize_real(x.imag, d_im, half)


def _cell_real(v: np.ndarray, step: float, half: int, atol: float):
    k = v / step - 0.5
    ki = np.rint(k)
    if np.any(np.abs(k - ki) > atol) or np.any(ki < -half) or np.any(ki > half - 1):
        raise QuantizerError("value is not on the quantizer output grid")
    lo = ki * step
    hi = (ki + 1) * step
    lo = np.where(ki == -half, -np.inf, lo)
    hi = np.where(ki == half - 1, np.inf, hi)
    return lo, hi


def inverse_cell(y, spec: QuantizerSpec, power: PowerEstimate, atol: float = 1e-6):
    """Cell boundaries ``(re_lo, re_hi, im_lo, im_hi)`` of quantizer outputs ``y``.

    Cells are half-open ``[lo, hi)``; outermost cells extend to infinity.
    For an ideal quantizer the cell degenerates to the point ``y``.
    """
    y = np.asarray(y, dtype=complex)
    if spec.is_ideal:
        return y.real.copy(), y.real.copy(), y.imag.copy(), y.imag.copy()
    d_re, d_im = _steps(spec, power)
    half = 2 ** (int(spec.bits) - 1)
    re_lo, re_hi = _cell_real(y.real, d_re, half, atol)
    im_lo, im_hi = _cell_real(y.imag, d_im, half, atol)
    return re_lo, re_hi, im_lo, im_hi


def output_levels(spec: QuantizerSpec, power: PowerEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary output alphabets (each of size ``2**b``)."""
    d_re, d_im = _steps(spec, power)
    half = 2 ** (int(spec.bits) - 1)
    k = np.arange(-half, half) + 0.5
    return k * d_re, k * d_im


def monte_carlo_nmse(b, n_samples: int = 10**7, rng=None, chunk: int = 2**21) -> float:
    """Empirical ``E|Q(x)-x|^2 / E|x|^2`` for unit-variance circular Gaussian input."""
    rng = np.random.default_rng(rng)
    spec = stepsize_table(b)
    power = PowerEstimate(0.5, 0.5)
    err = 0.0
    sig = 0.0
    left = n_samples
    while left > 0:
        n = min(chunk, left)
        x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(0.5)
        err += float(np.sum(np.abs(quantize(x, spec, power) - x) ** 2))
        sig += float(np.sum(np.abs(x) ** 2))
        left -= n
    return err / sig
