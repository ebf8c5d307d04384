"""Training (pilot) matrices and their circulant-delay structure."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, ConfigurationError, apply_basis


class TrainingKind(str, enum.Enum):
    SHIFTED_ZC = "zc"
    GOLAY = "golay"
    IID_QPSK = "qpsk"
    IID_GAUSSIAN = "gauss"

    @classmethod
    def parse(cls, s) -> "TrainingKind":
        if isinstance(s, cls):
            return s
        s = str(s).strip().lower()
        aliases = {"shiftedzc": "zc", "shifted_zc": "zc", "gaussian": "gauss",
                   "iidgaussian": "gauss", "iidqpsk": "qpsk"}
        return cls(aliases.get(s, s))


@dataclass(frozen=True)
class TrainingMatrix:
    kind: TrainingKind
    T: np.ndarray          # (N_t, N_p)
    n_p: int
    n_t: int
    L: int
    power: float
    t: np.ndarray | None = None   # base sequence for shifted designs

    @property
    def is_shifted_zc(self) -> bool:
        return self.kind is TrainingKind.SHIFTED_ZC


def zc_sequence(n_p: int, power: float = 1.0, n_t: int = 1) -> np.ndarray:
    """Length-``n_p`` Zadoff-Chu sequence with per-antenna power ``power/n_t``."""
    if n_p < 1:
        raise ConfigurationError("sequence length must be positive")
    k = np.arange(n_p, dtype=float)
    if n_p % 2:
        phase = np.pi * k * (k + 1) / n_p
    else:
        # k^2 overflows nothing here but loses phase precision for huge n_p
        phase = np.pi * np.mod(k * k, 2 * n_p) / n_p
    return math.sqrt(power / n_t) * np.exp(1j * phase)


def rudin_shapiro_pair(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary Golay complementary pair of power-of-two length ``n``."""
    if n < 1 or n & (n - 1):
        raise ConfigurationError(f"Golay pair length must be a power of two, got {n}")
    a = np.array([1], dtype=int)
    b = np.array([1], dtype=int)
    while a.size < n:
        a, b = np.concatenate([a, b]), np.concatenate([a, -b])
    return a, b


def circular_shift_rows(t: np.ndarray, shifts) -> np.ndarray:
    """Rows ``r`` with ``r[m] = t[(m - s) mod N]`` for each shift ``s``."""
    n = t.size
    idx = (np.arange(n)[None, :] - np.asarray(shifts)[:, None]) % n
    return t[idx]


def build_training(kind, n_p: int, n_t: int, L: int, power: float = 1.0,
                   rng=None) -> TrainingMatrix:
    kind = TrainingKind.parse(kind)
    amp = math.sqrt(power / n_t)
    if kind is TrainingKind.SHIFTED_ZC:
        if n_p % (n_t * L):
            raise ConfigurationError(
                f"shifted-ZC training needs N_p divisible by N_t*L={n_t * L}, got {n_p}")
        t = zc_sequence(n_p, power, n_t)
        T = circular_shift_rows(t, np.arange(n_t) * L)
        return TrainingMatrix(kind, T, n_p, n_t, L, power, t)
    if kind is TrainingKind.GOLAY:
        g = n_p & (-n_p)  # largest power of two dividing n_p
        a, b = rudin_shapiro_pair(g)
        a = np.tile(a, n_p // g).astype(complex)
        b = np.tile(b, n_p // g).astype(complex)
        rows = [np.roll(a if n % 2 == 0 else b, n * L) for n in range(n_t)]
        return TrainingMatrix(kind, amp * np.array(rows), n_p, n_t, L, power)
    rng = np.random.default_rng(rng)
    if kind is TrainingKind.IID_QPSK:
        sym = (rng.choice([-1.0, 1.0], (n_t, n_p)) + 1j * rng.choice([-1.0, 1.0], (n_t, n_p)))
        return TrainingMatrix(kind, amp * sym / math.sqrt(2), n_p, n_t, L, power)
    g = (rng.standard_normal((n_t, n_p)) + 1j * rng.standard_normal((n_t, n_p))) / math.sqrt(2)
    return TrainingMatrix(kind, amp * g, n_p, n_t, L, power)


def delay(M: np.ndarray, ell: int) -> np.ndarray:
    """``M @ J_ell``: circularly delay every row by ``ell`` samples."""
    return np.roll(M, ell, axis=-1)


def delay_matrix(n_p: int, ell: int) -> np.ndarray:
    """Dense ``J_ell`` with ``(M J_ell)[:, m] = M[:, (m - ell) mod n_p]``."""
    J = np.zeros((n_p, n_p))
    m = np.arange(n_p)
    J[(m - ell) % n_p, m] = 1.0
    return J


def stacked_blocks(T: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``T_tilde = [T J_0; ...; T J_{L-1}]`` and the row order ``perm``.

    ``T_tilde[perm]`` groups rows by total shift: row ``n*L + l`` of the
    result is row ``l*N_t + n`` of ``T_tilde``.  For shifted-ZC training it is
    the Toeplitz matrix of the first ``N_t*L`` circular shifts of ``t``.
    """
    n_t = T.shape[0]
    Tt = np.concatenate([delay(T, ell) for ell in range(L)], axis=0)
    n, ell = np.divmod(np.arange(n_t * L), L)
    perm = ell * n_t + n
    return Tt, perm


def papr(row: np.ndarray) -> float:
    p = np.abs(row) ** 2
    return float(p.max() / p.mean())


def c_matrix(training: TrainingMatrix, tx: ArrayGeometry) -> np.ndarray:
    """``C = (I_L (x) B_t^*) T_tilde`` of shape ``(N_t L, N_p)``."""
    Tt, _ = stacked_blocks(training.T, training.L)
    blocks = Tt.reshape(training.L, training.n_t, training.n_p)
    return apply_basis(blocks, tx, axis=1, conj=True).reshape(-1, training.n_p)
