"""Implicit measurement operator ``A = C^T (x) B_r``.

``A x = vec(B_r X C)`` where ``X = [X[0] ... X[L-1]]`` is ``N_r x N_t L``.
The input vector follows :attr:`qcs.channel.ChannelRealization.x`; internally
it is viewed as an array ``(L, N_t, N_r)`` so that ``vec`` is a C-order ravel.
Outputs are ``vec(Z)`` for ``Z`` of shape ``(N_r, N_p)``, i.e. a C-order
ravel of ``Z^T`` with shape ``(N_p, N_r)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import ArrayGeometry, apply_basis, steering_matrix
from .training import TrainingMatrix, stacked_blocks


class OperatorError(ValueError):
    pass


class SvdMode(str, enum.Enum):
    FLAT_ZC = "flat_zc"
    GENERAL_DENSE = "general_dense"


# largest N_p * N_t * L for which the Kronecker-factor SVD is attempted
DENSE_SVD_LIMIT = 2 ** 24


@dataclass
class SvdFactors:
    """``A = U diag(s) V^*`` with ``V`` unitary on the ``N_x`` coefficients.

    ``uh`` maps ``C^{N_y} -> C^{N_x}`` (coordinates with ``s == 0`` are
    returned as zeros) and ``u`` is its adjoint.
    """

    s: np.ndarray
    u: Callable[[np.ndarray], np.ndarray]
    uh: Callable[[np.ndarray], np.ndarray]
    v: Callable[[np.ndarray], np.ndarray]
    vh: Callable[[np.ndarray], np.ndarray]


class MeasurementOperator:
    """Fast ``A`` / ``A^*`` for a training matrix and two UPA geometries.

    Shifted-ZC training uses length-``N_p`` FFT circular convolution with the
    base sequence; any other training falls back to a dense ``T_tilde``
    product (still never forming ``A``).  Instances are immutable and safe to
    share between threads.
    """

    def __init__(self, training: TrainingMatrix, tx: ArrayGeometry, rx: ArrayGeometry):
        if training.n_t != tx.n:
            raise OperatorError(f"training has {training.n_t} rows but the array has {tx.n}")
        self.training = training
        self.tx = tx
        self.rx = rx
        self.L = training.L
        self.n_t = tx.n
        self.n_r = rx.n
        self.n_p = training.n_p
        self.n_x = self.n_t * self.n_r * self.L
        self.n_y = self.n_r * self.n_p
        self.svd_mode = SvdMode.FLAT_ZC if training.is_shifted_zc else SvdMode.GENERAL_DENSE
        Tt, self._perm = stacked_blocks(training.T, self.L)
        self.c_fro2 = float(np.sum(np.abs(Tt) ** 2))
        if self.svd_mode is SvdMode.FLAT_ZC:
            self._t_hat = np.fft.fft(training.t)
            self._Tt = None
        else:
            self._t_hat = None
            self._Tt = Tt
        self._svd: SvdFactors | None = None

    # -- norms ---------------------------------------------------------------
    @property
    def fro2(self) -> float:
        """``||A||_F^2 = N_r ||C||_F^2``."""
        return self.n_r * self.c_fro2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    def spectral_norm2(self, iters: int = 50, rng=0) -> float:
        """Largest squared singular value of ``A``."""
        if self.svd_mode is SvdMode.FLAT_ZC:
            return self.training.power * self.n_p / self.n_t
        if self._svd is not None:
            return float(np.max(self._svd.s) ** 2)
        # power iteration on T_tilde T_tilde^*: same spectrum as A A^* up to repeats
        rng = np.random.default_rng(rng)
        v = rng.standard_normal(self._Tt.shape[0]) + 0j
        lam = 0.0
        for _ in range(iters):
            w = self._Tt @ (self._Tt.conj().T @ v)
            lam = float(np.linalg.norm(w))
            v = w / lam
        return lam

    # -- apply ----------------------------------------------------------------
    def _check(self, v: np.ndarray, n: int) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (n,):
            raise OperatorError(f"expected a vector of length {n}, got shape {v.shape}")
        return v

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x, self.n_x)
        Xt = x.reshape(self.L, self.n_t, self.n_r)
        # X[l] B_t^*, transposed: conj(B_t) along the transmit axis
        W = apply_basis(Xt, self.tx, axis=1, conj=True)
        if self.svd_mode is SvdMode.FLAT_ZC:
            # rows of T_bar are shifts n*L + l; convolve with t along time
            Wb = W.transpose(1, 0, 2).reshape(self.n_t * self.L, self.n_r)
            Zt = np.fft.ifft(np.fft.fft(Wb, n=self.n_p, axis=0) * self._t_hat[:, None], axis=0)
        else:
            Zt = self._Tt.T @ W.reshape(self.L * self.n_t, self.n_r)
        return apply_basis(Zt, self.rx, axis=1).ravel()

    def adjoint(self, s: np.ndarray) -> np.ndarray:
        s = self._check(s, self.n_y)
        St = apply_basis(s.reshape(self.n_p, self.n_r), self.rx, axis=1, conj=True)
        if self.svd_mode is SvdMode.FLAT_ZC:
            corr = np.fft.ifft(np.fft.fft(St, axis=0) * self._t_hat.conj()[:, None], axis=0)
            Wb = corr[: self.n_t * self.L]
            W = Wb.reshape(self.n_t, self.L, self.n_r).transpose(1, 0, 2)
        else:
            W = (self._Tt.conj() @ St).reshape(self.L, self.n_t, self.n_r)
        return apply_basis(W, self.tx, axis=1).ravel()

    __matmul__ = apply

    # -- explicit forms (small problems, oracles) -------------------------------
    def c_matrix(self) -> np.ndarray:
        if self._Tt is not None:
            Tt = self._Tt
        else:
            Tt, _ = stacked_blocks(self.training.T, self.L)
        blocks = Tt.reshape(self.L, self.n_t, self.n_p)
        return apply_basis(blocks, self.tx, axis=1, conj=True).reshape(-1, self.n_p)

    def dense(self) -> np.ndarray:
        """Materialize ``A = C^T (x) B_r`` (testing only)."""
        return np.kron(self.c_matrix().T, steering_matrix(self.rx))

    def apply_baseline(self, x: np.ndarray) -> np.ndarray:
        """``vec(B_r X C)`` with an explicit ``C`` (reference timing path)."""
        x = self._check(x, self.n_x)
        C = self.c_matrix()
        Xt = x.reshape(self.L * self.n_t, self.n_r)
        return apply_basis(C.T @ Xt, self.rx, axis=1).ravel()

    # -- SVD -------------------------------------------------------------------
    def svd_factors(self, mode: SvdMode | None = None) -> SvdFactors:
        mode = self.svd_mode if mode is None else SvdMode(mode)
        if mode is SvdMode.FLAT_ZC and self.svd_mode is not SvdMode.FLAT_ZC:
            raise OperatorError("flat-spectrum SVD factors require shifted-ZC training")
        if self._svd is None:
            self._svd = self._flat_svd() if mode is SvdMode.FLAT_ZC else self._kron_svd()
        return self._svd

    def _flat_svd(self) -> SvdFactors:
        if self.n_p < self.n_t * self.L:
            raise OperatorError("flat spectrum needs N_p >= N_t L")
        sv = np.sqrt(self.training.power * self.n_p / self.n_t)
        ident = lambda v: np.asarray(v)  # noqa: E731
        return SvdFactors(
            s=np.full(self.n_x, sv),
            u=lambda v: self.apply(v) / sv,
            uh=lambda p: self.adjoint(p) / sv,
            v=ident,
            vh=ident,
        )

    def _kron_svd(self) -> SvdFactors:
        """SVD through ``C^T = U_c S_c V_c^*``: ``A = (U_c (x) B_r)(S_c (x) I)(V_c (x) I)^*``."""
        k = self.n_t * self.L
        if self.n_p * k > DENSE_SVD_LIMIT:
            raise OperatorError(
                f"dense SVD of a {self.n_p}x{k} training block exceeds the size limit")
        Ct = self.c_matrix().T
        Uc, sc, Vch = np.linalg.svd(Ct, full_matrices=self.n_p < k)
        Vc = Vch.conj().T                       # (k, k)
        r = sc.size
        s_cols = np.zeros(k)
        s_cols[:r] = sc
        n_r, n_p = self.n_r, self.n_p

        # coefficient vectors are vec(X) for X of shape (n_r, k): view as (k, n_r)
        def vh(x):
            return (Vch @ np.asarray(x).reshape(k, n_r)).ravel()

        def v(c):
            return (Vc @ np.asarray(c).reshape(k, n_r)).ravel()

        def uh(p):
            P = apply_basis(np.asarray(p).reshape(n_p, n_r), self.rx, axis=1, conj=True)
            out = np.zeros((k, n_r), dtype=complex)
            out[:r] = Uc[:, :r].conj().T @ P
            return out.ravel()

        def u(c):
            c = np.asarray(c).reshape(k, n_r)
            return apply_basis(Uc[:, :r] @ c[:r], self.rx, axis=1).ravel()

        return SvdFactors(s=np.repeat(s_cols, n_r), u=u, uh=uh, v=v, vh=vh)
