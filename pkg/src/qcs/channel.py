"""Clustered broadband mmWave MIMO channels with UPAs at both ends.

Antenna-domain taps ``H[l]`` and angle-delay coefficients ``X[l]`` are related
by ``H[l] = B_r X[l] B_t^*`` where ``B = F_azim (x) F_elev`` is a Kronecker
product of unitary DFT matrices.  All arrays of taps are stored with shape
``(L, N_r, N_t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array with ``rows_elev x cols_azim`` elements.

    Element ``(e, a)`` sits at vector index ``a * rows_elev + e`` so that the
    steering basis is ``F_azim (x) F_elev``.
    """

    rows_elev: int
    cols_azim: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.rows_elev < 1 or self.cols_azim < 1:
            raise ConfigurationError("array dimensions must be positive")
        if not self.spacing > 0:
            raise ConfigurationError("element spacing must be positive")

    @property
    def n(self) -> int:
        return self.rows_elev * self.cols_azim

    @property
    def grid(self) -> tuple[int, int]:
        return (self.cols_azim, self.rows_elev)

    def response(self, azim, zen) -> np.ndarray:
        """Unit-norm array response vectors, one column per angle pair."""
        azim = np.atleast_1d(np.asarray(azim, dtype=float))
        zen = np.atleast_1d(np.asarray(zen, dtype=float))
        e = np.arange(self.rows_elev)[:, None]
        a = np.arange(self.cols_azim)[:, None]
        a_el = np.exp(2j * np.pi * self.spacing * e * np.cos(zen))
        a_az = np.exp(2j * np.pi * self.spacing * a * np.sin(zen) * np.sin(azim))
        resp = (a_az[:, None, :] * a_el[None, :, :]).reshape(self.n, -1)
        return resp / math.sqrt(self.n)


def apply_basis(v: np.ndarray, geom: ArrayGeometry, axis: int, conj: bool = False) -> np.ndarray:
    """Multiply ``B`` (or ``conj(B)``) into ``v`` along ``axis`` using a 2-D FFT.

    ``B`` is symmetric, so ``conj(B) = B^*`` and right-multiplication of a
    row vector by ``B^*`` is the same operation on the row.
    """
    v = np.moveaxis(np.asarray(v), axis, -1)
    shape = v.shape
    g = v.reshape(shape[:-1] + geom.grid)
    if conj:
        g = np.fft.ifft2(g, axes=(-2, -1), norm="ortho")
    else:
        g = np.fft.fft2(g, axes=(-2, -1), norm="ortho")
    return np.moveaxis(g.reshape(shape), -1, axis)


def steering_matrix(geom: ArrayGeometry) -> np.ndarray:
    """Dense ``B = F_azim (x) F_elev`` (for oracles and small problems)."""
    f_a = scipy.linalg.dft(geom.cols_azim, scale="sqrtn")
    f_e = scipy.linalg.dft(geom.rows_elev, scale="sqrtn")
    return np.kron(f_a, f_e)


def _check_taps(a: np.ndarray, tx: ArrayGeometry, rx: ArrayGeometry) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1:] != (rx.n, tx.n):
        raise ConfigurationError(
            f"expected taps of shape (L, {rx.n}, {tx.n}), got {np.shape(a)}")
    return a


def angle_to_antenna(X, tx: ArrayGeometry, rx: ArrayGeometry) -> np.ndarray:
    X = _check_taps(X, tx, rx)
    return apply_basis(apply_basis(X, rx, axis=1), tx, axis=2, conj=True)


def antenna_to_angle(H, tx: ArrayGeometry, rx: ArrayGeometry) -> np.ndarray:
    H = _check_taps(H, tx, rx)
    return apply_basis(apply_basis(H, rx, axis=1, conj=True), tx, axis=2)


def raised_cosine(t, rolloff: float = 0.0, period: float = 1.0) -> np.ndarray:
    """Raised-cosine pulse with unit peak; ``rolloff=0`` is a normalized sinc."""
    u = np.asarray(t, dtype=float) / period
    p = np.sinc(u)
    if rolloff > 0:
        den = 1.0 - (2.0 * rolloff * u) ** 2
        sing = np.abs(den) < 1e-10
        safe = np.where(sing, 1.0, den)
        p = np.where(sing, (np.pi / 4) * np.sinc(1.0 / (2.0 * rolloff)),
                     p * np.cos(np.pi * rolloff * u) / safe)
    return p


@dataclass(frozen=True)
class ClusterParams:
    """Per-path parameters of a clustered channel draw (angles in radians)."""

    gain: np.ndarray
    delay: np.ndarray
    aoa_azim: np.ndarray
    aoa_zen: np.ndarray
    aod_azim: np.ndarray
    aod_zen: np.ndarray
    cluster: np.ndarray
    # cluster centers, columns: aoa_azim, aoa_zen, aod_azim, aod_zen
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    rolloff: float = 0.0
    symbol_period: float = 1.0

    @property
    def n_paths(self) -> int:
        return self.gain.size

    @property
    def n_clusters(self) -> int:
        return int(self.cluster.max()) + 1 if self.cluster.size else 0


def draw_clusters(rng, n_cl: int, paths_per_cluster: int, angular_spread: float, L: int,
                  T: float = 1.0, rolloff: float = 0.0, cluster_powers=None,
                  azim_range: float = math.radians(60.0),
                  zen_range: float = math.radians(30.0)) -> ClusterParams:
    """Draw cluster centers, per-path Laplacian angle offsets, delays and gains.

    Path gains have total expected power one, split over clusters by
    ``cluster_powers`` (equal by default).
    """
    if n_cl < 1 or paths_per_cluster < 1:
        raise ConfigurationError("need at least one cluster and one path per cluster")
    if angular_spread < 0:
        raise ConfigurationError("angular spread must be nonnegative")
    if L < 5:
        raise ConfigurationError(f"delay layout needs L >= 5, got L={L}")
    rng = np.random.default_rng(rng)
    if cluster_powers is None:
        w = np.full(n_cl, 1.0 / n_cl)
    else:
        w = np.asarray(cluster_powers, dtype=float)
        if w.shape != (n_cl,) or np.any(w < 0) or w.sum() <= 0:
            raise ConfigurationError("cluster_powers must be n_cl nonnegative weights")
        w = w / w.sum()

    n = n_cl * paths_per_cluster
    cl = np.repeat(np.arange(n_cl), paths_per_cluster)
    centers = np.column_stack([
        rng.uniform(-azim_range, azim_range, n_cl),
        np.pi / 2 + rng.uniform(-zen_range, zen_range, n_cl),
        rng.uniform(-azim_range, azim_range, n_cl),
        np.pi / 2 + rng.uniform(-zen_range, zen_range, n_cl),
    ])
    # Laplace(b) has standard deviation b*sqrt(2)
    scale = angular_spread / math.sqrt(2.0)
    offsets = rng.laplace(0.0, scale, size=(n, 4)) if scale > 0 else np.zeros((n, 4))
    angles = centers[cl] + offsets

    cl_delay = rng.uniform(0.0, (L - 4) * T, n_cl)
    delay = cl_delay[cl] + rng.uniform(0.0, 2.0 * T, n)

    power = w[cl] / paths_per_cluster
    gain = np.sqrt(power / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return ClusterParams(gain=gain, delay=delay,
                         aoa_azim=angles[:, 0], aoa_zen=angles[:, 1],
                         aod_azim=angles[:, 2], aod_zen=angles[:, 3],
                         cluster=cl, centers=centers, rolloff=rolloff, symbol_period=T)


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    X: np.ndarray
    tx: ArrayGeometry
    rx: ArrayGeometry
    params: ClusterParams | None = None

    @property
    def L(self) -> int:
        return self.H.shape[0]

    @property
    def x(self) -> np.ndarray:
        """``vec([X[0], ..., X[L-1]])`` in the measurement-operator ordering."""
        return self.X.transpose(0, 2, 1).ravel()


def synthesize_taps(params: ClusterParams, tx: ArrayGeometry, rx: ArrayGeometry, L: int,
                    normalize: bool = True) -> ChannelRealization:
    """Sample the clustered channel on the symbol grid.

    With ``normalize`` the pulse taps of every path are scaled to unit energy
    over the ``L``-tap window and gains scaled by ``sqrt(N_t N_r)``, so that
    ``E[sum_l ||H[l]||_F^2] = N_t N_r`` over the ensemble.
    """
    T = params.symbol_period
    taps = raised_cosine(np.arange(L)[:, None] * T - params.delay[None, :],
                         params.rolloff, T)
    gain = params.gain
    if normalize:
        energy = np.sum(taps ** 2, axis=0)
        taps = taps / np.sqrt(np.where(energy > 0, energy, 1.0))
        gain = gain * math.sqrt(tx.n * rx.n)
    a_r = rx.response(params.aoa_azim, params.aoa_zen)
    a_t = tx.response(params.aod_azim, params.aod_zen)
    H = np.einsum("lp,ip,jp->lij", taps * gain[None, :], a_r, a_t.conj())
    X = antenna_to_angle(H, tx, rx)
    return ChannelRealization(H=H, X=X, tx=tx, rx=rx, params=params)


def random_channel(rng, tx: ArrayGeometry, rx: ArrayGeometry, L: int, n_cl: int = 4,
                   paths_per_cluster: int = 10, angular_spread_deg: float = 7.5,
                   rolloff: float = 0.0) -> ChannelRealization:
    params = draw_clusters(rng, n_cl, paths_per_cluster, math.radians(angular_spread_deg), L,
                           rolloff=rolloff)
    return synthesize_taps(params, tx, rx, L)


def vec_to_taps(x: np.ndarray, L: int, n_t: int, n_r: int) -> np.ndarray:
    """Inverse of :attr:`ChannelRealization.x`."""
    return np.asarray(x).reshape(L, n_t, n_r).transpose(0, 2, 1)


def dump_channel(real: ChannelRealization, path, fmt: str = "csv") -> None:
    """Write ``(domain, l, i, j, re, im)`` records for ``H`` and ``X``."""
    if fmt == "npz":
        np.savez(path, H=real.H, X=real.X)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "l", "i", "j", "re", "im"])
        for name, arr in (("H", real.H), ("X", real.X)):
            for (l, i, j), v in np.ndenumerate(arr):
                w.writerow([name, l, i, j, repr(float(v.real)), repr(float(v.imag))])


def load_channel(path) -> dict[str, np.ndarray]:
    """Read a CSV or npz dump back into ``{"H": ..., "X": ...}``."""
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            return {"H": z["H"], "X": z["X"]}
    rows: dict[str, list] = {"H": [], "X": []}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows[r["domain"]].append((int(r["l"]), int(r["i"]), int(r["j"]),
                                      float(r["re"]) + 1j * float(r["im"])))
    out = {}
    for name, recs in rows.items():
        shape = tuple(max(r[k] for r in recs) + 1 for k in range(3))
        a = np.zeros(shape, dtype=complex)
        for l, i, j, v in recs:
            a[l, i, j] = v
        out[name] = a
    return out
