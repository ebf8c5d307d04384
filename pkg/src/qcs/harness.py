"""Seeded Monte-Carlo experiment runner and CSV output.

Every stochastic draw comes from a ``numpy.random.SeedSequence`` keyed by
``(seed, stream, trial, grid indices...)``, so a row depends only on the
seed and its coordinates and never on scheduling:

* channel: ``(0, trial)``
* noise: ``(1, trial, snr_idx, np_idx, train_idx)``, shared across bits and algorithms
* training: ``(2, trial, np_idx, train_idx)``
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import amp, baselines, metrics
from .channel import (ArrayGeometry, ConfigurationError, angle_to_antenna, random_channel,
                      vec_to_taps)
from .denoisers import OutputChannel, init_prior
from .operator import MeasurementOperator
from .quantizer import PowerEstimate, parse_bits, quantize, stepsize_table
from .training import TrainingKind, build_training

log = logging.getLogger(__name__)

ALGORITHMS = ("ls", "almmse", "bpdn", "qiht",
              "em-bg-gamp", "em-gm-gamp", "em-bg-vamp", "em-gm-vamp")


@dataclass
class ExperimentConfig:
    tx: tuple = (8, 8)            # (rows_elev, cols_azim)
    rx: tuple = (8, 8)
    L: int = 16
    n_cl: int = 4
    paths: int = 10
    spread_deg: float = 7.5
    train: list = field(default_factory=lambda: ["zc"])
    n_p: list = field(default_factory=lambda: [2048])
    snr_db: list = field(default_factory=lambda: [0.0])
    bits: list = field(default_factory=lambda: [4])
    algos: list = field(default_factory=lambda: ["em-gm-vamp"])
    trials: int = 100
    seed: int = 0
    power: float = 1.0
    n_co: int = 10240
    n_b: int = 256
    compute_mi: bool = True
    max_iter: int = 50
    tol: float = 1e-6
    damping: float = 1.0          # GAMP
    vamp_damping: float = 0.8     # undamped VAMP can run away at 1 bit
    gm_order: int = 3
    qiht_iters: int = 50
    timing: bool = False
    threads: int = 1
    out: str = "results.csv"

    # nested sections of the config file -> flat field names
    _SECTIONS = {
        "geometry": {"tx": "tx", "rx": "rx"},
        "channel": {"L": "L", "n_cl": "n_cl", "paths": "paths", "spread_deg": "spread_deg"},
        "training": {"kind": "train", "n_p": "n_p", "power": "power"},
        "sweep": {"snr_db": "snr_db", "bits": "bits"},
        "rate": {"n_co": "n_co", "n_b": "n_b", "compute_mi": "compute_mi"},
        "amp": {"max_iter": "max_iter", "tol": "tol", "damping": "damping",
                "vamp_damping": "vamp_damping", "gm_order": "gm_order"},
        "qiht": {"iters": "qiht_iters"},
    }

    @classmethod
    def from_mapping(cls, data: dict | None, overrides: dict | None = None) -> "ExperimentConfig":
        """Build from a parsed config file; ``overrides`` (CLI) take precedence."""
        names = {f.name for f in dataclasses.fields(cls)}
        flat: dict = {}
        for key, val in (data or {}).items():
            if key in cls._SECTIONS:
                if not isinstance(val, dict):
                    raise ConfigurationError(f"section {key!r} must be a mapping")
                for sub, v in val.items():
                    if sub not in cls._SECTIONS[key]:
                        raise ConfigurationError(f"unknown key {key}.{sub}")
                    flat[cls._SECTIONS[key][sub]] = v
            elif key in names:
                flat[key] = val
            else:
                raise ConfigurationError(f"unknown config key {key!r}")
        for k, v in (overrides or {}).items():
            if v is not None:
                flat[k] = v
        cfg = cls(**flat)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        return cls.from_mapping(data, overrides)

    def validate(self) -> None:
        def as_list(v):
            return list(v) if isinstance(v, (list, tuple)) else [v]

        self.tx = tuple(int(v) for v in self.tx)
        self.rx = tuple(int(v) for v in self.rx)
        if len(self.tx) != 2 or len(self.rx) != 2:
            raise ConfigurationError("array geometry must be (rows_elev, cols_azim)")
        self.train = [TrainingKind.parse(t).value for t in as_list(self.train)]
        self.n_p = [int(v) for v in as_list(self.n_p)]
        self.snr_db = [float(v) for v in as_list(self.snr_db)]
        self.bits = [parse_bits(b) for b in as_list(self.bits)]
        self.algos = [str(a).lower() for a in as_list(self.algos)]
        for name in ("train", "n_p", "snr_db", "bits", "algos"):
            if not getattr(self, name):
                raise ConfigurationError(f"grid {name!r} is empty")
        bad = [a for a in self.algos if a not in ALGORITHMS]
        if bad:
            raise ConfigurationError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        for b in self.bits:
            stepsize_table(b)
        if int(self.trials) < 1:
            raise ConfigurationError("trials must be >= 1")
        for name in ("damping", "vamp_damping"):
            if not 0 < float(getattr(self, name)) <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1]")
        if int(self.threads) < 1:
            raise ConfigurationError("threads must be >= 1")
        if any(n < 1 for n in self.n_p) or max(self.n_p) > self.n_co:
            raise ConfigurationError("need 1 <= N_p <= N_co")
        if self.n_b < self.L:
            raise ConfigurationError("N_b must be at least L")
        if self.L < 5:
            raise ConfigurationError("L must be at least 5 for the clustered delay model")
        n_t = self.tx[0] * self.tx[1]
        for kind in self.train:
            if kind == TrainingKind.SHIFTED_ZC.value:
                for n in self.n_p:
                    if n % (n_t * self.L):
                        raise ConfigurationError(
                            f"shifted-ZC training needs N_p divisible by N_t*L={n_t * self.L}")

    def to_mapping(self) -> dict:
        d = dataclasses.asdict(self)
        d["tx"], d["rx"] = list(self.tx), list(self.rx)
        d["bits"] = ["inf" if math.isinf(b) else b for b in self.bits]
        return d


# ---------------------------------------------------------------------------
# rows
# ---------------------------------------------------------------------------

COLUMNS = ("snr_db", "bits", "n_p", "train", "algo", "trial", "seed",
           "nmse_db", "mi", "rate", "iterations", "wall_ms", "status")


@dataclass
class ResultRow:
    snr_db: float
    bits: float
    n_p: int
    train: str
    algo: str
    trial: int
    seed: int
    nmse_db: float = math.nan
    mi: float = math.nan
    rate: float = math.nan
    iterations: int = 0
    wall_ms: float | None = None
    status: str = "ok"
    # grid position for the canonical ordering; not serialized
    key: tuple = field(default=(), compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.9g" % v
    return str(v)


def emit_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])


def _parse_float(s: str):
    return None if s == "" else float(s)


def read_csv(path) -> list[ResultRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            rows.append(ResultRow(
                snr_db=float(d["snr_db"]), bits=float(d["bits"]), n_p=int(d["n_p"]),
                train=d["train"], algo=d["algo"], trial=int(d["trial"]), seed=int(d["seed"]),
                nmse_db=float(d["nmse_db"]), mi=float(d["mi"]), rate=float(d["rate"]),
                iterations=int(d["iterations"]), wall_ms=_parse_float(d["wall_ms"]),
                status=d["status"]))
    return rows


def summarize(rows) -> list[dict]:
    """Per-coordinate aggregates over successful trials, in first-seen order."""
    groups: dict = {}
    for r in rows:
        k = (r.snr_db, r.bits, r.n_p, r.train, r.algo)
        groups.setdefault(k, []).append(r)
    out = []
    for (snr, bits, n_p, train, algo), rs in groups.items():
        good = [r for r in rs if r.ok]
        nm = np.array([r.nmse_db for r in good])
        lin = 10.0 ** (nm / 10.0)
        mi = np.array([r.mi for r in good])
        rate = np.array([r.rate for r in good])
        nan = math.nan
        out.append({
            "snr_db": snr, "bits": bits, "n_p": n_p, "train": train, "algo": algo,
            "n_ok": len(good), "n_failed": len(rs) - len(good),
            "nmse_db_mean": float(nm.mean()) if good else nan,
            "nmse_db_std": float(nm.std()) if good else nan,
            # NMSE is defined as an expectation, so average before the dB map
            "mean_nmse_db": float(metrics.to_db(lin.mean())) if good else nan,
            "mi_mean": float(mi.mean()) if good else nan,
            "rate_mean": float(rate.mean()) if good else nan,
        })
    return out


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


@dataclass
class Measurement:
    """One quantized training observation with everything the estimators need."""

    op: MeasurementOperator
    y: np.ndarray
    spec: object
    power: PowerEstimate | None
    sigma_w2: float
    norm: metrics.NormEstimate


def measure(op: MeasurementOperator, x: np.ndarray, snr_db: float, bits, noise_rng,
            power_t: float = 1.0) -> Measurement:
    """``y = Q(A x + w)`` with ``sigma_w2 = P_t / SNR`` and an ideal AGC."""
    sigma_w2 = power_t / 10.0 ** (snr_db / 10.0)
    w = math.sqrt(sigma_w2 / 2) * (noise_rng.standard_normal(op.n_y)
                                   + 1j * noise_rng.standard_normal(op.n_y))
    return quantize_measurement(op, op.apply(x) + w, bits, sigma_w2)


def quantize_measurement(op, z_hat, bits, sigma_w2) -> Measurement:
    spec = stepsize_table(bits)
    power = PowerEstimate.measure(z_hat)
    y = quantize(z_hat, spec, power) if not spec.is_ideal else z_hat.copy()
    energy = op.n_y * (power.re_power + power.im_power)
    ne = metrics.norm_estimate(energy, op.n_p, op.n_r, sigma_w2, op.training.power, op.L,
                               op.n_t, a_fro2=op.fro2)
    return Measurement(op, y, spec, None if spec.is_ideal else power, sigma_w2, ne)


def run_algorithm(algo: str, m: Measurement, cfg: ExperimentConfig | None = None,
                  truth=None):
    """Run one estimator; returns ``(normalized estimate, iterations)``."""
    cfg = cfg or ExperimentConfig()
    op, y = m.op, m.y
    eta = m.spec.nmse
    sx2 = m.norm.sigma_x2
    if algo == "ls":
        x, it = baselines.estimate_ls(y, op), 1
    elif algo == "almmse":
        x, it = baselines.estimate_almmse(y, op, m.sigma_w2, max(sx2, 1e-12), eta), 1
    elif algo == "bpdn":
        lin = baselines.LinearizedModel.bussgang(eta, m.sigma_w2, sx2, op.training.power, op.L)
        r = baselines.estimate_bpdn(y, op, lin)
        x, it = r.x_hat, r.outer_steps
    elif algo == "qiht":
        r = baselines.estimate_qiht(y, op, m.spec, m.power, iters=cfg.qiht_iters, truth=truth)
        x, it = r.x_hat, r.iterations_used
    else:
        _, prior, engine = algo.split("-")
        theta0 = init_prior(prior, max(sx2, 1e-12), n_components=cfg.gm_order)
        ch = OutputChannel(m.spec, m.power, m.sigma_w2)
        if engine == "gamp":
            r = amp.run_gamp(op, y, ch, theta0, amp.GampOptions(
                cfg.max_iter, cfg.tol, cfg.damping, prior_power=theta0.variance,
                truth=truth))
        else:
            r = amp.run_vamp(op, y, ch, theta0, amp.VampOptions(
                cfg.max_iter, cfg.tol, cfg.vamp_damping, prior_power=theta0.variance,
                truth=truth))
        if r.status != "ok":
            raise FloatingPointError(f"{algo} {r.status}")
        x, it = r.x_hat, r.iterations_used
    return metrics.normalize(x, m.norm), it


def _run_trial(cfg: ExperimentConfig, trial: int) -> list[ResultRow]:
    tx = ArrayGeometry(*cfg.tx)
    rx = ArrayGeometry(*cfg.rx)
    rows: list[ResultRow] = []
    real = random_channel(_rng(cfg.seed, 0, trial), tx, rx, cfg.L, cfg.n_cl, cfg.paths,
                          cfg.spread_deg)
    x = real.x
    G = metrics.ofdm_channels(real.H, cfg.n_b) if cfg.compute_mi else None
    for ti, train in enumerate(cfg.train):
        for pi, n_p in enumerate(cfg.n_p):
            try:
                tr = build_training(train, n_p, tx.n, cfg.L, cfg.power,
                                    rng=_rng(cfg.seed, 2, trial, pi, ti))
                op = MeasurementOperator(tr, tx, rx)
                setup_err = None
            except Exception as exc:  # recorded per row below
                setup_err = exc
            for si, snr in enumerate(cfg.snr_db):
                noise = None
                for bi, bits in enumerate(cfg.bits):
                    for ai, algo in enumerate(cfg.algos):
                        row = ResultRow(snr, float(bits), n_p, train, algo, trial, cfg.seed,
                                        key=(si, bi, pi, ti, ai, trial))
                        rows.append(row)
                        if setup_err is not None:
                            row.status = f"error:{type(setup_err).__name__}"
                            continue
                        t0 = time.perf_counter()
                        try:
                            if noise is None:
                                nrng = _rng(cfg.seed, 1, trial, si, pi, ti)
                                sigma_w2 = cfg.power / 10.0 ** (snr / 10.0)
                                noise = op.apply(x) + math.sqrt(sigma_w2 / 2) * (
                                    nrng.standard_normal(op.n_y)
                                    + 1j * nrng.standard_normal(op.n_y))
                            m = quantize_measurement(op, noise, bits, sigma_w2)
                            x_t, it = run_algorithm(algo, m, cfg)
                            row.nmse_db = metrics.nmse_db(x_t, x)
                            row.iterations = int(it)
                            if cfg.compute_mi:
                                H_hat = vec_to_taps(x_t, cfg.L, tx.n, rx.n)
                                G_hat = metrics.ofdm_channels(angle_to_antenna(H_hat, tx, rx),
                                                              cfg.n_b)
                                row.mi = metrics.mi_lower_bound(
                                    G, G_hat, m.spec.nmse, sigma_w2, cfg.n_b * cfg.power)
                                row.rate = metrics.achievable_rate(row.mi, n_p, cfg.n_co)
                        except Exception as exc:
                            log.warning("trial %d %s failed: %s", trial, algo, exc)
                            row.status = f"error:{type(exc).__name__}"
                        if cfg.timing:
                            row.wall_ms = 1e3 * (time.perf_counter() - t0)
    return rows


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[ResultRow]:
    """All rows of the experiment in canonical (coordinate, algorithm, trial) order."""
    cfg.validate()
    trials = range(int(cfg.trials))
    if cfg.threads == 1:
        chunks = []
        for t in trials:
            chunks.append(_run_trial(cfg, t))
            if progress:
                progress(t)
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(lambda t: _run_trial(cfg, t), trials))
    rows = [r for c in chunks for r in c]
    rows.sort(key=lambda r: r.key)
    return rows
