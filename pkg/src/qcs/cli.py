"""Command-line entry point ``estimate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from .channel import ArrayGeometry
from .harness import ExperimentConfig, emit_csv, run_experiment, summarize
from .operator import MeasurementOperator
from .quantizer import monte_carlo_nmse, stepsize_table
from .training import build_training

log = logging.getLogger("qcs")


def _floats(s):
    return [float(v) for v in s.split(",")]


def _ints(s):
    return [int(v) for v in s.split(",")]


def _strs(s):
    return [v.strip() for v in s.split(",") if v.strip()]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="estimate",
        description="Few-bit broadband mmWave MIMO channel estimation experiments.")
    sub = p.add_subparsers(dest="command")

    run = sub.add_parser("run", help="run a Monte-Carlo experiment (default)")
    _add_run_args(run)
    _add_run_args(p)

    bench = sub.add_parser("bench-operator", help="time the fast operator against explicit C")
    bench.add_argument("--tx", type=_ints, default=[8, 8])
    bench.add_argument("--rx", type=_ints, default=[8, 8])
    bench.add_argument("--L", type=int, default=16)
    bench.add_argument("--np", type=_ints, default=[1024, 2048, 4096])
    bench.add_argument("--repeats", type=int, default=5)

    t1 = sub.add_parser("table1", help="Monte-Carlo quantizer NMSE against the table")
    t1.add_argument("--samples", type=int, default=10 ** 7)
    t1.add_argument("--seed", type=int, default=0)
    return p


def _add_run_args(p):
    p.add_argument("--config", help="YAML experiment description")
    p.add_argument("--snr-db", type=_floats, dest="snr_db")
    p.add_argument("--bits", type=_strs, help="comma list, e.g. 1,2,4,inf")
    p.add_argument("--np", type=_ints, dest="n_p")
    p.add_argument("--train", type=_strs, help="zc,golay,qpsk,gauss")
    p.add_argument("--algo", type=_strs, dest="algos")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall time per row (breaks byte-identical reruns)")
    p.add_argument("--no-mi", action="store_false", dest="compute_mi", default=None)


def _setup_logging():
    level = os.environ.get("QCS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def cmd_run(args) -> int:
    keys = ("snr_db", "bits", "n_p", "train", "algos", "trials", "seed", "threads", "out",
            "timing", "compute_mi")
    overrides = {k: getattr(args, k) for k in keys}
    if args.config:
        cfg = ExperimentConfig.load(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_mapping({}, overrides)
    log.info("running %d trials", cfg.trials)
    rows = run_experiment(cfg, progress=lambda t: log.info("trial %d done", t))
    emit_csv(rows, cfg.out)
    for s in summarize(rows):
        print("snr={snr_db:g} bits={bits:g} np={n_p} train={train} algo={algo}: "
              "NMSE {mean_nmse_db:.2f} dB  MI {mi_mean:.3f}  rate {rate_mean:.3f}  "
              "(ok {n_ok}, failed {n_failed})".format(**s))
    return 0


def cmd_bench(args) -> int:
    tx, rx = ArrayGeometry(*args.tx), ArrayGeometry(*args.rx)
    rng = np.random.default_rng(0)
    print("n_p,fast_ms,explicit_ms")
    for n_p in args.np:
        op = MeasurementOperator(build_training("zc", n_p, tx.n, args.L), tx, rx)
        x = rng.standard_normal(op.n_x) + 1j * rng.standard_normal(op.n_x)
        times = []
        for f in (op.apply, op.apply_baseline):
            f(x)
            t0 = time.perf_counter()
            for _ in range(args.repeats):
                f(x)
            times.append(1e3 * (time.perf_counter() - t0) / args.repeats)
        print(f"{n_p},{times[0]:.3f},{times[1]:.3f}")
    return 0


def cmd_table1(args) -> int:
    print("bits,eta_table,eta_mc,abs_diff")
    rng = np.random.default_rng(args.seed)
    for b in range(1, 9):
        mc = monte_carlo_nmse(b, args.samples, rng)
        eta = stepsize_table(b).nmse
        print(f"{b},{eta:.6g},{mc:.6g},{abs(mc - eta):.2e}")
    return 0


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    if args.command == "bench-operator":
        return cmd_bench(args)
    if args.command == "table1":
        return cmd_table1(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
