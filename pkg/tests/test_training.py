import math

import numpy as np
import pytest

from qcs.channel import ArrayGeometry, ConfigurationError, steering_matrix
from qcs.training import (TrainingKind, build_training, c_matrix, delay, delay_matrix, papr,
                          rudin_shapiro_pair, stacked_blocks, zc_sequence)


@pytest.mark.parametrize("n", [7, 8, 64, 63])
def test_zc_constant_modulus_and_ideal_autocorrelation(n):
    t = zc_sequence(n, power=2.0, n_t=4)
    assert np.allclose(np.abs(t), math.sqrt(0.5))
    acf = np.array([np.vdot(t, np.roll(t, k)) for k in range(n)])
    assert abs(acf[0]) == pytest.approx(n * 0.5)
    assert np.max(np.abs(acf[1:])) < 1e-9 * n


def test_shifted_rows():
    tr = build_training("zc", 8, 2, 4)
    assert np.allclose(tr.T[1], np.roll(tr.T[0], 4))
    assert np.allclose(tr.T[0], tr.t)


def test_shifted_zc_divisibility():
    with pytest.raises(ConfigurationError):
        build_training("zc", 12, 2, 4)


def test_iid_kinds_have_no_divisibility_constraint():
    tr = build_training("gauss", 13, 2, 4, rng=0)
    assert tr.T.shape == (2, 13)


def test_constant_modulus_kinds():
    for kind in ("zc", "golay", "qpsk"):
        tr = build_training(kind, 32, 4, 4, power=3.0, rng=0)
        assert np.allclose(np.abs(tr.T), math.sqrt(3.0 / 4)), kind
    assert papr(build_training("zc", 32, 4, 4).T[0]) == pytest.approx(1.0)


def test_gaussian_training_power():
    tr = build_training("gauss", 4096, 4, 4, power=2.0, rng=1)
    assert np.mean(np.abs(tr.T) ** 2) == pytest.approx(0.5, rel=0.05)


def test_iid_training_is_seeded():
    a = build_training("qpsk", 16, 2, 2, rng=5).T
    b = build_training("qpsk", 16, 2, 2, rng=5).T
    assert np.array_equal(a, b)


def test_golay_pair_is_complementary():
    a, b = rudin_shapiro_pair(16)
    acf = [np.dot(a[: 16 - k], a[k:]) + np.dot(b[: 16 - k], b[k:]) for k in range(16)]
    assert acf[0] == 32 and all(v == 0 for v in acf[1:])
    with pytest.raises(ConfigurationError):
        rudin_shapiro_pair(12)


def test_parse_aliases():
    assert TrainingKind.parse("ShiftedZC") is TrainingKind.SHIFTED_ZC
    assert TrainingKind.parse("gaussian") is TrainingKind.IID_GAUSSIAN
    with pytest.raises(ValueError):
        TrainingKind.parse("chirp")


def test_delay_matches_matrix():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((3, 8))
    for ell in range(4):
        assert np.allclose(delay(M, ell), M @ delay_matrix(8, ell))


def test_stacked_rows_are_consecutive_shifts_for_zc():
    tr = build_training("zc", 8, 2, 2)
    Tt, perm = stacked_blocks(tr.T, 2)
    T_bar = Tt[perm]
    for k in range(4):
        assert np.allclose(T_bar[k], np.roll(tr.t, k))


def test_c_matrix_definition():
    tx = ArrayGeometry(2, 2)
    tr = build_training("zc", 16, 4, 2)
    Tt, _ = stacked_blocks(tr.T, 2)
    Bt = steering_matrix(tx)
    ref = np.kron(np.eye(2), Bt.conj().T) @ Tt
    assert np.allclose(c_matrix(tr, tx), ref, atol=1e-12)
