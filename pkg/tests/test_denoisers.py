import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from oracles import gm_posterior_quad, quantized_posterior_quad
from qcs.denoisers import (OutputChannel, PriorKind, PriorParams, em_update, gaussian_prior,
                           init_prior, input_posterior, log_evidence, output_posterior,
                           rescale_prior, truncated_normal_moments)
from qcs.quantizer import PowerEstimate, inverse_cell, quantize, stepsize_table

GM3 = PriorParams(0.6, [0.2, 0.15, 0.05], [0.0, 0.5 - 0.3j, -1.0 + 1.0j], [0.1, 0.4, 2.0])


def test_prior_validation():
    with pytest.raises(ValueError):
        PriorParams(0.5, [0.3], [0.0], [1.0])
    with pytest.raises(ValueError):
        PriorParams(0.5, [0.5], [1.0], [1.0], PriorKind.BG)


def test_init_prior_variance():
    for kind in ("bg", "gm"):
        th = init_prior(kind, 0.3)
        assert th.variance == pytest.approx(0.3)
        assert th.lam0 == 0.9


def test_prior_sample_moments():
    x = GM3.sample(200_000, 0)
    assert np.mean(x) == pytest.approx(GM3.mean, abs=0.01)
    assert np.var(x) == pytest.approx(GM3.variance, rel=0.02)
    assert np.mean(x == 0) == pytest.approx(0.6, abs=0.01)


def test_input_posterior_matches_quadrature_grid():
    rng = np.random.default_rng(0)
    rs = rng.uniform(-2, 2, 100) + 1j * rng.uniform(-2, 2, 100)
    nus = 10 ** rng.uniform(-1.5, 0.5, 100)
    for r, nu in zip(rs, nus):
        m, v = input_posterior(np.array([r]), nu, GM3)
        mq, vq = gm_posterior_quad(r, nu, GM3.lam0, GM3.weights, GM3.means, GM3.variances)
        assert abs(m[0] - mq) < 1e-6
        assert abs(v[0] - vq) < 1e-6


def test_input_posterior_gaussian_prior_is_linear():
    th = gaussian_prior(2.0)
    r = np.array([1 + 1j, -3j])
    m, v = input_posterior(r, 0.5, th)
    assert np.allclose(m, r * 2.0 / 2.5)
    assert np.allclose(v, 2.0 * 0.5 / 2.5)


def test_input_posterior_extreme_inputs_are_finite():
    m, v = input_posterior(np.array([1e8 + 0j, 0j]), 1e-12, GM3)
    assert np.all(np.isfinite(m)) and np.all(np.isfinite(v))


def test_input_posterior_accepts_vector_variance():
    r = np.array([0.3 + 0.1j, -1.0 + 0j])
    m, v = input_posterior(r, np.array([0.1, 0.7]), GM3)
    for i, nu in enumerate((0.1, 0.7)):
        mi, vi = input_posterior(r[i:i + 1], nu, GM3)
        assert m[i] == pytest.approx(mi[0]) and v[i] == pytest.approx(vi[0])


def test_log_evidence_against_quadrature():
    th = PriorParams(0.5, [0.5], [0.0], [1.0], PriorKind.BG)
    r, nu = 0.7 - 0.2j, 0.3
    # evidence = 0.5 CN(r; 0, nu) + 0.5 CN(r; 0, 1 + nu)
    ev = 0.5 * math.exp(-abs(r) ** 2 / nu) / (math.pi * nu) \
        + 0.5 * math.exp(-abs(r) ** 2 / (1 + nu)) / (math.pi * (1 + nu))
    assert log_evidence(np.array([r]), nu, th) == pytest.approx(math.log(ev))


def test_em_recovers_bernoulli_gaussian():
    truth = PriorParams(0.8, [0.2], [0.0], [4.0], PriorKind.BG)
    rng = np.random.default_rng(1)
    x = truth.sample(50_000, rng)
    nu = 0.01
    r = x + math.sqrt(nu / 2) * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
    th = init_prior("bg", 0.5)
    for _ in range(40):
        th = em_update(th, r, nu)
    assert th.lam0 == pytest.approx(0.8, abs=0.01)
    assert th.variances[0] == pytest.approx(4.0, rel=0.05)
    assert th.means[0] == 0


def test_em_increases_evidence():
    rng = np.random.default_rng(2)
    r = GM3.sample(5000, rng) + 0.1 * (rng.standard_normal(5000) + 1j * rng.standard_normal(5000))
    th = init_prior("gm", 0.5)
    prev = log_evidence(r, 0.02, th)
    for _ in range(10):
        th = em_update(th, r, 0.02)
        cur = log_evidence(r, 0.02, th)
        assert cur >= prev - 1e-8
        prev = cur


def test_em_dead_component_stays_finite():
    th = PriorParams(0.5, [0.25, 0.25], [0.0, 100.0], [1.0, 1e-6])
    r = np.zeros(100, dtype=complex)
    new = em_update(th, r, 1e-3)
    assert np.all(np.isfinite(new.means)) and np.all(np.isfinite(new.variances))
    assert new.weights[1] < 1e-12


def test_rescale_prior_second_moment():
    th = rescale_prior(GM3, 3.0)
    second = np.sum(th.weights * (th.variances + np.abs(th.means) ** 2))
    assert second == pytest.approx(3.0)
    assert th.lam0 == GM3.lam0
    assert np.allclose(th.weights, GM3.weights)


# -- truncated normal --------------------------------------------------------

def _tn_quad(a, b):
    lo, hi = max(a, -60.0), min(b, 60.0)
    c = lo if lo > 0 else (hi if hi < 0 else 0.0)
    # rescale by the peak so remote intervals stay representable
    g = lambda t: math.exp(-(t * t - c * c) / 2)  # noqa: E731
    pts = [c] if lo < c < hi else None
    kw = dict(points=pts, epsabs=1e-13, epsrel=1e-13, limit=200)
    z = integrate.quad(g, lo, hi, **kw)[0]
    m = integrate.quad(lambda t: t * g(t), lo, hi, **kw)[0] / z
    s = integrate.quad(lambda t: (t - m) ** 2 * g(t), lo, hi, **kw)[0] / z
    return m, s


@pytest.mark.parametrize("a,b", [(-1, 1), (0.5, 2), (-np.inf, 0.3), (2, np.inf),
                                 (-np.inf, -7.3), (9, 9.5), (-40, -38), (30, np.inf)])
def test_truncated_normal_moments(a, b):
    m, v = truncated_normal_moments(np.array([a]), np.array([b]))
    mq, vq = _tn_quad(a, b)
    assert m[0] == pytest.approx(mq, abs=1e-8)
    assert v[0] == pytest.approx(vq, abs=1e-8)


def test_truncated_normal_whole_line():
    m, v = truncated_normal_moments(np.array([-np.inf]), np.array([np.inf]))
    assert m[0] == 0 and v[0] == pytest.approx(1.0)


# -- output side ---------------------------------------------------------------

@pytest.mark.parametrize("bits", [1, 2, 4])
def test_output_posterior_matches_quadrature_grid(bits):
    rng = np.random.default_rng(bits)
    spec = stepsize_table(bits)
    power = PowerEstimate(0.6, 0.8)
    sigma_w2 = 0.1
    z = math.sqrt(0.7) * (rng.standard_normal(100) + 1j * rng.standard_normal(100))
    y = quantize(z, spec, power)
    p = z + 0.5 * (rng.standard_normal(100) + 1j * rng.standard_normal(100))
    nu_p = 10 ** rng.uniform(-1.5, 0.3, 100)
    cells = inverse_cell(y, spec, power)
    for i in range(100):
        m, v = output_posterior(y[i:i + 1], p[i:i + 1], nu_p[i], OutputChannel(spec, power,
                                                                                sigma_w2))
        cell = tuple(c[i] for c in cells)
        mq, vq = quantized_posterior_quad(cell, p[i], nu_p[i], sigma_w2)
        assert abs(m[0] - mq) < 1e-6
        assert abs(v[0] - vq) < 1e-6


def test_output_posterior_ideal_is_gaussian_update():
    ch = OutputChannel(stepsize_table("inf"), None, 0.5)
    y = np.array([1 + 1j])
    m, v = output_posterior(y, np.zeros(1, complex), 1.5, ch)
    assert m[0] == pytest.approx(0.75 * (1 + 1j))
    assert v[0] == pytest.approx(1.5 * 0.5 / 2.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-30, 30), st.floats(1e-4, 10), st.sampled_from([1, 2, 3]))
def test_output_posterior_always_finite(p_re, nu_p, bits):
    spec = stepsize_table(bits)
    power = PowerEstimate(1.0, 1.0)
    y = quantize(np.array([0.2 - 0.4j]), spec, power)
    m, v = output_posterior(y, np.array([p_re + 0j]), nu_p, OutputChannel(spec, power, 1e-3))
    assert np.isfinite(m).all() and np.isfinite(v).all()
    assert 0 < v[0] <= nu_p * (1 + 1e-9)
