from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsee_lab.certify import (
    CertParams,
    completeness_sigma,
    core_samples,
    gsee_cert,
    mixture_variance,
    mixture_variance_bound,
    peaked_window_moments,
    tail_rounds,
)
from gsee_lab.errors import InvalidParameters, PromiseViolationDetected
from gsee_lab.oracle import AcceptanceOracle
from gsee_lab.rejection import Proposal, sample_conv, window_mass
from gsee_lab.spectrum import synth


def test_derived_constants():
    p = CertParams(0.01, 0.1, 0.02, -0.3)
    tau = 0.01**2 * 0.1 / 160
    assert p.tau_target == pytest.approx(tau)
    assert p.L == pytest.approx(0.02 * math.sqrt(8 * math.log(1 / tau)))
    assert p.c_prime == pytest.approx(1 / 8)
    assert p.tail_window == pytest.approx((-0.3 + p.L / 2, -0.3 + 2 * p.L))
    assert p.core_window == pytest.approx((-0.3 - p.L, -0.3 + p.L))
    assert p.tail_reject_level == pytest.approx(2 * tau)


def test_sample_counts():
    p = CertParams(0.01, 0.1, 0.02, -0.3)
    t = p.tau_target * p.sigma * math.sqrt(2 * math.pi) / (1.5 * p.L * 4.0)
    assert tail_rounds(p, c=2.0) == math.ceil(8 * math.log(40) / t)
    assert core_samples(p) == math.ceil(max(32 * p.L**4, 2 * p.L**2) * math.log(80) / p.tau_target**2)


def test_single_level_accepts_exact_estimate():
    spec = synth([0.1], [1.0])
    p = CertParams(0.01, 0.5, 0.05, 0.1)
    v = gsee_cert(p, spec, AcceptanceOracle("ideal", seed=0))
    assert v.accepted and abs(v.refined_estimate - 0.1) <= 0.01


@pytest.mark.parametrize("backend", ["ideal", "poly"])
def test_two_level_completeness(backend):
    eps, eta, delta = 0.01, 0.01, 0.1
    spec = synth([-0.3, 0.1], [0.5, 0.5])
    sigma = completeness_sigma(0.4, eta, eps)
    accepted = 0
    for seed in range(20):
        v = gsee_cert(CertParams(eps, eta, sigma, -0.3 + 0.3 * sigma, delta), spec,
                      AcceptanceOracle(backend, seed=seed))
        if v.accepted:
            accepted += 1
            assert abs(v.refined_estimate + 0.3) <= eps
    assert accepted >= 18


def test_completeness_width_leaks_tail_at_larger_overlap():
    # At eta = 0.2 the excited level's smeared mass in the tail window already exceeds the reject level.
    eps, eta = 0.01, 0.2
    spec = synth([-0.3, 0.1], [0.5, 0.5])
    sigma = completeness_sigma(0.4, eta, eps)
    p = CertParams(eps, eta, sigma, -0.3)
    assert window_mass(spec, sigma, *p.tail_window) > p.tail_reject_level
    v = gsee_cert(p, spec, AcceptanceOracle("ideal", seed=0))
    assert not v.accepted and v.stage == "tail"


def test_soundness_fixture_rejects():
    eps, eta, delta, sigma = 0.01, 0.2, 0.1, 0.03
    weights, means = [0.2, 0.8], [-0.3, -0.3 + 5.5 * eps]
    spec = synth(means, weights)
    e_hat = float(np.dot(weights, means))
    assert e_hat - means[0] > 4 * eps
    assert mixture_variance(weights, means, sigma) >= sigma**2 + 16 * eta * eps**2
    rejected = 0
    for seed in range(20):
        v = gsee_cert(CertParams(eps, eta, sigma, e_hat, delta), spec, AcceptanceOracle("ideal", seed=seed))
        rejected += not v.accepted
        assert v.stage == "variance" and v.conditioned_mean - means[0] > 4 * eps
    assert rejected >= 18


def test_promise_check_in_spec_aware_mode():
    spec = synth([0.1], [1.0])
    with pytest.raises(PromiseViolationDetected):
        gsee_cert(CertParams(0.01, 0.5, 0.01, 0.2), spec, AcceptanceOracle("ideal", seed=0), spec_aware=True)


def test_explicit_and_aggregate_modes_agree():
    spec = synth([0.0, 0.02], [0.6, 0.4])
    p = CertParams(0.5, 0.9, 0.05, 0.0, delta=0.5)
    n = core_samples(p)
    assert n <= 2_000_000
    exact = peaked_window_moments(spec, p.sigma, p.E_hat, p.L).conditioned_variance
    se = 4 * p.L**2 / math.sqrt(n)
    for mode, seed in (("explicit", 1), ("aggregate", 2)):
        v = gsee_cert(p, spec, AcceptanceOracle("ideal", seed=seed), mode=mode)
        assert v.mode == mode and v.stage == "variance"
        assert abs(v.conditioned_variance - exact) <= se


def test_variance_converges_at_monte_carlo_rate():
    spec = synth([-0.3, -0.28, 0.4], [0.5, 0.3, 0.2])
    sigma, e_hat = 0.02, -0.3
    L = CertParams(0.01, 0.5, sigma, e_hat).L
    exact = peaked_window_moments(spec, sigma, e_hat, L).conditioned_variance
    errors = []
    for k in (2_000, 32_000):
        devs = []
        for seed in range(8):
            run = sample_conv(spec, {"sigma": sigma}, Proposal(e_hat - L, e_hat + L),
                              AcceptanceOracle("ideal", seed=seed), k)
            devs.append(np.var(run.accepted) - exact)
        errors.append(math.sqrt(np.mean(np.square(devs))))
    ratio = errors[0] / errors[1]
    assert 2.0 <= ratio <= 8.0  # sqrt(16) = 4 expected


# -- closed forms --------------------------------------------------------------------


def test_symmetric_two_point_bound():
    eps, c, sigma = 0.01, 3.0, 0.05
    means = [0.0, 2 * c * eps]
    var = mixture_variance([0.5, 0.5], means, sigma)
    bound = mixture_variance_bound([0.5, 0.5], means, sigma, eps, c)
    assert bound == pytest.approx(sigma**2 + 0.5 * c**2 * eps**2)
    assert var >= bound


def test_single_component_has_no_excess():
    assert mixture_variance([1.0], [0.2], 0.1) == pytest.approx(0.01)
    with pytest.raises(InvalidParameters):
        mixture_variance_bound([1.0], [0.2], 0.1, 0.01, 1.0)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_mixture_bound(seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(5))
    mu = rng.uniform(-1, 1, 5)
    sigma, eps, c = 0.05, 0.01, rng.uniform(0.5, 4)
    low = int(np.argmin(mu))
    if abs(float(np.dot(w, mu)) - mu[low]) < c * eps:
        return
    assert mixture_variance(w, mu, sigma) >= mixture_variance_bound(w, mu, sigma, eps, c) - 1e-15


def test_window_moments_single_gaussian():
    spec = synth([0.2], [1.0])
    m = peaked_window_moments(spec, 0.03, 0.2, 0.3)
    assert abs(m.mean - 0.2) <= 1e-12
    assert m.conditioned_variance == pytest.approx(0.03**2, rel=1e-9)


def test_far_component_contribution_small():
    p = CertParams(0.01, 0.5, 0.02, 0.0)
    far = synth([2.1 * p.L], [1.0])
    contribution = peaked_window_moments(far, p.sigma, 0.0, p.L).mass
    # The level sits 1.1 L beyond the window edge, so its mass there is at most tau^(4 * 1.1^2) / 2.
    bound = 0.5 * p.tau_target ** (4 * 1.1**2)
    assert 0 < contribution <= bound
    assert contribution <= p.tau_target**4 * math.log(1 / p.tau_target)


def test_in_window_mass_lower_bound():
    p = CertParams(0.01, 0.5, 0.02, 0.0)
    spec = synth([-0.01, 0.0, 0.01, 0.5], [0.2, 0.3, 0.3, 0.2])
    m = peaked_window_moments(spec, p.sigma, 0.0, p.L)
    assert m.mass >= m.near_mass - 4 * p.c_prime * p.eps**2 * p.eta**2
