from __future__ import annotations

import math

import numpy as np
import pytest

from gsee_lab.errors import InvalidParameters, TrialCapExhausted
from gsee_lab.oracle import AcceptanceOracle
from gsee_lab.quadrature import quadrature
from gsee_lab.rejection import (
    Proposal,
    conditioned_cdf,
    expected_trials_bound,
    ks_critical,
    ks_statistic,
    sample_conv,
    smeared_density,
    window_mass,
)
from gsee_lab.spectrum import synth


def test_single_level_mean():
    spec = synth([0.0], [1.0])
    run = sample_conv(spec, {"sigma": 0.05}, Proposal(-0.3, 0.3), AcceptanceOracle("ideal", seed=0), 20_000)
    k = run.accepted.size
    assert abs(run.accepted.mean()) <= 3 * 0.05 / math.sqrt(k)


def test_two_level_moments_match_quadrature(two_level):
    sigma, (a, b) = 0.05, (-0.8, -0.2)
    run = sample_conv(two_level, {"sigma": sigma}, Proposal(a, b), AcceptanceOracle("ideal", seed=4), 20_000)
    dens = smeared_density(two_level, sigma)
    mass = quadrature(dens, a, b, points=[-0.5])
    m1 = quadrature(lambda x: x * dens(x), a, b, points=[-0.5]) / mass
    m2 = quadrature(lambda x: x * x * dens(x), a, b, points=[-0.5]) / mass
    x = run.accepted
    n = x.size
    assert abs(x.mean() - m1) <= 4 * x.std() / math.sqrt(n)
    assert abs((x * x).mean() - m2) <= 4 * (x * x).std() / math.sqrt(n)


def test_single_gaussian_trials_constant():
    sigma = 0.05
    spec = synth([0.0], [1.0])
    m2 = expected_trials_bound(sigma, (-0.5, 0.5), spec)
    assert m2 == pytest.approx(1.0 / (sigma * math.sqrt(2 * math.pi)), rel=1e-10)
    assert expected_trials_bound(sigma, (-0.5, 0.5), spec, c=2.0) == pytest.approx(4 * m2)


@pytest.mark.parametrize("backend", ["ideal", "poly"])
def test_trials_per_sample_near_constant(three_level, backend):
    sigma, window = 0.05, (-0.8, -0.2)
    oracle = AcceptanceOracle(backend, seed=9)
    run = sample_conv(three_level, {"sigma": sigma}, Proposal(*window), oracle, 10_000)
    assert abs(run.trials_per_sample / run.expected_trials_per_sample - 1) <= 0.2
    assert oracle.run_report().circuits == run.trials


def test_ks_against_closed_form_cdf(three_level):
    sigma, window = 0.05, (-0.8, -0.2)
    run = sample_conv(three_level, {"sigma": sigma}, Proposal(*window), AcceptanceOracle("ideal", seed=1), 10_000)
    assert ks_statistic(run.accepted, conditioned_cdf(three_level, sigma, window)) < ks_critical(10_000)


def test_ks_detects_wrong_distribution(three_level):
    sigma, window = 0.05, (-0.8, -0.2)
    run = sample_conv(three_level, {"sigma": sigma}, Proposal(*window), AcceptanceOracle("ideal", seed=1), 10_000)
    wrong = conditioned_cdf(three_level, 1.3 * sigma, window)
    assert ks_statistic(run.accepted, wrong) > ks_critical(10_000)


def test_window_mass_matches_quadrature(three_level):
    dens = smeared_density(three_level, 0.07)
    q = quadrature(dens, -0.9, 0.1, points=[-0.5, -0.42])
    assert window_mass(three_level, 0.07, -0.9, 0.1) == pytest.approx(q, abs=1e-12)


def test_starved_window_exhausts_cap():
    spec = synth([-0.9], [1.0])
    oracle = AcceptanceOracle("ideal", seed=0)
    m2 = expected_trials_bound(0.01, (0.5, 0.9), spec)
    assert m2 > 1e100 or math.isinf(m2)
    with pytest.raises(TrialCapExhausted) as info:
        sample_conv(spec, {"sigma": 0.01}, Proposal(0.5, 0.9), oracle, 10, trial_cap=5000)
    assert info.value.run.trials == 5000 and info.value.run.accepted.size == 0


def test_partitioned_runs_are_thread_independent(three_level, tmp_path):
    def run(threads):
        oracle = AcceptanceOracle("ideal", seed=21)
        r = sample_conv(three_level, {"sigma": 0.05}, Proposal(-0.8, -0.2), oracle, 3000, partitions=4, threads=threads)
        path = tmp_path / f"r{threads}.csv"
        r.write_csv(path)
        return path.read_bytes(), oracle.run_report()

    one, rep1 = run(1)
    many, rep8 = run(8)
    assert one == many and rep1 == rep8
    assert one.startswith(b"value,worker,trial\n")


def test_invalid_proposal():
    with pytest.raises(InvalidParameters):
        Proposal(0.2, 0.1)
    with pytest.raises(InvalidParameters):
        Proposal(0.0, 1.0, kind="gaussian")
