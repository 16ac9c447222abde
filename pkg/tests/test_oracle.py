from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsee_lab.errors import DomainViolation, InvalidParameters, OracleFailure
from gsee_lab.oracle import (
    AcceptanceOracle,
    CostReport,
    IdealFunction,
    OperatorFunction,
    PolyBlockEncoding,
    make_backend,
)
from gsee_lab.polyapprox import QueryCost
from gsee_lab.spectrum import synth


class IdealC2(IdealFunction):
    """Exact functions under a normalization of 2, to compare with the block-encoding backend."""

    name = "ideal-c2"

    def __init__(self, **kw):
        super().__init__(**kw)
        self.c = 2.0


def _fixed(value: float, cost: QueryCost = QueryCost(0, 0)) -> OperatorFunction:
    return OperatorFunction(lambda x: np.full(np.shape(x), value), cost, 0.0, (-1.0, 1.0))


def test_single_level_centered_gaussian_accepts_surely():
    spec = synth([0.2], [1.0])
    oracle = AcceptanceOracle("ideal", seed=0)
    g = oracle.backend.gaussian_family(0.1, 1e-6).at(0.2)
    assert oracle.accept_prob(spec, g) == 1.0
    assert all(oracle.sample_outcome(spec, g) for _ in range(100))


def test_closed_form_with_c2(two_level):
    oracle = AcceptanceOracle(IdealC2(), seed=0)
    g = oracle.backend.gaussian_family(0.1, 1e-6).at(-0.5)
    expected = (0.6 + 0.4 * math.exp(-100.0)) / 4
    assert abs(oracle.accept_prob(two_level, g) - expected) <= 1e-12
    assert expected == pytest.approx(0.15, abs=1e-12)


def test_backend_consistency(three_level):
    ideal = AcceptanceOracle(IdealC2(), seed=0)
    poly = AcceptanceOracle(PolyBlockEncoding(), seed=0)
    eps2 = 1e-4
    fi = ideal.backend.gaussian_family(0.05, eps2)
    fp = poly.backend.gaussian_family(0.05, eps2)
    xis = np.linspace(-1, 1, 401)
    diff = np.abs(ideal.accept_probs(three_level, fi, xis) - poly.accept_probs(three_level, fp, xis))
    assert np.max(diff) <= 2 * fp.error / 4
    ti = ideal.backend.threshold(-0.45, -0.3, 1e-3)
    tp = poly.backend.threshold(-0.45, -0.3, 1e-3)
    assert abs(ideal.accept_prob(three_level, ti) - poly.accept_prob(three_level, tp)) <= 2 * 1e-3 / 4


def test_never_accepts_when_function_vanishes(two_level):
    oracle = AcceptanceOracle("ideal", seed=1)
    g = _fixed(0.0)
    assert not any(oracle.sample_outcome(two_level, g) for _ in range(200))


def test_empirical_rate_matches_probability(two_level):
    oracle = AcceptanceOracle(IdealC2(), seed=2)
    g = oracle.backend.gaussian_family(0.1, 1e-6).at(-0.5)
    q = oracle.accept_prob(two_level, g)
    n = 100_000
    hits = sum(oracle.sample_outcome(two_level, g) for _ in range(n))
    assert abs(hits / n - q) <= 3 * math.sqrt(q * (1 - q) / n)
    count = AcceptanceOracle(IdealC2(), seed=3).sample_count(two_level, g, n)
    assert abs(count / n - q) <= 3 * math.sqrt(q * (1 - q) / n)


def test_probability_outside_unit_interval_fails(two_level):
    oracle = AcceptanceOracle("ideal", seed=0)
    with pytest.raises(OracleFailure):
        oracle.accept_prob(two_level, _fixed(1.5))


def test_domain_violation():
    spec = synth([0.2, 0.9], [0.5, 0.5], "01")
    oracle = AcceptanceOracle("trig", seed=0)
    t = oracle.backend.threshold(0.3, 0.4, 1e-2)
    with pytest.raises(DomainViolation):
        t(np.array([1.2]))
    with pytest.raises(DomainViolation):
        PolyBlockEncoding().threshold(0.1, 0.2, 0.1, domain=(0.0, 1.0))
    oracle.accept_prob(spec, t)


def test_cost_report_arithmetic(two_level):
    oracle = AcceptanceOracle("ideal", seed=0)
    assert oracle.run_report().as_dict() == {"circuits": 0, "queries_total": 0, "max_depth": 0}
    g = _fixed(0.5, QueryCost(20, 10))
    for _ in range(3):
        oracle.sample_outcome(two_level, g)
    assert oracle.run_report().as_dict() == {"circuits": 3, "queries_total": 60, "max_depth": 20}
    assert oracle.run_report().to_csv() == "circuits,queries_total,max_depth\n3,60,20\n"
    oracle.reset()
    assert oracle.run_report() == CostReport()


def test_determinism_and_spawn(two_level):
    def outcomes(oracle):
        g = oracle.backend.gaussian_family(0.2, 1e-6).at(-0.4)
        return [oracle.sample_outcome(two_level, g) for _ in range(500)]

    a, b = AcceptanceOracle("ideal", seed=11), AcceptanceOracle("ideal", seed=11)
    assert outcomes(a) == outcomes(b)
    assert a.run_report() == b.run_report()
    base = AcceptanceOracle("ideal", seed=11)
    assert outcomes(base.spawn(1)) == outcomes(AcceptanceOracle("ideal", seed=11).spawn(1))
    assert outcomes(base.spawn(1)) != outcomes(base.spawn(2))
    with pytest.raises(InvalidParameters):
        AcceptanceOracle("ideal", seed=np.random.default_rng(0)).spawn(0)


@pytest.mark.parametrize("backend", ["ideal", "poly"])
def test_window_profile_matches_direct(three_level, backend):
    oracle = AcceptanceOracle(backend, seed=0)
    fam = oracle.backend.gaussian_family(0.05, 1e-8)
    prof = oracle.profile(three_level, fam, -0.8, -0.2)
    xs = np.linspace(-0.8, -0.2, 777)
    assert np.max(np.abs(prof(xs) - oracle.accept_probs(three_level, fam, xs))) <= 1e-12
    m = prof.raw_moments(2)
    dens = oracle.accept_probs(three_level, fam, xs)
    mean = np.trapezoid(xs * dens, xs) / np.trapezoid(dens, xs)
    assert abs(m[1] - mean) <= 1e-6


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=1, max_size=6, unique=True),
    st.floats(0.02, 0.5),
    st.floats(-1.5, 1.5),
    st.sampled_from(["ideal", "poly", "trig"]),
)
def test_accept_prob_in_unit_interval(energies, sigma, xi, backend):
    energies = sorted(energies)
    if len(energies) > 1 and min(np.diff(energies)) <= 1e-9:
        return
    if backend == "trig":
        energies = [(e + 1) / 2 for e in energies]
    w = np.full(len(energies), 1 / len(energies))
    w[-1] = 1 - w[:-1].sum()
    spec = synth(energies, w, "01" if backend == "trig" else "pm1")
    oracle = AcceptanceOracle(make_backend(backend), seed=0)
    q = oracle.accept_probs(spec, oracle.backend.gaussian_family(sigma, 1e-4), [xi])
    assert 0.0 <= q[0] <= 1.0
