from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from gsee_lab.errors import InvalidParameters, NoAcceptedSamples, PromiseViolationDetected
from gsee_lab.gsee import (
    adv_gsee,
    basic_gsee,
    bisection_plan,
    check_separation,
    chernoff_threshold,
    hoeffding_rounds,
    hoeffding_tail,
    interpolated_gap,
    interpolation_sweep,
    kl_bernoulli,
    kl_lower_bound,
    make_schedule,
    schedule_for,
)
from gsee_lab.oracle import AcceptanceOracle, IdealFunction
from gsee_lab.spectrum import synth


def _schedule_oracle(eps, delta, Delta, eta, c2):
    """Independent evaluation of the refinement parameters."""
    sigma = Delta / (5 * math.sqrt(math.log(math.e * c2)) * math.sqrt(math.log(math.e * Delta / (eta * eps))))
    eps1 = min(eps / 1.1, sigma)
    w = 2 * sigma * math.sqrt(math.log(math.e * sigma / eps1))
    eps2 = 0.0075 * eps1 * eta / (sigma * math.log(math.e * sigma / eps1))
    M = math.ceil(32 * c2**2 / eta * math.sqrt(math.log(math.e * sigma / eps1))
                  * max(2 * w**2 / eps**2 * math.log(6 / delta), math.log(3 / delta)))
    return sigma, eps1, w, eps2, M


# -- concentration helpers ----------------------------------------------------


def test_hoeffding_rounds_plug_in_identity():
    w, eps_half, delta = 0.3, 1e-3, 0.1
    K = 8 * w**2 / (2 * eps_half) ** 2 * math.log(6 / delta)
    assert hoeffding_tail(K, eps_half, w) == pytest.approx(delta / 3, rel=1e-12)
    k = hoeffding_rounds(eps_half, w, delta)
    assert k == math.ceil(K - 1e-9) and hoeffding_tail(k, eps_half, w) <= delta / 3


def test_hoeffding_rounds_vacuous_limit():
    assert hoeffding_rounds(1e6, 0.3, 0.1) == 1


def test_kl_bound_instance():
    assert kl_lower_bound(0.5, 0.9) == pytest.approx(0.4**2 / 1.8)
    assert kl_bernoulli(0.5, 0.9) >= kl_lower_bound(0.5, 0.9)


@settings(max_examples=200)
@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_kl_bound_property(x, y):
    assert kl_bernoulli(x, y) >= kl_lower_bound(x, y) - 1e-15


def test_chernoff_threshold_scaling():
    assert chernoff_threshold(2.0, 0.4, 1000) == pytest.approx(50.0)
    assert chernoff_threshold(2.0, 0.4, 1000, literal=True) == pytest.approx(100.0)


# -- schedule -------------------------------------------------------------------


def test_schedule_boundary_selects_bisection():
    assert make_schedule(0.1 / 8, 0.1, 0.1, 0.5).branch == "basic"
    assert make_schedule(0.1 / 8 * 0.999, 0.1, 0.1, 0.5).branch == "adv"


def test_schedule_matches_independent_formulas():
    s = make_schedule(1e-3, 0.1, 0.5, 0.5, c2=2.0)
    expected = _schedule_oracle(1e-3, 0.1, 0.5, 0.5, 2.0)
    for got, want in zip((s.sigma, s.eps1, s.w, s.eps2), expected[:4]):
        assert got == pytest.approx(want, rel=1e-14) and got > 0
    assert s.M == expected[4]
    assert s.eps1 == min(1e-3 / 1.1, s.sigma)
    assert s.coarse_eps == s.w / 2 and s.coarse_delta == pytest.approx(0.1 / 3)


def test_halving_gap_halves_sigma():
    for eps in (1e-3, 1e-5):
        ratio = make_schedule(eps, 0.1, 0.4, 0.3).sigma / make_schedule(eps, 0.1, 0.2, 0.3).sigma
        assert 1.8 <= ratio <= 2.2


@pytest.mark.parametrize("kw", [dict(eta=1.0), dict(eta=0.0), dict(delta=1.0), dict(c2=0.5), dict(eps=-1.0)])
def test_schedule_rejects_bad_inputs(kw):
    args = dict(eps=1e-3, delta=0.1, Delta=0.5, eta=0.5)
    args.update(kw)
    with pytest.raises(InvalidParameters):
        make_schedule(**args)


def test_schedule_must_match_oracle(two_level):
    sched = make_schedule(1e-3, 0.1, 1.0, 0.5, c1=1.0, c2=1.0)
    with pytest.raises(InvalidParameters):
        adv_gsee(sched, AcceptanceOracle("poly", seed=0), two_level)


# -- bisection --------------------------------------------------------------------


def test_bisection_single_level_success_rate():
    spec = synth([0.3], [1.0])
    hits = 0
    for seed in range(100):
        res = basic_gsee(0.05, 0.1, 1.0, AcceptanceOracle("ideal", seed=seed), spec)
        hits += abs(res.estimate - 0.3) <= 0.05
    assert hits >= 95


def test_bisection_wide_tolerance_returns_midpoint(two_level):
    res = basic_gsee(1.0, 0.1, 0.5, AcceptanceOracle("ideal", seed=0), two_level)
    assert res.rounds <= 1
    assert res.estimate == 0.0 and res.diagnostics["bracket"] == [-1.0, 1.0]


@pytest.mark.parametrize("backend", ["ideal", "poly"])
def test_round_success_probability_when_ground_below_band(backend):
    eta = 0.3
    spec = synth([-0.6, 0.7], [eta, 1 - eta])
    oracle = AcceptanceOracle(backend, seed=0)
    eps_prime = bisection_plan(1e-2, 0.1, eta, oracle.c).eps_prime
    f = oracle.backend.threshold(-0.5, 0.2, eps_prime)
    q = oracle.accept_prob(spec, f)
    assert q >= 0.9 * eta / oracle.c**2


def test_literal_threshold_breaks_block_encoding_bisection():
    spec = synth([-0.6, 0.7], [0.3, 0.7])
    oracle = AcceptanceOracle("poly", seed=0)
    res = basic_gsee(0.01, 0.1, 0.3, oracle, spec, literal_threshold=True)
    assert abs(res.estimate - (-0.6)) > 0.01
    fixed = basic_gsee(0.01, 0.1, 0.3, AcceptanceOracle("poly", seed=0), spec)
    assert abs(fixed.estimate - (-0.6)) <= 0.01


def test_bracket_contains_ground_when_every_round_decides_correctly():
    spec = synth([-0.37, -0.1, 0.6], [0.4, 0.3, 0.3])
    e0 = spec.ground_energy
    checked = 0
    for seed in range(30):
        trace: list = []
        basic_gsee(1e-3, 0.1, 0.4, AcceptanceOracle("ideal", seed=seed, cost_model="none"), spec, trace=trace)

        def correct(row):
            if e0 <= row["a"]:
                return row["passed"]
            if e0 >= row["b"]:
                return not row["passed"]
            return True

        if all(correct(r) for r in trace):
            checked += 1
            for row in trace:
                assert row["l"] <= e0 <= row["r"]
    assert checked >= 25


# -- refinement ---------------------------------------------------------------------


def test_adv_two_level_success_rate(two_level):
    sched = make_schedule(1e-3, 0.1, 1.0, 0.5)
    hits = 0
    for seed in range(100):
        res = adv_gsee(sched, AcceptanceOracle("ideal", seed=seed), two_level, mode="aggregate")
        hits += abs(res.estimate + 0.5) <= 1e-3
    assert hits >= 90


def test_adv_explicit_single_run(two_level):
    sched = make_schedule(1e-2, 0.1, 1.0, 0.5)
    res = adv_gsee(sched, AcceptanceOracle("ideal", seed=0), two_level, spec_aware=True)
    assert abs(res.estimate + 0.5) <= 1e-2
    assert res.diagnostics["coarse_ok"] and res.diagnostics["separation_slack"] > 0
    assert res.cost.circuits >= sched.M


def test_explicit_and_aggregate_agree_in_law(two_level):
    sched = make_schedule(1e-2, 0.1, 0.5, 0.5)
    seeds = range(40)
    explicit = [adv_gsee(sched, AcceptanceOracle("ideal", seed=s), two_level, mode="explicit") for s in seeds]
    aggregate = [adv_gsee(sched, AcceptanceOracle("ideal", seed=s + 1000), two_level, mode="aggregate") for s in seeds]
    ke = np.array([r.accepted_samples for r in explicit])
    ka = np.array([r.accepted_samples for r in aggregate])
    assert ks_2samp(ke, ka).pvalue > 1e-3
    ee = np.array([r.estimate for r in explicit])
    ea = np.array([r.estimate for r in aggregate])
    assert ks_2samp(ee, ea).pvalue > 1e-3
    assert abs(ee.mean() - ea.mean()) <= 4 * math.hypot(ee.std(), ea.std()) / math.sqrt(40)


@pytest.mark.parametrize("backend", ["ideal", "poly"])
@pytest.mark.parametrize("offset", [-0.5, 0.0, 0.5])
def test_accepted_mean_bias_within_lemma_bound(backend, offset):
    spec = synth([-0.4, 0.3, 0.8], [0.5, 0.3, 0.2])
    oracle = AcceptanceOracle(backend, seed=0)
    sched = schedule_for(1e-4, 0.1, 0.7, 0.5, oracle)
    center = spec.ground_energy + offset * sched.w
    fam = oracle.backend.gaussian_family(sched.sigma, sched.eps2)
    prof = oracle.profile(spec, fam, center - sched.w, center + sched.w)
    bias = prof.raw_moments(1, spec.ground_energy)[1]
    assert abs(bias) <= 0.55 * sched.eps1


def test_accepted_count_concentration(two_level):
    sched = make_schedule(1e-3, 0.1, 1.0, 0.5)
    need = 8 * sched.w**2 / sched.eps**2 * math.log(6 / sched.delta)
    ok = sum(
        adv_gsee(sched, AcceptanceOracle("ideal", seed=s), two_level, mode="aggregate").accepted_samples >= need
        for s in range(30)
    )
    assert ok >= math.ceil(30 * (1 - sched.delta / 3))


def test_acceptance_rate_lower_bound(two_level):
    sched = make_schedule(1e-3, 0.1, 1.0, 0.5)
    res = adv_gsee(sched, AcceptanceOracle("ideal", seed=3), two_level, mode="aggregate")
    floor = sched.eta / (4 * sched.c2**2 * math.sqrt(sched.log_factor))
    assert res.diagnostics["acceptance_rate"] >= floor


def test_separation_violation_detected():
    sched = make_schedule(1e-3, 0.1, 0.5, 0.5)
    crowded = synth([-0.5, -0.45], [0.5, 0.5])
    with pytest.raises(PromiseViolationDetected):
        check_separation(sched, crowded, -0.5)


class VanishingGaussians(IdealFunction):
    """Filters that never accept."""

    def gaussian_family(self, sigma, eps2):
        fam = super().gaussian_family(sigma, eps2)
        return dataclasses.replace(fam, base=lambda y: 0.0 * y)


@pytest.mark.parametrize("mode", ["explicit", "aggregate"])
def test_no_accepted_samples_is_typed(two_level, mode):
    sched = make_schedule(1e-2, 0.1, 1.0, 0.5)
    g = AcceptanceOracle(VanishingGaussians(), seed=0)
    with pytest.raises(NoAcceptedSamples) as info:
        adv_gsee(sched, AcceptanceOracle("ideal", seed=0), two_level, gaussian_oracle=g, mode=mode)
    assert info.value.rounds == sched.M and info.value.expected_rate == 0.0


def test_adv_basic_branch_delegates(two_level):
    sched = make_schedule(0.05, 0.1, 0.2, 0.5)
    res = adv_gsee(sched, AcceptanceOracle("ideal", seed=0), two_level)
    assert res.branch == "basic" and abs(res.estimate + 0.5) <= 0.05


# -- interpolation -------------------------------------------------------------------


def test_interpolated_gap_endpoints():
    assert interpolated_gap(0.0, 1e-3, 0.5) == 0.5
    assert interpolated_gap(1.0, 1e-3, 0.5) == pytest.approx(1e-3)


def test_sweep_rows(two_level):
    rows = interpolation_sweep([0.0, 1.0], 1e-2, 1.0, 0.1, 0.5, two_level, "ideal", seeds=(0,))
    assert [r["beta"] for r in rows] == [0.0, 1.0]
    assert rows[0]["branch"] == "adv" and rows[1]["branch"] == "basic"
    assert rows[1]["max_depth"] >= rows[0]["max_depth"]
    assert all(r["success"] for r in rows)
