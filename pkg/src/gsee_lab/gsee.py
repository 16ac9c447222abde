"""Ground state energy estimators: threshold bisection and Gaussian-window refinement.

``basic_gsee`` narrows a bracket around the ground energy by thresholding the
spectrum and counting ancilla successes. ``adv_gsee`` uses a coarse bisection
estimate to place a proposal window, then averages the accepted window centers
of Gaussian-filter circuits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameters, NoAcceptedSamples, OracleFailure, PromiseViolationDetected
from .oracle import CHUNK, AcceptanceOracle, CostReport, WindowProfile
from .spectrum import SpectralMeasure

EXACT_SAMPLE_CAP = 2_000_000


# ---------------------------------------------------------------------------
# Concentration helpers


def hoeffding_tail(rounds: int, eps_half: float, w: float) -> float:
    """Two-sided Hoeffding bound for the mean of ``rounds`` draws on an interval of width ``2w``."""
    return 2.0 * math.exp(-rounds * eps_half**2 / (2.0 * w * w))


def hoeffding_rounds(eps_half: float, w: float, delta: float) -> int:
    """Smallest ``K`` whose Hoeffding tail at deviation ``eps_half`` is at most ``delta / 3``.

    Samples live in an interval of width ``2w``, so ``K = 2 w^2 ln(6/delta) / eps_half^2``.
    """
    if eps_half <= 0 or w <= 0 or not 0 < delta < 1:
        raise InvalidParameters("hoeffding_rounds needs eps_half > 0, w > 0, 0 < delta < 1")
    return max(1, math.ceil(2.0 * w * w * math.log(6.0 / delta) / eps_half**2))


def chernoff_threshold(c: float, eta: float, M: int, literal: bool = False) -> float:
    """Decision threshold on the success count of one bisection round.

    Success probabilities scale as ``c^-2``, so the midpoint between the two
    hypotheses is ``0.5 c^-2 eta M``. ``literal=True`` uses ``c^-1`` instead.
    """
    if c < 1 or eta <= 0 or M <= 0:
        raise InvalidParameters("chernoff_threshold needs c >= 1, eta > 0, M > 0")
    power = 1 if literal else 2
    return 0.5 * eta * M / c**power


def kl_bernoulli(x: float, y: float) -> float:
    """Relative entropy ``D(x || y)`` between Bernoulli laws, in nats."""
    if not (0 <= x <= 1 and 0 < y < 1):
        raise InvalidParameters("kl_bernoulli needs x in [0, 1] and y in (0, 1)")
    out = 0.0
    if x > 0:
        out += x * math.log(x / y)
    if x < 1:
        out += (1 - x) * math.log((1 - x) / (1 - y))
    return out


def kl_lower_bound(x: float, y: float) -> float:
    """Quadratic lower bound ``(x - y)^2 / (2 max(x, y))`` on ``D(x || y)``."""
    if max(x, y) <= 0:
        raise InvalidParameters("kl_lower_bound needs max(x, y) > 0")
    return (x - y) ** 2 / (2.0 * max(x, y))


# ---------------------------------------------------------------------------
# Data types


@dataclass(frozen=True)
class BisectionState:
    """Bracket and per-round budget of the threshold bisection."""

    l: float
    r: float
    L: int
    M_per_round: int
    eps_prime: float
    threshold: float

    @property
    def width(self) -> float:
        return self.r - self.l


@dataclass(frozen=True)
class DerivedParams:
    sigma: float
    eps1: float
    w: float
    eps2: float
    M: int
    coarse_eps: float
    coarse_delta: float
    log_factor: float


@dataclass(frozen=True)
class GseeSchedule:
    """Inputs and derived parameters of the Gaussian-window estimator.

    ``derived`` is ``None`` on the bisection branch (``eps >= Delta / 8``).
    """

    eps: float
    delta: float
    Delta: float
    eta: float
    c1: float
    m1: int
    c2: float
    m2: int
    branch: str
    derived: DerivedParams | None = None

    def __getattr__(self, name):
        derived = object.__getattribute__(self, "derived")
        if derived is not None and name in DerivedParams.__dataclass_fields__:
            return getattr(derived, name)
        raise AttributeError(name)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("derived")
        out.update(asdict(self.derived) if self.derived is not None else {})
        return out


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    accepted_samples: int
    cost: CostReport
    schedule: dict
    branch: str
    rounds: int = 0
    coarse_estimate: float | None = None
    mode: str = "explicit"
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "accepted_samples": self.accepted_samples,
            "branch": self.branch,
            "rounds": self.rounds,
            "coarse_estimate": self.coarse_estimate,
            "mode": self.mode,
            **self.cost.as_dict(),
            "schedule": self.schedule,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Bisection


def _model_interval(spec: SpectralMeasure, domain) -> tuple[float, float]:
    if domain is None:
        return spec.domain
    return (float(domain[0]), float(domain[1]))


def bisection_plan(
    eps: float, delta: float, eta: float, c: float, domain=(-1.0, 1.0), literal: bool = False
) -> BisectionState:
    """Initial bracket and round budget for :func:`basic_gsee`.

    ``L = ceil(log_{3/2}(1/eps))`` rounds suffice; each round runs
    ``M = ceil(12 c^2 eta^-1 ln(L/delta))`` circuits (``c`` instead of ``c^2``
    when ``literal``).
    """
    if eps <= 0 or not 0 < delta < 1 or not 0 < eta <= 1 or c < 1:
        raise InvalidParameters("need eps > 0, 0 < delta < 1, 0 < eta <= 1, c >= 1")
    L = max(1, math.ceil(math.log(1.0 / eps) / math.log(1.5))) if eps < 1 else 1
    power = 1 if literal else 2
    M = math.ceil(12.0 * c**power / eta * math.log(L / delta))
    eps_prime = min(math.sqrt(0.1 * eta), 0.05)
    lo, hi = domain
    return BisectionState(lo, hi, L, M, eps_prime, chernoff_threshold(c, eta, M, literal))


def basic_gsee(
    eps: float,
    delta: float,
    eta: float,
    oracle: AcceptanceOracle,
    spec: SpectralMeasure,
    *,
    domain=None,
    literal_threshold: bool = False,
    trace: list | None = None,
) -> EstimateResult:
    """Bisection estimate of the ground energy to within ``eps``.

    Each round applies a threshold between the inner thirds ``a < b`` of the
    bracket and keeps ``[l, b]`` if at least ``threshold`` of ``M`` circuits
    succeed, else ``[a, r]``.

    Args:
        eps: Target half-width of the final bracket.
        delta: Allowed failure probability.
        eta: Promised lower bound on the ground-state overlap.
        oracle: Acceptance oracle whose backend supplies thresholds.
        spec: Spectral measure of the input state.
        domain: Energy interval; defaults to the measure's model domain.
        literal_threshold: Use ``c^-1`` scaling in the count and threshold.
        trace: If given, receives one dict per round.
    """
    lo, hi = _model_interval(spec, domain)
    state = bisection_plan(eps, delta, eta, oracle.c, (lo, hi), literal_threshold)
    l, r = state.l, state.r
    before = oracle.run_report()
    rounds = 0
    while r - l > 2.0 * eps:
        a = (2.0 * l + r) / 3.0
        b = (l + 2.0 * r) / 3.0
        f = oracle.backend.threshold(a, b, state.eps_prime, (lo, hi))
        K = oracle.sample_count(spec, f, state.M_per_round)
        passed = K >= state.threshold
        if trace is not None:
            trace.append({"l": l, "r": r, "a": a, "b": b, "K": K, "threshold": state.threshold, "passed": passed})
        if passed:
            r = b
        else:
            l = a
        rounds += 1
    after = oracle.run_report()
    cost = CostReport(
        after.circuits - before.circuits,
        after.queries_total - before.queries_total,
        after.max_depth,
    )
    schedule = {
        "eps": eps, "delta": delta, "eta": eta, "c": oracle.c, "m": oracle.m,
        "L": state.L, "M_per_round": state.M_per_round, "eps_prime": state.eps_prime,
        "threshold": state.threshold, "literal_threshold": literal_threshold,
    }
    return EstimateResult(0.5 * (l + r), 0, cost, schedule, "basic", rounds, None, "explicit",
                          {"bracket": [l, r]})


# ---------------------------------------------------------------------------
# Gaussian-window refinement


def make_schedule(
    eps: float,
    delta: float,
    Delta: float,
    eta: float,
    c1: float = 1.0,
    m1: int = 1,
    c2: float = 1.0,
    m2: int = 1,
) -> GseeSchedule:
    """Parameters of the refinement stage.

    ``sigma = Delta / (5 sqrt(ln(e c2)) sqrt(ln(e Delta / (eta eps))))``,
    ``eps1 = min(eps / 1.1, sigma)``, ``w = 2 sigma sqrt(ln(e sigma / eps1))``,
    ``eps2 = 0.0075 eps1 eta / (sigma ln(e sigma / eps1))`` and
    ``M = ceil(32 c2^2 eta^-1 sqrt(ln(e sigma/eps1)) max(2 w^2 eps^-2 ln(6/delta), ln(3/delta)))``.

    Raises:
        InvalidParameters: on nonpositive inputs, ``delta`` or ``eta`` outside
            (0, 1), or normalizations below one.
    """
    if min(eps, Delta) <= 0 or not 0 < delta < 1 or not 0 < eta < 1:
        raise InvalidParameters("need eps, Delta > 0 and delta, eta in (0, 1)")
    if c1 < 1 or c2 < 1:
        raise InvalidParameters("normalizations c1, c2 must be at least 1")
    if eps >= Delta / 8.0:
        return GseeSchedule(eps, delta, Delta, eta, c1, m1, c2, m2, "basic")
    sigma = Delta / (5.0 * math.sqrt(math.log(math.e * c2)) * math.sqrt(math.log(math.e * Delta / (eta * eps))))
    eps1 = min(eps / 1.1, sigma)
    lg = math.log(math.e * sigma / eps1)
    w = 2.0 * sigma * math.sqrt(lg)
    eps2 = 0.0075 * eps1 * eta / (sigma * lg)
    M = math.ceil(
        32.0 * c2**2 / eta * math.sqrt(lg)
        * max(2.0 * w * w / eps**2 * math.log(6.0 / delta), math.log(3.0 / delta))
    )
    derived = DerivedParams(sigma, eps1, w, eps2, M, w / 2.0, delta / 3.0, lg)
    return GseeSchedule(eps, delta, Delta, eta, c1, m1, c2, m2, "adv", derived)


def schedule_for(
    eps: float, delta: float, Delta: float, eta: float, oracle: AcceptanceOracle,
    gaussian_oracle: AcceptanceOracle | None = None,
) -> GseeSchedule:
    """:func:`make_schedule` with normalizations read from the oracles."""
    g = gaussian_oracle or oracle
    return make_schedule(eps, delta, Delta, eta, oracle.c, oracle.m, g.c, g.m)


def separation_margin(schedule: GseeSchedule) -> float:
    """Minimum distance ``sigma sqrt(ln(0.5 c2^2 / eps2))`` excited levels must keep from the window."""
    ratio = 0.5 * schedule.c2**2 / schedule.eps2
    return schedule.sigma * math.sqrt(math.log(ratio)) if ratio > 1 else 0.0


def check_separation(schedule: GseeSchedule, spec: SpectralMeasure, center: float) -> float:
    """Smallest slack ``E_j - xi - margin`` over excited levels and window points.

    Raises:
        PromiseViolationDetected: if the slack is negative.
    """
    if spec.n_levels < 2:
        return math.inf
    slack = float(spec.energies[1]) - (center + schedule.w) - separation_margin(schedule)
    if slack < 0:
        raise PromiseViolationDetected(
            f"excited level {spec.energies[1]:.6g} within {separation_margin(schedule):.3g} "
            f"of window edge {center + schedule.w:.6g}"
        )
    return slack


def _exact_window_draws(oracle: AcceptanceOracle, profile: WindowProfile, k: int) -> tuple[float, float]:
    """Sum and sum of squares (about the window center) of ``k`` draws from density ``q``."""
    envelope = 1.01 * profile.peak + 1e-300
    center = 0.5 * (profile.lo + profile.hi)
    total = 0.0
    total2 = 0.0
    got = 0
    while got < k:
        need = k - got
        size = min(CHUNK, max(1024, int(1.2 * need * envelope / max(profile.mean_acceptance(), 1e-300))))
        xs = oracle.rng.uniform(profile.lo, profile.hi, size)
        q = profile(xs)
        if np.any(q > envelope):
            raise OracleFailure("acceptance profile exceeded its sampling envelope")
        keep = xs[oracle.rng.random(size) * envelope < q][:need]
        y = keep - center
        total += float(np.sum(y))
        total2 += float(np.sum(y * y))
        got += keep.size
    return total + k * center, total2


def adv_gsee(
    schedule: GseeSchedule,
    oracle: AcceptanceOracle,
    spec: SpectralMeasure,
    *,
    gaussian_oracle: AcceptanceOracle | None = None,
    mode: str = "explicit",
    spec_aware: bool = False,
    literal_threshold: bool = False,
    coarse_trace: list | None = None,
) -> EstimateResult:
    """Gaussian-window estimate of the ground energy.

    On the ``"basic"`` branch this is :func:`basic_gsee` at ``(eps, delta)``.
    Otherwise a coarse bisection at accuracy ``w / 2`` and confidence
    ``delta / 3`` centers a window of half-width ``w``; ``M`` window centers are
    proposed uniformly and the accepted ones are averaged.

    Args:
        schedule: From :func:`make_schedule`; its normalizations must match the oracles.
        oracle: Supplies thresholds for the coarse stage.
        spec: Spectral measure of the input state.
        gaussian_oracle: Supplies the Gaussian filters; defaults to ``oracle``.
        mode: ``"explicit"`` simulates every round. ``"aggregate"`` draws the
            accepted count as Binomial(M, mean acceptance) and the accepted values
            from the acceptance density, switching to the normal limit of their
            mean once more than ``EXACT_SAMPLE_CAP`` values are accepted.
        spec_aware: Check the excited-level separation against the hidden spectrum.
        literal_threshold: Passed to the coarse bisection.
        coarse_trace: Receives the coarse-stage rounds.

    Raises:
        NoAcceptedSamples: if no round accepts.
        PromiseViolationDetected: in spec-aware mode only.
    """
    if mode not in ("explicit", "aggregate"):
        raise InvalidParameters(f"unknown mode {mode!r}")
    g_oracle = gaussian_oracle or oracle
    if abs(schedule.c1 - oracle.c) > 1e-12 or abs(schedule.c2 - g_oracle.c) > 1e-12:
        raise InvalidParameters("schedule normalizations do not match the oracles")
    if schedule.branch == "basic":
        res = basic_gsee(schedule.eps, schedule.delta, schedule.eta, oracle, spec,
                         literal_threshold=literal_threshold, trace=coarse_trace)
        return EstimateResult(res.estimate, 0, res.cost, schedule.as_dict(), "basic", res.rounds,
                              None, mode, res.diagnostics)

    start_t = oracle.run_report()
    start_g = g_oracle.run_report() if g_oracle is not oracle else CostReport()
    coarse = basic_gsee(schedule.coarse_eps, schedule.coarse_delta, schedule.eta, oracle, spec,
                        literal_threshold=literal_threshold, trace=coarse_trace)
    center = coarse.estimate
    lo, hi = center - schedule.w, center + schedule.w
    diagnostics: dict = {"window": [lo, hi], "coarse_rounds": coarse.rounds}
    if spec_aware:
        coarse_ok = abs(center - spec.ground_energy) <= schedule.coarse_eps
        diagnostics["coarse_ok"] = coarse_ok
        if coarse_ok and schedule.Delta <= spec.gap_true:
            diagnostics["separation_slack"] = check_separation(schedule, spec, center)

    family = g_oracle.backend.gaussian_family(schedule.sigma, schedule.eps2)
    profile = g_oracle.profile(spec, family, lo, hi)
    M = schedule.M
    if mode == "explicit":
        accepted = 0
        total = 0.0
        for start in range(0, M, CHUNK):
            size = min(CHUNK, M - start)
            xs = g_oracle.rng.uniform(lo, hi, size)
            hit = g_oracle.sample_window(profile, xs, family.cost)
            accepted += int(np.count_nonzero(hit))
            total += float(np.sum(xs[hit] - center))
        mean = center + total / accepted if accepted else math.nan
    else:
        rate = profile.mean_acceptance()
        accepted = int(g_oracle.rng.binomial(M, rate))
        g_oracle.charge(M, family.cost)
        if accepted == 0:
            mean = math.nan
        elif accepted <= EXACT_SAMPLE_CAP:
            mean = _exact_window_draws(g_oracle, profile, accepted)[0] / accepted
        else:
            mom = profile.raw_moments(2, center)
            var = max(mom[2] - mom[1] ** 2, 0.0)
            mean = center + mom[1] + math.sqrt(var / accepted) * float(g_oracle.rng.standard_normal())
        diagnostics["mean_acceptance"] = rate

    if accepted == 0:
        raise NoAcceptedSamples(
            f"no accepted window centers in {M} rounds",
            rounds=M,
            expected_rate=profile.mean_acceptance(),
        )
    diagnostics["acceptance_rate"] = accepted / M
    diagnostics["profile_fit_error"] = profile.fit_error
    end_t = oracle.run_report()
    cost = CostReport(
        end_t.circuits - start_t.circuits,
        end_t.queries_total - start_t.queries_total,
        end_t.max_depth,
    )
    if g_oracle is not oracle:
        end_g = g_oracle.run_report()
        cost = cost.merge(CostReport(end_g.circuits - start_g.circuits,
                                     end_g.queries_total - start_g.queries_total, end_g.max_depth))
    return EstimateResult(float(mean), int(accepted), cost, schedule.as_dict(), "adv", M, float(center), mode, diagnostics)


# ---------------------------------------------------------------------------
# Depth / sample tradeoff


def interpolated_gap(beta: float, eps: float, Delta_true: float) -> float:
    """Gap promise ``eps^beta Delta_true^(1 - beta)`` handed to the estimator."""
    if not 0.0 <= beta <= 1.0:
        raise InvalidParameters(f"beta must lie in [0, 1], got {beta}")
    return eps**beta * Delta_true ** (1.0 - beta)


def interpolation_sweep(
    beta_grid: Sequence[float],
    eps: float,
    Delta_true: float,
    delta: float,
    eta: float,
    spec: SpectralMeasure,
    backend,
    seeds: Sequence[int] = (0,),
    mode: str = "aggregate",
) -> list[dict]:
    """Run the estimator for each ``beta`` and seed; one row per pair.

    Rows carry ``beta``, the gap promise, the branch taken, ``max_depth``,
    ``circuits``, ``queries_total``, the estimate and whether it is within ``eps``.
    """
    rows = []
    for beta in beta_grid:
        Delta = interpolated_gap(float(beta), eps, Delta_true)
        for seed in seeds:
            oracle = AcceptanceOracle(backend, np.random.SeedSequence(seed, spawn_key=(0,)))
            sched = schedule_for(eps, delta, Delta, eta, oracle)
            res = adv_gsee(sched, oracle, spec, mode=mode)
            rows.append({
                "beta": float(beta),
                "Delta": Delta,
                "seed": int(seed),
                "branch": res.branch,
                "estimate": res.estimate,
                "success": bool(abs(res.estimate - spec.ground_energy) <= eps),
                **res.cost.as_dict(),
            })
    return rows
