"""Accept-or-reject test for a ground energy estimate from Gaussian-smeared samples.

Stage 1 checks that little smeared mass sits in ``[E_hat + L/2, E_hat + 2L]``.
Stage 2 estimates the mean and variance of the smeared density conditioned on
``[E_hat - L, E_hat + L]``; an excess of variance over ``sigma^2`` reveals
that excited levels pull the conditioned mean away from the ground energy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InvalidParameters, PromiseViolationDetected
from .oracle import AcceptanceOracle
from .quadrature import quadrature_with_error
from .rejection import Proposal, filter_family, sample_conv, smeared_density
from .spectrum import SpectralMeasure

EXPLICIT_SAMPLE_CAP = 2_000_000
SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CertParams:
    """Inputs of the test and the constants derived from them.

    ``tau = eps^2 eta / 160`` is both the additive accuracy of every estimate
    and the scale setting the window half-width ``L = sigma sqrt(8 ln(1/tau))``.
    Stage 1 rejects at ``2 tau``, i.e. peakedness constant ``c' = 1 / (80 eta)``.
    """

    eps: float
    eta: float
    sigma: float
    E_hat: float
    delta: float = 0.1
    tau_target: float = field(init=False)
    L: float = field(init=False)
    c_prime: float = field(init=False)

    def __post_init__(self) -> None:
        if self.eps <= 0 or self.sigma <= 0 or not 0 < self.eta <= 1 or not 0 < self.delta < 1:
            raise InvalidParameters("need eps, sigma > 0, eta in (0, 1], delta in (0, 1)")
        tau = self.eps**2 * self.eta / 160.0
        object.__setattr__(self, "tau_target", tau)
        object.__setattr__(self, "L", math.sqrt(8.0 * math.log(1.0 / tau)) * self.sigma)
        object.__setattr__(self, "c_prime", 1.0 / (80.0 * self.eta))

    @property
    def tail_window(self) -> tuple[float, float]:
        return (self.E_hat + 0.5 * self.L, self.E_hat + 2.0 * self.L)

    @property
    def core_window(self) -> tuple[float, float]:
        return (self.E_hat - self.L, self.E_hat + self.L)

    @property
    def tail_reject_level(self) -> float:
        return 2.0 * self.tau_target

    @property
    def variance_band(self) -> float:
        return 2.0 * self.eps**2 * self.eta

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CertVerdict:
    decision: str
    refined_estimate: float | None
    tail_mass: float
    conditioned_mean: float | None
    conditioned_variance: float | None
    samples_used: int
    stage: str
    mode: str
    tail_rounds: int = 0
    core_samples: int = 0

    @property
    def accepted(self) -> bool:
        return self.decision == "accept"

    def as_dict(self) -> dict:
        return asdict(self)


def tail_rounds(params: CertParams, c: float = 1.0) -> int:
    """Stage-1 trials: ``ceil(8 ln(4/delta) / t)`` with ``t`` the per-trial acceptance equivalent of ``tau``.

    With ``t = tau sigma sqrt(2 pi) / (1.5 L c^2)``, Bernstein's inequality
    keeps the count within ``t`` per trial whenever the true rate is at most
    ``3t``, and a larger rate is rejected anyway.
    """
    lo, hi = params.tail_window
    t = params.tau_target * params.sigma * SQRT_2PI / ((hi - lo) * c * c)
    return math.ceil(8.0 * math.log(4.0 / params.delta) / t)


def core_samples(params: CertParams) -> int:
    """Stage-2 accepted samples for mean and variance to additive ``tau`` at confidence ``1 - delta/2``.

    Centered values lie in ``[-L, L]``. The mean needs ``2 L^2 ln(8/delta) / tau^2``
    draws (Hoeffding). The variance needs the second moment to ``tau / 2`` and
    the mean to ``tau / (4L)``, hence ``32 L^4 ln(8/delta) / tau^2``.
    """
    L, tau = params.L, params.tau_target
    log_term = math.log(8.0 / params.delta)
    return math.ceil(max(32.0 * L**4, 2.0 * L**2) * log_term / tau**2)


def gsee_cert(
    params: CertParams,
    spec: SpectralMeasure,
    oracle: AcceptanceOracle,
    *,
    mode: str = "auto",
    eps2: float | None = None,
    spec_aware: bool = False,
) -> CertVerdict:
    """Certify ``params.E_hat``; on acceptance return the refined estimate.

    Args:
        params: Test parameters.
        spec: Spectral measure of the input state.
        oracle: Acceptance oracle supplying Gaussian filters.
        mode: ``"explicit"`` draws every stage-2 sample by rejection sampling;
            ``"aggregate"`` draws the centered sums from their normal limit
            using the exact conditioned moments; ``"auto"`` picks explicit when
            the sample count is at most ``EXPLICIT_SAMPLE_CAP``.
        eps2: Filter accuracy; defaults to ``tau / 10``.
        spec_aware: Check the prior-accuracy promise against the hidden spectrum.

    Raises:
        PromiseViolationDetected: in spec-aware mode, if ``|E_hat - E_0| > sigma``.
        TrialCapExhausted: from explicit stage-2 sampling.
    """
    if mode not in ("auto", "explicit", "aggregate"):
        raise InvalidParameters(f"unknown mode {mode!r}")
    if spec_aware and abs(params.E_hat - spec.ground_energy) > params.sigma:
        raise PromiseViolationDetected(
            f"prior estimate {params.E_hat:.6g} is more than sigma from the ground energy"
        )
    eps2 = params.tau_target / 10.0 if eps2 is None else eps2
    family = filter_family(oracle, params.sigma, eps2)
    c2 = oracle.c * oracle.c

    # Stage 1: acceptance count on the tail window, a Binomial(T1, rate) variate.
    lo, hi = params.tail_window
    tail_profile = oracle.profile(spec, family, lo, hi)
    T1 = tail_rounds(params, oracle.c)
    hits = int(oracle.rng.binomial(T1, tail_profile.mean_acceptance()))
    oracle.charge(T1, family.cost)
    tail_mass = hits / T1 * c2 * (hi - lo) / (params.sigma * SQRT_2PI)
    if tail_mass >= params.tail_reject_level:
        return CertVerdict("reject", None, tail_mass, None, None, T1, "tail", mode, T1, 0)

    # Stage 2: conditioned mean and variance on the core window.
    n = core_samples(params)
    lo, hi = params.core_window
    use_explicit = mode == "explicit" or (mode == "auto" and n <= EXPLICIT_SAMPLE_CAP)
    if use_explicit:
        run = sample_conv(spec, {"sigma": params.sigma, "eps2": eps2}, Proposal(lo, hi), oracle, n)
        y = run.accepted - params.E_hat
        s1, s2 = float(np.sum(y)), float(np.sum(y * y))
        trials = run.trials
        used_mode = "explicit"
    else:
        profile = oracle.profile(spec, family, lo, hi)
        m = profile.raw_moments(4, params.E_hat)
        cov = np.array([[m[2] - m[1] ** 2, m[3] - m[1] * m[2]], [m[3] - m[1] * m[2], m[4] - m[2] ** 2]])
        s1, s2 = oracle.rng.multivariate_normal(n * m[1:3], n * cov, method="cholesky")
        rate = profile.mean_acceptance()
        trials = n + int(oracle.rng.negative_binomial(n, rate)) if rate < 1 else n
        oracle.charge(trials, family.cost)
        used_mode = "aggregate"
    mean_y = float(s1) / n
    variance = float(s2) / n - mean_y**2
    refined = params.E_hat + mean_y
    decision = "accept" if abs(variance - params.sigma**2) <= params.variance_band else "reject"
    return CertVerdict(
        decision,
        refined if decision == "accept" else None,
        tail_mass,
        refined,
        variance,
        T1 + trials,
        "variance",
        used_mode,
        T1,
        n,
    )


# ---------------------------------------------------------------------------
# Closed forms and quadrature oracles


def mixture_variance(weights, means, sigma: float) -> float:
    """Variance of ``sum_i w_i N(mu_i, sigma^2)``: ``sigma^2`` plus the variance of the means."""
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    w = w / w.sum()
    center = float(np.dot(w, mu))
    return sigma**2 + float(np.dot(w, (mu - center) ** 2))


def mixture_variance_bound(weights, means, sigma: float, eps: float, c: float, eta: float | None = None) -> float:
    """Lower bound ``sigma^2 + eta c^2 eps^2`` on the mixture variance.

    Valid when the mixture mean is at least ``c eps`` from the lowest mean and
    that component carries weight at least ``eta`` (default: its weight).

    Raises:
        InvalidParameters: if the mean-shift precondition fails or ``eta``
            exceeds the lowest component's weight.
    """
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    w = w / w.sum()
    low = int(np.argmin(mu))
    p0 = float(w[low])
    eta = p0 if eta is None else float(eta)
    if eta > p0 + 1e-15:
        raise InvalidParameters("eta exceeds the weight of the lowest component")
    shift = abs(float(np.dot(w, mu)) - float(mu[low]))
    if shift < c * eps:
        raise InvalidParameters(f"mixture mean is {shift:.3g} from the lowest mean, below c*eps = {c * eps:.3g}")
    return sigma**2 + eta * c * c * eps * eps


@dataclass(frozen=True)
class WindowMoments:
    """Smeared-density integrals over ``[E_hat - L, E_hat + L]`` and their level-sum counterparts.

    ``mass``, ``first`` and ``second`` are the integrals of ``x^k (p * n_sigma)``;
    the ``near_*`` fields are the sums over levels within ``L / 2`` of ``E_hat``
    of ``p_i``, ``p_i E_i`` and ``p_i (sigma^2 + E_i^2)``. ``quad_error`` bounds
    the quadrature error of each integral.
    """

    mass: float
    first: float
    second: float
    near_mass: float
    near_first: float
    near_second: float
    tail_mass: float
    quad_error: float

    @property
    def mean(self) -> float:
        return self.first / self.mass

    @property
    def second_moment(self) -> float:
        return self.second / self.mass

    @property
    def conditioned_variance(self) -> float:
        return self.second / self.mass - self.mean**2

    @property
    def gaps(self) -> tuple[float, float, float]:
        return (
            abs(self.mass - self.near_mass),
            abs(self.first - self.near_first),
            abs(self.second - self.near_second),
        )


def peaked_window_moments(spec: SpectralMeasure, sigma: float, E_hat: float, L: float, tol: float = 1e-14) -> WindowMoments:
    """Quadrature moments of the smeared density on the core window.

    Raises:
        QuadratureFailure: if any integral fails to converge.
    """
    dens = smeared_density(spec, sigma)
    lo, hi = E_hat - L, E_hat + L
    pts = [float(e) for e in spec.energies if lo < e < hi]
    err = 0.0
    vals = []
    for k in range(3):
        v, e = quadrature_with_error(lambda x, k=k: x**k * dens(x), lo, hi, tol=tol, points=pts)
        vals.append(v)
        err = max(err, e)
    tail = float(np.dot(spec.weights, ndtr((E_hat + 2 * L - spec.energies) / sigma)
                        - ndtr((E_hat + 0.5 * L - spec.energies) / sigma)))
    near = np.abs(spec.energies - E_hat) <= 0.5 * L
    p = spec.weights[near]
    e = spec.energies[near]
    return WindowMoments(
        vals[0], vals[1], vals[2],
        float(p.sum()), float(np.dot(p, e)), float(np.dot(p, sigma**2 + e * e)),
        tail, err,
    )


def completeness_sigma(Delta_true: float, eta: float, eps: float) -> float:
    """Width ``Delta_true / (10 sqrt(ln(2 / (eta eps))))`` at which the test should accept."""
    return Delta_true / (10.0 * math.sqrt(math.log(2.0 / (eta * eps))))
