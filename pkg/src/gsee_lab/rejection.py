"""Rejection sampling from the Gaussian-smeared spectral density.

A window center ``x`` is proposed uniformly on ``[a, b]`` and accepted when a
Gaussian-filter circuit centered at ``x`` succeeds. With the filter
``h(E - x) = exp(-(E - x)^2 / (4 sigma^2))`` the acceptance probability is
``c^-2 sigma sqrt(2 pi) (p * n_sigma)(x)``, so accepted centers follow the
density ``p * n_sigma`` restricted to the window.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import ndtr
from scipy.stats import kstwo

from .errors import InvalidParameters, TrialCapExhausted
from .oracle import CHUNK, AcceptanceOracle
from .quadrature import quadrature
from .spectrum import SpectralMeasure

DEFAULT_FILTER_EPS = 1e-8
CAP_FACTOR = 50


@dataclass(frozen=True)
class Proposal:
    """Uniform proposal on ``[a, b]``."""

    a: float
    b: float
    kind: str = "uniform"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise InvalidParameters(f"proposal needs finite a < b, got [{self.a}, {self.b}]")
        if self.kind != "uniform":
            raise InvalidParameters("only uniform proposals are supported")

    @property
    def width(self) -> float:
        return self.b - self.a

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.a, self.b, n)


@dataclass
class RejectionRun:
    """Accepted values with their provenance and the number of trials spent."""

    accepted: np.ndarray
    trials: int
    worker_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    trial_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    expected_trials_per_sample: float | None = None

    @property
    def acceptance_rate(self) -> float:
        return self.accepted.size / self.trials if self.trials else 0.0

    @property
    def trials_per_sample(self) -> float:
        return self.trials / self.accepted.size if self.accepted.size else math.inf

    def csv_rows(self) -> list[tuple[str, int, int]]:
        return [
            (repr(float(v)), int(w), int(t))
            for v, w, t in zip(self.accepted, self.worker_ids, self.trial_indices)
        ]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["value", "worker", "trial"])
            writer.writerows(self.csv_rows())


def filter_family(oracle: AcceptanceOracle, sigma: float, eps2: float = DEFAULT_FILTER_EPS):
    """Filters ``exp(-(E - x)^2 / (4 sigma^2))``: the backend Gaussian of width ``sqrt(2) sigma``."""
    return oracle.backend.gaussian_family(math.sqrt(2.0) * sigma, eps2)


def smeared_density(spec: SpectralMeasure, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    """The density ``(p * n_sigma)(x)`` as a vectorized callable."""
    e = spec.energies
    p = spec.weights
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def density(x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - e) / sigma
        return norm * (np.exp(-0.5 * z * z) @ p)

    return density


def window_mass(spec: SpectralMeasure, sigma: float, a: float, b: float) -> float:
    """Closed-form mass of ``p * n_sigma`` on ``[a, b]``."""
    e, p = spec.energies, spec.weights
    return float(np.dot(p, ndtr((b - e) / sigma) - ndtr((a - e) / sigma)))


def conditioned_cdf(spec: SpectralMeasure, sigma: float, window: tuple[float, float]) -> Callable:
    """CDF of ``p * n_sigma`` conditioned on ``window``."""
    a, b = window
    e, p = spec.energies, spec.weights
    lower = ndtr((a - e) / sigma)
    mass = float(np.dot(p, ndtr((b - e) / sigma) - lower))
    if mass <= 0:
        raise InvalidParameters("window carries no mass")

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), a, b)
        return (ndtr((x[..., None] - e) / sigma) - lower) @ p / mass

    return cdf


def expected_trials_bound(
    sigma: float, window: tuple[float, float], spec: SpectralMeasure, c: float = 1.0, tol: float = 1e-13
) -> float:
    """Expected trials per accepted sample, ``c^2 (b - a) / (sigma sqrt(2 pi) int_a^b p * n_sigma)``.

    The integral is computed by adaptive quadrature with the level energies as
    breakpoints.

    Raises:
        QuadratureFailure: if the integral does not converge.
    """
    a, b = window
    if not a < b or sigma <= 0:
        raise InvalidParameters("need a < b and sigma > 0")
    mass = quadrature(smeared_density(spec, sigma), a, b, tol=tol, points=list(spec.energies))
    if mass <= 0:
        return math.inf
    return c * c * (b - a) / (sigma * math.sqrt(2.0 * math.pi) * mass)


def _worker(
    spec: SpectralMeasure,
    family,
    proposal: Proposal,
    oracle: AcceptanceOracle,
    n_target: int,
    trial_cap: int,
    worker_id: int,
    guess: float,
) -> tuple[RejectionRun, bool]:
    profile = oracle.profile(spec, family, proposal.a, proposal.b)
    values: list[np.ndarray] = []
    indices: list[np.ndarray] = []
    got = 0
    trials = 0
    while got < n_target and trials < trial_cap:
        size = min(CHUNK, trial_cap - trials, max(1024, int(1.1 * (n_target - got) * guess)))
        xs = proposal.sample(oracle.rng, size)
        hit = oracle.rng.random(size) < profile(xs)
        pos = np.flatnonzero(hit)
        need = n_target - got
        if pos.size >= need:
            pos = pos[:need]
            used = int(pos[-1]) + 1
        else:
            used = size
        values.append(xs[pos])
        indices.append(trials + pos)
        got += pos.size
        trials += used
        oracle.charge(used, family.cost)
    accepted = np.concatenate(values) if values else np.zeros(0)
    idx = np.concatenate(indices).astype(np.int64) if indices else np.zeros(0, dtype=np.int64)
    run = RejectionRun(accepted, trials, np.full(accepted.size, worker_id, dtype=np.int64), idx)
    return run, got >= n_target


def sample_conv(
    spec: SpectralMeasure,
    nu_params: dict,
    proposal: Proposal,
    oracle: AcceptanceOracle,
    n_target: int,
    trial_cap: int | None = None,
    partitions: int = 1,
    threads: int = 1,
) -> RejectionRun:
    """Draw ``n_target`` samples of ``p * n_sigma`` restricted to the proposal window.

    Args:
        spec: Spectral measure.
        nu_params: ``{"sigma": ..., "eps2": ...}``; ``eps2`` is the filter accuracy.
        proposal: Uniform proposal covering the support of interest.
        oracle: Acceptance oracle; with ``partitions > 1`` it must be seedable.
        n_target: Number of accepted samples wanted.
        trial_cap: Total trial budget; defaults to ``50 n_target ceil(|M|^2)``.
        partitions: Split the target over this many derived oracle streams.
        threads: Worker threads for the partitions; does not affect results.

    Raises:
        TrialCapExhausted: with the partial run attached as ``.run``.
    """
    sigma = float(nu_params["sigma"])
    eps2 = float(nu_params.get("eps2", DEFAULT_FILTER_EPS))
    if n_target < 1:
        raise InvalidParameters("n_target must be positive")
    family = filter_family(oracle, sigma, eps2)
    m2 = expected_trials_bound(sigma, (proposal.a, proposal.b), spec, oracle.c)
    if trial_cap is None:
        trial_cap = int(min(CAP_FACTOR * n_target * math.ceil(min(m2, 1e12)), 2**62))
    if trial_cap < n_target:
        raise InvalidParameters("trial_cap must be at least n_target")
    guess = min(m2, 1e6)

    if partitions <= 1:
        run, done = _worker(spec, family, proposal, oracle, n_target, trial_cap, 0, guess)
    else:
        shares = [n_target // partitions + (i < n_target % partitions) for i in range(partitions)]
        caps = [trial_cap // partitions + (i < trial_cap % partitions) for i in range(partitions)]
        children = [oracle.spawn(i) for i in range(partitions)]

        def job(i):
            return _worker(spec, family, proposal, children[i], shares[i], caps[i], i, guess)

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            parts = list(pool.map(job, range(partitions)))
        for child in children:
            oracle.report = oracle.report.merge(child.run_report())
        run = RejectionRun(
            np.concatenate([p.accepted for p, _ in parts]),
            sum(p.trials for p, _ in parts),
            np.concatenate([p.worker_ids for p, _ in parts]),
            np.concatenate([p.trial_indices for p, _ in parts]),
        )
        done = all(d for _, d in parts)
    run.expected_trials_per_sample = m2
    if not done:
        raise TrialCapExhausted(
            f"{run.accepted.size} of {n_target} samples after {run.trials} trials "
            f"(expected {m2:.3g} trials per sample)",
            run=run,
        )
    return run


def ks_statistic(samples: np.ndarray, cdf: Callable) -> float:
    """Two-sided Kolmogorov-Smirnov distance between samples and a CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Critical value of the one-sample KS statistic at level ``alpha``."""
    return float(kstwo.isf(alpha, n))

