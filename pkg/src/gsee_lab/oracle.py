"""Simulated block-encodings and evolution circuits at the eigenvalue level.

Applying ``g(H)`` to a state and measuring the ancillas succeeds with
probability ``c^-2 sum_j p_j g(E_j)^2``. The oracle evaluates that law
exactly, draws Bernoulli outcomes from a seeded stream and keeps the circuit
and query tallies.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev

from . import polyapprox as pa
from .errors import DomainViolation, InvalidParameters, OracleFailure
from .polyapprox import QueryCost
from .spectrum import SpectralMeasure

PROB_SLACK = 1e-9
CHUNK = 1 << 18

# Fits are deterministic functions of their key, so sharing them across
# oracles and threads cannot change any sampled outcome.
_PROFILE_CACHE: dict = {}
_PROFILE_LOCK = threading.Lock()


def make_rng(seed=None) -> np.random.Generator:
    """Counter-based (Philox) generator from an int, ``SeedSequence`` or generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def child_seed(seed, *key: int) -> np.random.SeedSequence:
    """Derive the stream for ``key`` from a master seed, independent of scheduling."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


# ---------------------------------------------------------------------------
# Functions applied by the circuits


@dataclass(frozen=True)
class OperatorFunction:
    """A real function applied to the Hamiltonian, with its per-circuit cost.

    ``domain`` is the interval on which the function is guaranteed; applying it
    to an energy outside raises ``DomainViolation``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    cost: QueryCost
    error: float
    domain: tuple[float, float]
    label: str = ""

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if arr.size and (np.min(arr) < lo - 1e-12 or np.max(arr) > hi + 1e-12):
            raise DomainViolation(f"{self.label or 'function'} applied outside [{lo}, {hi}]")
        return self.func(arr)


@dataclass(frozen=True)
class GaussianFamily:
    """Shifted Gaussians ``g_xi(x) = base(x - xi)``.

    ``base`` approximates ``exp(-y^2 / (2 sigma^2))`` for ``y`` in
    ``offset_domain``. All members share one query cost.
    """

    sigma: float
    eps2: float
    base: Callable[[np.ndarray], np.ndarray]
    cost: QueryCost
    error: float
    offset_domain: tuple[float, float]
    label: str = ""

    def offsets(self, energies: np.ndarray, xis: np.ndarray) -> np.ndarray:
        y = np.asarray(energies, dtype=float)[None, :] - np.asarray(xis, dtype=float)[:, None]
        lo, hi = self.offset_domain
        if y.size and (np.min(y) < lo - 1e-12 or np.max(y) > hi + 1e-12):
            raise DomainViolation(f"{self.label or 'Gaussian'} offset outside [{lo}, {hi}]")
        return y

    def at(self, xi: float) -> OperatorFunction:
        lo, hi = self.offset_domain
        xi = float(xi)
        return OperatorFunction(
            lambda x: self.base(np.asarray(x) - xi),
            self.cost,
            self.error,
            (xi + lo, xi + hi),
            f"{self.label}@{xi:.6g}",
        )


# ---------------------------------------------------------------------------
# Backends


class _Backend:
    name = "backend"
    c: float = 1.0
    m: int = 0

    def threshold(self, a: float, b: float, eps1: float, domain: tuple[float, float]) -> OperatorFunction:
        raise NotImplementedError

    def gaussian_family(self, sigma: float, eps2: float) -> GaussianFamily:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"backend": self.name, "c": self.c, "m": self.m}


class IdealFunction(_Backend):
    """Exact target functions with normalization ``c = 1``.

    Query costs are charged as if the functions were realized by the
    approximants of ``cost_model`` (``"block"``, ``"evolution"`` or ``"none"``),
    so depth accounting stays meaningful.
    """

    name = "ideal"

    def __init__(self, cost_model: str = "block", max_degree: int = pa.DEFAULT_MAX_DEGREE, ancillas: int = 1):
        if cost_model not in ("block", "evolution", "none"):
            raise InvalidParameters(f"unknown cost model {cost_model!r}")
        self.cost_model = cost_model
        self.max_degree = int(max_degree)
        self.c = 1.0
        self.m = int(ancillas)

    def _threshold_cost(self, a, b, eps1, domain) -> QueryCost:
        if self.cost_model == "none":
            return QueryCost(0, 0)
        if self.cost_model == "evolution":
            return pa.degree_for_depth(pa.threshold_trig(a, b, eps1, self.max_degree))
        ua, ub = _to_pm1(a, domain), _to_pm1(b, domain)
        return pa.degree_for_depth(pa.threshold_poly(ua, ub, eps1, self.max_degree), self.m)

    def threshold(self, a, b, eps1, domain=(-1.0, 1.0)) -> OperatorFunction:
        target, _ = pa.threshold_target(a, b, eps1)
        cost = self._threshold_cost(a, b, eps1, domain)
        return OperatorFunction(target, cost, 0.0, (-np.inf, np.inf), f"ideal-threshold[{a:.6g},{b:.6g}]")

    def gaussian_family(self, sigma, eps2) -> GaussianFamily:
        if self.cost_model == "none":
            cost = QueryCost(0, 0)
        elif self.cost_model == "evolution":
            cost = pa.degree_for_depth(pa.gaussian_cosine_series(sigma, eps2))
        else:
            base = pa.gaussian_base_poly(sigma, eps2, math.pi, self.max_degree)
            cost = pa.degree_for_depth(base, self.m)
        s2 = 2.0 * sigma * sigma
        return GaussianFamily(
            sigma, eps2, lambda y: np.exp(-(y * y) / s2), cost, 0.0, (-np.inf, np.inf), "ideal-gauss"
        )

    def describe(self) -> dict:
        return {**super().describe(), "cost_model": self.cost_model, "max_degree": self.max_degree}


def _to_pm1(x: float, domain: tuple[float, float]) -> float:
    lo, hi = domain
    return (2.0 * x - (lo + hi)) / (hi - lo)


class PolyBlockEncoding(_Backend):
    """Chebyshev polynomials applied through a (2, m + 2, 0) block-encoding."""

    name = "poly"

    def __init__(self, max_degree: int = pa.DEFAULT_MAX_DEGREE, ancillas: int = 1, grid_points: int = pa.DEFAULT_GRID):
        self.max_degree = int(max_degree)
        self.grid_points = int(grid_points)
        self.c = 2.0
        self.m = int(ancillas) + 2
        self._ancillas = int(ancillas)

    def threshold(self, a, b, eps1, domain=(-1.0, 1.0)) -> OperatorFunction:
        if tuple(domain) != (-1.0, 1.0):
            raise DomainViolation("the block-encoding backend works on [-1, 1]")
        poly = pa.threshold_poly(a, b, eps1, self.max_degree, self.grid_points)
        return OperatorFunction(poly, pa.degree_for_depth(poly, self._ancillas), poly.certified_error,
                                (-1.0, 1.0), f"poly-threshold[{a:.6g},{b:.6g}]")

    def gaussian_family(self, sigma, eps2) -> GaussianFamily:
        base = pa.gaussian_base_poly(sigma, eps2, math.pi, self.max_degree, self.grid_points)
        return GaussianFamily(sigma, eps2, base, pa.degree_for_depth(base, self._ancillas),
                              base.certified_error, base.domain, "poly-gauss")

    def describe(self) -> dict:
        return {**super().describe(), "max_degree": self.max_degree}


class TrigEvolution(_Backend):
    """Trigonometric polynomials realized with controlled evolutions, ``c = 1``."""

    name = "trig"

    def __init__(self, max_degree: int = pa.DEFAULT_MAX_DEGREE, grid_points: int = pa.DEFAULT_GRID):
        self.max_degree = int(max_degree)
        self.grid_points = int(grid_points)
        self.c = 1.0
        self.m = 1

    def threshold(self, a, b, eps1, domain=(0.0, 1.0)) -> OperatorFunction:
        if tuple(domain) != (0.0, 1.0):
            raise DomainViolation("the evolution backend works on [0, 1]")
        trig = pa.threshold_trig(a, b, eps1, self.max_degree, self.grid_points)
        return OperatorFunction(trig, pa.degree_for_depth(trig), trig.certified_error,
                                (0.0, 1.0), f"trig-threshold[{a:.6g},{b:.6g}]")

    def gaussian_family(self, sigma, eps2) -> GaussianFamily:
        series = pa.gaussian_cosine_series(sigma, eps2, self.grid_points)
        return GaussianFamily(sigma, eps2, series, pa.degree_for_depth(series),
                              series.certified_error, (-math.pi, math.pi), "trig-gauss")

    def describe(self) -> dict:
        return {**super().describe(), "max_degree": self.max_degree}


BACKENDS = {"ideal": IdealFunction, "poly": PolyBlockEncoding, "trig": TrigEvolution}


def make_backend(name: str, **kwargs) -> _Backend:
    try:
        return BACKENDS[name](**kwargs)
    except KeyError as exc:
        raise InvalidParameters(f"unknown backend {name!r}") from exc


# ---------------------------------------------------------------------------
# Acceptance profiles over a proposal window


@dataclass(frozen=True)
class WindowProfile:
    """Chebyshev representation of ``xi -> q(xi)`` on a proposal window.

    ``q`` is a smooth function of ``xi``, so a modest number of Chebyshev
    coefficients reproduces it to rounding level. ``fit_error`` is the largest
    deviation from direct evaluation observed on an independent check grid.
    """

    lo: float
    hi: float
    series: Chebyshev
    fit_error: float
    peak: float

    def __call__(self, xi):
        return np.clip(self.series(np.asarray(xi, dtype=float)), 0.0, 1.0)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def integral(self) -> float:
        anti = self.series.integ(lbnd=self.lo)
        return float(anti(self.hi))

    def mean_acceptance(self) -> float:
        """Acceptance probability of one round with a uniform proposal on the window."""
        return min(1.0, max(0.0, self.integral() / self.width))

    def raw_moments(self, order: int = 4, center: float = 0.0) -> np.ndarray:
        """``E[(X - center)^k]`` for ``k = 0..order`` under the density ``q / int q``."""
        mass = self.integral()
        x = Chebyshev.identity(domain=[self.lo, self.hi], window=[-1, 1]) - center
        term = self.series
        out = [1.0]
        for _ in range(order):
            term = term * x
            out.append(float(term.integ(lbnd=self.lo)(self.hi)) / mass)
        return np.array(out)


def _fit_profile(q: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> WindowProfile:
    deg = 32
    while True:
        series = Chebyshev.interpolate(q, deg, domain=[lo, hi])
        coef = series.coef
        scale = max(1e-300, float(np.max(np.abs(coef))))
        if np.max(np.abs(coef[-6:])) <= 1e-15 * scale or deg >= 4096:
            break
        deg *= 2
    check = np.linspace(lo, hi, 2 * deg + 3)
    direct = q(check)
    fit_error = float(np.max(np.abs(series(check) - direct)))
    if deg >= 4096 and fit_error > 1e-9:
        raise OracleFailure(f"acceptance profile on [{lo}, {hi}] not resolved (error {fit_error:.2e})")
    return WindowProfile(lo, hi, series, fit_error, float(np.max(direct)))


# ---------------------------------------------------------------------------
# Oracle


@dataclass
class CostReport:
    """Circuit tallies: circuits run, total queries, deepest single circuit."""

    circuits: int = 0
    queries_total: int = 0
    max_depth: int = 0

    FIELDS = ("circuits", "queries_total", "max_depth")

    def add(self, n: int, cost: QueryCost) -> None:
        if n <= 0:
            return
        self.circuits += int(n)
        self.queries_total += int(n) * int(cost.queries)
        self.max_depth = max(self.max_depth, int(cost.queries))

    def merge(self, other: "CostReport") -> "CostReport":
        return CostReport(
            self.circuits + other.circuits,
            self.queries_total + other.queries_total,
            max(self.max_depth, other.max_depth),
        )

    def as_dict(self) -> dict:
        return {"circuits": self.circuits, "queries_total": self.queries_total, "max_depth": self.max_depth}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.FIELDS)
        writer.writerow([self.circuits, self.queries_total, self.max_depth])
        return buf.getvalue()


class AcceptanceOracle:
    """Exact ancilla-success law plus seeded Bernoulli sampling and cost tallies.

    One instance per worker: sampling mutates the stream and the counters.
    Use :meth:`spawn` to derive independent, reproducible oracles.
    """

    def __init__(self, backend: _Backend | str = "ideal", seed=None, **backend_kwargs):
        if isinstance(backend, str):
            backend = make_backend(backend, **backend_kwargs)
        self.backend = backend
        self.c = float(backend.c)
        self.m = int(backend.m)
        if self.c < 1.0:
            raise InvalidParameters("normalization c must be at least 1")
        if isinstance(seed, np.random.Generator):
            self._seed = None
            self.rng = seed
        else:
            self._seed = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
            self.rng = make_rng(self._seed)
        self.report = CostReport()

    # -- exact law ---------------------------------------------------------
    def _check_prob(self, q: np.ndarray) -> np.ndarray:
        if np.any(q < -PROB_SLACK) or np.any(q > 1.0 + PROB_SLACK):
            raise OracleFailure(
                f"acceptance probability outside [0, 1] (range {np.min(q):.3e}..{np.max(q):.3e}); "
                "is sup|g| <= c?"
            )
        return np.clip(q, 0.0, 1.0)

    def accept_prob(self, spec: SpectralMeasure, g: Callable) -> float:
        """``c^-2 sum_j p_j g(E_j)^2`` for a single operator function."""
        vals = np.asarray(g(spec.energies), dtype=float)
        q = float(np.dot(spec.weights, vals * vals)) / (self.c * self.c)
        return float(self._check_prob(np.array([q]))[0])

    def accept_probs(self, spec: SpectralMeasure, family: GaussianFamily, xis) -> np.ndarray:
        """Exact acceptance probabilities for the family members centered at ``xis``."""
        xis = np.atleast_1d(np.asarray(xis, dtype=float))
        out = np.empty(xis.size)
        step = max(1, (1 << 20) // max(1, spec.n_levels))
        for i in range(0, xis.size, step):
            y = family.offsets(spec.energies, xis[i:i + step])
            vals = np.asarray(family.base(y.ravel()), dtype=float).reshape(y.shape)
            out[i:i + step] = (vals * vals) @ spec.weights
        return self._check_prob(out / (self.c * self.c))

    def profile(self, spec: SpectralMeasure, family: GaussianFamily, lo: float, hi: float) -> WindowProfile:
        """Cached Chebyshev fit of the acceptance probability over ``[lo, hi]``."""
        kind = type(self.backend)
        key = (
            kind.__module__, kind.__qualname__, tuple(sorted(self.backend.describe().items())), self.c, family.label, family.sigma, family.eps2, float(lo), float(hi),
            spec.energies.tobytes(), spec.weights.tobytes(),
        )
        with _PROFILE_LOCK:
            prof = _PROFILE_CACHE.get(key)
        if prof is None:
            prof = _fit_profile(lambda x: self.accept_probs(spec, family, x), float(lo), float(hi))
            with _PROFILE_LOCK:
                if len(_PROFILE_CACHE) >= 512:
                    _PROFILE_CACHE.pop(next(iter(_PROFILE_CACHE)))
                _PROFILE_CACHE[key] = prof
        return prof

    # -- sampling ----------------------------------------------------------
    def charge(self, n: int, cost: QueryCost) -> None:
        self.report.add(n, cost)

    def sample_outcome(self, spec: SpectralMeasure, g: OperatorFunction) -> bool:
        q = self.accept_prob(spec, g)
        self.charge(1, g.cost)
        return bool(self.rng.random() < q)

    def sample_count(self, spec: SpectralMeasure, g: OperatorFunction, n: int) -> int:
        """Run ``n`` circuits with the same function and count accepts.

        The count of ``n`` i.i.d. Bernoulli(q) outcomes is drawn as one binomial
        variate, which has the same law.
        """
        q = self.accept_prob(spec, g)
        hits = int(self.rng.binomial(int(n), q)) if n > 0 else 0
        self.charge(n, g.cost)
        return hits

    def sample_window(self, profile: WindowProfile, xis: np.ndarray, cost: QueryCost) -> np.ndarray:
        """Bernoulli outcomes for proposals ``xis`` evaluated through ``profile``."""
        q = profile(xis)
        out = self.rng.random(q.size) < q
        self.charge(int(q.size), cost)
        return out

    # -- bookkeeping -------------------------------------------------------
    def run_report(self) -> CostReport:
        return CostReport(self.report.circuits, self.report.queries_total, self.report.max_depth)

    def reset(self) -> None:
        self.report = CostReport()

    def spawn(self, key: int) -> "AcceptanceOracle":
        """Fresh oracle on the same backend with the stream derived for ``key``."""
        if self._seed is None:
            raise InvalidParameters("cannot spawn from an oracle built on a bare generator")
        return AcceptanceOracle(self.backend, child_seed(self._seed, key))
