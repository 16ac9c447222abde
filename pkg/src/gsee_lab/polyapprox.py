"""Certified polynomial and trigonometric approximants.

Three families are built here:

* threshold polynomials, close to 1 left of a transition band and close to 0
  right of it, bounded by 1 in magnitude on [-1, 1];
* Gaussian polynomials ``exp(-(x - xi)^2 / (2 sigma^2))``, obtained by shifting
  one base polynomial that is accurate on [-pi, pi];
* Gaussian cosine series from a periodized Gaussian with positive
  coefficients summing to at most one.

Every approximant records the sup-norm error measured on a dense grid, so
the reported error is observed, not assumed.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.fft import dct
from scipy.optimize import brentq
from scipy.special import erf, erfcinv

from .errors import DegreeCapExceeded, DomainViolation, InvalidParameters

DEFAULT_MAX_DEGREE = 4000
DEFAULT_GRID = 100_001
BOUND_SLACK = 1e-9
_DOMAIN_SLACK = 1e-12


def clenshaw(coeffs: np.ndarray, t) -> np.ndarray:
    """Evaluate ``sum_k coeffs[k] T_k(t)`` by the Clenshaw recurrence."""
    coeffs = np.asarray(coeffs, dtype=float)
    t = np.asarray(t, dtype=float)
    if coeffs.size == 0:
        return np.zeros_like(t)
    if coeffs.size == 1:
        return np.full_like(t, coeffs[0])
    two_t = 2.0 * t
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    for c in coeffs[:0:-1]:
        b1, b2 = c + two_t * b1 - b2, b1
    return coeffs[0] + t * b1 - b2


def chebyshev_coefficients(f: Callable[[np.ndarray], np.ndarray], n: int) -> np.ndarray:
    """Coefficients of the degree ``n - 1`` interpolant at first-kind nodes on [-1, 1]."""
    k = np.arange(n)
    nodes = np.cos(np.pi * (k + 0.5) / n)
    coeffs = dct(f(nodes), type=2) / n
    coeffs[0] *= 0.5
    return coeffs


def _tail_truncation(coeffs: np.ndarray, budget: float) -> int:
    """Smallest degree ``d`` with ``sum_{k > d} |c_k| <= budget``."""
    tail = np.cumsum(np.abs(coeffs[::-1]))[::-1]
    # tail[k] = sum_{j >= k} |c_j|; degree d keeps indices 0..d.
    ok = np.nonzero(np.append(tail[1:], 0.0) <= budget)[0]
    return int(ok[0])


def _resolved_coefficients(
    target: Callable[[np.ndarray], np.ndarray], budget: float, max_degree: int, n_start: int = 64
) -> np.ndarray:
    """Interpolate ``target`` on [-1, 1] with enough nodes to resolve it.

    The node count doubles until the trailing coefficients fall well below
    ``budget`` and the interpolant matches ``target`` on an independent check
    grid. ``n_start`` should be at least a few points per feature width.
    """
    n = max(64, int(n_start))
    limit = 4 * max_degree + 64
    while True:
        coeffs = chebyshev_coefficients(target, n)
        tail = np.sum(np.abs(coeffs[-max(8, n // 8):]))
        if tail <= 1e-3 * budget or tail <= 1e-15:
            check = np.linspace(-1.0, 1.0, 4 * n + 1)
            if np.max(np.abs(clenshaw(coeffs, check) - target(check))) <= 1e-2 * budget:
                return coeffs
        if n >= limit:
            raise DegreeCapExceeded(
                f"target not resolved with {n} nodes (degree cap {max_degree})"
            )
        n *= 2


@dataclass(frozen=True)
class QueryCost:
    """Query accounting for one application of an approximant.

    Attributes:
        queries: Oracle uses per circuit (block-encoding or controlled evolution).
        degree: Polynomial degree realized by the circuit.
        ancillas: Ancilla count (metadata).
        model: ``"block"`` or ``"evolution"``.
        time_step: Evolution time per query for the evolution model.
    """

    queries: int
    degree: int
    ancillas: int = 0
    model: str = "block"
    time_step: float | None = None


@dataclass(frozen=True)
class BoundedPoly:
    """Chebyshev series on an interval with a grid-certified error.

    ``coeffs`` are first-kind Chebyshev coefficients in the variable mapped
    from ``domain`` onto [-1, 1]. ``certified_error`` is the measured grid
    deviation from the target (for thresholds: the worst region violation).
    """

    coeffs: np.ndarray
    certified_error: float
    bound_ok: bool
    kind: str = "generic"
    params: dict = field(default_factory=dict)
    domain: tuple[float, float] = (-1.0, 1.0)
    grid_points: int = 0

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=float)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    @property
    def degree(self) -> int:
        return int(self.coeffs.size - 1)

    def _to_unit(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.domain
        return (2.0 * x - (lo + hi)) / (hi - lo)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if arr.size and (np.min(arr) < lo - _DOMAIN_SLACK or np.max(arr) > hi + _DOMAIN_SLACK):
            raise DomainViolation(f"evaluation point outside [{lo}, {hi}]")
        t = np.clip(self._to_unit(arr), -1.0, 1.0)
        out = clenshaw(self.coeffs, t)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {
            "basis": "chebyshev-t",
            "kind": self.kind,
            "domain": list(self.domain),
            "degree": self.degree,
            "coeffs": [float(c) for c in self.coeffs],
            "certified_error": float(self.certified_error),
            "bound_ok": bool(self.bound_ok),
            "grid_points": int(self.grid_points),
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoundedPoly":
        return cls(
            coeffs=np.asarray(data["coeffs"], dtype=float),
            certified_error=float(data["certified_error"]),
            bound_ok=bool(data["bound_ok"]),
            kind=data.get("kind", "generic"),
            params=dict(data.get("params", {})),
            domain=tuple(data.get("domain", (-1.0, 1.0))),
            grid_points=int(data.get("grid_points", 0)),
        )


@dataclass(frozen=True)
class CosineSeries:
    """``sum_j a_j cos(2 pi j x / T)`` approximating ``exp(-x^2 / (2 sigma^2))``."""

    period: float
    coeffs: np.ndarray
    certified_error: float
    sigma: float
    eps2: float
    width_constant: float
    grid_points: int = 0

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=float)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def N(self) -> int:
        return int(self.coeffs.size - 1)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = clenshaw(self.coeffs, np.cos(2.0 * np.pi * arr / self.period))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {
            "basis": "cosine",
            "period": float(self.period),
            "N": self.N,
            "coeffs": [float(c) for c in self.coeffs],
            "certified_error": float(self.certified_error),
            "sigma": float(self.sigma),
            "eps2": float(self.eps2),
            "width_constant": float(self.width_constant),
            "grid_points": int(self.grid_points),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CosineSeries":
        return cls(
            period=float(data["period"]),
            coeffs=np.asarray(data["coeffs"], dtype=float),
            certified_error=float(data["certified_error"]),
            sigma=float(data["sigma"]),
            eps2=float(data["eps2"]),
            width_constant=float(data["width_constant"]),
            grid_points=int(data.get("grid_points", 0)),
        )


@dataclass(frozen=True)
class TrigThreshold:
    """Threshold for the evolution model: ``P(-cos(omega x + phi))``.

    On [0, 1] the inner map is increasing, so the region contract of the
    polynomial ``P`` transfers to ``x``. Expanding ``T_k(-cos t)`` gives a
    trigonometric polynomial of degree ``P.degree`` in ``omega x``.
    """

    poly: BoundedPoly
    a: float
    b: float
    eps1: float
    omega: float = math.pi / 2
    phi: float = math.pi / 4

    @property
    def degree(self) -> int:
        return self.poly.degree

    @property
    def certified_error(self) -> float:
        return self.poly.certified_error

    def __call__(self, x):
        return self.poly(-np.cos(self.omega * np.asarray(x, dtype=float) + self.phi))

    def to_dict(self) -> dict:
        return {
            "basis": "trig-threshold",
            "a": self.a,
            "b": self.b,
            "eps1": self.eps1,
            "omega": self.omega,
            "phi": self.phi,
            "poly": self.poly.to_dict(),
        }


Approximant = Union[BoundedPoly, CosineSeries, TrigThreshold]


def _grid(lo: float, hi: float, n: int, extra=()) -> np.ndarray:
    pts = np.linspace(lo, hi, n)
    if extra:
        pts = np.unique(np.concatenate([pts, np.asarray(extra, dtype=float)]))
    return pts


def threshold_target(a: float, b: float, eps1: float) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    """Smooth step ``(1 + erf(k (m - x))) / 2`` meeting the band contract with slack.

    The sharpness ``k`` puts the step within ``eps1 / 4`` of 1 on ``x <= a`` and of
    0 on ``x >= b``. Returns the callable and ``k``.
    """
    m = 0.5 * (a + b)
    half = 0.5 * (b - a)
    k = float(erfcinv(eps1 / 2.0)) / half
    return (lambda x: 0.5 * (1.0 + erf(k * (m - np.asarray(x, dtype=float))))), k


def _check_threshold_args(a: float, b: float, eps1: float) -> None:
    if not (-1.0 < a < b < 1.0):
        raise InvalidParameters(f"need -1 < a < b < 1, got a={a}, b={b}")
    if not (0.0 < eps1 < 1.0):
        raise InvalidParameters(f"need 0 < eps1 < 1, got {eps1}")


def _threshold_region_error(p: np.ndarray, x: np.ndarray, a: float, b: float) -> float:
    left = x <= a
    right = x >= b
    worst_left = float(np.max(1.0 - p[left])) if np.any(left) else 0.0
    worst_right = float(np.max(np.abs(p[right]))) if np.any(right) else 0.0
    return max(worst_left, worst_right, 0.0)


@functools.lru_cache(maxsize=512)
def threshold_poly(
    a: float,
    b: float,
    eps1: float,
    max_degree: int = DEFAULT_MAX_DEGREE,
    grid_points: int = DEFAULT_GRID,
) -> BoundedPoly:
    """Polynomial close to 1 on [-1, a], bounded on [a, b], close to 0 on [b, 1].

    The smooth step from :func:`threshold_target` is interpolated, truncated
    where the coefficient tail drops below ``eps1 / 8``, and scaled by
    ``1 - eps1 / 4`` so the magnitude stays below one. The contract is
    checked on a grid of at least ``max(grid_points, 10 * degree)`` points.

    Raises:
        InvalidParameters: unless ``-1 < a < b < 1`` and ``0 < eps1 < 1``.
        DegreeCapExceeded: if certification needs more than ``max_degree``.
    """
    _check_threshold_args(a, b, eps1)
    target, k = threshold_target(a, b, eps1)
    gamma = eps1 / 4.0
    coeffs = _resolved_coefficients(target, gamma, max_degree, n_start=4.0 * k)
    budget = gamma / 2.0
    while True:
        degree = _tail_truncation(coeffs, budget)
        if degree > max_degree:
            raise DegreeCapExceeded(
                f"threshold a={a}, b={b}, eps1={eps1} needs degree {degree} > {max_degree}"
            )
        trial = (1.0 - gamma) * coeffs[: degree + 1]
        n = max(grid_points, 10 * degree + 1)
        x = _grid(-1.0, 1.0, n, (a, b))
        p = clenshaw(trial, x)
        region_err = _threshold_region_error(p, x, a, b)
        sup = float(np.max(np.abs(p)))
        if region_err <= eps1 and sup <= 1.0 + BOUND_SLACK:
            target_err = float(np.max(np.abs(p - target(x))))
            return BoundedPoly(
                trial,
                certified_error=region_err,
                bound_ok=True,
                kind="threshold",
                params={"a": a, "b": b, "eps1": eps1, "k": k, "target_error": target_err},
                grid_points=int(x.size),
            )
        if budget < 1e-15:
            raise DegreeCapExceeded(f"threshold a={a}, b={b} failed certification")
        budget /= 4.0


@functools.lru_cache(maxsize=64)
def gaussian_base_poly(
    sigma: float,
    eps2: float,
    half_width: float = math.pi,
    max_degree: int = DEFAULT_MAX_DEGREE,
    grid_points: int = DEFAULT_GRID,
) -> BoundedPoly:
    """Polynomial within ``eps2`` of ``exp(-y^2/(2 sigma^2))`` on ``[-half_width, half_width]``.

    The interpolant is truncated where its coefficient tail is below
    ``eps2 / 6`` and scaled by ``1 - eps2 / 3``; the error and the bound by one
    are then checked on the grid.
    """
    if not (0.0 < sigma < 1.0 and 0.0 < eps2 < 1.0):
        raise InvalidParameters(f"need sigma, eps2 in (0, 1), got sigma={sigma}, eps2={eps2}")
    gamma = eps2 / 3.0
    scale = half_width

    def target_unit(t):
        return np.exp(-((scale * t) ** 2) / (2.0 * sigma**2))

    coeffs = _resolved_coefficients(target_unit, gamma, max_degree, n_start=4.0 * scale / sigma)
    budget = gamma / 2.0
    while True:
        degree = _tail_truncation(coeffs, budget)
        if degree > max_degree:
            raise DegreeCapExceeded(
                f"Gaussian sigma={sigma}, eps2={eps2} needs degree {degree} > {max_degree}"
            )
        trial = (1.0 - gamma) * coeffs[: degree + 1]
        n = max(grid_points, 10 * degree + 1)
        t = _grid(-1.0, 1.0, n, (0.0,))
        p = clenshaw(trial, t)
        err = float(np.max(np.abs(p - target_unit(t))))
        sup = float(np.max(np.abs(p)))
        if err <= eps2 and sup <= 1.0 + BOUND_SLACK:
            return BoundedPoly(
                trial,
                certified_error=err,
                bound_ok=True,
                kind="gaussian-base",
                params={"sigma": sigma, "eps2": eps2},
                domain=(-half_width, half_width),
                grid_points=int(t.size),
            )
        if budget < 1e-15:
            raise DegreeCapExceeded(f"Gaussian sigma={sigma}, eps2={eps2} failed certification")
        budget /= 4.0


def gaussian_poly(
    sigma: float,
    eps2: float,
    xi: float,
    max_degree: int = DEFAULT_MAX_DEGREE,
    grid_points: int = DEFAULT_GRID,
) -> BoundedPoly:
    """Polynomial on [-1, 1] within ``eps2`` of ``exp(-(x - xi)^2/(2 sigma^2))``.

    It is the base polynomial of :func:`gaussian_base_poly` composed with
    ``x -> x - xi``, re-expanded exactly in the Chebyshev basis of [-1, 1].
    Because ``|x - xi| <= 3 < pi`` the shifted polynomial inherits the base
    error and bound.
    """
    if not -2.0 <= xi <= 2.0:
        raise InvalidParameters(f"xi must lie in [-2, 2], got {xi}")
    base = gaussian_base_poly(sigma, eps2, math.pi, max_degree, grid_points)
    n = base.degree + 1
    coeffs = chebyshev_coefficients(lambda x: base(x - xi), n)
    x = _grid(-1.0, 1.0, max(grid_points, 10 * base.degree + 1), (float(np.clip(xi, -1, 1)),))
    p = clenshaw(coeffs, x)
    err = float(np.max(np.abs(p - np.exp(-((x - xi) ** 2) / (2.0 * sigma**2)))))
    sup = float(np.max(np.abs(p)))
    return BoundedPoly(
        coeffs,
        certified_error=err,
        bound_ok=bool(sup <= 1.0 + BOUND_SLACK),
        kind="gaussian",
        params={"sigma": sigma, "eps2": eps2, "xi": xi},
        grid_points=int(x.size),
    )


def threshold_trig(
    a: float,
    b: float,
    eps1: float,
    max_degree: int = DEFAULT_MAX_DEGREE,
    grid_points: int = DEFAULT_GRID,
) -> TrigThreshold:
    """Threshold for energies in [0, 1] expressed through ``cos(omega x + phi)``.

    Raises:
        InvalidParameters: unless ``0 <= a < b <= 1``.
    """
    if not (0.0 <= a < b <= 1.0):
        raise InvalidParameters(f"need 0 <= a < b <= 1, got a={a}, b={b}")
    omega, phi = math.pi / 2, math.pi / 4
    ya = -math.cos(omega * a + phi)
    yb = -math.cos(omega * b + phi)
    poly = threshold_poly(ya, yb, eps1, max_degree, grid_points)
    return TrigThreshold(poly, a, b, eps1, omega, phi)


def _periodization_tail(T: float, sigma: float) -> float:
    q = math.exp(-(T**2) / (8.0 * sigma**2))
    return 2.0 * q / (1.0 - math.exp(-(T**2) / sigma**2))


@functools.lru_cache(maxsize=64)
def gaussian_cosine_series(sigma: float, eps2: float, grid_points: int = DEFAULT_GRID) -> CosineSeries:
    """Cosine series within ``eps2`` of ``exp(-x^2/(2 sigma^2))`` on [-pi, pi].

    The period ``T`` is the larger of ``2 pi`` and the smallest value making the
    periodization tail ``2 e^{-T^2/(8 sigma^2)} / (1 - e^{-T^2/sigma^2})`` at most
    ``eps2 / 6``. With ``ghat(f) = sqrt(2 pi) sigma exp(-2 pi^2 sigma^2 f^2)`` the
    coefficients are ``a_0 = (1 - eps2/3) ghat(0) / T`` and
    ``a_j = 2 (1 - eps2/3) ghat(j/T) / T``, truncated at the smallest ``N`` with
    ``exp(-2 pi^2 sigma^2 N^2 / T^2) <= eps2 / 6``.
    """
    if not (0.0 < sigma < 1.0 and 0.0 < eps2 < 1.0):
        raise InvalidParameters(f"need sigma, eps2 in (0, 1), got sigma={sigma}, eps2={eps2}")
    goal = eps2 / 6.0
    lo = sigma * 1e-3
    hi = sigma * math.sqrt(8.0 * math.log(12.0 / goal)) + sigma
    t_min = brentq(lambda T: _periodization_tail(T, sigma) - goal, lo, hi, xtol=1e-14)
    T = max(2.0 * math.pi, t_min)
    width_constant = t_min / (sigma * math.sqrt(math.log(1.0 / eps2)))
    N = max(0, math.ceil(T * math.sqrt(math.log(1.0 / goal) / 2.0) / (math.pi * sigma)))
    while N > 0 and math.exp(-2.0 * math.pi**2 * sigma**2 * (N - 1) ** 2 / T**2) <= goal:
        N -= 1
    j = np.arange(N + 1)
    ghat = math.sqrt(2.0 * math.pi) * sigma * np.exp(-2.0 * math.pi**2 * sigma**2 * (j / T) ** 2)
    coeffs = 2.0 * (1.0 - eps2 / 3.0) * ghat / T
    coeffs[0] *= 0.5
    x = _grid(-math.pi, math.pi, grid_points, (0.0,))
    approx = clenshaw(coeffs, np.cos(2.0 * np.pi * x / T))
    err = float(np.max(np.abs(approx - np.exp(-(x**2) / (2.0 * sigma**2)))))
    return CosineSeries(T, coeffs, err, sigma, eps2, width_constant, int(x.size))


def evaluate(p: Approximant, x):
    """Evaluate an approximant; polynomials reject points outside their domain."""
    return p(x)


def degree_for_depth(p: Approximant, ancillas: int = 1) -> QueryCost:
    """Queries per circuit needed to apply ``p``.

    A degree ``d`` polynomial costs ``2d`` block-encoding queries and
    ``ancillas + 2`` ancillas. A cosine series with top harmonic ``N`` is an
    even polynomial of degree ``2N`` in ``cos(pi x / T)`` and costs ``2N``
    controlled-evolution queries. The evolution-model threshold of degree ``d``
    in ``cos(omega x + phi)`` costs ``2d`` queries.
    """
    if isinstance(p, BoundedPoly):
        return QueryCost(2 * p.degree, p.degree, ancillas + 2, "block")
    if isinstance(p, CosineSeries):
        return QueryCost(2 * p.N, 2 * p.N, 1, "evolution", 2.0 * math.pi / p.period)
    if isinstance(p, TrigThreshold):
        return QueryCost(2 * p.degree, 2 * p.degree, 1, "evolution", 2.0 * p.omega)
    raise InvalidParameters(f"no query model for {type(p).__name__}")


def approximant_from_dict(data: dict) -> Approximant:
    basis = data.get("basis")
    if basis == "chebyshev-t":
        return BoundedPoly.from_dict(data)
    if basis == "cosine":
        return CosineSeries.from_dict(data)
    if basis == "trig-threshold":
        poly = BoundedPoly.from_dict(data["poly"])
        return TrigThreshold(poly, data["a"], data["b"], data["eps1"], data["omega"], data["phi"])
    raise InvalidParameters(f"unknown approximant basis {basis!r}")
