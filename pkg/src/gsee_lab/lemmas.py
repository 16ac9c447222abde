"""Numerical checks of the inequalities the estimators rely on.

Every check integrates by adaptive quadrature over a parameter grid and
raises ``LemmaViolation`` with the offending tuple on the first failure. A
check passes when its slack is at least minus the quadrature error budget:
at ``s = +-w/2`` the first-moment bound holds with equality up to a term of
order ``(eps / (e sigma))^9``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import LemmaViolation
from .gsee import make_schedule, separation_margin
from .polyapprox import gaussian_cosine_series
from .quadrature import quadrature

SIGMAS = (0.01, 0.1, 0.3, 1.0)
EPS_RATIOS = (1.0, 0.5, 0.2, 0.1, 1e-2, 1e-3, 1e-4, 1e-6)
SHIFT_FRACTIONS = tuple(np.linspace(-1.0, 1.0, 9))


@dataclass
class LemmaReport:
    checks: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)
    seconds: float = 0.0

    def record(self, name: str, slack: float, detail: dict) -> None:
        self.checks[name] = self.checks.get(name, 0) + 1
        if name not in self.worst or slack < self.worst[name]["slack"]:
            self.worst[name] = {"slack": slack, **detail}

    @property
    def total(self) -> int:
        return sum(self.checks.values())

    def as_dict(self) -> dict:
        return {"checks": self.checks, "worst": self.worst, "total": self.total, "seconds": self.seconds}


def window_half_width(sigma: float, eps: float) -> float:
    """``w = 2 sigma sqrt(ln(e sigma / eps))``."""
    return 2.0 * sigma * math.sqrt(math.log(math.e * sigma / eps))


def perturbation_size(sigma: float, eps: float) -> float:
    """Largest allowed pointwise perturbation ``0.03 eps / (sigma ln(e sigma / eps))``."""
    return 0.03 * eps / (sigma * math.log(math.e * sigma / eps))


def truncated_moments(sigma: float, s: float, w: float, tol: float) -> tuple[float, float]:
    """Quadrature of ``int e^{-x^2/sigma^2}`` and ``int x e^{-x^2/sigma^2}`` over ``[s - w, s + w]``."""
    f = lambda x: np.exp(-(x * x) / sigma**2)
    pts = [0.0] if s - w < 0.0 < s + w else None
    mass = quadrature(f, s - w, s + w, tol=tol, points=pts)
    first = quadrature(lambda x: x * f(x), s - w, s + w, tol=tol, points=pts)
    return mass, first


def worst_perturbed_ratio(sigma: float, eps: float, s: float, tol: float, iters: int = 30) -> tuple[float, float]:
    """Largest ``|int x g| / int g`` over nonnegative ``g`` within ``m`` of ``e^{-x^2/sigma^2}``.

    For a fixed ratio ``r`` the numerator-minus-``r``-denominator is linear in
    the perturbation, maximized by ``+m`` where ``x > r`` and by the most
    negative allowed value ``-min(m, f)`` where ``x < r``. Iterating ``r`` to a
    fixed point (Dinkelbach) gives the maximum; the mirrored pattern gives the
    minimum. Also returns the smallest ``int g`` (all perturbations negative).
    """
    m = perturbation_size(sigma, eps)
    w = window_half_width(sigma, eps)
    lo, hi = s - w, s + w
    f = lambda x: np.exp(-(x * x) / sigma**2)
    cross = sigma * math.sqrt(math.log(1.0 / m)) if m < 1 else 0.0
    base_pts = [p for p in (-cross, 0.0, cross) if lo < p < hi]

    def integrals(r: float, upper_right: bool) -> tuple[float, float]:
        def g(x):
            fx = f(x)
            down = fx - np.minimum(m, fx)
            up = fx + m
            right = x > r
            return np.where(right == upper_right, up, down)

        pts = sorted(set(base_pts + ([r] if lo < r < hi else [])))
        num = quadrature(lambda x: x * g(x), lo, hi, tol=tol, points=pts)
        den = quadrature(g, lo, hi, tol=tol, points=pts)
        return num, den

    worst = 0.0
    for upper_right in (True, False):
        r = 0.0
        for _ in range(iters):
            num, den = integrals(r, upper_right)
            new = num / den
            if abs(new - r) <= 1e-15 * sigma:
                r = new
                break
            r = new
        worst = max(worst, abs(r))
    min_mass = quadrature(lambda x: f(x) - np.minimum(m, f(x)), lo, hi, tol=tol, points=base_pts)
    return worst, min_mass


def check_truncated_gaussian(report: LemmaReport, sigmas=SIGMAS, eps_ratios=EPS_RATIOS, shifts=SHIFT_FRACTIONS) -> None:
    """Mass, first-moment and ratio bounds, unperturbed and under worst-case perturbation."""
    for sigma, ratio, frac in itertools.product(sigmas, eps_ratios, shifts):
        eps = ratio * sigma
        w = window_half_width(sigma, eps)
        s = float(frac) * w / 2.0
        tol = 1e-4 * sigma * eps
        detail = {"sigma": sigma, "eps": eps, "s": s}
        mass, first = truncated_moments(sigma, s, w, tol)
        worst, min_mass = worst_perturbed_ratio(sigma, eps, s, tol)
        checks = (
            ("ideal_mass", mass - 1.12 * sigma, tol),
            ("ideal_first", sigma * eps / (2 * math.e) - abs(first), tol),
            ("ideal_ratio", eps / (2.24 * math.e) - abs(first) / mass, 2 * tol / mass),
            ("noisy_mass", min_mass - sigma, tol),
            ("noisy_ratio", 0.55 * eps - worst, 2 * tol / min_mass),
        )
        for name, slack, allowance in checks:
            report.record(name, slack, detail)
            if slack < -allowance:
                raise LemmaViolation(f"{name} fails at {detail} (slack {slack:.3e})")


def check_separation(report: LemmaReport) -> None:
    """Excited levels stay ``sigma sqrt(ln(0.5 c2^2/eps2))`` beyond every window center.

    With the coarse estimate within ``w/2`` of ``E_0`` the closest center is
    ``E_0 + 3w/2``, so the worst case is ``Delta - 3w/2`` on a two-level
    fixture with gap exactly ``Delta``; a grid over centers confirms it.
    """
    for eps, Delta, eta, c2 in itertools.product(
        (1e-2, 1e-3, 1e-4, 1e-6), (0.05, 0.2, 0.5, 1.0), (0.01, 0.1, 0.5, 0.9), (1.0, 2.0)
    ):
        if eps >= Delta / 8:
            continue
        sched = make_schedule(eps, 0.1, Delta, eta, 1.0, 1, c2, 1)
        margin = separation_margin(sched)
        e1 = Delta
        for coarse in np.linspace(-sched.w / 2, sched.w / 2, 5):
            xis = np.linspace(coarse - sched.w, coarse + sched.w, 41)
            slack = float(np.min(e1 - xis)) - margin
            detail = {"eps": eps, "Delta": Delta, "eta": eta, "c2": c2, "coarse": float(coarse)}
            report.record("separation", slack, detail)
            if slack < 0:
                raise LemmaViolation(f"separation fails at {detail} (slack {slack:.3e})")


def check_cosine_series(report: LemmaReport, settings=((0.05, 1e-4), (0.1, 1e-3), (0.3, 1e-6), (0.02, 1e-2))) -> None:
    """Coefficients positive with sum at most one, and the certified error within ``eps2``."""
    for sigma, eps2 in settings:
        series = gaussian_cosine_series(sigma, eps2)
        detail = {"sigma": sigma, "eps2": eps2}
        for name, slack in (
            ("cosine_sum", 1.0 - float(np.sum(series.coeffs))),
            ("cosine_positive", float(np.min(series.coeffs))),
            ("cosine_error", eps2 - series.certified_error),
        ):
            report.record(name, slack, detail)
            if slack < 0 or (name == "cosine_positive" and slack == 0):
                raise LemmaViolation(f"{name} fails at {detail} (slack {slack:.3e})")


def lemma_suite() -> LemmaReport:
    """Run every check; raises ``LemmaViolation`` on the first failure."""
    start = time.perf_counter()
    report = LemmaReport()
    check_truncated_gaussian(report)
    check_separation(report)
    check_cosine_series(report)
    report.seconds = time.perf_counter() - start
    return report
