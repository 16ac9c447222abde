"""Experiment configuration, seeded parallel execution and result files.

Trials are independent and each owns an oracle whose stream is derived from
``(master_seed, trial)``, so results do not depend on the thread count.
Per-trial CSV rows exclude wall-clock time; the JSON record carries it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .certify import CertParams, gsee_cert
from .errors import GseeError, InvalidParameters
from .gsee import adv_gsee, basic_gsee, interpolated_gap, schedule_for
from .oracle import AcceptanceOracle, child_seed, make_backend
from .polyapprox import gaussian_cosine_series, gaussian_poly, threshold_poly
from .rejection import Proposal, conditioned_cdf, ks_critical, ks_statistic, sample_conv
from .spectrum import SpectralMeasure, load_measure, synth

ALGORITHMS = ("basic", "adv", "cert", "reject", "sweep", "approx")
THREADS_ENV = "GSEE_LAB_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def fixture_spectrum(
    n_levels: int,
    gap: float,
    p0: float,
    seed: int = 0,
    ground: float = -0.6,
    top: float = 0.9,
    model_domain: str = "pm1",
) -> SpectralMeasure:
    """Ground level at ``ground`` with weight ``p0``, first excited level exactly ``gap`` above.

    Remaining levels are spread uniformly on ``[ground + gap, top]`` with
    Dirichlet weights sharing ``1 - p0``.
    """
    if n_levels < 1 or not 0 < p0 <= 1:
        raise InvalidParameters("need n_levels >= 1 and p0 in (0, 1]")
    if n_levels == 1:
        return synth([ground], [1.0], model_domain)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n_levels,)))
    e1 = ground + gap
    rest = np.sort(rng.uniform(e1, top, n_levels - 2)) if n_levels > 2 else np.zeros(0)
    energies = np.concatenate([[ground, e1], rest])
    share = rng.dirichlet(np.ones(n_levels - 1)) * (1.0 - p0)
    weights = np.concatenate([[p0], share])
    weights /= weights.sum()
    return synth(energies, weights, model_domain)


def spec_from_config(source: dict) -> SpectralMeasure:
    """Build the spectral measure named by a config's ``spec`` entry."""
    if "file" in source:
        return load_measure(source["file"])
    family = source.get("family", "levels")
    if family == "levels":
        return synth(source["energies"], source["weights"], source.get("model_domain", "pm1"))
    if family == "fixture":
        return fixture_spectrum(
            int(source["n_levels"]), float(source["gap"]), float(source["p0"]), int(source.get("seed", 0)),
            float(source.get("ground", -0.6)), float(source.get("top", 0.9)), source.get("model_domain", "pm1"),
        )
    raise InvalidParameters(f"unknown spec family {family!r}")


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's results.

    ``params`` holds algorithm inputs (``eps``, ``delta``, ``Delta``, ``eta``,
    ``sigma``, ``E_hat``/``E_hat_offset``, ``beta_grid``, ``window``, ...).
    """

    algorithm: str
    spec: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    backend: str = "ideal"
    backend_options: dict = field(default_factory=dict)
    trials: int = 1
    master_seed: int = 0
    mode: str = "explicit"
    name: str = "run"

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameters(f"algorithm must be one of {ALGORITHMS}")
        if self.trials < 0:
            raise InvalidParameters("trials must be nonnegative")
        self.validate()

    def validate(self) -> None:
        p = self.params
        for key in ("eps", "delta", "Delta", "eta", "sigma"):
            if key in p and not float(p[key]) > 0:
                raise InvalidParameters(f"{key} must be positive")
        for key in ("delta", "eta"):
            if key in p and not float(p[key]) <= 1:
                raise InvalidParameters(f"{key} must be at most 1")
        for beta in p.get("beta_grid", ()):
            if not 0 <= float(beta) <= 1:
                raise InvalidParameters("beta values must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def as_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps({"config": self.as_dict(), "version": __version__}, sort_keys=True, default=float)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    rows: list[dict]
    aggregate: dict
    wall_clock: float = 0.0

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        columns = _columns(self.rows)
        writer.writerow(columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return asdict(self)


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = ["trial"]
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ---------------------------------------------------------------------------
# Trial functions


def _oracle(cfg: ExperimentConfig, trial: int) -> AcceptanceOracle:
    backend = make_backend(cfg.backend, **cfg.backend_options)
    return AcceptanceOracle(backend, child_seed(cfg.master_seed, trial, 0))


def _outcome(est: float, spec: SpectralMeasure, eps: float) -> dict:
    err = abs(est - spec.ground_energy)
    return {"estimate": est, "abs_error": err, "success": bool(err <= eps)}


def _trial_basic(cfg, spec, trial):
    p = cfg.params
    oracle = _oracle(cfg, trial)
    res = basic_gsee(float(p["eps"]), float(p["delta"]), float(p["eta"]), oracle, spec)
    return {**_outcome(res.estimate, spec, float(p["eps"])), **res.cost.as_dict()}


def _trial_adv(cfg, spec, trial):
    p = cfg.params
    oracle = _oracle(cfg, trial)
    sched = schedule_for(float(p["eps"]), float(p["delta"]), float(p["Delta"]), float(p["eta"]), oracle)
    res = adv_gsee(sched, oracle, spec, mode=cfg.mode)
    return {**_outcome(res.estimate, spec, float(p["eps"])), "branch": res.branch,
            "accepted": res.accepted_samples, **res.cost.as_dict()}


def _trial_sweep(cfg, spec, trial):
    p = cfg.params
    grid = [float(b) for b in p["beta_grid"]]
    beta = grid[trial % len(grid)]
    oracle = _oracle(cfg, trial)
    Delta = interpolated_gap(beta, float(p["eps"]), float(p["Delta_true"]))
    sched = schedule_for(float(p["eps"]), float(p["delta"]), Delta, float(p["eta"]), oracle)
    res = adv_gsee(sched, oracle, spec, mode=cfg.mode)
    return {"beta": beta, "Delta": Delta, "branch": res.branch,
            **_outcome(res.estimate, spec, float(p["eps"])), **res.cost.as_dict()}


def _trial_cert(cfg, spec, trial):
    p = cfg.params
    sigma = float(p["sigma"])
    if "E_hat_offset" in p:
        lo, hi = p["E_hat_offset"]
        u = np.random.Generator(np.random.Philox(child_seed(cfg.master_seed, trial, 1))).uniform(lo, hi)
        e_hat = spec.ground_energy + float(u) * sigma
    else:
        e_hat = float(p["E_hat"])
    params = CertParams(float(p["eps"]), float(p["eta"]), sigma, e_hat, float(p.get("delta", 0.1)))
    oracle = _oracle(cfg, trial)
    mode = cfg.mode if cfg.mode in ("explicit", "aggregate") else "auto"
    v = gsee_cert(params, spec, oracle, mode=mode)
    return {
        "E_hat": e_hat,
        "decision": v.decision,
        "accepted": v.accepted,
        "refined_estimate": v.refined_estimate,
        "refined_error": None if v.refined_estimate is None else abs(v.refined_estimate - spec.ground_energy),
        "S": v.conditioned_variance,
        "tail_mass": v.tail_mass,
        "samples_used": v.samples_used,
        "stage": v.stage,
        **oracle.run_report().as_dict(),
    }


def _trial_reject(cfg, spec, trial):
    p = cfg.params
    a, b = p["window"]
    sigma = float(p["sigma"])
    oracle = _oracle(cfg, trial)
    cap = int(p["trial_cap"]) if "trial_cap" in p else None
    run = sample_conv(spec, {"sigma": sigma}, Proposal(float(a), float(b)), oracle, int(p["n_target"]), cap)
    ks = ks_statistic(run.accepted, conditioned_cdf(spec, sigma, (a, b)))
    crit = ks_critical(run.accepted.size)
    return {
        "accepted": int(run.accepted.size),
        "trials_run": run.trials,
        "trials_per_sample": run.trials_per_sample,
        "expected_trials_per_sample": run.expected_trials_per_sample,
        "ks": ks,
        "ks_critical_1pct": crit,
        "ks_pass": bool(ks < crit),
        "mean": float(np.mean(run.accepted)),
        **oracle.run_report().as_dict(),
    }


def _trial_approx(cfg, spec, trial):
    p = cfg.params
    rng = np.random.Generator(np.random.Philox(child_seed(cfg.master_seed, trial, 1)))
    kind = p.get("kinds", ["threshold", "gaussian", "cosine"])[trial % len(p.get("kinds", [0, 0, 0]))]
    if kind == "threshold":
        mid = rng.uniform(-0.6, 0.6)
        half = rng.uniform(0.02, 0.2)
        eps1 = 10 ** rng.uniform(-4, -1)
        poly = threshold_poly(mid - half, mid + half, eps1)
        return {"kind": kind, "a": mid - half, "b": mid + half, "eps": eps1, "degree": poly.degree,
                "certified_error": poly.certified_error, "ok": poly.bound_ok and poly.certified_error <= eps1}
    sigma = 10 ** rng.uniform(-1.5, -0.5)
    eps2 = 10 ** rng.uniform(-6, -2)
    if kind == "gaussian":
        xi = rng.uniform(-2, 2)
        poly = gaussian_poly(sigma, eps2, xi)
        return {"kind": kind, "sigma": sigma, "eps": eps2, "xi": xi, "degree": poly.degree,
                "certified_error": poly.certified_error, "ok": poly.bound_ok and poly.certified_error <= eps2}
    series = gaussian_cosine_series(sigma, eps2)
    total = float(np.sum(series.coeffs))
    return {"kind": kind, "sigma": sigma, "eps": eps2, "degree": 2 * series.N, "coeff_sum": total,
            "certified_error": series.certified_error,
            "ok": total <= 1 and series.certified_error <= eps2 and bool(np.all(series.coeffs > 0))}


TRIALS: dict[str, Callable] = {
    "basic": _trial_basic,
    "adv": _trial_adv,
    "sweep": _trial_sweep,
    "cert": _trial_cert,
    "reject": _trial_reject,
    "approx": _trial_approx,
}


def _safe_trial(cfg: ExperimentConfig, spec: SpectralMeasure | None, trial: int) -> dict:
    try:
        row = TRIALS[cfg.algorithm](cfg, spec, trial)
        row = {"trial": trial, **row, "error": ""}
    except GseeError as exc:
        row = {"trial": trial, "error": f"{type(exc).__name__}: {exc}"}
    return row


def _mean_se(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return float(arr.mean()), se


def aggregate_rows(rows: list[dict]) -> dict:
    """Success rate, mean error and cost summaries with standard errors."""
    out: dict = {"trials": len(rows), "failures": sum(1 for r in rows if r.get("error"))}
    for key in ("success", "accepted", "ks_pass", "ok"):
        vals = [float(r[key]) for r in rows if isinstance(r.get(key), (bool, np.bool_))]
        if vals:
            rate = float(np.mean(vals))
            out[f"{key}_rate"] = rate
            out[f"{key}_rate_se"] = math.sqrt(rate * (1 - rate) / len(vals))
    for key in ("abs_error", "circuits", "queries_total", "samples_used"):
        vals = [float(r[key]) for r in rows if r.get(key) is not None and not isinstance(r.get(key), str)]
        if vals:
            out[f"mean_{key}"], out[f"se_{key}"] = _mean_se(vals)
    depths = [int(r["max_depth"]) for r in rows if "max_depth" in r]
    if depths:
        out["max_depth"] = max(depths)
    return out


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> RunRecord:
    """Run ``config.trials`` trials on a thread pool and aggregate them.

    Per-trial errors are recorded in the row's ``error`` column rather than raised.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    start = time.perf_counter()
    spec = spec_from_config(config.spec) if config.spec else None
    if config.trials == 0:
        rows: list[dict] = []
    elif threads == 1:
        rows = [_safe_trial(config, spec, t) for t in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda t: _safe_trial(config, spec, t), range(config.trials)))
    return RunRecord(config.config_hash(), config.as_dict(), rows, aggregate_rows(rows),
                     time.perf_counter() - start)


def emit(record: RunRecord, out_dir: str | Path, name: str | None = None) -> tuple[Path, Path]:
    """Write ``<name>.csv`` (one row per trial) and ``<name>.json`` (record); returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = name or record.config.get("name", "run")
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    csv_path.write_text(record.csv_text())
    json_path.write_text(json.dumps(record.as_dict(), indent=2, sort_keys=True, default=_json_default))
    return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
