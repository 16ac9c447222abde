"""Command-line entry point: ``gsee-lab estimate|certify|approx|bench|lemmas``."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from .certify import CertParams, gsee_cert
from .errors import GseeError, LemmaViolation
from .experiments import ExperimentConfig, _json_default, default_threads, emit, run_experiment, spec_from_config
from .gsee import adv_gsee, basic_gsee, schedule_for
from .lemmas import lemma_suite
from .oracle import AcceptanceOracle, make_backend
from .polyapprox import gaussian_cosine_series, gaussian_poly, threshold_poly, threshold_trig
from .spectrum import SpectralMeasure, load_measure

ESTIMATE_COLUMNS = (
    "algorithm", "backend", "seed", "eps", "delta", "Delta", "eta",
    "estimate", "abs_error", "branch", "circuits", "queries_total", "max_depth",
)


def _load_spec(spec_path: str | None, levels: str | None, config: dict) -> SpectralMeasure:
    if spec_path:
        return load_measure(spec_path)
    if levels:
        pairs = [item.split(":") for item in levels.split(",") if item.strip()]
        return SpectralMeasure.from_dict({"energies": [float(e) for e, _ in pairs],
                                          "weights": [float(p) for _, p in pairs]})
    if config.get("spec"):
        return spec_from_config(config["spec"])
    raise click.UsageError("give --spec, --levels or a config with a 'spec' entry")


def _read_config(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _pick(option, config: dict, key: str, default=None):
    if option is not None:
        return option
    return config.get("params", {}).get(key, config.get(key, default))


def _dump(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _append_row(path: Path, row: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(ESTIMATE_COLUMNS)
        writer.writerow([_cell(row.get(c)) for c in ESTIMATE_COLUMNS])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Ground-state energy estimation experiments."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON with spec/params/backend entries.")
@click.option("--spec", "spec_path", type=click.Path(exists=True), help="Spectral measure JSON.")
@click.option("--levels", help="Inline measure, e.g. '-0.5:0.6,0.5:0.4'.")
@click.option("--algorithm", type=click.Choice(["adv", "basic"]), default=None)
@click.option("--eps", type=float)
@click.option("--delta", type=float)
@click.option("--Delta", "Delta", type=float, help="Promised gap lower bound (adv only).")
@click.option("--eta", type=float)
@click.option("--backend", type=click.Choice(["ideal", "poly", "trig"]), default=None)
@click.option("--mode", type=click.Choice(["explicit", "aggregate"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(), default=None, help="Append a row to <out-dir>/estimates.csv.")
def estimate(config_path, spec_path, levels, algorithm, eps, delta, Delta, eta, backend, mode, seed, out_dir):
    """Estimate the ground energy and print a JSON record."""
    cfg = _read_config(config_path)
    spec = _load_spec(spec_path, levels, cfg)
    algorithm = algorithm or cfg.get("algorithm", "adv")
    backend = backend or cfg.get("backend", "ideal")
    mode = mode or cfg.get("mode", "explicit")
    seed = _pick(seed, cfg, "master_seed", 0)
    eps, delta, eta = _pick(eps, cfg, "eps"), _pick(delta, cfg, "delta", 0.1), _pick(eta, cfg, "eta")
    Delta = _pick(Delta, cfg, "Delta")
    if eps is None or eta is None or (algorithm == "adv" and Delta is None):
        raise click.UsageError("eps and eta are required; adv also needs --Delta")
    oracle = AcceptanceOracle(make_backend(backend, **cfg.get("backend_options", {})), seed)
    try:
        if algorithm == "basic":
            res = basic_gsee(eps, delta, eta, oracle, spec)
        else:
            res = adv_gsee(schedule_for(eps, delta, Delta, eta, oracle), oracle, spec, mode=mode)
    except GseeError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    record = {"algorithm": algorithm, "backend": backend, "seed": seed, "eps": eps, "delta": delta,
              "Delta": Delta, "eta": eta, "abs_error": abs(res.estimate - spec.ground_energy), **res.as_dict()}
    _dump(record)
    if out_dir:
        _append_row(Path(out_dir) / "estimates.csv", record)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--spec", "spec_path", type=click.Path(exists=True))
@click.option("--levels")
@click.option("--E-hat", "E_hat", type=float, required=True, help="Estimate to certify.")
@click.option("--sigma", type=float, required=True)
@click.option("--eps", type=float, required=True)
@click.option("--eta", type=float, required=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--backend", type=click.Choice(["ideal", "poly", "trig"]), default="ideal", show_default=True)
@click.option("--mode", type=click.Choice(["auto", "explicit", "aggregate"]), default="auto", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def certify(config_path, spec_path, levels, E_hat, sigma, eps, eta, delta, backend, mode, seed):
    """Accept or reject an estimate; exits 1 on rejection."""
    spec = _load_spec(spec_path, levels, _read_config(config_path))
    oracle = AcceptanceOracle(make_backend(backend), seed)
    try:
        verdict = gsee_cert(CertParams(eps, eta, sigma, E_hat, delta), spec, oracle, mode=mode)
    except GseeError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    _dump({**verdict.as_dict(), **oracle.run_report().as_dict()})
    sys.exit(0 if verdict.accepted else 1)


@main.command()
@click.argument("kind", type=click.Choice(["threshold", "threshold-trig", "gaussian", "cosine"]))
@click.option("--a", type=float, help="Threshold lower edge.")
@click.option("--b", type=float, help="Threshold upper edge.")
@click.option("--sigma", type=float)
@click.option("--xi", type=float, default=0.0, show_default=True)
@click.option("--eps", type=float, required=True, help="Target accuracy.")
@click.option("--max-degree", type=int, default=4000, show_default=True)
def approx(kind, a, b, sigma, xi, eps, max_degree):
    """Build a certified approximant and print it as JSON."""
    try:
        if kind in ("threshold", "threshold-trig"):
            if a is None or b is None:
                raise click.UsageError("--a and --b are required")
            build = threshold_poly if kind == "threshold" else threshold_trig
            out = build(a, b, eps, max_degree=max_degree)
        elif sigma is None:
            raise click.UsageError("--sigma is required")
        elif kind == "gaussian":
            out = gaussian_poly(sigma, eps, xi, max_degree=max_degree)
        else:
            out = gaussian_cosine_series(sigma, eps)
    except GseeError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    _dump(out.to_dict())


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=None, help="Override the config's master seed.")
@click.option("--trials", type=int, default=None)
@click.option("--out-dir", type=click.Path(), default="results", show_default=True)
@click.option("--threads", type=int, default=None, help="Defaults to $GSEE_LAB_THREADS or 1.")
@click.option("--min-rate", type=float, default=None, help="Exit 1 if the success rate falls below this.")
def bench(config_path, seed, trials, out_dir, threads, min_rate):
    """Run a seeded multi-trial experiment and write CSV and JSON results."""
    data = _read_config(config_path)
    if seed is not None:
        data["master_seed"] = seed
    if trials is not None:
        data["trials"] = trials
    try:
        config = ExperimentConfig.from_dict(data)
    except GseeError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    record = run_experiment(config, threads if threads is not None else default_threads())
    csv_path, json_path = emit(record, out_dir)
    click.echo(f"{csv_path}\n{json_path}")
    _dump(record.aggregate)
    if min_rate is not None:
        rate = next((record.aggregate[k] for k in ("success_rate", "accepted_rate", "ks_pass_rate", "ok_rate")
                     if k in record.aggregate), 0.0)
        if rate < min_rate:
            click.echo(f"FAIL: rate {rate:.3f} < {min_rate}", err=True)
            sys.exit(1)


@main.command()
def lemmas():
    """Check the numerical inequalities; exits 1 on a violation."""
    try:
        report = lemma_suite()
    except LemmaViolation as exc:
        click.echo(f"LemmaViolation: {exc}", err=True)
        sys.exit(1)
    _dump(report.as_dict())


if __name__ == "__main__":
    main()
