"""Spectral measures, dense Hamiltonian ingestion and domain rescaling.

A spectral measure is the discrete distribution ``p(x) = sum_j p_j delta(x - E_j)``
that an initial state induces on the eigenvalues of a Hamiltonian. Every
estimator in this package consumes only this object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    DegenerateGroundGap,
    DomainViolation,
    EmptySpectrum,
    InvalidParameters,
    NotHermitian,
    NotNormalized,
    WeightSumViolation,
)

MODEL_DOMAINS: dict[str, tuple[float, float]] = {"pm1": (-1.0, 1.0), "01": (0.0, 1.0)}
MERGE_TOL = 1e-10
GAP_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
DOMAIN_SLACK = 1e-12
MAX_DENSE_DIM = 4096

_HEADER_TAG = "GSEEMAT"


def _domain_interval(domain: str | tuple[float, float]) -> tuple[float, float]:
    if isinstance(domain, str):
        try:
            return MODEL_DOMAINS[domain]
        except KeyError as exc:
            raise InvalidParameters(f"unknown model domain {domain!r}") from exc
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise InvalidParameters(f"interval must satisfy lo < hi, got {domain}")
    return lo, hi


def _domain_tag(interval: tuple[float, float]) -> str | None:
    for tag, iv in MODEL_DOMAINS.items():
        if iv == (float(interval[0]), float(interval[1])):
            return tag
    return None


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpectralMeasure:
    """Sorted eigenvalues with their overlaps.

    Attributes:
        energies: Ascending eigenvalues ``E_j``; the ground level is strictly
            separated from the next one.
        weights: Overlaps ``p_j`` (nonnegative, summing to one).
        model_domain: ``"pm1"`` for the block-encoding model (energies in
            [-1, 1]) or ``"01"`` for the evolution model (energies in [0, 1]).
    """

    energies: np.ndarray
    weights: np.ndarray
    model_domain: str = "pm1"

    def __post_init__(self) -> None:
        energies = np.atleast_1d(np.asarray(self.energies, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if energies.size == 0:
            raise EmptySpectrum("spectral measure needs at least one level")
        if energies.shape != weights.shape or energies.ndim != 1:
            raise InvalidParameters("energies and weights must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(weights))):
            raise InvalidParameters("energies and weights must be finite")
        lo, hi = _domain_interval(self.model_domain)
        if np.any(energies < lo - DOMAIN_SLACK) or np.any(energies > hi + DOMAIN_SLACK):
            raise DomainViolation(
                f"energies outside [{lo}, {hi}] for model domain {self.model_domain!r}"
            )
        if np.any(np.diff(energies) < 0):
            raise InvalidParameters("energies must be sorted ascending")
        if energies.size > 1 and energies[1] - energies[0] <= GAP_TOL:
            raise DegenerateGroundGap(
                f"E1 - E0 = {energies[1] - energies[0]:.3e} is not above {GAP_TOL}"
            )
        if np.any(weights < 0):
            raise WeightSumViolation("weights must be nonnegative")
        total = float(np.sum(weights))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise WeightSumViolation(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "energies", _frozen(np.clip(energies, lo, hi)))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def n_levels(self) -> int:
        return int(self.energies.size)

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def gap_true(self) -> float:
        """``E_1 - E_0``; infinite for a single-level measure."""
        if self.n_levels == 1:
            return float("inf")
        return float(self.energies[1] - self.energies[0])

    @property
    def overlap0(self) -> float:
        return float(self.weights[0])

    @property
    def domain(self) -> tuple[float, float]:
        return MODEL_DOMAINS[self.model_domain]

    def to_dict(self) -> dict:
        return {
            "model_domain": self.model_domain,
            "energies": [float(e) for e in self.energies],
            "weights": [float(p) for p in self.weights],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralMeasure":
        return synth(data["energies"], data["weights"], data.get("model_domain", "pm1"))

    @classmethod
    def from_json(cls, text: str) -> "SpectralMeasure":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DenseHermitian:
    """A dense Hermitian matrix with an entrywise Hermiticity tolerance."""

    entries: np.ndarray
    tolerance: float = 1e-10
    dimension: int = field(init=False)

    def __post_init__(self) -> None:
        h = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        if h.shape[0] == 0:
            raise EmptySpectrum("matrix has dimension zero")
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise InvalidParameters(f"matrix must be square, got shape {h.shape}")
        if h.shape[0] > MAX_DENSE_DIM:
            raise InvalidParameters(
                f"dimension {h.shape[0]} exceeds the dense cap {MAX_DENSE_DIM}"
            )
        dev = float(np.max(np.abs(h - h.conj().T)))
        if dev > self.tolerance:
            raise NotHermitian(f"max |A - A^dagger| = {dev:.3e} exceeds {self.tolerance:.1e}")
        h = 0.5 * (h + h.conj().T)
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)
        object.__setattr__(self, "dimension", int(h.shape[0]))

    def spectral_norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.entries))))


def synth(energies, weights, model_domain: str = "pm1") -> SpectralMeasure:
    """Build a validated measure from explicit levels.

    Levels are sorted by energy; no merging is performed, so two ground
    levels closer than the gap tolerance raise ``DegenerateGroundGap``.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if energies.shape != weights.shape:
        raise InvalidParameters("energies and weights must have equal length")
    order = np.argsort(energies, kind="stable")
    return SpectralMeasure(energies[order], weights[order], model_domain)


def _merge_levels(evals: np.ndarray, weights: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    groups: list[list[int]] = [[0]]
    for i in range(1, evals.size):
        if evals[i] - evals[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    energies = np.array([evals[g].mean() for g in groups])
    merged = np.array([weights[g].sum() for g in groups])
    return energies, merged


def from_dense(h: DenseHermitian | np.ndarray, psi, model_domain: str = "pm1") -> SpectralMeasure:
    """Spectral measure of ``psi`` with respect to the Hermitian matrix ``h``.

    Eigenvalues within ``1e-10`` of each other are merged and their weights
    summed. Weights are renormalized so they sum to one to machine precision.
    """
    if not isinstance(h, DenseHermitian):
        h = DenseHermitian(np.asarray(h))
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != h.dimension:
        raise InvalidParameters(f"state has length {psi.size}, matrix dimension {h.dimension}")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > 1e-10:
        raise NotNormalized(f"|psi| = {norm!r}")
    evals, evecs = np.linalg.eigh(h.entries)
    weights = np.abs(evecs.conj().T @ psi) ** 2
    energies, weights = _merge_levels(evals, weights, MERGE_TOL)
    weights = weights / weights.sum()
    return SpectralMeasure(energies, weights, model_domain)


@dataclass(frozen=True)
class AffineMap:
    """The map ``x -> scale * x + shift`` applied when rescaling a spectrum."""

    scale: float
    shift: float

    def apply(self, x):
        out = self.scale * np.asarray(x, dtype=float) + self.shift
        return float(out) if out.ndim == 0 else out

    def inverse(self, y):
        out = (np.asarray(y, dtype=float) - self.shift) / self.scale
        return float(out) if out.ndim == 0 else out

    def error_to_source(self, eps_target: float) -> float:
        """Accuracy in the original frame for accuracy ``eps_target`` after mapping."""
        return eps_target / self.scale

    def error_to_target(self, eps_source: float) -> float:
        return eps_source * self.scale

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.shift == 0.0


def _affine_between(src: tuple[float, float], dst: tuple[float, float]) -> AffineMap:
    scale = (dst[1] - dst[0]) / (src[1] - src[0])
    return AffineMap(scale, dst[0] - scale * src[0])


Rescalable = Union[SpectralMeasure, DenseHermitian]


def rescale_to(obj: Rescalable, target, source: tuple[float, float] | None = None) -> tuple[Rescalable, AffineMap]:
    """Map a measure or matrix into ``target`` and return the affine record.

    Args:
        obj: Spectral measure or dense matrix.
        target: ``"pm1"``, ``"01"`` or an explicit interval.
        source: Interval to map onto ``target``. Defaults to the measure's
            model domain, or to ``[-|h|, |h|]`` for a matrix whose norm
            exceeds one (``[-1, 1]`` otherwise).

    Returns:
        The rescaled object and the map from the old frame to the new one.
    """
    dst = _domain_interval(target)
    if isinstance(obj, SpectralMeasure):
        tag = _domain_tag(dst)
        if tag is None:
            raise InvalidParameters("spectral measures can only be mapped onto 'pm1' or '01'")
        src = _domain_interval(source) if source is not None else obj.domain
        amap = AffineMap(1.0, 0.0) if src == dst else _affine_between(src, dst)
        energies = amap.apply(obj.energies) if not amap.is_identity else obj.energies
        if np.any(energies < dst[0] - DOMAIN_SLACK) or np.any(energies > dst[1] + DOMAIN_SLACK):
            raise DomainViolation("source interval does not contain the spectrum")
        return SpectralMeasure(np.clip(energies, *dst), obj.weights, tag), amap
    if isinstance(obj, DenseHermitian):
        if source is None:
            norm = obj.spectral_norm()
            if norm == 0.0:
                norm = 1.0
            src = (-max(norm, 1.0), max(norm, 1.0))
        else:
            src = _domain_interval(source)
        amap = AffineMap(1.0, 0.0) if src == dst else _affine_between(src, dst)
        mapped = amap.scale * obj.entries + amap.shift * np.eye(obj.dimension)
        return DenseHermitian(mapped, obj.tolerance), amap
    raise InvalidParameters(f"cannot rescale object of type {type(obj).__name__}")


def save_dense(path: str | Path, h: DenseHermitian | np.ndarray, binary: bool = False) -> None:
    """Write a matrix with a one-line header followed by interleaved re/im values."""
    entries = h.entries if isinstance(h, DenseHermitian) else np.asarray(h, dtype=complex)
    n = entries.shape[0]
    flat = np.empty(2 * n * n)
    flat[0::2] = entries.real.ravel()
    flat[1::2] = entries.imag.ravel()
    fmt = "f64le" if binary else "text"
    header = f"{_HEADER_TAG} {n} row-major complex-interleaved {fmt}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(flat.astype("<f8").tobytes())
        else:
            fh.write(" ".join(repr(float(v)) for v in flat).encode() + b"\n")


def load_dense(path: str | Path, tolerance: float = 1e-10) -> DenseHermitian:
    """Read a matrix written by :func:`save_dense`."""
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        body = fh.read()
    if len(header) != 5 or header[0] != _HEADER_TAG or header[2] != "row-major" or header[3] != "complex-interleaved":
        raise InvalidParameters(f"unrecognized matrix header {' '.join(header)!r}")
    n = int(header[1])
    if header[4] == "f64le":
        flat = np.frombuffer(body, dtype="<f8")
    elif header[4] == "text":
        flat = np.array(body.split(), dtype=float)
    else:
        raise InvalidParameters(f"unknown matrix encoding {header[4]!r}")
    if flat.size != 2 * n * n:
        raise InvalidParameters(f"expected {2 * n * n} values, found {flat.size}")
    entries = (flat[0::2] + 1j * flat[1::2]).reshape(n, n)
    return DenseHermitian(entries, tolerance)


def load_measure(path: str | Path) -> SpectralMeasure:
    return SpectralMeasure.from_json(Path(path).read_text())


def save_measure(path: str | Path, measure: SpectralMeasure) -> None:
    Path(path).write_text(measure.to_json() + "\n")
