"""Ground-state energy estimation from filtered-state success probabilities."""

from __future__ import annotations

__version__ = "0.1.0"

from .certify import CertParams, CertVerdict, completeness_sigma, gsee_cert, mixture_variance, mixture_variance_bound
from .errors import (
    DegenerateGroundGap,
    DegreeCapExceeded,
    DomainViolation,
    EmptySpectrum,
    GseeError,
    InvalidParameters,
    LemmaViolation,
    NoAcceptedSamples,
    NotHermitian,
    NotNormalized,
    OracleFailure,
    PromiseViolationDetected,
    QuadratureFailure,
    TrialCapExhausted,
    WeightSumViolation,
)
from .experiments import ExperimentConfig, RunRecord, emit, fixture_spectrum, run_experiment
from .gsee import (
    EstimateResult,
    GseeSchedule,
    adv_gsee,
    basic_gsee,
    interpolated_gap,
    interpolation_sweep,
    make_schedule,
    schedule_for,
)
from .lemmas import LemmaReport, lemma_suite
from .oracle import AcceptanceOracle, CostReport, IdealFunction, PolyBlockEncoding, TrigEvolution, make_backend
from .polyapprox import (
    BoundedPoly,
    CosineSeries,
    QueryCost,
    degree_for_depth,
    gaussian_cosine_series,
    gaussian_poly,
    threshold_poly,
    threshold_trig,
)
from .rejection import Proposal, RejectionRun, expected_trials_bound, sample_conv
from .spectrum import AffineMap, DenseHermitian, SpectralMeasure, from_dense, load_measure, rescale_to, save_measure, synth

__all__ = [name for name in dir() if not name.startswith("_") and name not in ("annotations",)]
__all__.append("__version__")
