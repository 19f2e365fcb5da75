"""Numerical toolkit for L1 spaces of finite-dimensional von Neumann algebras.

Elements live in direct sums of weighted matrix blocks; functionals are stored
by their densities with respect to the trace.  The package measures lower
l1 constants, convergence in measure, and builds orthogonal perturbations of
tau-null or almost isometric sequences.
"""

from .algebra import (
    AlgebraShape,
    Element,
    Projection,
    build_algebra,
    norm1,
    op_norm,
    proj_meet_join,
    random_suite,
    spectral_projection,
    trace,
)
from .generators import GENERATORS, generate_sequence
from .geometry import Budget, james_blocks, l1_lower_constant, tail_delta_schedule
from .harness import ExperimentConfig, emit_report, run_experiment
from .measure import exceedance, gauge, tau_null_evidence
from .orthogonalize import almost_isometric_orthogonalize, tau_null_orthogonalize, trichotomy_probe
from .perturbation import (
    bound_A3,
    bound_A4,
    compress_normalize,
    delta_schedule,
    finite_orthogonal_extraction,
    positive_witnesses,
)
from .predual import Functional, are_orthogonal, combination

__version__ = "0.1.0"

__all__ = [
    "AlgebraShape",
    "Budget",
    "Element",
    "ExperimentConfig",
    "Functional",
    "GENERATORS",
    "Projection",
    "almost_isometric_orthogonalize",
    "are_orthogonal",
    "bound_A3",
    "bound_A4",
    "build_algebra",
    "combination",
    "compress_normalize",
    "delta_schedule",
    "emit_report",
    "exceedance",
    "finite_orthogonal_extraction",
    "gauge",
    "generate_sequence",
    "james_blocks",
    "l1_lower_constant",
    "norm1",
    "op_norm",
    "positive_witnesses",
    "proj_meet_join",
    "random_suite",
    "run_experiment",
    "spectral_projection",
    "tail_delta_schedule",
    "tau_null_evidence",
    "tau_null_orthogonalize",
    "trace",
    "trichotomy_probe",
]
