"""Entropy growth of atoms in N independent Jaynes-Cummings cavities.

Exact spectral dynamics of two-level and cascade three-level atoms coupled
to single field modes, entanglement measures, random-state ensembles and
the statistics relating initial entanglement to time-averaged entropy.
"""

from .dynamics import (
    DensityMatrixError,
    FieldTracedEvolution,
    QuantumState,
    TimeGrid,
    default_grid,
    evolve_density,
    evolve_pure,
    time_averaged_entropy,
    trace_out_fields,
    von_neumann_entropy,
)
from .ensembles import AcceptanceRateError, Constraint, ConstraintKind, EnsembleSpec, Sampler, draw_ensemble
from .measures import concurrence, entanglement_entropy, meyer_wallach_q, meyer_wallach_q_pure
from .model import AtomKind, ModelSpec, SpectralModel, build_composite_spectrum
from .stats import Records, SweepResult, fit_line, pearson, summarize

__version__ = "0.1.0"
