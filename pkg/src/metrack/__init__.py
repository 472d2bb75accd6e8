"""Metric-weighted appearance tracking.

Building blocks: closed-form metric-weighted least squares over an
incrementally maintained basis, online passive-aggressive metric learning
from triplets, time-weighted reservoir sample buffers, and gradient
histogram features, composed into a particle-filter tracker with a CLI.
"""

from .errors import (
    DegenerateRemovalError,
    DimensionMismatchError,
    EmptyBasisError,
    InvalidBoxError,
    NearSingularError,
    NearSingularExpansionError,
    RankOneSingularityError,
    StaleMetricError,
)
from .learning import (
    BatchSummary,
    LearnerConfig,
    Triplet,
    UpdateRecord,
    batch_loss,
    batch_update,
    hinge_loss,
    mahalanobis,
    step_length,
    update,
)
from .metrics import Box, cle, success_rate, vor
from .regression import BasisSet, MetricMatrix, Representation
from .reservoir import BufferedSample, InsertResult, ReservoirBuffer, effective_log_key
from .synth import SynthSpec, render_sequence, write_sequence
from .tracker import (
    ParticleState,
    Tracker,
    TrackerConfig,
    likelihood_score,
    map_estimate,
    propagate,
    sample_triplets,
    select_training_samples,
)

__version__ = "0.1.0"

__all__ = [
    "BasisSet",
    "BatchSummary",
    "Box",
    "BufferedSample",
    "DegenerateRemovalError",
    "DimensionMismatchError",
    "EmptyBasisError",
    "InsertResult",
    "InvalidBoxError",
    "LearnerConfig",
    "MetricMatrix",
    "NearSingularError",
    "NearSingularExpansionError",
    "ParticleState",
    "RankOneSingularityError",
    "Representation",
    "ReservoirBuffer",
    "StaleMetricError",
    "SynthSpec",
    "Tracker",
    "TrackerConfig",
    "Triplet",
    "UpdateRecord",
    "batch_loss",
    "batch_update",
    "cle",
    "effective_log_key",
    "hinge_loss",
    "likelihood_score",
    "mahalanobis",
    "map_estimate",
    "propagate",
    "render_sequence",
    "sample_triplets",
    "select_training_samples",
    "step_length",
    "success_rate",
    "update",
    "vor",
    "write_sequence",
]
