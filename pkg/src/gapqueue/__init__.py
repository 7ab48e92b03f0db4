"""Gap-acceptance queueing at unsignalized intersections."""
from .analytic import (
    QueueMetrics,
    ServiceCharacterization,
    SweepTable,
    capacity_sweep,
    queue_length_pmf,
    queue_pgf,
    sojourn_lst,
    waiting_lst,
    waiting_metrics,
)
from .headway import (
    AffineDecay,
    Behavior,
    Deterministic,
    DiscreteMixture,
    Exponential,
    ExplicitSequence,
    Gamma,
    ModelSpec,
    NoImpatience,
    attempt_affine_coeffs,
    attempt_headway,
    validate,
)

__version__ = "0.1.0"
