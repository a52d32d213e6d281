"""Constrained integration and cone-of-kinetic-energy analysis of the
anisotropic (mixmaster-type) collapse equations.

The package integrates the reduced second-order system for the
logarithmic scale factors near the singularity, monitors the conserved
first integral that confines the velocities to the interior of the
kinetic-energy cone, detects the reflections off the potential walls,
segments quasi-Kasner epochs, and measures the instability of the
closed-form collapse solution.
"""

from .charts import (
    COUPLING,
    Chart,
    CouplingMatrix,
    DiagChart,
    LogChart,
    PhasePoint,
    RatioChart,
    ScaleFactors,
    Velocity,
    convert,
    scale_map,
    time_reverse,
)
from .dynamics import (
    EnergySplit,
    RhsResult,
    acceleration_identity_residual,
    constraint_residual,
    rhs_abc,
    rhs_u,
    rhs_y,
    third_equation_residual,
)
from .epochs import (
    EpochRecord,
    KasnerTriple,
    LimitReport,
    epoch_segments,
    kasner_exponents,
    limit_estimates,
)
from .exact import (
    ApexReport,
    ExactParams,
    PerturbationRun,
    apex_asymptotics,
    exact_state,
    perturbation_run,
    variational_matrix,
)
from .integrator import (
    IntegratorParams,
    ReflectionEvent,
    Trajectory,
    complete_velocity,
    detect_reflections,
    integrate,
)

__version__ = "0.1.0"

__all__ = [
    "Chart",
    "ScaleFactors",
    "LogChart",
    "DiagChart",
    "RatioChart",
    "Velocity",
    "PhasePoint",
    "CouplingMatrix",
    "COUPLING",
    "convert",
    "scale_map",
    "time_reverse",
    "EnergySplit",
    "RhsResult",
    "rhs_u",
    "rhs_y",
    "rhs_abc",
    "constraint_residual",
    "acceleration_identity_residual",
    "third_equation_residual",
    "IntegratorParams",
    "Trajectory",
    "ReflectionEvent",
    "complete_velocity",
    "integrate",
    "detect_reflections",
    "ExactParams",
    "PerturbationRun",
    "ApexReport",
    "exact_state",
    "variational_matrix",
    "perturbation_run",
    "apex_asymptotics",
    "KasnerTriple",
    "EpochRecord",
    "LimitReport",
    "kasner_exponents",
    "epoch_segments",
    "limit_estimates",
    "__version__",
]
