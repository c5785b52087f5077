"""Multirate time integration for partitioned ODEs and semi-explicit index-1 DAEs."""

from .contraction import (
    ContractionReport,
    LipschitzEstimates,
    contraction_ratios,
    contraction_report,
    estimate_lipschitz,
    stability_verdicts,
    suggest_step_bounds,
    window_error_propagation_check,
)
from .core import (
    MacroStepPlan,
    PartitionedDae,
    PartitionedOde,
    Strategy,
    Trajectory,
    lift_single_rate,
    macro_windows,
    validate_plan,
)
from .coupling import Waveform, extrapolate_constant, extrapolate_history, extrapolate_linear, interpolate_nodes
from .dae import integrate_dae
from .errors import (
    ConfigError,
    MultirateError,
    NewtonError,
    NumericalError,
    StabilityGateError,
    ValidationError,
    WaveformWindowError,
)
from .harness import (
    ConvergenceReport,
    convergence_study,
    emit_trajectory_csv,
    fit_slope,
    order_degradation_probe,
    parse_trajectory_csv,
    stability_sweep,
)
from .ode import integrate
from .problems import catalog, get_problem

__version__ = "0.1.0"
