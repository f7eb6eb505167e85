"""Bloch-vector stabilization for qubit frequency sensing.

Closed-form and ODE models of a driven, decohering qubit whose transverse
Bloch component is held fixed by a feedback-derived drive, compared with
Ramsey interferometry.
"""

from .bloch import (
    BlochState,
    ControlSchedule,
    DecoherenceParams,
    ExperimentConfig,
    Trajectory,
    constant_drive_rates,
    eta_from_temperature,
    integrate_trajectory,
    solve_bloch,
    steady_state,
)
from .errors import (
    BreakdownSingularityError,
    ConfigError,
    DomainError,
    FitError,
    InconsistentStateError,
    IntegrationError,
)
from .protocols import (
    PER_ROOT_TIME,
    PER_SHOT,
    STABLE_SNR_TIME,
    lambert_w_minus1,
    optimal_time,
    protocol_vy,
    ramsey_optimum,
)
from .sensitivity import (
    ImprovementReport,
    improvement_rs,
    improvement_rv,
    miscalibration_grid,
    optimize_initial_state,
    sweep_improvement,
)
from .shots import chunked_ratio_estimate, run_detuning_sweep
from .stabilization import InitialState, breakdown_time, build_schedule, is_stable, stability_threshold

__version__ = "0.1.0"
