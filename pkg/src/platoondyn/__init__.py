"""Car-following platoon dynamics with delayed acceleration feedback.

Library for integrating vehicle-platoon delay-differential systems,
evaluating closed-form local/string/robust stability conditions, and
running bifurcation sweeps over delay and feedback parameters.
"""
from .model import (
    ConfigError,
    ModelDomainError,
    ModelExponents,
    VehicleParams,
    AccelSegment,
    LeaderProfile,
    PlatoonConfig,
    PlatoonState,
    EquilibriumCoefficients,
    validate_config,
    equilibrium_coefficients,
    follower_velocity,
    interaction_coefficient,
    ccfm_rhs,
    ccfm_daf_rhs,
)
from .dde import (
    SettingsError,
    NumericalFault,
    SeparationFault,
    VelocityDomainFault,
    IntegrationSettings,
    InitialHistory,
    equilibrium_history,
    perturbation_history,
    harmonic_history,
    HistoryBuffer,
    Trajectory,
    integrate_retarded,
    integrate_neutral,
    sample,
    config_digest,
)
from .analysis import (
    ContinuationError,
    HopfPoint,
    hopf_point,
    transversality_slope,
    characteristic_value,
    characteristic_derivative,
    polish_root,
    track_root,
    CrossingResult,
    find_crossing,
    stability_chart,
    VehicleStability,
    LocalStabilityReport,
    is_locally_stable,
    NonOscillationVerdict,
    non_oscillation_check,
    string_gain_squared,
    string_gain_sup,
    PairGain,
    StringStabilityReport,
    string_stability_report,
    UncertainBeta,
    robust_stability_bound,
    FrequencyComparison,
    frequency_comparison,
)
from .sweep import (
    CalibrationError,
    CalibrationTarget,
    calibrate_leader_velocity,
    SweepSpec,
    EnvelopePoint,
    LimitCycleMetrics,
    SweepPoint,
    SweepCurve,
    SweepResult,
    estimate_period,
    estimate_growth_rate,
    measure_response,
    bifurcation_diagram,
    BifurcationClassification,
    classify_bifurcation,
    PeriodEquivalence,
    period_equivalence_check,
)

__version__ = "0.1.0"
