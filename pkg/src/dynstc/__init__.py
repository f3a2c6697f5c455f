"""Dynamic self-triggered control: timing certificates, triggers, simulation."""

from .engine import (
    DynamicVariable,
    HybridState,
    JumpConditionError,
    RegionViolationError,
    StcConfig,
    TriggerDecision,
    gamma_trigger,
    static_trigger,
    stc_step,
    t_max_cap,
    t_min_of,
)
from .sim import (
    HybridTrajectory,
    IntegrationBlowupError,
    RegionEscapeError,
    monitor_flow_bound,
    run_monitors,
    simulate,
    simulate_periodic,
    write_decisions_csv,
    write_monitors_csv,
    write_trajectory_csv,
)
from .synthesis import (
    ParameterFamily,
    ParameterSet,
    SynthesisError,
    VerificationReport,
    build_family,
    default_epsilon_ladder,
    read_manifest,
    synthesize_gamma,
    verify_assumption,
    verify_family,
    write_manifest,
)
from .systems import SystemSpec, linear_test, spec_from_config, spec_from_json, van_der_pol
from .timing import (
    HorizonError,
    PhiSolution,
    phi_solve,
    solve_lambda_for_horizon,
    t_max,
    t_tilde_max,
    u_value,
)

__version__ = "0.1.0"

__all__ = [
    "DynamicVariable",
    "HorizonError",
    "HybridState",
    "HybridTrajectory",
    "IntegrationBlowupError",
    "JumpConditionError",
    "ParameterFamily",
    "ParameterSet",
    "PhiSolution",
    "RegionEscapeError",
    "RegionViolationError",
    "StcConfig",
    "SynthesisError",
    "SystemSpec",
    "TriggerDecision",
    "VerificationReport",
    "build_family",
    "default_epsilon_ladder",
    "gamma_trigger",
    "linear_test",
    "monitor_flow_bound",
    "phi_solve",
    "read_manifest",
    "run_monitors",
    "simulate",
    "simulate_periodic",
    "solve_lambda_for_horizon",
    "spec_from_config",
    "spec_from_json",
    "static_trigger",
    "stc_step",
    "synthesize_gamma",
    "t_max",
    "t_max_cap",
    "t_min_of",
    "t_tilde_max",
    "u_value",
    "van_der_pol",
    "verify_assumption",
    "verify_family",
    "write_decisions_csv",
    "write_manifest",
    "write_monitors_csv",
    "write_trajectory_csv",
]
