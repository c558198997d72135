"""Active input design and multiple-model detection of blocked actuators."""

from asentinel.model import (
    CapacityError,
    ControlSequence,
    CovarianceFactorizationError,
    LinearGaussianSystem,
    ModeEntry,
    ModeSet,
    TrajectoryMoments,
    apply_mode_mask,
    enumerate_modes,
    propagate_moments,
    sample_rollout,
    sample_rollouts,
    system_from_json,
    system_to_json,
    uniform_priors,
)
from asentinel.detector import (
    BankDecision,
    DetectorBank,
    FilterNumericsError,
    KalmanFilterState,
    ModePosterior,
    decide,
    kf_step,
    posterior_update,
)
from asentinel.objectives import (
    ControlObjectiveForm,
    DetectionBoundForm,
    ExpandedConstraints,
    build_control_objective,
    build_detection_bound,
    control_objective_gradient,
    detection_bound_gradient,
    eval_control_objective,
    eval_detection_bound,
    expand_constraints,
)
from asentinel.optimizer import (
    ProblemKind,
    ProblemSpec,
    Solution,
    SolveStatus,
    solve,
    solve_pure_control,
    solve_with_side_constraint,
    sweep_detection_threshold,
)
from asentinel.irrigation import (
    AttackSchedule,
    ChannelScenario,
    ContinuousChannel,
    PoolParameters,
    build_haughton_scenario,
    default_attack_schedule,
    discretize_with_delays,
    linearize_channel,
    run_closed_loop,
)

__version__ = "0.1.0"
