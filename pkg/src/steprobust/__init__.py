"""Certifying step-to-step robustness of planar bipedal walking.

The package builds the full pipeline from the closed-form planar-chain
dynamics up to a sampled forward-invariance certificate:

- `model`      rigid-body dynamics and the built-in compass / five-link robots
- `hybrid`     guard detection, plastic impact map, coordinate relabeling
- `gait`       Bezier-parameterized desired outputs and gait serialization
- `control`    feedback-linearizing output tracking
- `sim`        event-detecting integration, steps, rollouts
- `poincare`   return map, fixed points, reduced (projected) return map
- `invariance` discrete-time barrier function and r* certification
- `synth`      gait synthesis and the simulation-in-the-loop optimizer
- `cli`        batch command-line harness
"""

from .errors import (
    StepRobustError,
    InputDomainError,
    NumericalConditioningError,
    ImpactSingularityError,
    ControllerSingularityError,
    OutsideSectionError,
    ReconstructionError,
    FixedPointNotFoundError,
    SynthesisFailedError,
)
from .model import (
    Link,
    State,
    RobotModel,
    compass_gait,
    five_link,
    get_model,
    load_model,
    mass_matrix,
    drift_vector,
    continuous_dynamics,
    kinematics,
    kinetic_energy,
    potential_energy,
    total_energy,
)
from .hybrid import GuardSpec, ImpactOutcome, guard_value, on_guard, impact_map, relabel
from .gait import (
    BezierSet,
    EssentialConstraints,
    GaitSpec,
    bezier_eval,
    phasing,
    desired_outputs,
    virtual_constraints,
    save_gait,
    load_gait,
    gait_to_dict,
    gait_from_dict,
)
from .control import TrackingGains, tracking_torque, closed_loop_field
from .sim import SimOptions, FlowResult, RolloutResult, flow, step, rollout, resample_rollout
from .poincare import (
    GuardChart,
    FixedPoint,
    ReducedChart,
    return_map,
    find_fixed_point,
    default_reduced_chart,
    reduced_return_map,
)
from .invariance import (
    BarrierParams,
    SampleRecord,
    InvarianceCertificate,
    barrier_value,
    sample_ball,
    evaluate_samples,
    estimate_r_star,
    certify,
    verify_certificate,
    save_certificate,
    load_certificate,
    samples_to_csv,
)
from .synth import (
    GaitScore,
    SearchBounds,
    LoopConfig,
    synthesize_gait,
    synthesis_report,
    score_gait,
    rank,
    optimize_loop,
)

__version__ = "0.1.0"
