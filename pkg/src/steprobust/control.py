"""Output-tracking controllers that drive the virtual constraints to zero.

The default mode is input-output feedback linearization with a PD outer
loop: the torque solves the decoupling system so the output acceleration is
exactly ``-(kd/eps) ydot - (kp/eps^2) y``. A plain joint-PD mode is kept as
an ablation. Torques saturate at +-u_max per joint; saturation is telemetry,
not an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gait as gait_mod
from . import model as model_mod
from .errors import ControllerSingularityError, InputDomainError
from .gait import GaitSpec
from .model import RobotModel, State


@dataclass(frozen=True)
class TrackingGains:
    kp: float = 100.0
    kd: float = 20.0
    epsilon: float = 1.0
    u_max: float = 150.0
    mode: str = "fblin"   # "fblin" or "pd"

    def __post_init__(self):
        if self.kp <= 0 or self.kd <= 0 or self.epsilon <= 0:
            raise InputDomainError("kp, kd, epsilon must be positive")
        if self.mode not in ("fblin", "pd"):
            raise InputDomainError("controller mode must be 'fblin' or 'pd'")


def tracking_torque(model: RobotModel, gait: GaitSpec, gains: TrackingGains,
                    x: State, t: float, telemetry: dict | None = None) -> np.ndarray:
    """Torque tracking the gait's desired outputs at time t since impact."""
    idx = list(model.actuated_indices)
    yd, yd_dot, yd_ddot = gait_mod.desired_outputs(gait, t)
    y = x.q[idx] - yd
    ydot = x.qd[idx] - yd_dot
    v = -(gains.kd / gains.epsilon) * ydot - (gains.kp / gains.epsilon ** 2) * y

    if gains.mode == "pd":
        u = v.copy()
    else:
        D = model_mod.mass_matrix(model, x.q)
        Hvec = model_mod.drift_vector(model, x.q, x.qd)
        Dinv_H = np.linalg.solve(D, Hvec)
        B = model.actuation_matrix()
        decoupling = np.linalg.solve(D, B)[idx, :]
        if np.linalg.cond(decoupling) > model_mod.CONDITION_LIMIT:
            raise ControllerSingularityError("output decoupling matrix is singular")
        # S D^-1 (B u - H) = yd_ddot + v
        u = np.linalg.solve(decoupling, yd_ddot + v + Dinv_H[idx])

    clipped = np.clip(u, -gains.u_max, gains.u_max)
    if telemetry is not None:
        telemetry["saturated"] = bool(np.any(np.abs(u) > gains.u_max))
    return clipped


def closed_loop_field(model: RobotModel, gait: GaitSpec, gains: TrackingGains):
    """Closed-loop vector field handle (x, t) -> xdot for the swing phase."""
    def field(x: State, t: float) -> np.ndarray:
        u = tracking_torque(model, gait, gains, x, t)
        return model_mod.continuous_dynamics(model, x, u)
    field.model = model
    field.gait = gait
    field.gains = gains
    return field
