"""Bezier-parameterized desired outputs and virtual constraints.

A gait is a matrix of Bezier coefficients (one row per actuated
coordinate), a step duration, and the essential-constraint targets it was
synthesized for. Desired outputs are evaluated in the Bernstein basis on a
time-based phase clamped to [0, 1]; a late impact therefore holds the
terminal posture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import comb

from .errors import InputDomainError
from .model import RobotModel, State

GAIT_FORMAT = "gaitspec-v1"


@dataclass(frozen=True)
class BezierSet:
    """Coefficient matrix, one output per row, degree+1 columns."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if not np.all(np.isfinite(c)):
            raise InputDomainError("Bezier coefficients must be finite")
        if c.shape[1] < 4:
            raise InputDomainError("Bezier degree must be at least 3")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def n_outputs(self) -> int:
        return self.coeffs.shape[0]


def phasing(t: float, T: float) -> float:
    """Phase variable tau = clamp(t / T, 0, 1)."""
    if T <= 0:
        raise InputDomainError("step duration must be positive")
    return float(min(max(t / T, 0.0), 1.0))


def phasing_rate(t: float, T: float) -> float:
    """d tau / dt, zero outside the clamp."""
    if T <= 0:
        raise InputDomainError("step duration must be positive")
    return 0.0 if (t < 0.0 or t > T) else 1.0 / T


def bezier_eval(b: BezierSet, tau: float, order: int = 0) -> np.ndarray:
    """Bernstein-basis value (order 0) or derivative w.r.t. tau (order 1, 2)."""
    if not 0.0 <= tau <= 1.0:
        raise InputDomainError(f"tau must be in [0, 1], got {tau}")
    if order not in (0, 1, 2):
        raise InputDomainError("derivative order must be 0, 1, or 2")
    coeffs = b.coeffs
    for _ in range(order):
        v = coeffs.shape[1] - 1
        coeffs = v * np.diff(coeffs, axis=1)
    v = coeffs.shape[1] - 1
    k = np.arange(v + 1)
    basis = comb(v, k) * tau ** k * (1.0 - tau) ** (v - k)
    return coeffs @ basis


@dataclass(frozen=True)
class EssentialConstraints:
    """Gait features the synthesis enforces. step_width is 0 for planar
    models and kept only for file-format compatibility."""

    step_length: float
    step_duration: float
    step_height: float
    step_width: float = 0.0

    def __post_init__(self):
        if self.step_duration <= 0:
            raise InputDomainError("step_duration must be positive")


@dataclass(frozen=True)
class GaitSpec:
    """The unit of search and persistence: Bezier outputs plus metadata."""

    bezier: BezierSet
    step_duration: float
    essential: EssentialConstraints
    model_name: str
    fixed_point: Optional[State] = None
    gait_id: str = ""

    def __post_init__(self):
        if self.step_duration <= 0:
            raise InputDomainError("step_duration must be positive")
        # step_duration is the phasing horizon; the realized step period in
        # essential may be shorter (nominal impact before the tau clamp).
        if self.essential.step_duration > self.step_duration + 1e-12:
            raise InputDomainError(
                "essential.step_duration cannot exceed the phasing horizon")


def desired_outputs(gait: GaitSpec, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(y_d, yd_dot, yd_ddot) at time t since the last impact."""
    tau = phasing(t, gait.step_duration)
    taud = phasing_rate(t, gait.step_duration)
    yd = bezier_eval(gait.bezier, tau, 0)
    yd_dot = bezier_eval(gait.bezier, tau, 1) * taud
    yd_ddot = bezier_eval(gait.bezier, tau, 2) * taud * taud
    return yd, yd_dot, yd_ddot


def virtual_constraints(model: RobotModel, gait: GaitSpec, x: State, t: float) -> dict:
    """Output error y = y_a - y_d and its rate for the actuated coordinates."""
    if t < 0:
        raise InputDomainError("t must be non-negative")
    idx = list(model.actuated_indices)
    yd, yd_dot, _ = desired_outputs(gait, t)
    return {"y": x.q[idx] - yd, "ydot": x.qd[idx] - yd_dot}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def gait_to_dict(gait: GaitSpec) -> dict:
    doc = {
        "format": GAIT_FORMAT,
        "model_name": gait.model_name,
        "gait_id": gait.gait_id,
        "degree": gait.bezier.degree,
        "coefficients": gait.bezier.coeffs.tolist(),
        "step_duration": gait.step_duration,
        "essential": {
            "step_length": gait.essential.step_length,
            "step_duration": gait.essential.step_duration,
            "step_width": gait.essential.step_width,
            "step_height": gait.essential.step_height,
        },
        "domain_graph": {"domains": ["single_support"], "edges": [[0, 0]]},
        "fixed_point": None,
    }
    if gait.fixed_point is not None:
        doc["fixed_point"] = {
            "q": gait.fixed_point.q.tolist(),
            "qd": gait.fixed_point.qd.tolist(),
        }
    return doc


def gait_from_dict(doc: dict) -> GaitSpec:
    if doc.get("format") != GAIT_FORMAT:
        raise InputDomainError(f"not a {GAIT_FORMAT} document")
    fp = doc.get("fixed_point")
    fixed_point = State(np.array(fp["q"]), np.array(fp["qd"])) if fp else None
    ess = EssentialConstraints(**doc["essential"])
    return GaitSpec(
        bezier=BezierSet(np.array(doc["coefficients"])),
        step_duration=doc["step_duration"],
        essential=ess,
        model_name=doc["model_name"],
        fixed_point=fixed_point,
        gait_id=doc.get("gait_id", ""),
    )


def save_gait(gait: GaitSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(gait_to_dict(gait), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_gait(path) -> GaitSpec:
    with open(path) as fh:
        return gait_from_dict(json.load(fh))
