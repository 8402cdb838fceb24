"""Planar rigid-body dynamics for the built-in biped models.

Both built-in models (compass-gait 2-DOF, five-link 5-DOF) are planar
kinematic chains pinned at the stance foot, using absolute link angles
measured counterclockwise from the ground normal. Every body's center of
mass is then a fixed linear combination of the unit vectors
``u(q_j) = (sin q_j, cos q_j)``, which gives the inertia matrix the closed
form ``D[j,k] = Gamma[j,k] * cos(q_j - q_k) + I_j * delta_jk`` with a
constant coupling matrix ``Gamma``. The drift vector and all kinematic
outputs follow from the same coefficient tables.

Ground slope is handled by keeping the x-axis along the incline and
rotating gravity, so the guard stays "swing-foot y-coordinate equals zero".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError, NumericalConditioningError

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class Link:
    """One rigid body of the chain. com_offset is measured from the link's
    proximal joint (the end nearer the stance foot along the chain)."""

    mass: float
    length: float
    com_offset: float
    inertia: float = 0.0


@dataclass(frozen=True)
class State:
    """Configuration and velocity of a model, (q, qd)."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise InputDomainError("q and qd must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise InputDomainError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qd])

    @staticmethod
    def from_vector(x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return State(x[:n].copy(), x[n:].copy())


@dataclass(frozen=True)
class RobotModel:
    """Immutable planar biped model.

    The chain geometry is encoded by coefficient tables: the COM of body i
    sits at ``sum_j com_coeffs[i, j] * u(q_j)`` relative to the stance foot,
    and analogously for the swing foot and hip. ``body_angle`` maps each
    body to the coordinate carrying its absolute orientation (-1 for point
    masses).
    """

    name: str
    links: tuple[Link, ...]
    actuated_indices: tuple[int, ...]
    gravity: float
    slope: float
    com_coeffs: np.ndarray       # (n_bodies, n_q)
    body_masses: np.ndarray      # (n_bodies,)
    body_angle: np.ndarray       # (n_bodies,) int, -1 for point masses
    swing_coeffs: np.ndarray     # (n_q,)
    hip_coeffs: np.ndarray       # (n_q,)
    torso_index: int
    relabel_perm: tuple[int, ...]
    leg_length: float
    # derived, filled in __post_init__
    gamma: np.ndarray = field(default=None, repr=False)
    weight_coeffs: np.ndarray = field(default=None, repr=False)
    coord_inertia: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        masses = np.asarray(self.body_masses, dtype=float)
        A = np.asarray(self.com_coeffs, dtype=float)
        if np.any(masses < 0):
            raise InputDomainError("body masses must be non-negative")
        for link in self.links:
            if link.mass <= 0 or link.length < 0:
                raise InputDomainError("link masses must be positive, lengths non-negative")
            if link.inertia < 0:
                raise InputDomainError("link inertias must be non-negative")
        n_q = A.shape[1]
        idx = self.actuated_indices
        if len(set(idx)) != len(idx) or any(i < 0 or i >= n_q for i in idx):
            raise InputDomainError("actuated_indices must be distinct and within [0, n_q)")
        inertia = np.zeros(n_q)
        for i, (link, ang) in enumerate(zip(self.links, self.body_angle)):
            if ang >= 0:
                inertia[ang] += link.inertia
        object.__setattr__(self, "gamma", A.T @ (masses[:, None] * A))
        object.__setattr__(self, "weight_coeffs", A.T @ masses)
        object.__setattr__(self, "coord_inertia", inertia)

    @property
    def n_q(self) -> int:
        return self.com_coeffs.shape[1]

    @property
    def n_u(self) -> int:
        return len(self.actuated_indices)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.body_masses))

    def actuation_matrix(self) -> np.ndarray:
        B = np.zeros((self.n_q, self.n_u))
        for col, i in enumerate(self.actuated_indices):
            B[i, col] = 1.0
        return B

    def relabel_matrix(self) -> np.ndarray:
        R = np.zeros((self.n_q, self.n_q))
        for i, j in enumerate(self.relabel_perm):
            R[i, j] = 1.0
        return R


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise InputDomainError(f"{what} must be finite")


def mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Inertia matrix D(q), symmetric positive definite."""
    q = np.asarray(q, dtype=float)
    _check_finite(q, "q")
    dq = q[:, None] - q[None, :]
    return model.gamma * np.cos(dq) + np.diag(model.coord_inertia)


def gravity_vector(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return -model.gravity * model.weight_coeffs * np.sin(q + model.slope)


def drift_vector(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Coriolis/centrifugal plus gravity terms H(q, qd) = C(q, qd) qd + G(q)."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    _check_finite(q, "q")
    _check_finite(qd, "qd")
    dq = q[:, None] - q[None, :]
    coriolis = (model.gamma * np.sin(dq)) @ (qd * qd)
    return coriolis + gravity_vector(model, q)


def continuous_dynamics(model: RobotModel, x: State, u: np.ndarray) -> np.ndarray:
    """Control-affine dynamics xdot = f(x) + g(x) u as a flat vector."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != model.n_u:
        raise InputDomainError(f"expected {model.n_u} torques, got {u.size}")
    _check_finite(u, "u")
    D = mass_matrix(model, x.q)
    rhs = -drift_vector(model, x.q, x.qd)
    for col, i in enumerate(model.actuated_indices):
        rhs[i] += u[col]
    if np.linalg.cond(D) > CONDITION_LIMIT:
        raise NumericalConditioningError("inertia matrix is ill-conditioned")
    qdd = np.linalg.solve(D, rhs)
    return np.concatenate([x.qd, qdd])


def kinematics(model: RobotModel, q: np.ndarray) -> dict:
    """World-frame frames with the stance foot pinned at the origin."""
    q = np.asarray(q, dtype=float)
    _check_finite(q, "q")
    s, c = np.sin(q), np.cos(q)
    swing = np.array([model.swing_coeffs @ s, model.swing_coeffs @ c])
    hip = np.array([model.hip_coeffs @ s, model.hip_coeffs @ c])
    return {
        "stance_foot": np.zeros(2),
        "swing_foot": swing,
        "hip": hip,
        "torso_pitch": float(q[model.torso_index]),
    }


def swing_foot_jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """2 x n_q Jacobian of the swing-foot position in the pinned chart."""
    q = np.asarray(q, dtype=float)
    return np.vstack([model.swing_coeffs * np.cos(q), -model.swing_coeffs * np.sin(q)])


def extended_mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Floating-base inertia matrix with base coordinates (stance-foot x, y)
    prepended; used by the impact momentum-transfer solve."""
    q = np.asarray(q, dtype=float)
    n = model.n_q
    De = np.zeros((n + 2, n + 2))
    De[0, 0] = De[1, 1] = model.total_mass
    coupling = np.vstack([model.weight_coeffs * np.cos(q),
                          -model.weight_coeffs * np.sin(q)])
    De[:2, 2:] = coupling
    De[2:, :2] = coupling.T
    De[2:, 2:] = mass_matrix(model, q)
    return De


def extended_contact_jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Jacobian of the swing-foot position in floating-base coordinates."""
    return np.hstack([np.eye(2), swing_foot_jacobian(model, q)])


def kinetic_energy(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> float:
    qd = np.asarray(qd, dtype=float)
    return float(0.5 * qd @ mass_matrix(model, q) @ qd)


def potential_energy(model: RobotModel, q: np.ndarray) -> float:
    q = np.asarray(q, dtype=float)
    return float(model.gravity * model.weight_coeffs @ np.cos(q + model.slope))


def total_energy(model: RobotModel, x: State) -> float:
    return kinetic_energy(model, x.q, x.qd) + potential_energy(model, x.q)


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

def compass_gait(mass=5.0, hip_mass=10.0, length=1.0, com_offset=0.5,
                 inertia=0.0, gravity=9.81, slope=0.0, actuated=True) -> RobotModel:
    """Two-link compass walker. Coordinates: (stance leg, swing leg) absolute
    angles from the ground normal. Optional hip torque on the swing leg."""
    leg_st = Link(mass, length, com_offset, inertia)
    leg_sw = Link(mass, length, com_offset, inertia)
    hip = Link(hip_mass, 0.0, 0.0, 0.0)
    com_coeffs = np.array([
        [com_offset, 0.0],                      # stance leg COM from the foot
        [length, -(length - com_offset)],       # swing leg COM from the hip
        [length, 0.0],                          # hip point mass
    ])
    return RobotModel(
        name="compass",
        links=(leg_st, leg_sw, hip),
        actuated_indices=(1,) if actuated else (),
        gravity=gravity,
        slope=slope,
        com_coeffs=com_coeffs,
        body_masses=np.array([mass, mass, hip_mass]),
        body_angle=np.array([0, 1, -1]),
        swing_coeffs=np.array([length, -length]),
        hip_coeffs=np.array([length, 0.0]),
        torso_index=0,
        relabel_perm=(1, 0),
        leg_length=length,
    )


def five_link(tibia_mass=3.2, tibia_length=0.4, tibia_com=0.2, tibia_inertia=0.043,
              femur_mass=6.8, femur_length=0.4, femur_com=0.2, femur_inertia=0.091,
              torso_mass=20.0, torso_length=0.625, torso_com=0.2, torso_inertia=0.65,
              gravity=9.81, slope=0.0) -> RobotModel:
    """Five-link planar biped (two tibias, two femurs, torso), point feet,
    4 actuated coordinates. Coordinates: (stance tibia, stance femur, torso,
    swing femur, swing tibia) absolute angles; the stance tibia is unactuated
    (no ankle torque)."""
    lt, lf = tibia_length, femur_length
    ct, cf, cT = tibia_com, femur_com, torso_com
    links = (
        Link(tibia_mass, lt, ct, tibia_inertia),
        Link(femur_mass, lf, cf, femur_inertia),
        Link(torso_mass, torso_length, cT, torso_inertia),
        Link(femur_mass, lf, cf, femur_inertia),
        Link(tibia_mass, lt, ct, tibia_inertia),
    )
    com_coeffs = np.array([
        [ct, 0.0, 0.0, 0.0, 0.0],               # stance tibia, COM from foot
        [lt, cf, 0.0, 0.0, 0.0],                # stance femur, COM from knee
        [lt, lf, cT, 0.0, 0.0],                 # torso, COM above hip
        [lt, lf, 0.0, -(lf - cf), 0.0],         # swing femur, COM from knee
        [lt, lf, 0.0, -lf, -(lt - ct)],         # swing tibia, COM from foot
    ])
    return RobotModel(
        name="fivelink",
        links=links,
        actuated_indices=(1, 2, 3, 4),
        gravity=gravity,
        slope=slope,
        com_coeffs=com_coeffs,
        body_masses=np.array([tibia_mass, femur_mass, torso_mass, femur_mass, tibia_mass]),
        body_angle=np.array([0, 1, 2, 3, 4]),
        swing_coeffs=np.array([lt, lf, 0.0, -lf, -lt]),
        hip_coeffs=np.array([lt, lf, 0.0, 0.0, 0.0]),
        torso_index=2,
        relabel_perm=(4, 3, 2, 1, 0),
        leg_length=lt + lf,
    )


_BUILTIN_BUILDERS = {"compass": compass_gait, "fivelink": five_link}


def get_model(name: str, **overrides) -> RobotModel:
    """Built-in model by name ('compass' or 'fivelink')."""
    try:
        return _BUILTIN_BUILDERS[name](**overrides)
    except KeyError:
        raise InputDomainError(f"unknown model '{name}'") from None


def model_from_dict(doc: dict) -> RobotModel:
    """Build a model from its JSON document (see docs/formats.md)."""
    topology = doc.get("topology", doc["name"])
    if topology == "compass":
        leg, _, hip = [Link(**lk) for lk in doc["links"]]
        return compass_gait(
            mass=leg.mass, hip_mass=hip.mass, length=leg.length,
            com_offset=leg.com_offset, inertia=leg.inertia,
            gravity=doc.get("gravity", 9.81), slope=doc.get("slope", 0.0),
            actuated=bool(doc.get("actuated_indices", [1])),
        )
    if topology == "fivelink":
        tibia, femur, torso, _, _ = [Link(**lk) for lk in doc["links"]]
        return five_link(
            tibia_mass=tibia.mass, tibia_length=tibia.length,
            tibia_com=tibia.com_offset, tibia_inertia=tibia.inertia,
            femur_mass=femur.mass, femur_length=femur.length,
            femur_com=femur.com_offset, femur_inertia=femur.inertia,
            torso_mass=torso.mass, torso_length=torso.length,
            torso_com=torso.com_offset, torso_inertia=torso.inertia,
            gravity=doc.get("gravity", 9.81), slope=doc.get("slope", 0.0),
        )
    raise InputDomainError(f"unknown model topology '{topology}'")


def model_to_dict(model: RobotModel) -> dict:
    return {
        "format": "model-v1",
        "name": model.name,
        "topology": model.name,
        "links": [
            {"mass": lk.mass, "length": lk.length,
             "com_offset": lk.com_offset, "inertia": lk.inertia}
            for lk in model.links
        ],
        "actuated_indices": list(model.actuated_indices),
        "gravity": model.gravity,
        "slope": model.slope,
    }


def load_model(path) -> RobotModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
