"""Guard, plastic impact map, and coordinate relabeling.

The discrete half of the walking hybrid system: the guard is the set where
the swing foot touches the ground moving downward, and the transition is a
perfectly plastic impact. Momentum transfer is resolved in floating-base
coordinates (the pinned chart would over-constrain the old stance foot and
zero out every post-impact velocity on the compass model), after which the
velocities are read back in the chart pinned at the new stance foot and the
leg roles are swapped by the relabeling permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import model as model_mod
from .errors import ImpactSingularityError, InputDomainError
from .model import RobotModel, State

GUARD_TOLERANCE = 1e-8


@dataclass(frozen=True)
class GuardSpec:
    """Swing-foot-height guard: h(x) = 0 with hdot(x) < 0 (strict)."""

    height_fn: str = "swing_foot_height"
    crossing_direction: int = -1


@dataclass(frozen=True)
class ImpactOutcome:
    pre_state: State
    post_state: State            # after relabeling, pinned at the new stance foot
    impulse: np.ndarray          # constraint impulses at the new stance foot (N s)
    qd_plus_extended: np.ndarray = field(default=None, repr=False)
    # floating-base post-impact velocity (base x, base y, joints), pre-relabel


@dataclass(frozen=True)
class DomainGraph:
    """Transition structure. Shipped configuration: one domain (single
    support swing), one self-edge (swing-foot impact)."""

    domains: tuple = ({"guard": GuardSpec(), "reset": "plastic_impact"},)
    edges: tuple = ((0, 0),)


def guard_value(model: RobotModel, x: State) -> dict:
    """Swing-foot height h and its time derivative along x."""
    q, qd = x.q, x.qd
    h = float(model.swing_coeffs @ np.cos(q))
    hdot = float(-(model.swing_coeffs * np.sin(q)) @ qd)
    return {"h": h, "hdot": hdot}


def on_guard(model: RobotModel, x: State, tol: float = GUARD_TOLERANCE) -> bool:
    g = guard_value(model, x)
    return abs(g["h"]) <= tol and g["hdot"] < 0.0


def relabel(model: RobotModel, x: State) -> State:
    """Swap stance/swing coordinate roles via the model's permutation."""
    perm = list(model.relabel_perm)
    return State(x.q[perm], x.qd[perm])


def impact_map(model: RobotModel, x_minus: State, tol: float = 1e-6) -> ImpactOutcome:
    """Plastic impact at the swing foot followed by relabeling.

    Solves the momentum-transfer block system
    ``[[D, -Jc^T], [Jc, 0]] [qd_plus; dF] = [D qd_minus; 0]`` in
    floating-base coordinates, then returns the relabeled pinned-chart state.
    """
    g = guard_value(model, x_minus)
    if g["h"] > tol or not np.isfinite(g["hdot"]):
        raise InputDomainError(
            f"pre-impact state is not on the guard (h={g['h']:.3e})")
    q = x_minus.q
    n = model.n_q
    De = model_mod.extended_mass_matrix(model, q)
    Jc = model_mod.extended_contact_jacobian(model, q)
    nc = Jc.shape[0]
    K = np.zeros((n + 2 + nc, n + 2 + nc))
    K[:n + 2, :n + 2] = De
    K[:n + 2, n + 2:] = -Jc.T
    K[n + 2:, :n + 2] = Jc
    rhs = np.zeros(n + 2 + nc)
    qd_ext_minus = np.concatenate([np.zeros(2), x_minus.qd])
    rhs[:n + 2] = De @ qd_ext_minus
    try:
        lu, piv = scipy.linalg.lu_factor(K)
    except scipy.linalg.LinAlgError:
        raise ImpactSingularityError("impact block system is singular", q_minus=q)
    if np.min(np.abs(np.diag(lu))) < np.max(np.abs(np.diag(lu))) / 1e12:
        raise ImpactSingularityError(
            "impact block system is numerically singular", q_minus=q)
    sol = scipy.linalg.lu_solve((lu, piv), rhs)
    qd_ext_plus = sol[:n + 2]
    impulse = sol[n + 2:]
    # Absolute-angle velocities are chart independent; the new pinned chart
    # (new stance foot has zero velocity by the constraint) reads them off
    # directly before relabeling.
    post = relabel(model, State(x_minus.q.copy(), qd_ext_plus[2:].copy()))
    return ImpactOutcome(
        pre_state=x_minus,
        post_state=post,
        impulse=impulse,
        qd_plus_extended=qd_ext_plus,
    )
