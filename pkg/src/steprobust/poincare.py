"""Poincare return map machinery: guard chart, fixed points, linearized
stability, and the reduced (restricted) return map.

The guard is a codimension-1 surface, so guard states are charted by
dropping the configuration coordinate with the largest guard gradient and
recovering it from h(q) = 0 by Newton iteration. Fixed points are found by
damped Newton on the chart residual P(z) - z with forward-difference
Jacobians; the residual is measured in a weighted norm (positions weight 1,
velocities weight step_duration) so mixed units compare consistently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gait as gait_mod, hybrid, sim as sim_mod
from .errors import (FixedPointNotFoundError, OutsideSectionError,
                     ReconstructionError, StepRobustError)
from .gait import GaitSpec
from .model import RobotModel, State
from .sim import SimOptions


@dataclass(frozen=True)
class GuardChart:
    """Local chart on the guard anchored at a reference configuration."""

    model: RobotModel
    q_ref: np.ndarray
    drop_index: int

    @staticmethod
    def from_state(model: RobotModel, x: State) -> "GuardChart":
        grad = -model.swing_coeffs * np.sin(x.q)
        return GuardChart(model, x.q.copy(), int(np.argmax(np.abs(grad))))

    @property
    def dim(self) -> int:
        return 2 * self.model.n_q - 1

    def project(self, x: State) -> np.ndarray:
        q_free = np.delete(x.q, self.drop_index)
        return np.concatenate([q_free, x.qd])

    def embed(self, z: np.ndarray) -> State:
        n = self.model.n_q
        j = self.drop_index
        q = np.empty(n)
        q_free = z[:n - 1]
        q[:j] = q_free[:j]
        q[j + 1:] = q_free[j:]
        q[j] = self.q_ref[j]
        coeffs = self.model.swing_coeffs
        for _ in range(50):
            h = float(coeffs @ np.cos(q))
            if abs(h) < 1e-13:
                break
            dh = -coeffs[j] * np.sin(q[j])
            if abs(dh) < 1e-12:
                raise ReconstructionError("guard chart embedding is singular")
            q[j] -= h / dh
        else:
            raise ReconstructionError("guard chart embedding did not converge")
        return State(q, z[n - 1:].copy())

    def weights(self, step_duration: float) -> np.ndarray:
        n = self.model.n_q
        return np.concatenate([np.ones(n - 1), np.full(n, step_duration)])


@dataclass(frozen=True)
class FixedPoint:
    x_star: State
    residual: float
    jacobian: np.ndarray
    spectral_radius: float
    chart: GuardChart = field(repr=False, default=None)


def return_map(field, model: RobotModel, x_minus: State,
               options: SimOptions = SimOptions()) -> State:
    """P(x-) = flow(impact(x-)) until the next guard crossing."""
    x_next, _ = sim_mod.step(field, model, x_minus, options)
    return x_next


def find_fixed_point(field, model: RobotModel, x_guess: State,
                     options: SimOptions = SimOptions(), tol: float = 1e-8,
                     max_iter: int = 50, fd_step: float = 1e-6) -> FixedPoint:
    """Damped Newton on the guard-chart residual P(z) - z."""
    chart = GuardChart.from_state(model, x_guess)
    w = chart.weights(field.gait.step_duration)

    def p_chart(z):
        x = chart.embed(z)
        return chart.project(return_map(field, model, x, options))

    def residual(z):
        return p_chart(z) - z

    z = chart.project(x_guess)
    try:
        r = residual(z)
    except (OutsideSectionError, StepRobustError) as exc:
        raise FixedPointNotFoundError(f"initial guess does not complete a step: {exc}")
    rnorm = float(np.linalg.norm(w * r))
    best = (rnorm, z.copy())

    for _ in range(max_iter):
        if rnorm <= tol:
            break
        J = np.empty((chart.dim, chart.dim))
        for k in range(chart.dim):
            dz = fd_step * max(1.0, abs(z[k]))
            zp = z.copy()
            zp[k] += dz
            J[:, k] = (residual(zp) - r) / dz
        try:
            step_dir = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step_dir = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        for _ in range(8):
            z_try = z + lam * step_dir
            try:
                r_try = residual(z_try)
            except (OutsideSectionError, StepRobustError):
                lam *= 0.5
                continue
            rn_try = float(np.linalg.norm(w * r_try))
            if rn_try < rnorm:
                z, r, rnorm = z_try, r_try, rn_try
                break
            lam *= 0.5
        else:
            break
        if rnorm < best[0]:
            best = (rnorm, z.copy())
    if rnorm > tol:
        raise FixedPointNotFoundError(
            f"Newton did not reach tolerance (best residual {best[0]:.3e})",
            best_residual=best[0], best_state=chart.embed(best[1]))

    # linearization of P at the solution (forward differences)
    p0 = p_chart(z)
    J_P = np.empty((chart.dim, chart.dim))
    for k in range(chart.dim):
        dz = fd_step * max(1.0, abs(z[k]))
        zp = z.copy()
        zp[k] += dz
        J_P[:, k] = (p_chart(zp) - p0) / dz
    spectral = float(np.max(np.abs(np.linalg.eigvals(J_P))))
    return FixedPoint(chart.embed(z), rnorm, J_P, spectral, chart)


# ---------------------------------------------------------------------------
# Reduced representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedChart:
    """Labeling-matrix selection of reduced coordinates plus the
    reconstruction anchored at a gait's nominal guard posture.

    `sel_indices` index the flat state vector (q, qd). Reconstruction pins
    the actuated positions/velocities to the fixed point's guard values
    (y = 0, ydot = 0 at the nominal impact phase), solves the unactuated
    position from h(q) = 0, then overwrites the selected entries with the
    reduced state.
    """

    model: RobotModel
    gait: GaitSpec
    x_star: State
    sel_indices: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.sel_indices)

    def project(self, x: State) -> np.ndarray:
        return x.as_vector()[list(self.sel_indices)]

    def reconstruct(self, x_red: np.ndarray) -> State:
        model = self.model
        n = model.n_q
        idx_act = list(model.actuated_indices)
        q = self.x_star.q.copy()
        qd = self.x_star.qd.copy()
        free = [i for i in range(n) if i not in idx_act]
        coeffs = model.swing_coeffs
        if len(free) == 1:
            j = free[0]
            for _ in range(50):
                h = float(coeffs @ np.cos(q))
                if abs(h) < 1e-13:
                    break
                dh = -coeffs[j] * np.sin(q[j])
                if abs(dh) < 1e-12:
                    raise ReconstructionError("reconstruction left the chart domain")
                q[j] -= h / dh
            else:
                raise ReconstructionError("guard-position solve did not converge")
        elif abs(float(coeffs @ np.cos(q))) > 1e-10:
            raise ReconstructionError("no free coordinate to place the state on the guard")
        vec = np.concatenate([q, qd])
        vec[list(self.sel_indices)] = np.asarray(x_red, dtype=float)
        x = State.from_vector(vec)
        g = hybrid.guard_value(model, x)
        if abs(g["h"]) > 1e-8:
            raise ReconstructionError(f"reconstructed state off the guard (h={g['h']:.2e})")
        if g["hdot"] >= 0.0:
            raise ReconstructionError("reconstructed state has non-descending guard rate")
        return x


def default_reduced_chart(model: RobotModel, gait: GaitSpec, x_star: State) -> ReducedChart:
    """Per-model default selection of reduced rate coordinates.

    Because the reconstruction pins every non-selected rate, the reduced
    one-step dynamics equal a principal submatrix of the step Jacobian, and
    a selection is only usable when that submatrix contracts. The impact
    amplifies an isolated perturbation of the unactuated (stance ankle)
    rate several-fold even when the full map contracts, so that rate is
    excluded: the five-link uses the torso-pitch and swing-femur rates,
    whose restricted dynamics contract in norm for stable gaits; the
    compass uses both leg rates.
    """
    n = model.n_q
    act = list(model.actuated_indices)
    if len(act) <= 1:
        sel = tuple(n + i for i in range(min(n, 2)))
    else:
        follow = next(i for i in act if i > model.torso_index)
        sel = tuple(sorted({n + model.torso_index, n + follow}))
    return ReducedChart(model, gait, x_star, sel)


def reduced_return_map(field, model: RobotModel, chart: ReducedChart,
                       x_red: np.ndarray, options: SimOptions = SimOptions()) -> np.ndarray:
    """P_X = project(P(reconstruct(x_red)))."""
    x = chart.reconstruct(x_red)
    return chart.project(return_map(field, model, x, options))
