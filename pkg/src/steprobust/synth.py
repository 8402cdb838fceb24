"""Gait synthesis and the simulation-in-the-loop robustness optimizer.

Synthesis is a single-shooting least-squares problem over the interior
Bezier columns plus the unactuated pre-impact rate. The first two columns
are solved in closed form from the impact of the terminal state so the
zero-output surface is impact invariant by construction (post-impact output
position and velocity match the curve at phase zero). Residuals enforce
periodicity of the full guard state through the return map, guard crossing
at the requested step duration, and the essential step-length/step-height
targets.

The outer loop draws essential-constraint candidates (Latin hypercube on
the first iteration, annealed Gaussian proposals around the incumbent
afterwards), synthesizes and scores each, and ranks lexicographically:
stable beats unstable, then higher r_star among stable, then more steps
taken among unstable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import qmc

from . import hybrid, model as model_mod, poincare, sim as sim_mod
from .control import TrackingGains, closed_loop_field
from .errors import (FixedPointNotFoundError, InputDomainError,
                     OutsideSectionError, StepRobustError, SynthesisFailedError)
from .gait import BezierSet, EssentialConstraints, GaitSpec, bezier_eval
from .invariance import BarrierParams, certify
from .model import RobotModel, State
from .poincare import default_reduced_chart, find_fixed_point
from .sim import SimOptions

SYNTH_SIM = SimOptions(rtol=1e-7, atol=1e-9)

# Phase fractions (of the realized step) where swing-foot clearance is
# penalized, and the minimum height demanded there.  The endpoints are
# excluded because h -> 0 at lift-off and touchdown by definition.
CLEARANCE_PHASES = (0.06, 0.12, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9)
CLEARANCE_MARGIN = 0.003

# The nominal impact is placed at this fraction of the phasing horizon, so
# the clamp of the phase variable at tau = 1 sits strictly away from the
# periodic orbit and the return map stays smooth at the fixed point.
PHASE_MARGIN = 0.95


@dataclass(frozen=True)
class GaitScore:
    stable: bool
    steps_taken: int
    r_star: Optional[float] = None
    spectral_radius: Optional[float] = None
    gait_id: str = ""

    def __post_init__(self):
        if self.stable and self.r_star is None:
            raise InputDomainError("stable scores must carry r_star")


@dataclass(frozen=True)
class SearchBounds:
    step_length: tuple = (0.20, 0.45)
    step_duration: tuple = (0.40, 0.80)
    step_height: tuple = (0.03, 0.09)


@dataclass(frozen=True)
class LoopConfig:
    iterations: int = 10
    gaits_per_iteration: int = 5
    bounds: SearchBounds = SearchBounds()
    seed: int = 0
    stability_threshold: int = 50
    barrier: BarrierParams = BarrierParams()
    proposal_scale: float = 0.30     # initial sigma as a fraction of bound width
    anneal: float = 0.7
    synth_starts: int = 5            # multistart budget per candidate
    synth_max_nfev: int = 200        # least-squares evaluation cap per start

    def __post_init__(self):
        if self.iterations < 1:
            raise InputDomainError("iterations must be at least 1")
        if self.gaits_per_iteration < 2:
            raise InputDomainError("gaits_per_iteration must be at least 2")


# ---------------------------------------------------------------------------
# Seed gait
# ---------------------------------------------------------------------------

def _fit_bezier_rows(samples: np.ndarray, taus: np.ndarray, degree: int) -> np.ndarray:
    """Least-squares Bernstein fit of sampled output profiles (rows)."""
    from scipy.special import comb
    k = np.arange(degree + 1)
    basis = comb(degree, k)[None, :] * taus[:, None] ** k * (1 - taus[:, None]) ** (degree - k)
    sol, *_ = np.linalg.lstsq(basis, samples.T, rcond=None)
    return sol.T


def seed_gait(model: RobotModel, essential: EssentialConstraints,
              degree: int = 7) -> tuple[np.ndarray, float]:
    """Heuristic initial Bezier columns and unactuated pre-impact rate."""
    L = model.leg_length
    s = essential.step_length
    if not 0 < s < 2 * L:
        raise InputDomainError("step length outside the kinematic workspace")
    sigma = float(np.arcsin(min(s / (2 * L), 0.95)))
    T = essential.step_duration
    taus = np.linspace(0.0, 1.0, 11)
    lin = sigma * (2 * taus - 1)         # -sigma -> sigma sweep

    if model.name == "fivelink":
        lt = model.links[0].length
        bend = float(np.arccos(max(1.0 - essential.step_height / lt, 0.3)))
        rows = np.vstack([
            lin,                                    # stance femur
            0.0 * taus,                             # torso upright
            -lin,                                   # swing femur
            -lin - bend * np.sin(np.pi * taus),     # swing tibia, knee bend for clearance
        ])
    elif model.name == "compass":
        rows = np.vstack([-lin])                    # swing leg angle
    else:
        raise InputDomainError(f"no seed heuristic for model '{model.name}'")
    coeffs = _fit_bezier_rows(rows, taus, degree)
    qd_unact = 2.0 * sigma / T
    return coeffs, qd_unact


# ---------------------------------------------------------------------------
# Shooting problem
# ---------------------------------------------------------------------------

class _ShootingProblem:
    def __init__(self, model, essential, degree, gains, options):
        self.model = model
        self.essential = essential
        self.degree = degree
        self.gains = gains
        self.options = options
        self.m = model.n_u
        self.idx_act = list(model.actuated_indices)
        self.unact = [i for i in range(model.n_q) if i not in model.actuated_indices]
        if len(self.unact) != 1:
            raise InputDomainError("shooting synthesis expects exactly one unactuated DOF")
        self.j_u = self.unact[0]
        seed_cols, seed_rate = seed_gait(model, essential, degree)
        self.q_u_guess = self._terminal_unactuated(seed_cols)
        n_interior = (degree - 1) * self.m
        self.theta_seed = np.concatenate([seed_cols[:, 2:].ravel(), [seed_rate]])
        self.n_theta = n_interior + 1

    def _terminal_unactuated(self, coeffs) -> float:
        # pre-impact posture leans the stance leg forward by ~sigma
        s = self.essential.step_length
        return float(np.arcsin(min(s / (2 * self.model.leg_length), 0.95)))

    def theta_from_gait(self, gait: GaitSpec) -> np.ndarray:
        qd_u = gait.fixed_point.qd[self.j_u] if gait.fixed_point is not None else \
            self.theta_seed[-1]
        return np.concatenate([gait.bezier.coeffs[:, 2:].ravel(), [qd_u]])

    def build(self, theta) -> tuple[GaitSpec, State]:
        """Gait and pre-impact state from the decision vector; the two
        leading Bezier columns come from the impact of the terminal state.

        The pre-impact state sits at phase PHASE_MARGIN < 1, which couples
        it weakly to the leading columns, so the closed-form HZD boundary
        conditions are resolved by a short fixed-point iteration.
        """
        model, v = self.model, self.degree
        T_phase = self.essential.step_duration / PHASE_MARGIN
        cols = theta[:-1].reshape(self.m, v - 1)
        qd_u = float(theta[-1])
        beta = np.empty((self.m, v + 1))
        beta[:, 2:] = cols
        beta[:, 0] = beta[:, 2]
        beta[:, 1] = beta[:, 2]

        coeffs_sw = model.swing_coeffs
        x_minus = None
        # Two passes suffice: the leading columns enter the pre-impact state
        # through Bernstein weights of order (1 - PHASE_MARGIN)^(v-1).
        for _ in range(2):
            b = BezierSet(beta.copy())
            q = np.zeros(model.n_q)
            q[self.idx_act] = bezier_eval(b, PHASE_MARGIN, 0)
            q[self.j_u] = self.q_u_guess
            for _ in range(60):
                h = float(coeffs_sw @ np.cos(q))
                if abs(h) < 1e-13:
                    break
                dh = -coeffs_sw[self.j_u] * np.sin(q[self.j_u])
                if abs(dh) < 1e-10:
                    raise StepRobustError("guard solve singular in shooting build")
                q[self.j_u] -= np.clip(h / dh, -0.3, 0.3)
            else:
                raise StepRobustError("guard solve failed in shooting build")
            qd = np.zeros(model.n_q)
            qd[self.idx_act] = bezier_eval(b, PHASE_MARGIN, 1) / T_phase
            qd[self.j_u] = qd_u
            x_minus = State(q, qd)

            outcome = hybrid.impact_map(model, x_minus, tol=1e-6)
            x_plus = outcome.post_state
            b0 = x_plus.q[self.idx_act]
            b1 = b0 + T_phase * x_plus.qd[self.idx_act] / v
            if (np.allclose(b0, beta[:, 0], rtol=0, atol=1e-14)
                    and np.allclose(b1, beta[:, 1], rtol=0, atol=1e-14)):
                break
            beta[:, 0] = b0
            beta[:, 1] = b1

        ess = self.essential
        gait = GaitSpec(BezierSet(beta), T_phase, ess, model.name,
                        fixed_point=x_minus)
        return gait, x_minus

    def residuals(self, theta) -> np.ndarray:
        model, T = self.model, self.essential.step_duration
        n = model.n_q
        w = np.concatenate([np.ones(n), np.full(n, T)])
        try:
            gait, x_minus = self.build(theta)
        except (StepRobustError, InputDomainError):
            return np.concatenate([np.full(2 * n + 3 + len(CLEARANCE_PHASES), 1e3),
                                   1e-3 * (theta - self.theta_seed)])
        field = closed_loop_field(model, gait, self.gains)
        x_plus = hybrid.impact_map(model, x_minus).post_state
        fr = sim_mod.flow(field, x_plus, self.options.t_max_factor * T,
                          self.options, guard_active_after=0.25 * T)
        x_end = fr.x_end
        r_per = w * (x_end.as_vector() - x_minus.as_vector())
        if fr.termination == "guard":
            r_T = (fr.t_end - T) / (0.02 * T)
        else:
            r_T = 50.0 * (1.0 + abs(fr.t_end - T) / T)
        kin = model_mod.kinematics(model, x_minus.q)
        r_len = (kin["swing_foot"][0] - self.essential.step_length) / 0.01
        t_mid = min(0.5 * T, fr.t_end)
        x_mid = fr.dense(t_mid) if fr.dense is not None else x_end.as_vector()
        h_mid = float(model.swing_coeffs @ np.cos(x_mid[:n]))
        r_h = (h_mid - self.essential.step_height) / 0.01
        # Swing-foot clearance: one-sided hinge penalty keeps the foot above
        # ground throughout the swing, not just at the mid-stance apex.
        r_clear = np.zeros(len(CLEARANCE_PHASES))
        if fr.dense is not None:
            for i, tau in enumerate(CLEARANCE_PHASES):
                x_tau = fr.dense(tau * fr.t_end)
                h_tau = float(model.swing_coeffs @ np.cos(x_tau[:n]))
                r_clear[i] = max(0.0, CLEARANCE_MARGIN - h_tau) / 0.001
        reg = 1e-3 * (theta - self.theta_seed)
        return np.concatenate([r_per, [r_T, r_len, r_h], r_clear, reg])


def synthesize_gait(model: RobotModel, essential: EssentialConstraints,
                    degree: int = 7, gains: TrackingGains = TrackingGains(),
                    options: SimOptions = SYNTH_SIM, n_starts: int = 5,
                    seed: int = 0, warm_start: Optional[GaitSpec] = None,
                    max_nfev: int = 200) -> GaitSpec:
    """Single-shooting synthesis of a periodic impact-invariant gait."""
    problem = _ShootingProblem(model, essential, degree, gains, options)
    rng = np.random.default_rng(seed)
    starts = []
    if warm_start is not None and warm_start.bezier.degree == degree:
        starts.append(problem.theta_from_gait(warm_start))
    starts.append(problem.theta_seed.copy())
    while len(starts) < n_starts + (warm_start is not None):
        starts.append(problem.theta_seed + rng.normal(scale=0.02, size=problem.n_theta))

    best_fail = None
    for theta0 in starts:
        try:
            # ftol/xtol sit just below the 1e-3 seed-regularization floor;
            # tighter values only grind out sub-float step sizes.
            sol = least_squares(problem.residuals, theta0, method="trf",
                                diff_step=1e-6, xtol=1e-10, ftol=1e-12,
                                gtol=1e-10, max_nfev=max_nfev)
            gait, x_minus = problem.build(sol.x)
            report = synthesis_report(model, gait, gains, options)
        except (StepRobustError, InputDomainError) as exc:
            best_fail = {"error": str(exc)}
            continue
        if (report["hzd_residual"] <= 1e-6
                and report["step_length_error"] <= 1e-3
                and report["step_height_error"] <= 1e-3
                and report["duration_error_rel"] <= 0.02
                and report["periodicity_residual"] <= 1e-3
                and report["min_clearance"] > 0.0):
            return replace(gait, gait_id=gait_hash(gait))
        best_fail = report
    raise SynthesisFailedError("no shooting start converged", best_residuals=best_fail)


def synthesis_report(model: RobotModel, gait: GaitSpec,
                     gains: TrackingGains = TrackingGains(),
                     options: SimOptions = SYNTH_SIM) -> dict:
    """Direct verification of the synthesis contract on a finished gait."""
    T = gait.step_duration
    T_step = gait.essential.step_duration
    v = gait.bezier.degree
    x_minus = gait.fixed_point
    idx = list(model.actuated_indices)
    x_plus = hybrid.impact_map(model, x_minus).post_state
    y0 = x_plus.q[idx] - bezier_eval(gait.bezier, 0.0, 0)
    yd0 = x_plus.qd[idx] - bezier_eval(gait.bezier, 0.0, 1) / T
    hzd = float(max(np.max(np.abs(y0)), np.max(np.abs(yd0))))
    field = closed_loop_field(model, gait, gains)
    n = model.n_q
    w = np.concatenate([np.ones(n), np.full(n, T)])
    fr = sim_mod.flow(field, x_plus, 3.0 * T, options,
                      guard_active_after=0.25 * T_step)
    per = float(np.linalg.norm(w * (fr.x_end.as_vector() - x_minus.as_vector()))) \
        if fr.termination == "guard" else float("inf")
    kin = model_mod.kinematics(model, x_minus.q)
    t_mid = min(0.5 * T_step, fr.t_end)
    x_mid = fr.dense(t_mid)
    h_mid = float(model.swing_coeffs @ np.cos(x_mid[:n]))
    ts = np.linspace(0.03 * fr.t_end, 0.97 * fr.t_end, 64)
    h_min = float(min(model.swing_coeffs @ np.cos(fr.dense(t)[:n]) for t in ts))
    return {
        "hzd_residual": hzd,
        "periodicity_residual": per,
        "duration_error_rel": abs(fr.t_end - T_step) / T_step
        if fr.termination == "guard" else float("inf"),
        "step_length_error": abs(kin["swing_foot"][0] - gait.essential.step_length),
        "step_height_error": abs(h_mid - gait.essential.step_height),
        "min_clearance": h_min,
        "termination": fr.termination,
    }


def gait_hash(gait: GaitSpec) -> str:
    payload = gait.bezier.coeffs.tobytes() + np.float64(gait.step_duration).tobytes()
    return hashlib.sha1(payload).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Scoring and ranking
# ---------------------------------------------------------------------------

def score_gait(model: RobotModel, gait: GaitSpec, params: BarrierParams,
               stability_threshold: int = 50,
               gains: TrackingGains = TrackingGains(),
               options: SimOptions = SimOptions()) -> GaitScore:
    """Stability rollout, then fixed point and certification if stable."""
    field = closed_loop_field(model, gait, gains)
    x0 = gait.fixed_point
    if x0 is None:
        raise InputDomainError("gait has no initial guard state to score from")
    result = sim_mod.rollout(field, model, x0, stability_threshold, options)
    if result.termination != "completed" or result.steps_taken < stability_threshold:
        return GaitScore(False, result.steps_taken, gait_id=gait.gait_id)
    try:
        fp = find_fixed_point(field, model, x0, options)
    except FixedPointNotFoundError:
        return GaitScore(False, result.steps_taken, gait_id=gait.gait_id)
    chart = default_reduced_chart(model, gait, fp.x_star)
    cert = certify(field, model, chart, params, options, gait_id=gait.gait_id)
    return GaitScore(True, result.steps_taken, r_star=cert.r_star,
                     spectral_radius=fp.spectral_radius, gait_id=gait.gait_id)


def rank(a: GaitScore, b: GaitScore, objective: str = "robustness") -> str:
    """Automatic lexicographic preference: returns 'a' or 'b'."""
    if objective not in ("robustness", "stability_only"):
        raise InputDomainError("objective must be 'robustness' or 'stability_only'")
    if objective == "robustness":
        key_a = (a.stable, a.r_star if a.stable else float(a.steps_taken))
        key_b = (b.stable, b.r_star if b.stable else float(b.steps_taken))
    else:
        key_a = (float(a.steps_taken),)
        key_b = (float(b.steps_taken),)
    if key_a > key_b:
        return "a"
    if key_b > key_a:
        return "b"
    return "a" if a.gait_id <= b.gait_id else "b"


# ---------------------------------------------------------------------------
# Simulation-in-the-loop optimization
# ---------------------------------------------------------------------------

def _essential_from_point(point, bounds: SearchBounds) -> EssentialConstraints:
    def clip(v, lohi):
        return float(min(max(v, lohi[0]), lohi[1]))
    return EssentialConstraints(
        step_length=clip(point[0], bounds.step_length),
        step_duration=clip(point[1], bounds.step_duration),
        step_height=clip(point[2], bounds.step_height),
    )


def optimize_loop(model: RobotModel, config: LoopConfig,
                  objective: str = "robustness",
                  gains: TrackingGains = TrackingGains(),
                  options: SimOptions = SimOptions(),
                  synth_options: SimOptions = SYNTH_SIM,
                  history: Optional[list] = None,
                  gaits: Optional[dict] = None) -> dict:
    """Annealed random search over essential constraints, ranked by the
    chosen objective. Resumable: pass a previous run's history (and its gait
    specs, for warm starts); per-iteration RNG streams make the remaining
    iterations identical to an uninterrupted run."""
    bounds = config.bounds
    lo = np.array([bounds.step_length[0], bounds.step_duration[0], bounds.step_height[0]])
    hi = np.array([bounds.step_length[1], bounds.step_duration[1], bounds.step_height[1]])

    history = list(history) if history else []
    best: Optional[GaitScore] = None
    best_gait: Optional[GaitSpec] = None
    best_point = None
    gaits_by_id: dict[str, GaitSpec] = dict(gaits) if gaits else {}
    seen_hashes: dict[str, str] = {}
    start_iter = 1 + max((rec["iteration"] for rec in history), default=0)
    for rec in history:
        if not rec.get("synthesized", True):
            continue
        gid = rec["gait_id"]
        if rec.get("beta_hash"):
            seen_hashes.setdefault(rec["beta_hash"], gid)
        score = GaitScore(rec["stable"], rec["steps_taken"],
                          r_star=rec.get("r_star"), gait_id=gid)
        if best is None or rank(score, best, objective) == "a":
            best = score
            best_gait = gaits_by_id.get(gid)
            best_point = np.array([rec["essential"]["step_length"],
                                   rec["essential"]["step_duration"],
                                   rec["essential"]["step_height"]])

    for iteration in range(start_iter, config.iterations + 1):
        rng = np.random.default_rng([config.seed, iteration])
        sigma_frac = config.proposal_scale * config.anneal ** (iteration - 1)
        for attempt in range(2):
            if iteration == 1 and attempt == 0:
                sampler = qmc.LatinHypercube(d=3, seed=config.seed)
                unit = sampler.random(config.gaits_per_iteration)
                points = lo + unit * (hi - lo)
            else:
                center = best_point if best_point is not None else 0.5 * (lo + hi)
                scale = sigma_frac * (hi - lo) * (2.0 ** attempt)
                points = center + rng.normal(size=(config.gaits_per_iteration, 3)) * scale
            iteration_scores = []
            for j, point in enumerate(points):
                essential = _essential_from_point(point, bounds)
                gid = f"it{iteration:02d}g{j}"
                try:
                    gait = synthesize_gait(
                        model, essential, gains=gains, options=synth_options,
                        n_starts=config.synth_starts,
                        seed=config.seed * 1000 + iteration * 10 + j,
                        warm_start=best_gait, max_nfev=config.synth_max_nfev)
                except SynthesisFailedError:
                    history.append({
                        "iteration": iteration, "gait_id": gid,
                        "essential": _ess_dict(essential), "synthesized": False,
                        "stable": False, "steps_taken": 0, "r_star": None,
                    })
                    continue
                gait = replace(gait, gait_id=gid)
                bhash = gait_hash(gait)
                duplicate_of = seen_hashes.get(bhash)
                seen_hashes.setdefault(bhash, gid)
                score = score_gait(model, gait, config.barrier,
                                   config.stability_threshold, gains, options)
                gaits_by_id[gid] = gait
                history.append({
                    "iteration": iteration, "gait_id": gid,
                    "essential": _ess_dict(essential), "synthesized": True,
                    "stable": score.stable, "steps_taken": score.steps_taken,
                    "r_star": score.r_star, "beta_hash": bhash,
                    "duplicate_of": duplicate_of,
                })
                iteration_scores.append((score, gait, point))
            if iteration_scores:
                break
        for score, gait, point in iteration_scores:
            if best is None or rank(score, best, objective) == "a":
                best, best_gait, best_point = score, gait, np.asarray(point, dtype=float)
    return {"best_score": best, "best_gait": best_gait, "history": history,
            "gaits": gaits_by_id}


def _ess_dict(ess: EssentialConstraints) -> dict:
    return {"step_length": ess.step_length, "step_duration": ess.step_duration,
            "step_width": ess.step_width, "step_height": ess.step_height}
