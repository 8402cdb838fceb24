"""Event-detecting integration of the closed-loop hybrid system.

Continuous segments are integrated with adaptive RK45 and terminated by the
guard (swing-foot touchdown, descending) or by fall detection; the crossing
time is located on the dense output and polished until |h| <= 1e-8 m. A
rollout alternates flow segments with plastic impacts and counts steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import hybrid, model as model_mod
from .errors import StepRobustError
from .hybrid import ImpactOutcome
from .model import RobotModel, State

GUARD_LOCATE_TOL = 1e-8
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class SimOptions:
    rtol: float = 1e-9
    atol: float = 1e-11
    fall_pitch: float = 1.2            # rad, |torso pitch| beyond this is a fall
    fall_hip_fraction: float = 0.4     # hip height below this fraction of leg length
    t_max_factor: float = 3.0          # flow horizon in units of step duration
    guard_refractory: float = 0.0      # s after impact during which the guard is inert


@dataclass
class FlowResult:
    t: np.ndarray                      # local segment times
    states: np.ndarray                 # (2 n_q, len(t)) samples at solver steps
    t_end: float
    x_end: State
    termination: str                   # guard | t_max | fell | diverged
    dense: object = field(default=None, repr=False)


@dataclass
class Segment:
    t_start: float
    duration: float
    states: np.ndarray
    times: np.ndarray
    termination: str
    impact: Optional[ImpactOutcome] = None
    dense: object = field(default=None, repr=False)


@dataclass
class RolloutResult:
    segments: list
    steps_taken: int
    termination: str                   # completed | fell | guard_missed | controller_singular

    @property
    def guard_states(self) -> list:
        """Pre-impact states at each recorded guard crossing."""
        return [State.from_vector(seg.states[:, -1])
                for seg in self.segments if seg.impact is not None]


def _fall_events(model: RobotModel, opts: SimOptions):
    n = model.n_q
    ti = model.torso_index
    hip_min = opts.fall_hip_fraction * model.leg_length
    pitch_lim = opts.fall_pitch

    def pitch_ev(t, x):
        return pitch_lim ** 2 - x[ti] ** 2

    def hip_ev(t, x):
        return float(model.hip_coeffs @ np.cos(x[:n])) - hip_min

    def diverge_ev(t, x):
        return DIVERGENCE_NORM - float(np.max(np.abs(x)))

    for ev in (pitch_ev, hip_ev, diverge_ev):
        ev.terminal = True
        ev.direction = -1
    return [pitch_ev, hip_ev, diverge_ev]


def flow(field, x0: State, t_max: float, options: SimOptions = SimOptions(),
         t_offset: float = 0.0, guard_active_after: float = 0.0) -> FlowResult:
    """Integrate the closed-loop field from x0 until guard crossing, fall, or
    t_max. `t_offset` shifts the controller clock (phase since last impact);
    the guard event is armed only for local t >= guard_active_after."""
    model = field.model
    n = model.n_q
    g0 = hybrid.guard_value(model, x0)
    if g0["h"] <= GUARD_LOCATE_TOL and g0["hdot"] < 0.0 and guard_active_after <= 0.0:
        x0vec = x0.as_vector()
        return FlowResult(np.array([0.0]), x0vec[:, None], 0.0, x0, "guard")

    coeffs = model.swing_coeffs

    def rhs(t, xvec):
        return field(State(xvec[:n], xvec[n:]), t + t_offset)

    def guard_ev(t, xvec):
        return float(coeffs @ np.cos(xvec[:n]))
    guard_ev.terminal = True
    guard_ev.direction = -1

    events = [guard_ev] + _fall_events(model, options)

    pieces_t, pieces_x, denses = [], [], []
    t0 = 0.0
    xv = x0.as_vector()
    termination = "t_max"
    # two-phase integration when the guard has a refractory window
    spans = []
    if guard_active_after > 0.0 and guard_active_after < t_max:
        spans = [(t0, guard_active_after, events[1:]), (guard_active_after, t_max, events)]
    elif guard_active_after >= t_max:
        spans = [(t0, t_max, events[1:])]
    else:
        spans = [(t0, t_max, events)]

    t_end, x_end = t_max, xv
    for (ta, tb, evs) in spans:
        sol = solve_ivp(rhs, (ta, tb), xv, method="RK45", rtol=options.rtol,
                        atol=options.atol, events=evs, dense_output=True)
        if sol.status == -1:
            raise StepRobustError(f"integration failed: {sol.message}")
        pieces_t.append(sol.t)
        pieces_x.append(sol.y)
        denses.append(sol.sol)
        t_end = sol.t[-1]
        x_end = sol.y[:, -1]
        xv = x_end
        if sol.status == 1:
            hit = [i for i, te in enumerate(sol.t_events) if te.size > 0]
            has_guard = evs is events and 0 in hit
            if has_guard:
                t_end = sol.t_events[0][0]
                x_end = sol.y_events[0][0]
                # Newton polish of the crossing on the dense output.  The
                # stop tolerance is far below the 1e-8 guarantee so that
                # guard localization does not dominate Poincare residuals.
                for _ in range(8):
                    h = float(coeffs @ np.cos(x_end[:n]))
                    if abs(h) <= 1e-13:
                        break
                    hdot = float(-(coeffs * np.sin(x_end[:n])) @ x_end[n:])
                    t_end -= h / hdot
                    x_end = sol.sol(t_end)
                termination = "guard"
            else:
                idx = min(i for i in hit if not (evs is events and i == 0))
                t_end = sol.t_events[idx][0]
                x_end = sol.y_events[idx][0]
                which = idx - 1 if evs is events else idx
                termination = "diverged" if which == 2 else "fell"
            break

    t_all = np.concatenate(pieces_t)
    x_all = np.concatenate(pieces_x, axis=1)

    class _Dense:
        def __init__(self, sols, breaks):
            self.sols = sols
            self.breaks = breaks

        def __call__(self, t):
            for s, b in zip(self.sols, self.breaks):
                if t <= b:
                    return s(t)
            return self.sols[-1](t)

    dense = _Dense(denses, [p[-1] for p in pieces_t])
    return FlowResult(t_all, x_all, float(t_end), State(x_end[:n], x_end[n:]),
                      termination, dense)


def step(field, model: RobotModel, x_minus: State,
         options: SimOptions = SimOptions()) -> tuple[State, float]:
    """One application of the return map: impact, then flow to the next
    guard crossing. Returns (next pre-impact state, time-to-impact)."""
    outcome = hybrid.impact_map(model, x_minus)
    t_max = options.t_max_factor * field.gait.step_duration
    fr = flow(field, outcome.post_state, t_max, options,
              guard_active_after=options.guard_refractory)
    if fr.termination != "guard":
        from .errors import OutsideSectionError
        raise OutsideSectionError(
            f"step did not reach the guard ({fr.termination})",
            termination="guard_missed" if fr.termination == "t_max" else "fell")
    return fr.x_end, fr.t_end


def rollout(field, model: RobotModel, x0: State, max_steps: int,
            options: SimOptions = SimOptions()) -> RolloutResult:
    """Repeated steps until max_steps impacts, a fall, or a missed guard."""
    if max_steps < 1:
        from .errors import InputDomainError
        raise InputDomainError("max_steps must be at least 1")
    segments = []
    steps = 0
    x = x0
    t_global = 0.0
    refractory = 0.0
    t_max = options.t_max_factor * field.gait.step_duration
    while True:
        fr = flow(field, x, t_max, options, guard_active_after=refractory)
        seg = Segment(t_start=t_global, duration=fr.t_end, states=fr.states,
                      times=fr.t, termination=fr.termination, dense=fr.dense)
        t_global += fr.t_end
        if fr.termination in ("fell", "diverged"):
            segments.append(seg)
            return RolloutResult(segments, steps, "fell")
        if fr.termination == "t_max":
            segments.append(seg)
            return RolloutResult(segments, steps, "guard_missed")
        # guard reached: impact
        outcome = hybrid.impact_map(model, fr.x_end)
        seg.impact = outcome
        segments.append(seg)
        steps += 1
        if steps >= max_steps:
            return RolloutResult(segments, steps, "completed")
        x = outcome.post_state
        refractory = options.guard_refractory


def resample_rollout(result: RolloutResult, field, dt: float = 1e-3) -> dict:
    """Fixed-rate resampling of a rollout for CSV export. Returns columns
    t, q, qd, u, h; torques are recomputed from the controller."""
    model = field.model
    n = model.n_q
    rows_t, rows_x, rows_u, rows_h = [], [], [], []
    from .control import tracking_torque
    for seg in result.segments:
        if seg.duration <= 0 or seg.dense is None:
            continue
        ts = np.arange(0.0, seg.duration, dt)
        for tl in ts:
            xv = seg.dense(tl)
            st = State(xv[:n], xv[n:])
            u = tracking_torque(model, field.gait, field.gains, st, tl)
            rows_t.append(seg.t_start + tl)
            rows_x.append(xv)
            rows_u.append(u)
            rows_h.append(hybrid.guard_value(model, st)["h"])
    return {
        "t": np.array(rows_t),
        "x": np.array(rows_x),
        "u": np.array(rows_u),
        "h": np.array(rows_h),
    }
