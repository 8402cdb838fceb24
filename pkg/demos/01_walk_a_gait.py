"""Walk the bundled five-link gait and look at what a 'step' is.

The package models a planar five-link biped (two tibias, two femurs, a
torso) with point feet. A gait is a set of Bezier polynomials that the
controller tracks as functions of time since the last foot impact, plus
the pre-impact state the cycle repeats from. This script loads the bundled
nominal gait, rolls it out for ten steps, and prints per-step timing.

Run:  python3 demos/01_walk_a_gait.py
"""

import importlib.resources
import json

import numpy as np

from steprobust import (TrackingGains, closed_loop_field, gait_from_dict,
                        get_model, kinematics, rollout)

model = get_model("fivelink")
doc = json.loads(importlib.resources.files("steprobust")
                 .joinpath("data/fivelink_nominal.json").read_text())
gait = gait_from_dict(doc)

print(f"gait {gait.gait_id}: step length "
      f"{gait.essential.step_length:.2f} m, period "
      f"{gait.essential.step_duration:.2f} s")

field = closed_loop_field(model, gait, TrackingGains())
result = rollout(field, model, gait.fixed_point, max_steps=10)

print(f"\nrollout: {result.steps_taken} steps, termination = {result.termination}")
print(f"{'step':>4} {'duration (s)':>13} {'impact speed (rad/s)':>21}")
for k, seg in enumerate(result.segments, start=1):
    speed = float(np.linalg.norm(seg.states[model.n_q:, -1]))
    print(f"{k:>4} {seg.duration:>13.4f} {speed:>21.3f}")

# The swing foot must clear the ground between impacts. (The rollout's
# first segment can be the zero-length initial guard hit; skip those.)
seg = next(s for s in result.segments if s.dense is not None and s.duration > 0)
taus = np.linspace(0.05 * seg.duration, 0.95 * seg.duration, 9)
clearances = []
for t in taus:
    x = seg.dense(t)
    clearances.append(kinematics(model, x[:model.n_q])["swing_foot"][1])
print(f"\nswing-foot clearance over one step: "
      f"min {min(clearances)*1000:.1f} mm, max {max(clearances)*1000:.1f} mm")
