"""Step-to-step dynamics: the walking cycle as a discrete-time system.

Sampling the walker only at the pre-impact instants turns the hybrid
continuous dynamics into a map P: one application = impact + swing phase
to the next touchdown. A periodic gait is a fixed point x* = P(x*), and
its local stability is the spectral radius of dP/dx at x*. This script
polishes the bundled gait's fixed point, reports the spectrum, and shows
a perturbation decaying step over step.

Run:  python3 demos/02_fixed_point_and_stability.py
"""

import importlib.resources
import json

import numpy as np

from steprobust import (State, TrackingGains, closed_loop_field,
                        find_fixed_point, gait_from_dict, get_model,
                        return_map)

model = get_model("fivelink")
doc = json.loads(importlib.resources.files("steprobust")
                 .joinpath("data/fivelink_nominal.json").read_text())
gait = gait_from_dict(doc)
field = closed_loop_field(model, gait, TrackingGains())

fp = find_fixed_point(field, model, gait.fixed_point)
print(f"fixed point residual ||P(x*) - x*|| = {fp.residual:.2e}")

eigvals = np.linalg.eigvals(fp.jacobian)
order = np.argsort(-np.abs(eigvals))
print(f"spectral radius rho = {fp.spectral_radius:.4f}  (< 1: the cycle "
      f"is exponentially stable)")
print("leading |eigenvalues|:",
      ", ".join(f"{abs(eigvals[i]):.4f}" for i in order[:4]))

# Kick the pre-impact velocities and watch the distance to x* contract.
rng = np.random.default_rng(0)
x = State(fp.x_star.q.copy(),
          fp.x_star.qd + 0.2 * rng.standard_normal(model.n_q))
print("\nperturbed rollout (distance to x* in the state vector norm):")
ref = fp.x_star.as_vector()
for k in range(8):
    d = float(np.linalg.norm(x.as_vector() - ref))
    print(f"  step {k}: {d:.3e}")
    x = return_map(field, model, x)
