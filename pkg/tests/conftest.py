import importlib.resources

import numpy as np
import pytest

from steprobust import model as model_mod
from steprobust.control import TrackingGains, closed_loop_field
from steprobust.gait import gait_from_dict
import json


@pytest.fixture(scope="session")
def five_link():
    return model_mod.five_link()


@pytest.fixture(scope="session")
def compass():
    return model_mod.compass_gait()


@pytest.fixture(scope="session")
def frozen_gait():
    """A pre-synthesized stable five-link gait shipped as package data,
    so tests that need a walking gait don't pay for synthesis."""
    text = importlib.resources.files("steprobust").joinpath(
        "data/fivelink_nominal.json").read_text()
    return gait_from_dict(json.loads(text))


@pytest.fixture(scope="session")
def frozen_field(five_link, frozen_gait):
    return closed_loop_field(five_link, frozen_gait, TrackingGains())


def random_guard_state(model, rng, speed=2.0):
    """Random state on the guard with the swing foot descending."""
    from steprobust import hybrid

    n = model.n_q
    for _ in range(1000):
        q = rng.uniform(-0.6, 0.6, size=n)
        # solve the last free coordinate so h(q) = 0
        coeffs = model.swing_coeffs
        j = int(np.argmax(np.abs(coeffs)))
        for _ in range(60):
            h = float(coeffs @ np.cos(q))
            if abs(h) < 1e-12:
                break
            dh = -coeffs[j] * np.sin(q[j])
            if abs(dh) < 1e-8:
                q[j] += 0.1
                continue
            q[j] -= np.clip(h / dh, -0.5, 0.5)
        qd = rng.uniform(-speed, speed, size=n)
        x = model_mod.State(q, qd)
        g = hybrid.guard_value(model, x)
        if abs(g["h"]) < 1e-10 and g["hdot"] < -1e-3:
            return x
    raise RuntimeError("could not draw a guard state")
