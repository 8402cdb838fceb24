import numpy as np
import pytest

from steprobust import hybrid, model as M
from steprobust.errors import InputDomainError

from conftest import random_guard_state


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_guard_rate_matches_flow_differencing(name):
    model = M.get_model(name)
    rng = np.random.default_rng(7)
    eps = 1e-7
    for _ in range(20):
        q = rng.uniform(-0.8, 0.8, model.n_q)
        qd = rng.uniform(-2.0, 2.0, model.n_q)
        g = hybrid.guard_value(model, M.State(q, qd))
        h_fd = (hybrid.guard_value(model, M.State(q + eps * qd, qd))["h"]
                - hybrid.guard_value(model, M.State(q - eps * qd, qd))["h"]) / (2 * eps)
        assert abs(g["hdot"] - h_fd) < 1e-6


def test_on_guard_requires_descending_foot(compass):
    rng = np.random.default_rng(8)
    x = random_guard_state(compass, rng)
    assert hybrid.on_guard(compass, x)
    lifting = M.State(x.q, -x.qd)
    assert not hybrid.on_guard(compass, lifting)


def test_relabel_is_an_involution(five_link):
    rng = np.random.default_rng(9)
    x = M.State(rng.uniform(-1, 1, 5), rng.uniform(-2, 2, 5))
    y = hybrid.relabel(five_link, hybrid.relabel(five_link, x))
    assert np.allclose(x.as_vector(), y.as_vector(), atol=0)


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_impact_constraint_and_energy(name):
    """Post-impact foot velocity is zero and kinetic energy never grows:
    the velocity update is an inertia-orthogonal projection."""
    model = M.get_model(name)
    rng = np.random.default_rng(10)
    for _ in range(200):
        x = random_guard_state(model, rng)
        out = hybrid.impact_map(model, x)
        J_c = M.extended_contact_jacobian(model, x.q)
        residual = J_c @ out.qd_plus_extended
        assert np.max(np.abs(residual)) <= 1e-10
        ke_minus = M.kinetic_energy(model, x.q, x.qd)
        ke_plus = M.kinetic_energy(model, out.post_state.q, out.post_state.qd)
        assert ke_plus <= ke_minus + 1e-10


def test_impact_keeps_configuration_on_guard(five_link):
    rng = np.random.default_rng(11)
    for _ in range(50):
        x = random_guard_state(five_link, rng)
        out = hybrid.impact_map(five_link, x)
        g = hybrid.guard_value(five_link, out.post_state)
        assert abs(g["h"]) < 1e-8


def test_impact_zero_velocity_gives_zero_impulse(five_link):
    rng = np.random.default_rng(12)
    x = random_guard_state(five_link, rng)
    resting = M.State(x.q, np.zeros(5))
    out = hybrid.impact_map(five_link, resting)
    assert np.max(np.abs(out.impulse)) < 1e-12
    assert np.max(np.abs(out.post_state.qd)) < 1e-12


def test_impact_rejects_states_off_the_guard(five_link):
    # legs spread asymmetrically: swing foot well above ground (h > 0)
    x = M.State(np.array([0.17, 0.21, 0.0, -0.4, -0.5]), np.zeros(5))
    assert hybrid.guard_value(five_link, x)["h"] > 1e-3
    with pytest.raises(InputDomainError):
        hybrid.impact_map(five_link, x)


def test_impact_locally_lipschitz(five_link):
    """Bounded difference quotients under small guard-tangent perturbations."""
    rng = np.random.default_rng(13)
    x = random_guard_state(five_link, rng)
    base = hybrid.impact_map(five_link, x).post_state.as_vector()
    for scale in (1e-6, 1e-5):
        dq = np.zeros(5)
        dqd = rng.normal(size=5) * scale
        pert = M.State(x.q + dq, x.qd + dqd)
        out = hybrid.impact_map(five_link, pert).post_state.as_vector()
        quotient = np.linalg.norm(out - base) / np.linalg.norm(dqd)
        assert quotient < 50.0
