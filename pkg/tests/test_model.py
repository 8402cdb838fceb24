import numpy as np
import pytest

from steprobust import model as M
from steprobust.errors import InputDomainError


def fd_hessian(f, x, eps=1e-5):
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            xpp = x.copy(); xpp[i] += eps; xpp[j] += eps
            xpm = x.copy(); xpm[i] += eps; xpm[j] -= eps
            xmp = x.copy(); xmp[i] -= eps; xmp[j] += eps
            xmm = x.copy(); xmm[i] -= eps; xmm[j] -= eps
            H[i, j] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * eps * eps)
    return H


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_mass_matrix_symmetric_positive_definite(name):
    model = M.get_model(name)
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = rng.uniform(-1.0, 1.0, model.n_q)
        D = M.mass_matrix(model, q)
        assert np.allclose(D, D.T, atol=1e-14)
        assert np.min(np.linalg.eigvalsh(D)) > 0


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_mass_matrix_is_kinetic_energy_hessian(name):
    model = M.get_model(name)
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = rng.uniform(-1.0, 1.0, model.n_q)
        D = M.mass_matrix(model, q)
        H = fd_hessian(lambda qd: M.kinetic_energy(model, q, qd),
                       np.zeros(model.n_q))
        assert np.max(np.abs(D - H)) < 1e-6


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_gravity_vector_is_potential_gradient(name):
    model = M.get_model(name)
    rng = np.random.default_rng(3)
    eps = 1e-7
    for _ in range(20):
        q = rng.uniform(-1.0, 1.0, model.n_q)
        G = M.gravity_vector(model, q)
        for i in range(model.n_q):
            qp = q.copy(); qp[i] += eps
            qm = q.copy(); qm[i] -= eps
            g_fd = (M.potential_energy(model, qp) - M.potential_energy(model, qm)) / (2 * eps)
            assert abs(G[i] - g_fd) < 1e-6


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_unforced_flow_conserves_energy(name):
    from scipy.integrate import solve_ivp

    model = M.get_model(name)
    rng = np.random.default_rng(4)
    n = model.n_q
    x0 = np.concatenate([rng.uniform(-0.3, 0.3, n), rng.uniform(-0.5, 0.5, n)])

    def rhs(t, z):
        return M.continuous_dynamics(model, M.State(z[:n], z[n:]), np.zeros(model.n_u))

    sol = solve_ivp(rhs, (0.0, 1.0), x0, rtol=1e-11, atol=1e-13)
    e0 = M.total_energy(model, M.State(x0[:n], x0[n:]))
    e1 = M.total_energy(model, M.State(sol.y[:n, -1], sol.y[n:, -1]))
    assert abs(e1 - e0) < 1e-6


@pytest.mark.parametrize("name", ["compass", "fivelink"])
def test_swing_foot_jacobian_matches_finite_differences(name):
    model = M.get_model(name)
    rng = np.random.default_rng(5)
    eps = 1e-7
    for _ in range(20):
        q = rng.uniform(-1.0, 1.0, model.n_q)
        J = M.swing_foot_jacobian(model, q)
        for i in range(model.n_q):
            qp = q.copy(); qp[i] += eps
            qm = q.copy(); qm[i] -= eps
            col = (M.kinematics(model, qp)["swing_foot"]
                   - M.kinematics(model, qm)["swing_foot"]) / (2 * eps)
            assert np.max(np.abs(J[:, i] - col)) < 1e-6


def test_kinematics_anchored_at_stance_foot(five_link):
    q = np.zeros(five_link.n_q)
    kin = M.kinematics(five_link, q)
    assert np.allclose(kin["stance_foot"], 0.0)
    # upright posture: both feet together, hip at leg height
    assert abs(kin["swing_foot"][0]) < 1e-12
    assert abs(kin["hip"][1] - five_link.leg_length) < 1e-12


def test_state_validation():
    with pytest.raises(InputDomainError):
        M.State(np.array([0.0, np.nan]), np.zeros(2))
    with pytest.raises(InputDomainError):
        M.State(np.zeros(2), np.zeros(3))


def test_state_vector_round_trip():
    x = M.State(np.array([0.1, -0.2]), np.array([1.0, 2.0]))
    y = M.State.from_vector(x.as_vector())
    assert np.array_equal(x.q, y.q) and np.array_equal(x.qd, y.qd)


def test_model_dict_round_trip(five_link, compass):
    for model in (five_link, compass):
        clone = M.model_from_dict(M.model_to_dict(model))
        q = np.linspace(-0.3, 0.4, model.n_q)
        assert np.allclose(M.mass_matrix(model, q), M.mass_matrix(clone, q))
        assert np.allclose(model.swing_coeffs, clone.swing_coeffs)
        assert model.relabel_perm == clone.relabel_perm


def test_get_model_unknown_name():
    with pytest.raises(InputDomainError):
        M.get_model("hexapod")


def test_continuous_dynamics_shape_and_units(five_link):
    x = M.State(np.full(5, 0.1), np.full(5, -0.2))
    dz = M.continuous_dynamics(five_link, x, np.zeros(4))
    assert dz.shape == (10,)
    assert np.allclose(dz[:5], x.qd)
