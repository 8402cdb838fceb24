"""End-to-end acceptance suite.

Each test covers one acceptance criterion at its stated tolerance and
prints a single pass/fail line. Criteria 4 and 5 share one synthesized
gait (synthesis time is charged to criterion 4); criterion 6 runs the two
optimization arms with identical seed and budget; criterion 7 re-runs the
CLI subcommands and compares artifacts byte for byte.

Run order matters only for the shared synthesis fixture, which pytest
resolves automatically.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_guard_state
from steprobust import cli, hybrid, model as M
from steprobust import gait as G
from steprobust import sim as sim_mod
from steprobust import invariance as inv
from steprobust.control import TrackingGains, closed_loop_field
from steprobust.gait import EssentialConstraints
from steprobust.invariance import BarrierParams, certify, verify_certificate
from steprobust.poincare import default_reduced_chart, find_fixed_point
from steprobust.sim import SimOptions
from steprobust.synth import (LoopConfig, SearchBounds, optimize_loop,
                              synthesize_gait, synthesis_report)

DEFAULT_ESSENTIALS = EssentialConstraints(
    step_length=0.30, step_duration=0.55, step_height=0.05)


def _report(criterion: int, label: str, detail: str) -> None:
    print(f"[acceptance] criterion {criterion} PASS — {label}: {detail}")


# ---------------------------------------------------------------------------
# Criterion 1: impact-map correctness
# ---------------------------------------------------------------------------

def test_criterion_1_impact_map_correctness():
    t0 = time.time()
    worst_residual = 0.0
    worst_slack = -np.inf
    for name in ("compass", "fivelink"):
        model = M.get_model(name)
        rng = np.random.default_rng(101)
        for _ in range(1000):
            x = random_guard_state(model, rng)
            out = hybrid.impact_map(model, x)
            J_c = M.extended_contact_jacobian(model, x.q)
            residual = float(np.max(np.abs(J_c @ out.qd_plus_extended)))
            ke_minus = M.kinetic_energy(model, x.q, x.qd)
            ke_plus = M.kinetic_energy(model, out.post_state.q, out.post_state.qd)
            worst_residual = max(worst_residual, residual)
            worst_slack = max(worst_slack, ke_plus - ke_minus)
            assert residual <= 1e-10
            assert ke_plus <= ke_minus + 1e-10
    elapsed = time.time() - t0
    assert elapsed < 10.0
    _report(1, "impact map",
            f"2000 impacts, constraint residual ≤ {worst_residual:.2e}, "
            f"max KE gain {worst_slack:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 2: dynamics oracles
# ---------------------------------------------------------------------------

def test_criterion_2_dynamics_oracles():
    from scipy.integrate import solve_ivp

    from test_model import fd_hessian

    t0 = time.time()
    # mass matrix vs kinetic-energy Hessian
    mass_err = 0.0
    for name in ("compass", "fivelink"):
        model = M.get_model(name)
        rng = np.random.default_rng(102)
        for _ in range(5):
            q = rng.uniform(-1.0, 1.0, model.n_q)
            D = M.mass_matrix(model, q)
            H = fd_hessian(lambda qd: M.kinetic_energy(model, q, qd),
                           np.zeros(model.n_q))
            mass_err = max(mass_err, float(np.max(np.abs(D - H))))
    assert mass_err <= 1e-6

    # unforced flow conserves total energy over 1 s
    energy_err = 0.0
    for name in ("compass", "fivelink"):
        model = M.get_model(name)
        n = model.n_q
        rng = np.random.default_rng(103)
        z0 = np.concatenate([rng.uniform(-0.3, 0.3, n), rng.uniform(-0.5, 0.5, n)])

        def rhs(t, z, model=model, n=n):
            return M.continuous_dynamics(model, M.State(z[:n], z[n:]),
                                         np.zeros(model.n_u))

        sol = solve_ivp(rhs, (0.0, 1.0), z0, rtol=1e-11, atol=1e-13)
        e0 = M.total_energy(model, M.State(z0[:n], z0[n:]))
        e1 = M.total_energy(model, M.State(sol.y[:n, -1], sol.y[n:, -1]))
        energy_err = max(energy_err, abs(e1 - e0))
    assert energy_err <= 1e-6

    # Bezier derivatives vs central differences
    rng = np.random.default_rng(104)
    bez = G.BezierSet(rng.normal(size=(4, 8)))
    eps = 1e-6
    bez_err = 0.0
    for tau in np.linspace(0.02, 0.98, 40):
        d1 = G.bezier_eval(bez, tau, 1)
        fd1 = (G.bezier_eval(bez, tau + eps, 0)
               - G.bezier_eval(bez, tau - eps, 0)) / (2 * eps)
        bez_err = max(bez_err, float(np.max(np.abs(d1 - fd1))))
    assert bez_err <= 1e-6

    elapsed = time.time() - t0
    assert elapsed < 30.0
    _report(2, "dynamics oracles",
            f"mass {mass_err:.2e}, energy {energy_err:.2e}, "
            f"bezier {bez_err:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 3: barrier algebra and r* estimation
# ---------------------------------------------------------------------------

def _grid_oracle(records, alpha, r_max, resolution):
    """Vectorized brute-force oracle: largest feasible grid value of r."""
    grid = np.arange(0.0, r_max + resolution / 2, resolution)
    feasible = np.ones(grid.size, dtype=bool)
    for rec in records:
        active = grid >= rec.d0
        if rec.outcome != "mapped":
            feasible &= ~active
        else:
            feasible &= ~(active & (rec.d1 > (1 - alpha) * rec.d0 + alpha * grid))
    return float(grid[feasible].max()) if feasible.any() else 0.0


def _records(pairs, escaped=()):
    recs = [inv.SampleRecord(np.array([np.sqrt(d0)]), float(d0), float(d1), "mapped")
            for d0, d1 in pairs]
    for d0 in escaped:
        recs.append(inv.SampleRecord(np.array([np.sqrt(d0)]), float(d0),
                                     float("nan"), "escaped"))
    return recs


def test_criterion_3_barrier_algebra_and_r_star():
    t0 = time.time()
    # printed condition vs reduced form, exactly, on 1e4 random tuples
    rng = np.random.default_rng(105)
    mismatches = 0
    for _ in range(10_000):
        d0 = float(rng.uniform(0, 3))
        d1 = float(rng.uniform(0, 3))
        r = float(rng.uniform(0, 3))
        alpha = float(rng.uniform(0.01, 0.99))
        h0 = r - d0
        h1 = r - d1
        printed = (h1 - h0) >= -alpha * h0
        reduced = d1 <= (1 - alpha) * d0 + alpha * r
        if printed != reduced:
            mismatches += 1
    assert mismatches == 0

    # analytic cases
    r_max = 2.0
    resolution = 1e-6 * r_max
    xs = np.linspace(0.0, np.sqrt(r_max), 400)
    ident = inv.estimate_r_star(_records([(x**2, x**2) for x in xs]), 0.05, r_max)
    assert ident == r_max

    square = inv.estimate_r_star(_records([(x**2, x**4) for x in xs]), 0.05, r_max)
    assert abs(square - 1.0) < 2e-2   # converges to 1 as samples densify

    d0s = np.geomspace(1e-12, r_max - 0.01, 200)
    expand = inv.estimate_r_star(_records([(d, 2.25 * d) for d in d0s]), 0.05, r_max)
    assert expand <= 1e-9

    # 100 random record sets vs the grid oracle at resolution 1e-6 * r_max
    rng = np.random.default_rng(106)
    worst_gap = 0.0
    for trial in range(100):
        n = int(rng.integers(3, 20))
        d0 = np.sort(rng.uniform(0, r_max, n))
        d1 = d0 * rng.uniform(0.3, 1.6, n)
        escaped = (float(rng.uniform(0, r_max)),) if trial % 5 == 0 else ()
        records = _records(list(zip(d0, d1)), escaped=escaped)
        alpha = float(rng.uniform(0.01, 0.5))
        est = inv.estimate_r_star(records, alpha, r_max)
        oracle = _grid_oracle(records, alpha, r_max, resolution)
        worst_gap = max(worst_gap, abs(est - oracle))
        assert abs(est - oracle) <= 2 * resolution, (trial, est, oracle)

    elapsed = time.time() - t0
    assert elapsed < 60.0
    _report(3, "barrier algebra",
            f"0/10000 mismatches, analytic cases ({ident:.6f}, "
            f"{square:.4f}, {expand:.1e}), oracle gap ≤ {worst_gap:.2e}, "
            f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criteria 4 & 5 share one synthesized gait
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def synthesized(five_link):
    t0 = time.time()
    gait = synthesize_gait(five_link, DEFAULT_ESSENTIALS, seed=0)
    return {"gait": gait, "synthesis_time": time.time() - t0}


def test_criterion_4_stable_gait_exists(five_link, synthesized):
    t0 = time.time()
    gait = synthesized["gait"]
    gains = TrackingGains()
    field = closed_loop_field(five_link, gait, gains)

    report = synthesis_report(five_link, gait, gains)
    assert report["hzd_residual"] <= 1e-6

    fp = find_fixed_point(field, five_link, gait.fixed_point)
    assert fp.residual <= 1e-8
    assert fp.spectral_radius < 1.0

    result = sim_mod.rollout(field, five_link, fp.x_star, 50)
    assert result.termination == "completed"
    assert result.steps_taken == 50

    elapsed = synthesized["synthesis_time"] + (time.time() - t0)
    assert elapsed < 600.0
    _report(4, "stable gait",
            f"hzd {report['hzd_residual']:.2e}, fixed point {fp.residual:.2e}, "
            f"rho {fp.spectral_radius:.4f}, 50/50 steps, {elapsed:.0f}s")


def test_criterion_5_nontrivial_certification(five_link, synthesized):
    t0 = time.time()
    gait = synthesized["gait"]
    field = closed_loop_field(five_link, gait, TrackingGains())
    fp = find_fixed_point(field, five_link, gait.fixed_point)
    chart = default_reduced_chart(five_link, gait, fp.x_star)

    cert = certify(field, five_link, chart,
                   BarrierParams(alpha=0.05, r_max=2.0, n_samples=200, seed=0))
    assert cert.r_star > 0.0

    result = verify_certificate(field, five_link, chart, cert,
                                horizon=10, n_fresh=50, seed=1)
    assert result["n_samples"] == 50
    assert result["violations"] == 0

    elapsed = time.time() - t0
    assert elapsed < 900.0
    _report(5, "certification",
            f"r* = {cert.r_star:.4f}, 0/50 escapes over 10 steps, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# Criterion 6: ablation — robustness objective vs stability-only
# ---------------------------------------------------------------------------

def test_criterion_6_objective_ablation(five_link):
    t0 = time.time()
    # identical seed and budget for both arms; lean synthesis effort keeps
    # the two 10x5 loops inside the runtime budget on one core
    def loop_config():
        return LoopConfig(
            iterations=10, gaits_per_iteration=5, seed=0,
            bounds=SearchBounds(step_length=(0.26, 0.36),
                                step_duration=(0.50, 0.65),
                                step_height=(0.04, 0.065)),
            stability_threshold=50,
            barrier=BarrierParams(alpha=0.05, r_max=2.0, n_samples=25, seed=0),
            synth_starts=1, synth_max_nfev=60,
        )

    synth_options = SimOptions(rtol=1e-6, atol=1e-8)
    arms = {}
    for objective in ("robustness", "stability_only"):
        arms[objective] = optimize_loop(five_link, loop_config(),
                                        objective=objective,
                                        synth_options=synth_options)
        assert arms[objective]["best_gait"] is not None

    # post-hoc robustness evaluation, identical protocol for both arms
    posthoc = {}
    for objective, result in arms.items():
        gait = result["best_gait"]
        field = closed_loop_field(five_link, gait, TrackingGains())
        fp = find_fixed_point(field, five_link, gait.fixed_point)
        chart = default_reduced_chart(five_link, gait, fp.x_star)
        cert = certify(field, five_link, chart,
                       BarrierParams(alpha=0.05, r_max=2.0, n_samples=100, seed=5))
        posthoc[objective] = cert.r_star

    assert posthoc["robustness"] >= posthoc["stability_only"]
    elapsed = time.time() - t0
    assert elapsed < 7200.0
    _report(6, "objective ablation",
            f"r*(robustness) = {posthoc['robustness']:.4f} ≥ "
            f"r*(stability-only) = {posthoc['stability_only']:.4f}, "
            f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# Criterion 7: deterministic CLI re-runs
# ---------------------------------------------------------------------------

def test_criterion_7_cli_determinism(tmp_path):
    t0 = time.time()
    import importlib.resources
    gait_path = str(importlib.resources.files("steprobust").joinpath(
        "data/fivelink_nominal.json"))

    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        "[barrier]\n"
        "n_samples = 8\n"
        "r_max = 0.05\n"
        "seed = 3\n"
        "\n"
        "[loop]\n"
        "iterations = 1\n"
        "gaits_per_iteration = 2\n"
        "seed = 3\n"
        "synth_starts = 1\n"
        "synth_max_nfev = 60\n"
        "step_length = [0.29, 0.31]\n"
        "step_duration = [0.53, 0.57]\n"
        "step_height = [0.045, 0.055]\n"
    )

    certs = []
    for run in (1, 2):
        out = tmp_path / f"cert{run}"
        assert cli.main(["-c", str(cfg_path), "certify", gait_path,
                         "-d", str(out)]) == cli.EXIT_OK
        certs.append(out)
    assert (certs[0] / "certificate.json").read_bytes() == \
        (certs[1] / "certificate.json").read_bytes()
    assert (certs[0] / "samples.csv").read_bytes() == \
        (certs[1] / "samples.csv").read_bytes()

    opts = []
    for run in (1, 2):
        out = tmp_path / f"opt{run}"
        assert cli.main(["-c", str(cfg_path), "optimize",
                         "-d", str(out)]) == cli.EXIT_OK
        opts.append(out)
    assert (opts[0] / "history.jsonl").read_bytes() == \
        (opts[1] / "history.jsonl").read_bytes()
    assert (opts[0] / "best_gait.json").read_bytes() == \
        (opts[1] / "best_gait.json").read_bytes()

    elapsed = time.time() - t0
    _report(7, "determinism",
            f"certify and optimize re-runs byte-identical, {elapsed:.0f}s")
