"""Discrete-time barrier certification of forward-invariant sets.

The candidate invariant set is the sublevel set {H >= 0} of
``H(x) = r - ||x - x_star||^2`` over the reduced guard state, so r and the
reported robustness metric r_star are squared-radius quantities (the set's
Euclidean radius is sqrt(r)). The barrier decrease condition
``H(P(x)) - H(x) >= -alpha H(x)`` reduces algebraically to
``d1 <= (1 - alpha) d0 + alpha r`` with d0, d1 the squared distances before
and after one return-map step; the largest feasible r over a sample set is
found exactly by a sorted scan over the d0 breakpoints. Samples that escape
the section or fail reconstruction are hard violations: they cap r_star at
their own d0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import sim as sim_mod
from .errors import InputDomainError, OutsideSectionError, ReconstructionError, StepRobustError
from .poincare import ReducedChart, reduced_return_map
from .sim import SimOptions

CERT_FORMAT = "cert-v1"


@dataclass(frozen=True)
class BarrierParams:
    alpha: float = 0.05
    r_max: float = 2.0           # squared-radius bound (reduced units^2)
    n_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputDomainError("alpha must be in (0, 1)")
        if self.r_max <= 0:
            raise InputDomainError("r_max must be positive")
        if self.n_samples < 1:
            raise InputDomainError("n_samples must be at least 1")


@dataclass(frozen=True)
class SampleRecord:
    x0_red: np.ndarray
    d0: float                    # ||x0 - x_star||^2
    d1: float                    # ||P_X(x0) - x_star||^2, nan unless mapped
    outcome: str                 # mapped | escaped | reconstruction_failed


@dataclass(frozen=True)
class InvarianceCertificate:
    r_star: float
    alpha: float
    r_max: float
    n_samples: int
    seed: int
    fixed_point_red: np.ndarray
    samples: tuple
    gait_id: str = ""


def barrier_value(x_red: np.ndarray, x_star_red: np.ndarray, r: float) -> float:
    """H(x) = r - ||x - x_star||^2."""
    diff = np.asarray(x_red, dtype=float) - np.asarray(x_star_red, dtype=float)
    return float(r - diff @ diff)


def sample_ball(x_star_red: np.ndarray, r_max: float, n_samples: int,
                seed: int) -> np.ndarray:
    """Uniform samples over the sublevel set {||x - x_star||^2 <= r_max},
    i.e. the ball of Euclidean radius sqrt(r_max). Deterministic given seed."""
    if n_samples < 1:
        raise InputDomainError("n_samples must be at least 1")
    center = np.asarray(x_star_red, dtype=float)
    d = center.size
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_samples, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.sqrt(r_max) * rng.uniform(size=n_samples) ** (1.0 / d)
    return center[None, :] + radii[:, None] * dirs


def evaluate_samples(field, model, chart: ReducedChart, samples: np.ndarray,
                     options: SimOptions = SimOptions()) -> list:
    """One return-map step per sample; failures become record outcomes,
    never batch aborts. Samples are independent and order-preserving."""
    x_star_red = chart.project(chart.x_star)
    records = []
    for x0 in np.atleast_2d(samples):
        d0 = float(np.sum((x0 - x_star_red) ** 2))
        try:
            x1 = reduced_return_map(field, model, chart, x0, options)
        except ReconstructionError:
            records.append(SampleRecord(x0.copy(), d0, float("nan"), "reconstruction_failed"))
            continue
        except (OutsideSectionError, StepRobustError):
            records.append(SampleRecord(x0.copy(), d0, float("nan"), "escaped"))
            continue
        d1 = float(np.sum((x1 - x_star_red) ** 2))
        records.append(SampleRecord(x0.copy(), d0, d1, "mapped"))
    return records


def estimate_r_star(records, alpha: float, r_max: float) -> float:
    """Largest r in [0, r_max] such that every record with d0 <= r is mapped
    and satisfies d1 <= (1 - alpha) d0 + alpha r.

    Exact sorted scan: each record contributes the binding constraint
    r >= g_i := (d1_i - (1 - alpha) d0_i) / alpha once d0_i <= r (infinite
    for failed samples); feasibility on the interval between consecutive d0
    breakpoints is a simple max-prefix comparison.
    """
    if not records:
        raise InputDomainError("records must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise InputDomainError("alpha must be in (0, 1)")
    recs = sorted(records, key=lambda rec: rec.d0)
    d0s = np.array([rec.d0 for rec in recs])
    gs = np.array([
        (rec.d1 - (1.0 - alpha) * rec.d0) / alpha if rec.outcome == "mapped"
        else np.inf
        for rec in recs
    ])
    n = len(recs)
    # prefix_max[k] = binding constraint from the first k records
    prefix_max = np.concatenate([[0.0], np.maximum.accumulate(gs)])
    # Windows between consecutive d0 breakpoints, scanned largest first.
    # On [d0s[k-1], d0s[k]) the active prefix is the first k records, so the
    # feasible part is [max(lo, prefix_max[k]), hi); its supremum is hi.
    for k in range(n, -1, -1):
        lo = 0.0 if k == 0 else float(d0s[k - 1])
        if lo > r_max:
            continue
        if k == n:
            hi = r_max
            if prefix_max[k] <= hi:
                return float(hi)
        else:
            hi = min(float(d0s[k]), r_max)
            if lo < hi and prefix_max[k] < hi:
                return float(hi)
    return 0.0


def certify(field, model, chart: ReducedChart, params: BarrierParams,
            options: SimOptions = SimOptions(), gait_id: str = "") -> InvarianceCertificate:
    """Full sampling protocol: draw, simulate one cycle each, solve for r*."""
    x_star_red = chart.project(chart.x_star)
    samples = sample_ball(x_star_red, params.r_max, params.n_samples, params.seed)
    records = evaluate_samples(field, model, chart, samples, options)
    r_star = estimate_r_star(records, params.alpha, params.r_max)
    return InvarianceCertificate(
        r_star=r_star, alpha=params.alpha, r_max=params.r_max,
        n_samples=params.n_samples, seed=params.seed,
        fixed_point_red=x_star_red, samples=tuple(records), gait_id=gait_id)


def verify_certificate(field, model, chart: ReducedChart,
                       cert: InvarianceCertificate, horizon: int = 10,
                       n_fresh: int = 50, seed: int = 1,
                       options: SimOptions = SimOptions()) -> dict:
    """Multi-step re-simulation of fresh in-set samples: every iterate must
    stay in the sublevel set {d <= r*}. Violations are data, not errors."""
    if cert.r_star <= 0.0:
        return {"n_samples": 0, "violations": 0, "worst_margin": None,
                "median_distance_by_step": [], "violating_trajectories": []}
    x_star_red = np.asarray(cert.fixed_point_red, dtype=float)
    fresh = sample_ball(x_star_red, cert.r_star, n_fresh, seed)
    violations = 0
    worst_margin = np.inf          # min over samples/steps of (r* - d)
    distances = np.full((n_fresh, horizon + 1), np.nan)
    violating = []
    for i, x0 in enumerate(fresh):
        x_red = np.asarray(x0, dtype=float)
        traj = [x_red.copy()]
        distances[i, 0] = float(np.sum((x_red - x_star_red) ** 2))
        violated = False
        for k in range(1, horizon + 1):
            try:
                x_red = reduced_return_map(field, model, chart, x_red, options)
            except (ReconstructionError, OutsideSectionError, StepRobustError):
                violated = True
                break
            traj.append(x_red.copy())
            d = float(np.sum((x_red - x_star_red) ** 2))
            distances[i, k] = d
            worst_margin = min(worst_margin, cert.r_star - d)
            if d > cert.r_star:
                violated = True
                break
        if violated:
            violations += 1
            violating.append([list(map(float, p)) for p in traj])
    medians = [float(np.nanmedian(distances[:, k])) for k in range(horizon + 1)]
    return {
        "n_samples": int(n_fresh),
        "violations": int(violations),
        "worst_margin": None if not np.isfinite(worst_margin) else float(worst_margin),
        "median_distance_by_step": medians,
        "violating_trajectories": violating,
    }


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def certificate_to_dict(cert: InvarianceCertificate) -> dict:
    return {
        "format": CERT_FORMAT,
        "gait_id": cert.gait_id,
        "alpha": cert.alpha,
        "r_max": cert.r_max,
        "n_samples": cert.n_samples,
        "seed": cert.seed,
        "r_star": cert.r_star,
        "fixed_point": [float(v) for v in cert.fixed_point_red],
        "samples": [
            {
                "x0": [float(v) for v in rec.x0_red],
                "d0": rec.d0,
                "d1": None if np.isnan(rec.d1) else rec.d1,
                "outcome": rec.outcome,
            }
            for rec in cert.samples
        ],
    }


def certificate_from_dict(doc: dict) -> InvarianceCertificate:
    if doc.get("format") != CERT_FORMAT:
        raise InputDomainError(f"not a {CERT_FORMAT} document")
    samples = tuple(
        SampleRecord(
            x0_red=np.array(s["x0"], dtype=float),
            d0=float(s["d0"]),
            d1=float("nan") if s["d1"] is None else float(s["d1"]),
            outcome=s["outcome"],
        )
        for s in doc["samples"]
    )
    return InvarianceCertificate(
        r_star=float(doc["r_star"]), alpha=float(doc["alpha"]),
        r_max=float(doc["r_max"]), n_samples=int(doc["n_samples"]),
        seed=int(doc["seed"]),
        fixed_point_red=np.array(doc["fixed_point"], dtype=float),
        samples=samples, gait_id=doc.get("gait_id", ""))


def save_certificate(cert: InvarianceCertificate, path,
                     extra: Optional[dict] = None) -> None:
    doc = certificate_to_dict(cert)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_certificate(path) -> InvarianceCertificate:
    with open(path) as fh:
        return certificate_from_dict(json.load(fh))


def samples_to_csv(cert: InvarianceCertificate, path) -> None:
    """Sample records as CSV for external plotting."""
    dim = len(cert.fixed_point_red)
    header = ",".join([f"x0_{i}" for i in range(dim)] + ["d0", "d1", "outcome"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for rec in cert.samples:
            x0 = ",".join(repr(float(v)) for v in rec.x0_red)
            d1 = "" if np.isnan(rec.d1) else repr(rec.d1)
            fh.write(f"{x0},{rec.d0!r},{d1},{rec.outcome}\n")
