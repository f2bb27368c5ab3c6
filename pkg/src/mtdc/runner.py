"""Command implementations behind the CLI: analyze, simulate, verify, sweep.

Each returns plain JSON-serialisable dictionaries; the CLI layer only does
I/O and exit codes.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .analysis import (
    NOTE_ABS_PM,
    NOTE_LYAP_C,
    NOTE_LYAP_ETA,
    EQUILIBRIUM_RESIDUAL,
    TAIL_DRIFT,
    NonUniformGains,
    NotConverged,
    SingularSystem,
    bounds_decentralized,
    bounds_distributed,
    certify_stability,
    equilibrium,
    matching_bounds,
    observable_states,
    objective_margins,
    tail_drift,
    verify_objective,
)
from .plant import Config, assemble
from .scenario import SCHEMA_VERSION, ScenarioConfig, build
from .sim import Scenario, Trajectory, integrate, lyapunov_reference, sweep

GAMMA_LADDER = (1e-2, 1e-4, 1e-6)
DELTA_LADDER = (5.0, 50.0, 500.0)
LYAP_SLACK = 1e-9
ETA_PRIME_RTOL = 1e-3
TAIL_MATCH = 1e-6
# sums below this multiple of ||P^m||_inf are rounding noise around an exact zero
ZERO_AVERAGE_FLOOR = 1e-9
ZERO_AVERAGE_LIMIT = 1e-3

BOUNDS_UNAVAILABLE = "bounds need k_omega, k_v and k_droop identical in all areas (uniform-gain assumption)"


def _analysis_setup(scn: Scenario):
    params = scn.params.with_disturbance(scn.p_m_final)
    sys = assemble(params, scn.gains, scn.dc, scn.comm, scn.config)
    return params, sys


def bounds_section(scn: Scenario, params) -> dict:
    try:
        dec = bounds_decentralized(params, scn.gains, scn.dc)
        dist = bounds_distributed(params, scn.gains, scn.dc)
    except NonUniformGains:
        return {"available": False, "reason": BOUNDS_UNAVAILABLE}
    return {"available": True, "decentralized": dec.to_dict(), "distributed": dist.to_dict()}


def analyze(cfg: ScenarioConfig) -> dict:
    """Stability certificate, equilibrium and bounds for the post-event disturbance."""
    scn = build(cfg)
    params, sys = _analysis_setup(scn)
    cert = certify_stability(sys)
    report = {"schema": SCHEMA_VERSION, "config": cfg.to_dict(), "stability": cert.to_dict()}
    eq = None
    try:
        eq = equilibrium(sys)
        report["equilibrium"] = {"status": "ok", **eq.to_dict()}
    except SingularSystem as exc:
        if scn.config not in (Config.SECONDARY_COMPLETE, Config.SECONDARY_PROJECTED):
            raise
        ladder = sweep(scn.with_gains(), "gamma", GAMMA_LADDER)
        report["equilibrium"] = {
            "status": "singular",
            "message": str(exc),
            "gamma_ladder": [pt.to_dict() for pt in ladder],
        }
    report["bounds"] = bounds_section(scn, params)
    verdicts = {}
    if eq is not None and report["bounds"]["available"]:
        b = matching_bounds(scn.config, params, scn.gains, scn.dc)
        verdicts["equilibrium_vs_bounds"] = objective_margins(
            eq.omega_hat, eq.v_hat, eq.p_gen_asym, params.p_m, b).to_dict()
    report["verdicts"] = verdicts
    report["notes"] = [NOTE_LYAP_C, NOTE_LYAP_ETA, NOTE_ABS_PM]
    return report


def trajectory_columns(traj: Trajectory) -> tuple[list[str], np.ndarray]:
    n = traj.omega.shape[1]
    header = (["t"] + [f"omega_{i}" for i in range(1, n + 1)] + [f"v_{i}" for i in range(1, n + 1)]
              + [f"pgen_{i}" for i in range(1, n + 1)] + ["lyap_w"])
    data = np.column_stack([traj.times, traj.omega, traj.v, traj.p_gen, traj.w])
    return header, data


def write_csv(traj: Trajectory, path) -> None:
    header, data = trajectory_columns(traj)
    np.savetxt(path, data + 0.0, fmt="%.12g", delimiter=",", header=",".join(header), comments="")


def simulate(cfg: ScenarioConfig, out_csv=None) -> tuple[dict, Trajectory]:
    scn = build(cfg)
    report = analyze(cfg)
    traj = integrate(scn)
    if out_csv is not None:
        write_csv(traj, out_csv)
    sim_info = {
        "samples": int(traj.times.shape[0]),
        "substeps": int(traj.substeps),
        "h": float(traj.h),
        "step_warning": bool(traj.step_warning),
        "tail_drift": tail_drift(observable_states(traj.states, scn.config, scn.params.n)),
    }
    if report["bounds"]["available"]:
        b = matching_bounds(scn.config, traj_params(scn), scn.gains, scn.dc)
        try:
            sim_info["objective"] = verify_objective(traj, b, scn.params).to_dict()
        except NotConverged as exc:
            sim_info["objective"] = {"passed": False, "status": "not-converged", "message": str(exc)}
    report["simulation"] = sim_info
    return report, traj


def traj_params(scn: Scenario):
    return scn.params.with_disturbance(scn.p_m_final)


def lyapunov_increase(traj: Trajectory) -> float:
    """Largest one-sample increase of W inside constant-forcing segments."""
    w = traj.w
    same = traj.segments[1:] == traj.segments[:-1]
    d = np.diff(w)[same]
    d = d[np.isfinite(d)]
    return float(np.max(d)) if d.size else 0.0


def zero_average_values(scn: Scenario, ladder=DELTA_LADDER, parameter="delta"):
    """``(|1^T omega_hat|, |1^T v_hat|)`` at the equilibrium for each ladder value."""
    out = []
    for pt in sweep(scn, parameter, ladder):
        if pt.equilibrium is None:
            raise SingularSystem(pt.error)
        out.append((abs(float(np.sum(pt.equilibrium.omega_hat))), abs(float(np.sum(pt.equilibrium.v_hat)))))
    return out


def eta_prime_target(params, gains) -> float:
    """Limit of the averaged integral state as gamma goes to zero (uniform gains).

    Summing the frequency rows at equilibrium with zero average deviations
    gives ``n k_v k_droop_i / k_omega * eta' = 1^T P^m``.
    """
    n = params.n
    return float(gains.k_omega[0] * np.sum(params.p_m) / (n * gains.k_v[0] * gains.k_droop_i[0]))


def gamma_ladder(scn: Scenario, ladder=GAMMA_LADDER) -> list[tuple[float, float]]:
    """Averaged integral state of the projected form at each gamma."""
    proj = replace(scn, config=Config.SECONDARY_PROJECTED)
    out = []
    for pt in sweep(proj, "gamma", ladder):
        if pt.equilibrium is None:
            raise SingularSystem(pt.error)
        out.append((pt.value, float(np.mean(pt.equilibrium.eta))))
    return out


def clamp_noise(values, scale):
    floor = ZERO_AVERAGE_FLOOR * scale
    return [0.0 if v <= floor else v for v in values]


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def non_increasing(values) -> bool:
    return all(b <= a for a, b in zip(values, values[1:]))


def verify(cfg: ScenarioConfig) -> list[dict]:
    """Run every applicable invariant on a scenario; returns ordered check records."""
    scn = build(cfg)
    params, sys = _analysis_setup(scn)
    checks = []

    def add(name, passed, detail):
        checks.append({"check": name, "passed": bool(passed), "detail": detail})

    cert = certify_stability(sys)
    add("q1-positive-definite", cert.q1_pd and cert.q1_schur_pd, cert.method_notes)
    lasalle = scn.config is Config.SECONDARY_COMPLETE and scn.gains.gamma == 0.0
    add("stability-certificate", cert.hurwitz or (lasalle and cert.q1_pd), cert.method_notes)

    eq = None
    try:
        eq = equilibrium(sys)
        add("equilibrium-residual", eq.residual <= EQUILIBRIUM_RESIDUAL, f"residual {eq.residual:.3e}")
    except SingularSystem as exc:
        add("equilibrium-residual", lasalle, f"singular system, outputs referred to projected form: {exc}")

    traj = integrate(scn)
    drift = tail_drift(observable_states(traj.states, scn.config, params.n))
    add("trajectory-converged", drift < TAIL_DRIFT, f"tail drift {drift:.3e} (limit {TAIL_DRIFT:g})")

    ref = lyapunov_reference(params, scn.gains, scn.dc, scn.comm, scn.config)
    n = params.n
    cmp = slice(0, 2 * n) if lasalle else slice(0, ref.shape[0])
    gap = float(np.max(np.abs(traj.states[-1, cmp] - ref[cmp])))
    add("tail-matches-equilibrium", gap <= TAIL_MATCH, f"max gap {gap:.3e} (limit {TAIL_MATCH:g})")

    inc = lyapunov_increase(traj)
    add("lyapunov-nonincreasing", inc <= LYAP_SLACK, f"largest step increase {inc:.3e}")

    if scn.gains.uniform:
        b = matching_bounds(scn.config, params, scn.gains, scn.dc)
        try:
            v = verify_objective(traj, b, scn.params)
            add("bound-dominance", v.passed, f"smallest margin {min(v.gen_margin.min(), v.v_margin.min(), v.omega_margin.min()):.3e}")
        except NotConverged as exc:
            add("bound-dominance", False, str(exc))
    else:
        add("bound-dominance", True, "skipped: " + BOUNDS_UNAVAILABLE)

    pm_scale = float(np.max(np.abs(params.p_m))) or 1.0
    if scn.config is Config.SECONDARY_DISTRIBUTED:
        vals = zero_average_values(scn)
        w_sums = clamp_noise([a for a, _ in vals], pm_scale)
        v_sums = clamp_noise([b for _, b in vals], pm_scale)
        ok = non_increasing(w_sums) and non_increasing(v_sums) and max(w_sums[-1], v_sums[-1]) <= ZERO_AVERAGE_LIMIT * pm_scale
        add("zero-average-delta-ladder", ok, f"|sum omega_hat| {w_sums}, |sum v_hat| {v_sums} over delta {list(DELTA_LADDER)}")
    elif scn.config in (Config.SECONDARY_COMPLETE, Config.SECONDARY_PROJECTED) and scn.gains.uniform:
        target = eta_prime_target(params, scn.gains)
        ladder = gamma_ladder(scn)
        final = ladder[-1][1]
        rel = abs(final - target) / abs(target) if target else abs(final)
        add("eta-prime-gamma-ladder", rel <= ETA_PRIME_RTOL,
            f"eta' {[f'{e:.6g}' for _, e in ladder]} over gamma {list(GAMMA_LADDER)}, target {target:.6g}, "
            f"relative error {rel:.3e}")
    return checks


def sweep_report(cfg: ScenarioConfig, parameter: str, values) -> dict:
    scn = build(cfg)
    return {"schema": SCHEMA_VERSION, "parameter": parameter,
            "points": [pt.to_dict() for pt in sweep(scn, parameter, values)]}
