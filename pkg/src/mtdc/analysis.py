"""Equilibria, stability certificates, Lyapunov values and static error bounds."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import densela
from .densela import SingularMatrix, cholesky_pd_check, jacobi_sym_eig, lu_solve
from .netgraph import WeightedGraph, laplacian
from .plant import (
    ClosedLoopSystem,
    Config,
    ControllerGains,
    PlantParams,
    controller_outputs,
    split_state,
    to_absolute,
)

EQUILIBRIUM_RESIDUAL = 1e-9
TAIL_FRACTION = 0.1
TAIL_DRIFT = 1e-6
# certificate accepted when ||A^T P + P A + I||_2 stays below this
CERT_RESIDUAL = 0.5

NOTE_LYAP_C = ("Lyapunov voltage term uses the terminal capacitances, "
               "W_V = (V_nom/2) * sum_i C_i * v_bar_i^2")
NOTE_LYAP_ETA = ("projected integral state enters W with weight n/2, "
                 "which is the weight that cancels its coupling to the frequencies")
NOTE_ABS_PM = "static error bounds use max_i |P^m_i| in every term"


class SingularSystem(ArithmeticError):
    pass


class NonUniformGains(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


def _floats(x):
    return [float(v) for v in np.ravel(x)]


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    x0: np.ndarray
    omega_hat_avg: float
    v_hat_avg: float
    p_gen_asym: np.ndarray
    residual: float
    config: Config

    @property
    def n(self) -> int:
        return self.p_gen_asym.shape[0]

    @property
    def omega_hat(self) -> np.ndarray:
        return self.x0[:self.n]

    @property
    def v_hat(self) -> np.ndarray:
        return self.x0[self.n:2 * self.n]

    @property
    def eta(self) -> np.ndarray:
        return self.x0[2 * self.n:]

    def to_dict(self) -> dict:
        return {
            "config": self.config.value,
            "x0": _floats(self.x0),
            "omega_hat_avg": float(self.omega_hat_avg),
            "v_hat_avg": float(self.v_hat_avg),
            "p_gen_asym": _floats(self.p_gen_asym),
            "residual": float(self.residual),
        }


def equilibrium(sys: ClosedLoopSystem) -> EquilibriumReport:
    """Unique equilibrium ``x0 = -A^{-1} b`` and the derived steady-state outputs."""
    n = sys.params.n
    try:
        x0 = lu_solve(sys.a, -sys.b, refine=2)
    except SingularMatrix as exc:
        raise SingularSystem(f"{sys.config.value}: system matrix is singular ({exc})") from exc
    residual = densela.max_norm(sys.a @ x0 + sys.b)
    xa = to_absolute(sys.params, x0, sys.config)
    omega, v, eta = split_state(xa, sys.config, n)
    p_gen, _ = controller_outputs(sys.params, sys.gains, omega, v, sys.config, eta)
    return EquilibriumReport(
        x0=x0,
        omega_hat_avg=float(np.mean(x0[:n])),
        v_hat_avg=float(np.mean(x0[n:2 * n])),
        p_gen_asym=p_gen,
        residual=residual,
        config=sys.config,
    )


@dataclass(frozen=True)
class StabilityCertificate:
    hurwitz: bool
    lyap_p_min_pivot: float
    q1_pd: bool
    method_notes: str
    lyap_residual: float = float("nan")
    q1_schur_pd: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def q1_matrix(gains: ControllerGains) -> np.ndarray:
    """Quadratic form bounding the Lyapunov derivative in the (omega, V) states."""
    kw, kv, kd = gains.k_omega, gains.k_v, gains.k_droop
    return np.block([[np.diag(kw / kv * (kw + kd)), -np.diag(kw)],
                     [-np.diag(kw), np.diag(kv)]])


def q1_positive_definite(gains: ControllerGains) -> tuple[bool, bool]:
    """Check Q1 by Cholesky and by its Schur complement ``K^w (K^V)^-1 K^droop``.

    Cholesky runs on the unit-diagonal congruent form ``D Q1 D``; definiteness
    is invariant under congruence and the scaling removes the ill
    conditioning caused by gains spanning several decades.
    """
    q1 = q1_matrix(gains)
    d = 1.0 / np.sqrt(np.diag(q1))
    chol = cholesky_pd_check(q1 * np.outer(d, d)).is_pd
    schur = bool(np.all(gains.k_omega / gains.k_v * gains.k_droop > 0))
    return chol, schur


def hurwitz_certificate(a) -> tuple[bool, float, float, str]:
    """Certify that every eigenvalue of ``a`` has negative real part.

    Solves ``B^T P + P B = -I`` for the balanced, power-of-two scaled
    ``B`` (exactly similar to a positive multiple of ``A``) and accepts when
    ``P`` passes the Cholesky test and the residual ``R`` satisfies
    ``||R||_2 < 1/2``, so that ``B^T P + P B`` is negative definite.
    """
    a = densela.as_matrix(a, square=True)
    try:
        densela.lu_factor(a)
    except SingularMatrix:
        return False, float("nan"), float("nan"), "system matrix singular, so not Hurwitz"
    _, bal = densela.balance(a)
    scale = 2.0 ** np.ceil(np.log2(max(densela.norm2_estimate(bal), np.finfo(float).tiny)))
    bal = bal / scale
    try:
        p = densela.lyapunov_solve(bal)
    except SingularMatrix:
        return False, float("nan"), float("nan"), "Lyapunov operator singular (eigenvalues symmetric about the imaginary axis)"
    res = densela.lyapunov_residual(bal, p)
    chol = cholesky_pd_check(p)
    ok = chol.is_pd and res * bal.shape[0] < CERT_RESIDUAL
    note = "Lyapunov equation solved and P positive definite" if ok else (
        "Lyapunov solution not positive definite" if not chol.is_pd else "Lyapunov residual too large")
    return ok, chol.min_pivot, res, note


def certify_stability(sys: ClosedLoopSystem) -> StabilityCertificate:
    hurwitz, pivot, res, note = hurwitz_certificate(sys.a)
    q1_pd, schur_pd = q1_positive_definite(sys.gains)
    notes = [note]
    if q1_pd != schur_pd:
        notes.append("Cholesky and Schur-complement tests of Q1 disagree")
    if not hurwitz and q1_pd:
        if sys.config is Config.SECONDARY_COMPLETE and sys.gains.gamma == 0.0:
            notes.append("marginal case: integral states orthogonal to the mean are undamped; "
                         "the outputs converge by LaSalle invariance since Q1 is positive definite")
        elif sys.config.has_secondary:
            notes.append("Q1 positive definite: Lyapunov derivative is negative semidefinite, LaSalle applies")
    return StabilityCertificate(hurwitz, pivot, q1_pd, "; ".join(notes), res, schur_pd)


def lyapunov_value(state, params: PlantParams, gains: ControllerGains, config: Config) -> np.ndarray | float:
    """Quadratic Lyapunov function of a state in deviation-from-equilibrium coordinates.

    ``W = 1/2 w^T K^w (K^V)^-1 diag(m) w + (V_nom/2) v^T C v + W_eta`` where
    ``W_eta`` is ``1/2 eta^T eta`` for distributed control and
    ``(n/2) eta'^2`` for the projected integral state. Complete-graph
    control is evaluated on its projection ``eta' = mean(eta)``. Leading
    axes of ``state`` are a batch.
    """
    config = Config(config)
    n = params.n
    x = np.asarray(state, dtype=float)
    w, v, eta = split_state(x, config, n)
    val = 0.5 * np.sum(gains.k_omega / gains.k_v * params.m * w * w, axis=-1)
    val = val + 0.5 * params.v_nom * np.sum(params.cap * v * v, axis=-1)
    if config is Config.SECONDARY_DISTRIBUTED:
        val = val + 0.5 * np.sum(eta * eta, axis=-1)
    elif config is Config.SECONDARY_PROJECTED:
        val = val + 0.5 * n * eta[..., 0] ** 2
    elif config is Config.SECONDARY_COMPLETE:
        val = val + 0.5 * n * np.mean(eta, axis=-1) ** 2
    return val if np.ndim(val) else float(val)


@dataclass(frozen=True)
class BoundSet:
    e_gen: float
    e_v: float
    e_omega: float
    variant: str
    delta_e_v: float
    delta_e_omega: float

    def to_dict(self) -> dict:
        return asdict(self)


def _bound_terms(params: PlantParams, gains: ControllerGains, dc: WeightedGraph):
    if not gains.uniform:
        raise NonUniformGains("static error bounds need k_omega, k_v and k_droop identical in all areas")
    n = params.n
    kw, kv, kd = float(gains.k_omega[0]), float(gains.k_v[0]), float(gains.k_droop[0])
    vn = params.v_nom
    lam = jacobi_sym_eig(laplacian(dc)).eigenvalues[1:]
    inv_sum = float(np.sum(1.0 / lam)) if n > 1 else 0.0
    pm_max = float(np.max(np.abs(params.p_m)))
    pm_sum = abs(float(np.sum(params.p_m)))
    shape = (n - 1) + kv / vn * inv_sum
    e_gen = kd * pm_max / (kd + kw) * shape
    e_v_dist = kw * pm_max / ((kd + kw) * vn) * inv_sum
    e_w_dist = pm_max / (kd + kw) * shape
    d_v = kw / (n * kd * kv) * pm_sum
    d_w = pm_sum / (n * kd)
    return e_gen, e_v_dist, e_w_dist, d_v, d_w


def bounds_decentralized(params: PlantParams, gains: ControllerGains, dc: WeightedGraph) -> BoundSet:
    """Static error bounds for droop-only control."""
    e_gen, e_v_dist, e_w_dist, d_v, d_w = _bound_terms(params, gains, dc)
    return BoundSet(e_gen, d_v + e_v_dist, d_w + e_w_dist, "decentralized", d_v, d_w)


def bounds_distributed(params: PlantParams, gains: ControllerGains, dc: WeightedGraph) -> BoundSet:
    """Static error bounds with secondary control in the limits gamma -> 0+, delta -> inf.

    The ``delta_*`` fields hold the closed-form gap to the decentralized
    bounds; they are checked against direct subtraction.
    """
    e_gen, e_v_dist, e_w_dist, d_v, d_w = _bound_terms(params, gains, dc)
    dec = bounds_decentralized(params, gains, dc)
    for name, closed, direct in (("e_v", d_v, dec.e_v - e_v_dist), ("e_omega", d_w, dec.e_omega - e_w_dist)):
        if abs(closed - direct) > 1e-12 * max(abs(closed), abs(dec.e_v), abs(dec.e_omega), 1e-300):
            raise ArithmeticError(f"{name} bound gap {direct!r} disagrees with closed form {closed!r}")
    return BoundSet(e_gen, e_v_dist, e_w_dist, "distributed", d_v, d_w)


def matching_bounds(config: Config, params: PlantParams, gains: ControllerGains, dc: WeightedGraph) -> BoundSet:
    if Config(config) is Config.DROOP_ONLY:
        return bounds_decentralized(params, gains, dc)
    return bounds_distributed(params, gains, dc)


@dataclass(frozen=True, eq=False)
class ObjectiveVerdict:
    passed: bool
    gen_error: np.ndarray
    v_error: np.ndarray
    omega_error: np.ndarray
    gen_margin: np.ndarray
    v_margin: np.ndarray
    omega_margin: np.ndarray
    p_gen_spread: float
    drift: float = 0.0
    bounds: BoundSet | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"passed": bool(self.passed), "drift": float(self.drift), "p_gen_spread": float(self.p_gen_spread)}
        for k in ("gen_error", "v_error", "omega_error", "gen_margin", "v_margin", "omega_margin"):
            out[k] = _floats(getattr(self, k))
        return out


def objective_margins(omega_hat, v_hat, p_gen, p_m, bounds: BoundSet, drift: float = 0.0) -> ObjectiveVerdict:
    """Compare steady-state errors against a bound set, area by area."""
    gen_err = np.abs(np.asarray(p_gen) + np.mean(p_m))
    v_err = np.abs(np.asarray(v_hat))
    w_err = np.abs(np.asarray(omega_hat))
    gm, vm, wm = bounds.e_gen - gen_err, bounds.e_v - v_err, bounds.e_omega - w_err
    passed = bool(np.all(gm >= 0) and np.all(vm >= 0) and np.all(wm >= 0))
    spread = float(np.max(p_gen) - np.min(p_gen))
    return ObjectiveVerdict(passed, gen_err, v_err, w_err, gm, vm, wm, spread, drift, bounds)


def tail_drift(states, fraction: float = TAIL_FRACTION) -> float:
    """Largest deviation from the final sample within the trailing window."""
    states = np.asarray(states)
    k = max(1, int(np.ceil(fraction * len(states))))
    tail = states[-k:]
    return float(np.max(np.abs(tail - tail[-1])))


def observable_states(states, config: Config, n: int) -> np.ndarray:
    """States that determine the outputs and generation.

    Under complete-graph control only the mean of the integral states enters
    the dynamics; with gamma = 0 the individual integrators ramp without
    bound while the outputs settle, so they are replaced by their mean.
    """
    states = np.asarray(states)
    if Config(config) is Config.SECONDARY_COMPLETE:
        return np.concatenate([states[..., :2 * n], states[..., 2 * n:].mean(axis=-1, keepdims=True)], axis=-1)
    return states


def verify_objective(traj, bounds: BoundSet, params: PlantParams) -> ObjectiveVerdict:
    """Check the fair-sharing and deviation objectives on a trajectory tail."""
    drift = tail_drift(observable_states(traj.states, traj.config, params.n))
    if not drift < TAIL_DRIFT:
        raise NotConverged(f"tail drift {drift:.3e} is not below {TAIL_DRIFT:g}")
    omega_hat = traj.omega[-1] - params.omega_ref
    v_hat = traj.v[-1] - params.v_ref
    return objective_margins(omega_hat, v_hat, traj.p_gen[-1], traj.p_m_final, bounds, drift)
