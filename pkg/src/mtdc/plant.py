"""Plant parameters, control laws and closed-loop assembly.

All quantities are per unit. States are kept in deviation coordinates
``omega_hat = omega - omega_ref`` and ``v_hat = V - V_ref``; the secondary
integral states are appended after the voltages.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .netgraph import GraphError, WeightedGraph, connectivity_check, laplacian

DEFAULT_INERTIA = 0.1
DEFAULT_CAPACITANCE = 0.375e-3


class Config(str, enum.Enum):
    DROOP_ONLY = "droop"
    SECONDARY_COMPLETE = "secondary-complete"
    SECONDARY_PROJECTED = "secondary-projected"
    SECONDARY_DISTRIBUTED = "secondary-distributed"

    @property
    def has_secondary(self) -> bool:
        return self is not Config.DROOP_ONLY


class RhsMode(str, enum.Enum):
    NONLINEAR = "nonlinear"
    LINEARIZED = "linearized"


class PlantError(ValueError):
    pass


class AssumptionViolation(PlantError):
    pass


class MissingCommGraph(PlantError):
    pass


class InconsistentOperatingPoint(PlantError):
    pass


class VoltageCollapse(ArithmeticError):
    pass


def _vec(x, n, name, *, positive=False, nonneg=False) -> np.ndarray:
    try:
        a = np.array(np.broadcast_to(np.asarray(x, dtype=float), (n,)))
    except ValueError as exc:
        raise PlantError(f"{name} needs 1 or {n} entries, got shape {np.shape(x)}") from exc
    if not np.all(np.isfinite(a)):
        raise PlantError(f"{name} has non-finite entries")
    if positive and not np.all(a > 0):
        raise PlantError(f"{name} must be strictly positive, got {a.tolist()}")
    if nonneg and not np.all(a >= 0):
        raise PlantError(f"{name} must be non-negative, got {a.tolist()}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PlantParams:
    """Physical constants, references and disturbance of ``n`` areas.

    Scalars broadcast to per-area arrays. ``p_inj_nom`` defaults to
    ``p_nom``; the nominal generated and injected powers must agree.
    """

    n: int
    m: np.ndarray = DEFAULT_INERTIA
    cap: np.ndarray = DEFAULT_CAPACITANCE
    v_nom: float = 1.0
    v_ref: np.ndarray = 1.0
    omega_ref: float = 1.0
    p_nom: np.ndarray = 0.0
    p_inj_nom: np.ndarray | None = None
    p_m: np.ndarray = 0.0

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise PlantError("area count must be at least 1")
        set_ = object.__setattr__
        set_(self, "m", _vec(self.m, n, "m", positive=True))
        set_(self, "cap", _vec(self.cap, n, "cap", positive=True))
        set_(self, "v_ref", _vec(self.v_ref, n, "v_ref", positive=True))
        set_(self, "p_nom", _vec(self.p_nom, n, "p_nom"))
        p_inj = self.p_nom if self.p_inj_nom is None else self.p_inj_nom
        set_(self, "p_inj_nom", _vec(p_inj, n, "p_inj_nom"))
        set_(self, "p_m", _vec(self.p_m, n, "p_m"))
        if not (np.isfinite(self.v_nom) and self.v_nom > 0):
            raise PlantError("v_nom must be positive")
        if not np.isfinite(self.omega_ref):
            raise PlantError("omega_ref must be finite")
        if not np.array_equal(self.p_nom, self.p_inj_nom):
            raise AssumptionViolation("nominal generated power must equal nominal injected power in every area")

    def with_disturbance(self, p_m) -> PlantParams:
        return replace(self, p_m=p_m)


@dataclass(frozen=True, eq=False)
class ControllerGains:
    n: int
    k_omega: np.ndarray
    k_v: np.ndarray
    k_droop: np.ndarray
    k_droop_i: np.ndarray = 1.0
    gamma: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        n = self.n
        for name in ("k_omega", "k_v", "k_droop", "k_droop_i"):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name, positive=True))
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise PlantError("gamma must be non-negative")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise PlantError("delta must be positive")

    @property
    def uniform(self) -> bool:
        """True when k_omega, k_v and k_droop are identical across areas."""
        return all(np.all(getattr(self, k) == getattr(self, k)[0]) for k in ("k_omega", "k_v", "k_droop"))

    def replace(self, **kw) -> ControllerGains:
        return replace(self, **kw)


BLOCK_NAMES = ("omega_hat", "v_hat", "eta", "eta_prime")


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """Linear closed loop ``x' = A x + b`` with its state layout."""

    a: np.ndarray
    b: np.ndarray
    layout: tuple[tuple[str, int], ...]
    config: Config
    params: PlantParams = field(repr=False)
    gains: ControllerGains = field(repr=False)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def block(self, name: str) -> slice:
        start = 0
        for blk, size in self.layout:
            if blk == name:
                return slice(start, start + size)
            start += size
        raise KeyError(name)


def layout_for(config: Config, n: int) -> tuple[tuple[str, int], ...]:
    base = (("omega_hat", n), ("v_hat", n))
    if config is Config.DROOP_ONLY:
        return base
    if config is Config.SECONDARY_PROJECTED:
        return base + (("eta_prime", 1),)
    return base + (("eta", n),)


def _check_nominal_point(params: PlantParams, lap_r: np.ndarray) -> None:
    # V_ref with nominal injections must be a stationary point of the DC grid
    mismatch = lap_r @ params.v_ref - params.p_inj_nom / params.v_nom
    scale = 1.0 + np.max(np.abs(lap_r)) * np.max(params.v_ref)
    if np.max(np.abs(mismatch)) > 1e-9 * scale:
        raise InconsistentOperatingPoint(
            f"nominal injections are not balanced by the reference voltages (mismatch {mismatch.tolist()})"
        )


def assemble(params: PlantParams, gains: ControllerGains, dc: WeightedGraph,
             comm: WeightedGraph | None = None, config: Config = Config.DROOP_ONLY) -> ClosedLoopSystem:
    """Assemble the linear closed-loop matrix and forcing for ``config``."""
    config = Config(config)
    n = params.n
    if gains.n != n or dc.n != n:
        raise PlantError("params, gains and DC grid disagree on the area count")
    if not connectivity_check(dc):
        raise GraphError("DC grid graph is not connected")
    if config is Config.SECONDARY_DISTRIBUTED:
        if comm is None:
            raise MissingCommGraph("secondary-distributed control needs a communication graph")
        if comm.n != n or not connectivity_check(comm):
            raise GraphError("communication graph must be connected and span all areas")
    lap_r = laplacian(dc)
    _check_nominal_point(params, lap_r)

    minv = np.diag(1.0 / params.m)
    elast = np.diag(1.0 / params.cap)
    kw, kv, kd, ki = (np.diag(getattr(gains, k)) for k in ("k_omega", "k_v", "k_droop", "k_droop_i"))
    vn = params.v_nom
    # secondary gain per area: m_i^-1 K^V_i / K^omega_i K^droop,I_i
    sec = minv @ np.diag(gains.k_v / gains.k_omega * gains.k_droop_i)

    top = [-minv @ (kw + kd), minv @ kv]
    mid = [elast @ kw / vn, -elast @ (lap_r + kv / vn)]
    z = np.zeros((n, n))
    if config is Config.DROOP_ONLY:
        a = np.block([top, mid])
    elif config is Config.SECONDARY_COMPLETE:
        a = np.block([top + [-sec @ np.ones((n, n)) / n],
                      mid + [z],
                      [ki, z, -gains.gamma * np.eye(n)]])
    elif config is Config.SECONDARY_PROJECTED:
        a = np.zeros((2 * n + 1, 2 * n + 1))
        a[:2 * n, :2 * n] = np.block([top, mid])
        a[:n, 2 * n] = -sec @ np.ones(n)
        a[2 * n, :n] = gains.k_droop_i / n
        a[2 * n, 2 * n] = -gains.gamma
    else:
        a = np.block([top + [-sec], mid + [z], [ki, z, -gains.delta * laplacian(comm)]])

    b = np.zeros(a.shape[0])
    b[:n] = params.p_m / params.m
    return ClosedLoopSystem(a, b, layout_for(config, n), config, params, gains)


def split_state(x, config: Config, n: int):
    """Split a flat state (or stack of states) into ``(omega, v, eta)`` blocks."""
    x = np.asarray(x, dtype=float)
    omega, v = x[..., :n], x[..., n:2 * n]
    eta = x[..., 2 * n:] if Config(config).has_secondary else None
    return omega, v, eta


def secondary_term(gains: ControllerGains, config: Config, eta) -> np.ndarray:
    """Per-area secondary contribution ``(K^V/K^omega) K^droop,I * s_i``.

    ``s_i`` is the mean of ``eta`` for complete-graph control, the single
    projected state for the projected form and the local ``eta_i`` for
    distributed control.
    """
    config = Config(config)
    eta = np.asarray(eta, dtype=float)
    gain = gains.k_v / gains.k_omega * gains.k_droop_i
    if config is Config.SECONDARY_COMPLETE:
        return gain * np.mean(eta, axis=-1, keepdims=True)
    if config is Config.SECONDARY_PROJECTED:
        return gain * eta[..., :1]
    return gain * eta


def controller_outputs(params: PlantParams, gains: ControllerGains, omega, v,
                       config: Config = Config.DROOP_ONLY, eta=None) -> tuple[np.ndarray, np.ndarray]:
    """Generation and converter set-points ``(P_gen, P_inj)``.

    ``omega`` and ``v`` are absolute values; leading axes are treated as
    a batch.
    """
    config = Config(config)
    if config.has_secondary != (eta is not None):
        raise PlantError("eta must be given exactly when the configuration has secondary control")
    w_hat = np.asarray(omega, dtype=float) - params.omega_ref
    p_gen = -gains.k_droop * w_hat
    if eta is not None:
        p_gen = p_gen - secondary_term(gains, config, eta)
    p_inj = params.p_inj_nom + gains.k_omega * w_hat + gains.k_v * (params.v_ref - np.asarray(v, dtype=float))
    return p_gen, p_inj


def make_rhs(params: PlantParams, gains: ControllerGains, dc: WeightedGraph,
             mode: RhsMode = RhsMode.LINEARIZED, config: Config = Config.DROOP_ONLY,
             comm: WeightedGraph | None = None):
    """Return ``f(x, p_m)`` evaluating the plant with its controllers.

    ``x`` is the flat absolute state ``(omega, V, eta...)``; ``p_m``
    defaults to ``params.p_m``.
    """
    mode, config = RhsMode(mode), Config(config)
    n = params.n
    lap_r = laplacian(dc)
    lap_c = None
    if config is Config.SECONDARY_DISTRIBUTED:
        if comm is None:
            raise MissingCommGraph("secondary-distributed control needs a communication graph")
        lap_c = laplacian(comm)
    v_floor = 0.5 * params.v_nom

    def rhs(x, p_m=None):
        p_m = params.p_m if p_m is None else p_m
        omega, v, eta = split_state(x, config, n)
        p_gen, p_inj = controller_outputs(params, gains, omega, v, config, eta)
        if mode is RhsMode.NONLINEAR:
            if np.any(v <= v_floor):
                raise VoltageCollapse(f"terminal voltage fell to {float(np.min(v)):.4g} p.u.")
            i_inj = p_inj / v
        else:
            i_inj = p_inj / params.v_nom
        d_omega = (p_gen + params.p_nom + p_m - p_inj) / params.m
        d_v = (-lap_r @ v + i_inj) / params.cap
        parts = [d_omega, d_v]
        if config is not Config.DROOP_ONLY:
            w_hat = omega - params.omega_ref
            if config is Config.SECONDARY_COMPLETE:
                parts.append(gains.k_droop_i * w_hat - gains.gamma * eta)
            elif config is Config.SECONDARY_PROJECTED:
                parts.append(np.array([np.mean(gains.k_droop_i * w_hat) - gains.gamma * eta[0]]))
            else:
                parts.append(gains.k_droop_i * w_hat - gains.delta * (lap_c @ eta))
        return np.concatenate(parts)

    return rhs


def nonlinear_rhs(params: PlantParams, gains: ControllerGains, dc: WeightedGraph, state,
                  mode: RhsMode = RhsMode.NONLINEAR, config: Config = Config.DROOP_ONLY,
                  comm: WeightedGraph | None = None) -> np.ndarray:
    """Time derivative of the absolute state under the chosen power-current relation."""
    return make_rhs(params, gains, dc, mode, config, comm)(np.asarray(state, dtype=float))


def to_absolute(params: PlantParams, x_dev, config: Config) -> np.ndarray:
    x = np.array(x_dev, dtype=float)
    n = params.n
    x[..., :n] += params.omega_ref
    x[..., n:2 * n] += params.v_ref
    return x


def to_deviation(params: PlantParams, x_abs, config: Config) -> np.ndarray:
    x = np.array(x_abs, dtype=float)
    n = params.n
    x[..., :n] -= params.omega_ref
    x[..., n:2 * n] -= params.v_ref
    return x
