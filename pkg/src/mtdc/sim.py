"""Fixed-step RK4 time integration, disturbance scenarios and parameter sweeps.

The closed loops are stiff (fast DC-voltage modes around 1e5 1/s) while
the interesting dynamics are slow, so each output sample ``dt`` is split
into ``k`` equal RK4 substeps with ``h * rho <= 0.1``, where ``rho`` is a
power-iteration estimate of the spectral norm of the balanced system
matrix. For linear models the ``k`` substeps are folded into a single
affine propagator built from the RK4 stage formulas, so a sample costs one
matrix-vector product.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import densela
from .analysis import (
    EquilibriumReport,
    ObjectiveVerdict,
    SingularSystem,
    equilibrium,
    lyapunov_value,
    matching_bounds,
    objective_margins,
)
from .netgraph import WeightedGraph, incidence
from .plant import (
    ClosedLoopSystem,
    Config,
    ControllerGains,
    PlantParams,
    RhsMode,
    assemble,
    controller_outputs,
    make_rhs,
    split_state,
    to_absolute,
    to_deviation,
)

log = logging.getLogger(__name__)

STEP_SAFETY = 0.1
BLOWUP = 1e6


class SimMode(str, enum.Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"
    RL_LINES = "rl-lines"


class StepSizeUnstable(ArithmeticError):
    pass


class StepSizeWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Event:
    """Step change ``dp_m`` of the disturbance in area ``area`` (0-based) at time ``t``."""

    t: float
    area: int
    dp_m: float


@dataclass(frozen=True, eq=False)
class Scenario:
    params: PlantParams
    gains: ControllerGains
    dc: WeightedGraph
    config: Config = Config.DROOP_ONLY
    comm: WeightedGraph | None = None
    events: tuple[Event, ...] = ()
    t_end: float = 35.0
    dt: float = 1e-4
    mode: SimMode = SimMode.LINEAR
    x0: np.ndarray | None = None
    substeps: int | None = None
    record_every: int = 1
    line_l: tuple[float, ...] | None = None
    line_c: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "config", Config(self.config))
        object.__setattr__(self, "mode", SimMode(self.mode))
        object.__setattr__(self, "events", tuple(self.events))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        times = [e.t for e in self.events]
        if times != sorted(times):
            raise ValueError("events must be sorted by time")
        if times and self.t_end < times[-1]:
            raise ValueError("t_end precedes the last event")
        for e in self.events:
            if not 0 <= e.area < self.params.n:
                raise ValueError(f"event area {e.area + 1} outside 1..{self.params.n}")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError("t_end must be an integer multiple of dt")
        if self.record_every < 1 or round(steps) % self.record_every:
            raise ValueError("record_every must divide the number of steps")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def p_m_final(self) -> np.ndarray:
        return disturbance_after(self.params.p_m, self.events, self.t_end)

    def with_gains(self, **kw) -> Scenario:
        return replace(self, gains=self.gains.replace(**kw))


def disturbance_after(p_m, events, t) -> np.ndarray:
    p = np.array(p_m, dtype=float)
    for e in events:
        if e.t <= t:
            p[e.area] += e.dp_m
    return p


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    omega: np.ndarray
    v: np.ndarray
    p_gen: np.ndarray
    w: np.ndarray
    layout: tuple[tuple[str, int], ...]
    config: Config
    p_m_final: np.ndarray
    substeps: int
    h: float
    step_warning: bool = False
    segments: np.ndarray = field(default=None, repr=False)


def rk4_step(f, x, h):
    """One classical fourth-order Runge-Kutta step of ``x' = f(x)``."""
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_propagator(a, h) -> tuple[np.ndarray, np.ndarray]:
    """RK4 step for ``x' = A x + b`` written as ``x -> Phi x + Gamma b``."""
    a = np.asarray(a, dtype=float)
    eye = np.eye(a.shape[0])
    phi = rk4_step(lambda x: a @ x, eye, h)
    gamma = rk4_step(lambda x: a @ x + eye, np.zeros_like(eye), h)
    return phi, gamma


def affine_power(phi, gamma, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Compose the affine map ``(Phi, Gamma)`` with itself ``k`` times."""
    rp, rg = np.eye(phi.shape[0]), np.zeros_like(gamma)
    bp, bg = phi, gamma
    while k:
        if k & 1:
            rp, rg = bp @ rp, bp @ rg + bg
        k >>= 1
        if k:
            bp, bg = bp @ bp, bp @ bg + bg
    return rp, rg


def stiffness_estimate(a) -> float:
    """Spectral-norm estimate of the balanced matrix; bounds the spectral radius."""
    _, bal = densela.balance(a)
    return densela.norm2_estimate(bal)


def choose_substeps(a, dt: float, forced: int | None = None) -> tuple[int, bool]:
    rho = stiffness_estimate(a)
    needed = max(1, math.ceil(dt * rho / STEP_SAFETY - 1e-9))
    if forced is None:
        return needed, False
    unsafe = forced < needed
    if unsafe:
        warnings.warn(f"substep {dt / forced:.3g} s exceeds the stability estimate {STEP_SAFETY / rho:.3g} s",
                      StepSizeWarning, stacklevel=3)
    return forced, unsafe


def _event_schedule(scn: Scenario) -> dict[int, list[Event]]:
    sched: dict[int, list[Event]] = {}
    for e in scn.events:
        k = max(0, math.ceil(e.t / scn.dt - 1e-9))
        sched.setdefault(k, []).append(e)
    return sched


def _segment_index(n_samples: int, sched: dict[int, list[Event]]) -> np.ndarray:
    seg = np.zeros(n_samples, dtype=int)
    for i, k in enumerate(sorted(sched)):
        seg[k:] = i + 1
    return seg


def _forcing_history(scn: Scenario, sched) -> list[np.ndarray]:
    p = np.array(scn.params.p_m, dtype=float)
    out = [p.copy()]
    for k in sorted(sched):
        for e in sched[k]:
            p[e.area] += e.dp_m
        out.append(p.copy())
    return out


def lyapunov_reference(params: PlantParams, gains: ControllerGains, dc: WeightedGraph,
                       comm: WeightedGraph | None, config: Config) -> np.ndarray:
    """Equilibrium about which the Lyapunov value is measured.

    Complete-graph control is referred to the equilibrium of its projected
    form, which exists even when the complete form is singular.
    """
    config = Config(config)
    if config is Config.SECONDARY_COMPLETE:
        red = equilibrium(assemble(params, gains, dc, comm, Config.SECONDARY_PROJECTED)).x0
        n = params.n
        return np.concatenate([red[:2 * n], np.full(n, red[2 * n])])
    return equilibrium(assemble(params, gains, dc, comm, config)).x0


def _outputs(scn: Scenario, params: PlantParams, dev_states, refs, seg, layout, sub, h, unsafe, p_final, times):
    n = params.n
    core = dev_states[:, :refs[0].shape[0]]
    xa = to_absolute(params, core, scn.config)
    omega, v, eta = split_state(xa, scn.config, n)
    p_gen, _ = controller_outputs(params, scn.gains, omega, v, scn.config, eta)
    ref = np.stack(refs)[seg]
    w = lyapunov_value(core - ref, params, scn.gains, scn.config)
    return Trajectory(times, dev_states, omega, v, p_gen, np.asarray(w), layout, scn.config,
                      p_final, sub, h, unsafe, seg)


def _run_linear(scn: Scenario, sys: ClosedLoopSystem, forcing_for, refs_params: PlantParams) -> Trajectory:
    n = scn.params.n
    sched = _event_schedule(scn)
    sub, unsafe = choose_substeps(sys.a, scn.dt, scn.substeps)
    h = scn.dt / sub
    phi, gam = affine_power(*rk4_propagator(sys.a, h), sub)
    log.debug("linear run: dim=%d substeps=%d h=%.3e", sys.dim, sub, h)
    history = _forcing_history(scn, sched)
    x = np.zeros(sys.dim) if scn.x0 is None else np.array(scn.x0, dtype=float)
    if x.shape != (sys.dim,):
        raise ValueError(f"initial state must have length {sys.dim}")
    steps, rec = scn.n_steps, scn.record_every
    out = np.empty((steps // rec + 1, sys.dim))
    out[0] = x
    seg_no = 0
    drive = gam @ forcing_for(history[0])
    for i in range(steps):
        if i in sched:
            seg_no += 1
            drive = gam @ forcing_for(history[seg_no])
        x = phi @ x + drive
        if (i + 1) % rec == 0:
            if not np.max(np.abs(x)) < BLOWUP:
                raise StepSizeUnstable(f"state magnitude exceeded {BLOWUP:g} at t={(i + 1) * scn.dt:.6g} s")
            out[(i + 1) // rec] = x
    times = np.arange(out.shape[0]) * scn.dt * rec
    seg = _segment_index(steps + 1, sched)[::rec]
    refs = []
    for p in history:
        try:
            refs.append(lyapunov_reference(refs_params.with_disturbance(p), scn.gains, scn.dc, scn.comm, scn.config))
        except SingularSystem:
            size = 2 * n + (0 if scn.config is Config.DROOP_ONLY else (1 if scn.config is Config.SECONDARY_PROJECTED else n))
            refs.append(np.full(size, np.nan))
    return _outputs(scn, refs_params, out, refs, seg, sys.layout, sub, h, unsafe, history[-1], times)


def _run_nonlinear(scn: Scenario) -> Trajectory:
    params = scn.params
    sys = assemble(params, scn.gains, scn.dc, scn.comm, scn.config)
    sched = _event_schedule(scn)
    sub, unsafe = choose_substeps(sys.a, scn.dt, scn.substeps)
    h = scn.dt / sub
    f = make_rhs(params, scn.gains, scn.dc, RhsMode.NONLINEAR, scn.config, scn.comm)
    history = _forcing_history(scn, sched)
    x_dev = np.zeros(sys.dim) if scn.x0 is None else np.array(scn.x0, dtype=float)
    x = to_absolute(params, x_dev, scn.config)
    steps, rec = scn.n_steps, scn.record_every
    out = np.empty((steps // rec + 1, sys.dim))
    out[0] = x_dev
    seg_no = 0
    p_m = history[0]
    for i in range(steps):
        if i in sched:
            seg_no += 1
            p_m = history[seg_no]
        g = lambda y, p=p_m: f(y, p)  # noqa: E731
        for _ in range(sub):
            x = rk4_step(g, x, h)
        dev = to_deviation(params, x, scn.config)
        if not np.max(np.abs(dev)) < BLOWUP:
            raise StepSizeUnstable(f"state magnitude exceeded {BLOWUP:g} at t={(i + 1) * scn.dt:.6g} s")
        if (i + 1) % rec == 0:
            out[(i + 1) // rec] = dev
    times = np.arange(out.shape[0]) * scn.dt * rec
    seg = _segment_index(steps + 1, sched)[::rec]
    refs = [lyapunov_reference(params.with_disturbance(p), scn.gains, scn.dc, scn.comm, scn.config) for p in history]
    return _outputs(scn, params, out, refs, seg, sys.layout, sub, h, unsafe, history[-1], times)


def integrate(scn: Scenario) -> Trajectory:
    """Integrate a scenario and return the sampled trajectory with its outputs.

    States are stored in deviation coordinates. Disturbance events switch
    the forcing at the first sample at or after their time. ``w`` is the
    Lyapunov value relative to the equilibrium of the forcing active from
    that sample on.
    """
    if scn.mode is SimMode.RL_LINES:
        return integrate_rl_lines(scn)
    if scn.mode is SimMode.NONLINEAR:
        return _run_nonlinear(scn)
    sys = assemble(scn.params, scn.gains, scn.dc, scn.comm, scn.config)
    n = scn.params.n

    def forcing(p_m):
        b = np.zeros(sys.dim)
        b[:n] = p_m / scn.params.m
        return b

    return _run_linear(scn, sys, forcing, scn.params)


def lumped_capacitance(params: PlantParams, dc: WeightedGraph, line_c) -> np.ndarray:
    """Terminal capacitance with half of each adjacent line's shunt capacitance added."""
    cap = np.array(params.cap, dtype=float)
    if line_c is None:
        return cap
    for (i, j, _), c in zip(dc.edges, line_c):
        cap[i] += 0.5 * c
        cap[j] += 0.5 * c
    return cap


def assemble_rl_lines(params: PlantParams, gains: ControllerGains, dc: WeightedGraph, line_l,
                      line_c=None, comm: WeightedGraph | None = None,
                      config: Config = Config.DROOP_ONLY) -> ClosedLoopSystem:
    """Closed loop with an inductive current state on every DC line.

    Line ``e = (i, j)`` obeys ``L_e I_e' = V_i - V_j - R_e I_e`` and terminal
    ``i`` sees ``C_i V_i' = -(B I)_i + I_inj_i``.
    """
    line_l = np.asarray(line_l, dtype=float)
    if line_l.shape != (dc.m,) or not np.all(line_l > 0):
        raise ValueError("every DC line needs a positive inductance")
    lumped = replace(params, cap=lumped_capacitance(params, dc, line_c))
    base = assemble(lumped, gains, dc, comm, config)
    n, m, d = params.n, dc.m, base.dim
    inc = incidence(dc)
    res = 1.0 / dc.weights
    a = np.zeros((d + m, d + m))
    a[:d, :d] = base.a
    vs = slice(n, 2 * n)
    a[vs, vs] = -np.diag(gains.k_v / lumped.cap / params.v_nom)
    a[vs, d:] = -inc / lumped.cap[:, None]
    a[d:, vs] = inc.T / line_l[:, None]
    a[d:, d:] = -np.diag(res / line_l)
    b = np.concatenate([base.b, np.zeros(m)])
    return ClosedLoopSystem(a, b, base.layout + (("line_current", m),), base.config, lumped, gains)


def integrate_rl_lines(scn: Scenario) -> Trajectory:
    if scn.line_l is None:
        raise ValueError("RL-line mode needs per-line inductances")
    sys = assemble_rl_lines(scn.params, scn.gains, scn.dc, scn.line_l, scn.line_c, scn.comm, scn.config)
    n = scn.params.n

    def forcing(p_m):
        b = np.zeros(sys.dim)
        b[:n] = p_m / scn.params.m
        return b

    return _run_linear(scn, sys, forcing, sys.params)


def rl_network_matrix(dc: WeightedGraph, line_l, cap) -> np.ndarray:
    """Passive RLC network ``(V, I)`` dynamics with no converter injections."""
    inc = incidence(dc)
    line_l = np.asarray(line_l, dtype=float)
    cap = np.asarray(cap, dtype=float)
    n, m = dc.n, dc.m
    a = np.zeros((n + m, n + m))
    a[:n, n:] = -inc / cap[:, None]
    a[n:, :n] = inc.T / line_l[:, None]
    a[n:, n:] = -np.diag(1.0 / dc.weights / line_l)
    return a


SWEEPABLE = ("delta", "gamma", "k_droop", "k_omega", "k_v", "k_droop_i")


@dataclass(frozen=True, eq=False)
class SweepPoint:
    value: float
    equilibrium: EquilibriumReport | None
    verdict: ObjectiveVerdict | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "equilibrium": None if self.equilibrium is None else self.equilibrium.to_dict(),
            "verdict": None if self.verdict is None else self.verdict.to_dict(),
            "error": self.error,
        }


def sweep(base: Scenario, parameter: str, values) -> list[SweepPoint]:
    """Equilibrium and bound verdict for each value of one controller parameter.

    The disturbance is the one in force after all scenario events. A value
    that fails is reported in its point and does not abort the sweep.
    """
    if parameter not in SWEEPABLE:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {', '.join(SWEEPABLE)}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    params = base.params.with_disturbance(base.p_m_final)
    out = []
    for val in values:
        try:
            gains = base.gains.replace(**{parameter: val})
            sys = assemble(params, gains, base.dc, base.comm, base.config)
            eq = equilibrium(sys)
            verdict = None
            if gains.uniform:
                bounds = matching_bounds(base.config, params, gains, base.dc)
                verdict = objective_margins(eq.omega_hat, eq.v_hat, eq.p_gen_asym, params.p_m, bounds)
            out.append(SweepPoint(float(val), eq, verdict))
        except (ArithmeticError, ValueError) as exc:
            out.append(SweepPoint(float(val), None, None, f"{type(exc).__name__}: {exc}"))
    return out
