"""Six-terminal MTDC benchmark: line data, controller gains and the area-1 fault."""

from __future__ import annotations

from pathlib import Path

from .plant import Config
from .scenario import CommEdge, EventSpec, Line, ScenarioConfig, serialize

N_AREAS = 6

# (R [p.u.], L [1e-3 p.u.], C [p.u.]) per line group
LINE_GROUPS = (
    (((1, 2), (1, 3), (2, 4), (3, 4)), 0.0586, 0.256, 0.0085),
    (((2, 3),), 0.0878, 0.384, 0.0127),
    (((2, 5), (4, 5)), 0.0732, 0.320, 0.0106),
    (((2, 6), (3, 5), (5, 6)), 0.1464, 0.640, 0.0212),
)

COMM_EDGES = ((1, 2), (2, 3), (3, 4), (3, 5), (5, 6), (1, 6), (1, 5))

GAINS = {"k_omega": 9000.0, "k_v": 110.0, "k_droop": 8.0, "k_droop_i": 10.0, "gamma": 0.0, "delta": 5.0}

TERMINAL_CAPACITANCE = 0.375e-3
FAULT = EventSpec(t=1.0, area=1, dp_m=-0.2)
T_END = 35.0
DT = 1e-4
RECORD_EVERY = 100


def lines() -> tuple[Line, ...]:
    out = []
    for pairs, r, l_milli, c in LINE_GROUPS:
        out.extend(Line(i, j, r, l_milli * 1e-3, c) for i, j in pairs)
    return tuple(sorted(out, key=lambda ln: (ln.i, ln.j)))


def benchmark_config(controller: Config | str = Config.DROOP_ONLY, **overrides) -> ScenarioConfig:
    """Benchmark scenario for one controller; keyword overrides replace config fields."""
    n = N_AREAS
    cfg = ScenarioConfig(
        nodes=n,
        lines=lines(),
        controller=Config(controller).value,
        k_omega=(GAINS["k_omega"],) * n,
        k_v=(GAINS["k_v"],) * n,
        k_droop=(GAINS["k_droop"],) * n,
        k_droop_i=(GAINS["k_droop_i"],) * n,
        gamma=GAINS["gamma"],
        delta=GAINS["delta"],
        comm=tuple(CommEdge(i, j, 1.0) for i, j in COMM_EDGES),
        m=(0.1,) * n,
        cap=(TERMINAL_CAPACITANCE,) * n,
        p_nom=(0.0,) * n,
        v_ref=(1.0,) * n,
        v_nom=1.0,
        omega_ref=1.0,
        dt=DT,
        t_end=T_END,
        record_every=RECORD_EVERY,
        events=(FAULT,),
    )
    return cfg.replace(**overrides) if overrides else cfg


def write_bench(directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for config in Config:
        path = d / f"bench-{config.value}.json"
        path.write_text(serialize(benchmark_config(config)), encoding="utf-8")
        paths.append(path)
    return paths
