import numpy as np
import pytest

from mtdc.netgraph import GraphKind, WeightedGraph, complete_comm_graph, laplacian
from mtdc.plant import (
    AssumptionViolation,
    Config,
    ControllerGains,
    InconsistentOperatingPoint,
    MissingCommGraph,
    PlantError,
    PlantParams,
    RhsMode,
    VoltageCollapse,
    assemble,
    controller_outputs,
    make_rhs,
    nonlinear_rhs,
    to_absolute,
    to_deviation,
)

from conftest import bench_scenario, post_fault

SECONDARY = [Config.SECONDARY_COMPLETE, Config.SECONDARY_PROJECTED, Config.SECONDARY_DISTRIBUTED]
ALL = [Config.DROOP_ONLY, *SECONDARY]


def single_area(p_m=-0.2):
    params = PlantParams(1, p_m=p_m)
    gains = ControllerGains(1, 9000.0, 110.0, 8.0)
    return params, gains, WeightedGraph(1, ())


class TestParams:
    def test_broadcast(self):
        p = PlantParams(3, m=0.2, p_m=[0.1, 0.0, -0.1])
        assert p.m.shape == (3,) and p.cap[0] == pytest.approx(0.375e-3)

    def test_read_only(self):
        p = PlantParams(2)
        with pytest.raises(ValueError):
            p.m[0] = 3.0

    def test_nonpositive_inertia(self):
        with pytest.raises(PlantError):
            PlantParams(2, m=[0.1, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(PlantError):
            PlantParams(2, p_m=[0.1, 0.2, 0.3])

    def test_power_balance_assumption(self):
        with pytest.raises(AssumptionViolation):
            PlantParams(2, p_nom=[0.5, 0.5], p_inj_nom=[0.5, 0.4])

    def test_gain_positivity(self):
        with pytest.raises(PlantError):
            ControllerGains(2, 9000.0, 110.0, [8.0, 0.0])
        with pytest.raises(PlantError):
            ControllerGains(2, 9000.0, 110.0, 8.0, gamma=-1.0)

    def test_uniform_flag(self):
        assert ControllerGains(3, 9000.0, 110.0, 8.0, k_droop_i=[1, 2, 3]).uniform
        assert not ControllerGains(3, 9000.0, 110.0, [8.0, 8.0, 9.0]).uniform


class TestAssembly:
    def test_dimensions(self):
        n = 6
        for config, dim in zip(ALL, (2 * n, 3 * n, 2 * n + 1, 3 * n)):
            scn = bench_scenario(config)
            sys = assemble(post_fault(scn), scn.gains, scn.dc, scn.comm, config)
            assert sys.a.shape == (dim, dim) and sys.b.shape == (dim,)

    def test_blocks_match_printed_structure(self):
        scn = bench_scenario(Config.SECONDARY_DISTRIBUTED)
        p, g = post_fault(scn), scn.gains
        sys = assemble(p, g, scn.dc, scn.comm, Config.SECONDARY_DISTRIBUTED)
        a, n = sys.a, 6
        m_inv, e = 1 / p.m, 1 / p.cap
        np.testing.assert_allclose(np.diag(a[:n, :n]), -m_inv * (g.k_omega + g.k_droop))
        np.testing.assert_allclose(np.diag(a[:n, n:2 * n]), m_inv * g.k_v)
        np.testing.assert_allclose(np.diag(a[:n, 2 * n:]), -m_inv * g.k_v / g.k_omega * g.k_droop_i)
        np.testing.assert_allclose(np.diag(a[n:2 * n, :n]), e * g.k_omega / p.v_nom)
        np.testing.assert_allclose(a[n:2 * n, n:2 * n], -np.diag(e) @ (laplacian(scn.dc) + np.diag(g.k_v) / p.v_nom))
        np.testing.assert_allclose(a[2 * n:, 2 * n:], -g.delta * laplacian(scn.comm))
        np.testing.assert_allclose(sys.b[:n], p.p_m / p.m)
        assert not np.any(sys.b[n:])

    def test_droop_is_upper_left_block(self):
        scn = bench_scenario(Config.SECONDARY_COMPLETE)
        full = assemble(post_fault(scn), scn.gains, scn.dc, None, Config.SECONDARY_COMPLETE)
        droop = assemble(post_fault(scn), scn.gains, scn.dc, None, Config.DROOP_ONLY)
        np.testing.assert_array_equal(full.a[:12, :12], droop.a)

    def test_complete_has_rank_deficiency_at_zero_gamma(self):
        scn = bench_scenario(Config.SECONDARY_COMPLETE)
        a = assemble(post_fault(scn), scn.gains, scn.dc, None, Config.SECONDARY_COMPLETE).a
        # eta enters only through its mean, so eta orthogonal to 1 is in the kernel
        z = np.zeros(18)
        z[12:] = [1, -1, 0, 0, 0, 0]
        assert np.max(np.abs(a @ z)) == 0.0

    def test_missing_comm_graph(self):
        scn = bench_scenario(Config.SECONDARY_DISTRIBUTED)
        with pytest.raises(MissingCommGraph):
            assemble(post_fault(scn), scn.gains, scn.dc, None, Config.SECONDARY_DISTRIBUTED)

    def test_disconnected_comm_graph(self):
        scn = bench_scenario(Config.SECONDARY_DISTRIBUTED)
        comm = WeightedGraph(6, ((0, 1, 1.0),), GraphKind.COMM)
        with pytest.raises(ValueError):
            assemble(post_fault(scn), scn.gains, scn.dc, comm, Config.SECONDARY_DISTRIBUTED)

    def test_inconsistent_operating_point(self):
        scn = bench_scenario()
        params = PlantParams(6, v_ref=[1.0, 1.0, 1.0, 1.0, 1.0, 1.1])
        with pytest.raises(InconsistentOperatingPoint):
            assemble(params, scn.gains, scn.dc)

    def test_single_area_closed_form_equilibrium(self):
        params, gains, dc = single_area()
        sys = assemble(params, gains, dc)
        w, v = -0.025, -0.025 * 9000 / 110
        residual = sys.a @ [w, v] + sys.b
        assert np.max(np.abs(residual)) <= 1e-14 * np.max(np.abs(sys.a))


class TestRhs:
    @pytest.mark.parametrize("config", ALL)
    def test_linearized_rhs_equals_matrix_model(self, config, rng):
        scn = bench_scenario(config)
        params = post_fault(scn)
        sys = assemble(params, scn.gains, scn.dc, scn.comm, config)
        f = make_rhs(params, scn.gains, scn.dc, RhsMode.LINEARIZED, config, scn.comm)
        for _ in range(20):
            x = rng.normal(scale=0.05, size=sys.dim)
            lhs = f(to_absolute(params, x, config))
            rhs = sys.a @ x + sys.b
            assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))

    def test_single_area_derivatives_vanish(self):
        params, gains, dc = single_area()
        x = to_absolute(params, [-0.025, -0.025 * 9000 / 110], Config.DROOP_ONLY)
        d = nonlinear_rhs(params, gains, dc, x, RhsMode.LINEARIZED)
        np.testing.assert_allclose(d, 0.0, atol=1e-9)

    def test_nonlinear_matches_linear_at_nominal_voltage(self):
        scn = bench_scenario()
        params = post_fault(scn)
        x = to_absolute(params, np.r_[np.full(6, 1e-3), np.zeros(6)], Config.DROOP_ONLY)
        lin = nonlinear_rhs(params, scn.gains, scn.dc, x, RhsMode.LINEARIZED)
        non = nonlinear_rhs(params, scn.gains, scn.dc, x, RhsMode.NONLINEAR)
        np.testing.assert_allclose(lin, non, rtol=1e-12)

    def test_voltage_collapse(self):
        scn = bench_scenario()
        x = np.r_[np.ones(6), np.full(6, 0.4)]
        with pytest.raises(VoltageCollapse):
            nonlinear_rhs(scn.params, scn.gains, scn.dc, x, RhsMode.NONLINEAR)

    def test_deviation_round_trip(self, rng):
        params = PlantParams(3, v_ref=1.05, omega_ref=1.0)
        x = rng.normal(size=9)
        np.testing.assert_allclose(to_deviation(params, to_absolute(params, x, Config.SECONDARY_COMPLETE),
                                                Config.SECONDARY_COMPLETE), x)


class TestControllerOutputs:
    def test_droop_law(self):
        params = PlantParams(2, v_ref=1.0, omega_ref=1.0)
        gains = ControllerGains(2, 9000.0, 110.0, 8.0)
        p_gen, p_inj = controller_outputs(params, gains, [0.99, 1.0], [1.0, 0.98])
        np.testing.assert_allclose(p_gen, [0.08, 0.0])
        np.testing.assert_allclose(p_inj, [-90.0, 2.2])

    def test_complete_uses_mean(self):
        params = PlantParams(2)
        gains = ControllerGains(2, 100.0, 10.0, 1.0, k_droop_i=2.0)
        p_gen, _ = controller_outputs(params, gains, [1.0, 1.0], [1.0, 1.0], Config.SECONDARY_COMPLETE, [1.0, 3.0])
        np.testing.assert_allclose(p_gen, [-0.4, -0.4])

    def test_eta_required(self):
        params, gains, _ = single_area()
        with pytest.raises(PlantError):
            controller_outputs(params, gains, [1.0], [1.0], Config.SECONDARY_DISTRIBUTED)

    def test_batched(self):
        params = PlantParams(2)
        gains = ControllerGains(2, 9000.0, 110.0, 8.0)
        p_gen, _ = controller_outputs(params, gains, np.ones((5, 2)), np.ones((5, 2)))
        assert p_gen.shape == (5, 2)


def test_complete_comm_graph_not_needed_for_complete_config():
    scn = bench_scenario(Config.SECONDARY_COMPLETE)
    a1 = assemble(post_fault(scn), scn.gains, scn.dc, None, Config.SECONDARY_COMPLETE).a
    a2 = assemble(post_fault(scn), scn.gains, scn.dc, complete_comm_graph(6), Config.SECONDARY_COMPLETE).a
    np.testing.assert_array_equal(a1, a2)
