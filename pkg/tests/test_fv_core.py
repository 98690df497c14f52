import numpy as np
import pytest
from hypothesis import given, strategies as st

from manifold_fv.analysis import circle_transport, cosine_bell, l1_distance, sphere_rotation
from manifold_fv.flux_model import (WeightedConstantField, make_product_flux, named_flux,
                                    scalar_flux, weight_closure, zero_flux)
from manifold_fv.fv_core import (SchemeConfig, SchemeError, SolverAbort, State, Trajectory,
                                 cfl_timestep, compatible_speeds, evolve, face_flux,
                                 numerical_flux, project_divergence_free, snapshot_schedule, step)
from manifold_fv.geometry import build_circle_mesh, build_interval_mesh, build_sphere_mesh, build_torus_mesh

LF = SchemeConfig("lax-friedrichs")
GOD = SchemeConfig("godunov-1d")


def sine0(m):
    return np.sin(2 * np.pi * m.cell_center[:, 0])


class TestSchemeConfig:
    @pytest.mark.parametrize("cfl", [0.0, -0.1, 1.5])
    def test_bad_cfl(self, cfl):
        with pytest.raises(SchemeError):
            SchemeConfig(cfl=cfl)

    def test_unknown_names(self):
        with pytest.raises(SchemeError):
            SchemeConfig(numerical_flux="roe")
        with pytest.raises(SchemeError):
            SchemeConfig(mode="whatever")

    def test_godunov_1d_only(self):
        m = build_torus_mesh(4, 4)
        f = named_flux("torus-weighted-advection", m)
        with pytest.raises(SchemeError):
            evolve(State(m, np.zeros(16)), f, GOD, 0.1)

    def test_godunov_needs_convexity(self):
        m = build_circle_mesh(8)
        f = make_product_flux(scalar_flux(np.sin, np.cos), WeightedConstantField((1.0,)), m)
        with pytest.raises(SchemeError):
            step(State(m, np.zeros(8)), f, GOD, 0.01)


class TestState:
    def test_shape(self):
        with pytest.raises(ValueError):
            State(build_circle_mesh(4), np.zeros(5))

    def test_finite(self):
        with pytest.raises(ValueError):
            State(build_circle_mesh(4), np.array([0, np.nan, 0, 0]))

    def test_trajectory_times_increase(self):
        m = build_circle_mesh(4)
        tr = Trajectory(mesh=m, flux=None, scheme=LF)
        tr.record(0.0, np.zeros(4), None)
        with pytest.raises(ValueError):
            tr.record(0.0, np.zeros(4), None)


class TestFaceFlux:
    def test_circle_right_face(self):
        m = build_circle_mesh(10)
        f = named_flux("advection-circle", m)
        assert face_flux(m, f, 3, 3, 0.7) == pytest.approx(0.7)
        assert face_flux(m, f, 3, 4, 0.7) == pytest.approx(-0.7)

    def test_not_adjacent(self):
        m = build_circle_mesh(10)
        with pytest.raises(KeyError):
            face_flux(m, named_flux("advection-circle", m), 3, 7, 1.0)

    def test_sphere_invariant_circle(self):
        m = build_sphere_mesh(2)
        f = named_flux("sphere-rotation", m)
        eq = np.flatnonzero(np.abs(m.face_normal[:, 2]) > 1 - 1e-12)
        for e in eq:
            assert abs(face_flux(m, f, e, m.face_owner[e], 1.0)) <= 1e-10


class TestNumericalFlux:
    def test_consistency(self):
        m = build_circle_mesh(10)
        f = named_flux("burgers-circle", m)
        for sch in (LF, GOD):
            for c in (-1.5, 0.0, 0.3, 2.0):
                assert numerical_flux(f, 2, c, c, sch) == pytest.approx(face_flux(m, f, 2, 2, c))

    def test_burgers_shock(self):
        # exact Riemann oracle: uL=1 > uR=0, shock speed 1/2 > 0, flux h(1) = 1/2
        f = named_flux("burgers-circle", build_circle_mesh(10))
        assert numerical_flux(f, 0, 1.0, 0.0, GOD) == pytest.approx(0.5)

    def test_burgers_transonic(self):
        f = named_flux("burgers-circle", build_circle_mesh(10))
        assert numerical_flux(f, 0, -1.0, 1.0, GOD) == 0.0

    def test_lax_friedrichs_formula(self):
        f = named_flux("burgers-circle", build_circle_mesh(10))
        a, b = 0.4, -1.2
        lam = 1.2
        expect = 0.5 * (a * a / 2 + b * b / 2) - 0.5 * lam * (b - a)
        assert numerical_flux(f, 0, a, b, LF) == pytest.approx(expect)

    @given(a=st.floats(-2, 2), b=st.floats(-2, 2), d=st.floats(0, 1))
    def test_monotone_and_conservative(self, a, b, d):
        m = build_circle_mesh(6)
        f = named_flux("burgers-circle", m)
        # the viscosity must bound |h'| over every sampled value, |u| <= 3 here
        for sch in (LF, GOD):
            q = numerical_flux(f, 0, a, b, sch, lip=3.0)
            assert numerical_flux(f, 0, a + d, b, sch, lip=3.0) >= q - 1e-12
            assert numerical_flux(f, 0, a, b + d, sch, lip=3.0) <= q + 1e-12
            # the same face seen from the neighbour
            assert numerical_flux(f, 0, b, a, sch, owner=1, lip=3.0) == pytest.approx(-q, abs=1e-12)


class TestCFL:
    def test_uniform_grid(self):
        m = build_circle_mesh(100)
        f = named_flux("advection-circle", m)
        assert cfl_timestep(m, f, State(m, sine0(m)), 0.5) == pytest.approx(0.005)

    def test_zero_flux_capped(self):
        m = build_circle_mesh(20)
        f = make_product_flux(zero_flux(), WeightedConstantField((1.0,)), m)
        assert cfl_timestep(m, f, np.zeros(20), 0.5, cap=0.25) == 0.25

    def test_burgers_range(self):
        m = build_circle_mesh(50)
        f = named_flux("burgers-circle", m)
        u = np.zeros(50)
        dt2 = cfl_timestep(m, f, u, 0.5, u_range=(-2, 2))
        dt1 = cfl_timestep(m, f, u, 0.5, u_range=(-1, 1))
        # direct formula: dt = cfl |K| / (1/2 * 2 * Lip)
        assert dt2 == pytest.approx(0.5 * 0.02 / 2.0)
        assert dt1 == pytest.approx(2 * dt2)

    def test_bad_cfl(self):
        m = build_circle_mesh(10)
        with pytest.raises(SchemeError):
            cfl_timestep(m, named_flux("advection-circle", m), np.zeros(10), 1.1)


class TestStep:
    @pytest.mark.parametrize("c", [-1.3, 0.0, 0.77])
    def test_constant_preserved(self, c):
        m = build_sphere_mesh(2)
        f = named_flux("sphere-rotation", m)
        s = State(m, np.full(m.n_cells, c))
        dt = cfl_timestep(m, f, s, 0.5, u_range=(-2, 2))
        out = step(s, f, LF, dt, u_range=(-2, 2))
        assert np.max(np.abs(out.u - c)) <= 1e-12

    def test_upwind_shift(self):
        n = 40
        m = build_circle_mesh(n)
        f = named_flux("advection-circle", m)
        u = np.zeros(n)
        u[7] = 1.0
        sch = SchemeConfig("godunov-1d", cfl=1.0)
        dt = cfl_timestep(m, f, u, 1.0)
        assert dt == pytest.approx(1.0 / n)
        out = step(State(m, u), f, sch, dt)
        expect = np.zeros(n)
        expect[8] = 1.0
        assert np.allclose(out.u, expect, atol=1e-14)

    def test_burgers_mass(self):
        m = build_circle_mesh(100)
        f = named_flux("burgers-circle", m)
        s = State(m, sine0(m))
        m0 = s.mass
        for _ in range(100):
            s = step(s, f, GOD, cfl_timestep(m, f, s, 0.9))
        assert abs(s.mass - m0) <= 1e-12

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_abort_names_cell(self):
        m = build_circle_mesh(8)
        h = scalar_flux(lambda v: np.where(v > 5, np.inf, v), lambda v: np.ones_like(v), convex=True)
        f = make_product_flux(h, WeightedConstantField((1.0,)), m)
        u = np.zeros(8)
        u[3] = 6.0
        with pytest.raises(SolverAbort) as err:
            step(State(m, u), f, LF, 0.01, step_index=17)
        assert err.value.step == 17
        # first non-finite cell of the three-cell stencil around the blow-up
        assert err.value.cell in (2, 3, 4)
        assert "step 17" in str(err.value)

    def test_source_term_mode(self):
        w = weight_closure("sine")
        m = build_torus_mesh(8, 8, weight=w)
        f = named_flux("torus-incompatible", m)
        s = State(m, np.ones(m.n_cells))
        out = step(s, f, SchemeConfig(mode="source-term"), 0.001)
        # with u = 1 the update is -dt h(1) div X, computed from the analytic divergence
        assert np.allclose(out.u, 1.0 - 0.001 * f.analytic_divergence(), atol=1e-12)


class TestCompatibility:
    def test_projection_closes_cells(self):
        m = build_sphere_mesh(3)
        f = named_flux("sphere-rotation", m)
        s = compatible_speeds(f)
        assert np.max(np.abs(f.cell_defects(s))) <= 1e-14
        # the correction is small against the raw speeds
        assert np.max(np.abs(s - f.face_speeds())) <= 1e-3

    def test_projection_needs_closed_mesh(self):
        m = build_interval_mesh(5)
        with pytest.raises(ValueError):
            project_divergence_free(m, np.ones(m.n_faces))


class TestEvolve:
    def test_snapshot_landing(self):
        m = build_circle_mesh(30)
        f = named_flux("advection-circle", m)
        tr = evolve(State(m, sine0(m)), f, LF, 0.5, snapshot_times=[0.1, 0.123, 0.4])
        assert tr.times == [0.0, 0.1, 0.123, 0.4, 0.5]
        assert tr.snapshot_index(0.123) == 2
        with pytest.raises(KeyError):
            tr.snapshot_index(0.2)

    def test_schedule_errors(self):
        with pytest.raises(SchemeError):
            snapshot_schedule(0.0, None)
        with pytest.raises(SchemeError):
            snapshot_schedule(1.0, [2.0])

    def test_transport_period(self):
        errs = []
        for n in (50, 100, 200, 400):
            m = build_circle_mesh(n)
            f = named_flux("advection-circle", m)
            tr = evolve(State(m, sine0(m)), f, LF, 1.0)
            e = l1_distance(m, tr.states[-1], sine0(m))
            assert e <= 10 * np.sqrt(1.0 / n)
            errs.append(e)
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_transport_exact_oracle(self):
        m = build_circle_mesh(200)
        f = named_flux("advection-circle", m, speed=1.0)
        tr = evolve(State(m, sine0(m)), f, GOD, 0.25)
        ex = circle_transport(lambda x: np.sin(2 * np.pi * x), 1.0, 0.25, m.cell_center[:, 0])
        assert l1_distance(m, tr.states[-1], ex) < 0.05

    def test_burgers_max_principle(self):
        m = build_circle_mesh(100)
        f = named_flux("burgers-circle", m)
        tr = evolve(State(m, sine0(m)), f, LF, 1.0, record_steps=True)
        u = tr.u
        assert u.min() >= -1.0 and u.max() <= 1.0
        assert u.min() >= sine0(m).min() and u.max() <= sine0(m).max()

    def test_sphere_revolution(self):
        errs = []
        bell = cosine_bell()
        for level in (2, 3, 4):
            m = build_sphere_mesh(level)
            f = named_flux("sphere-rotation", m)
            u0 = bell(m.cell_center)
            tr = evolve(State(m, u0), f, LF, 2 * np.pi, u_range=(0.0, 1.0))
            ex = sphere_rotation(bell, (0, 0, 1), 2 * np.pi, m.cell_center)
            errs.append(l1_distance(m, tr.states[-1], ex))
        assert errs[0] > errs[1] > errs[2]

    def test_lf_godunov_agree_smooth(self):
        for n in (100, 200):
            m = build_circle_mesh(n)
            f = named_flux("advection-circle", m)
            u = State(m, sine0(m))
            dt = cfl_timestep(m, f, u, 0.5)
            a = step(u, f, LF, dt).u
            b = step(u, f, GOD, dt).u
            assert np.max(np.abs(a - b)) <= 10.0 / n

    def test_step_limit(self):
        m = build_circle_mesh(50)
        f = named_flux("advection-circle", m)
        with pytest.raises(SolverAbort):
            evolve(State(m, sine0(m)), f, LF, 1.0, max_steps=5)

    def test_shared_u_range_shares_steps(self, rng):
        m = build_circle_mesh(64)
        f = named_flux("burgers-circle", m)
        a = evolve(State(m, rng.uniform(-1, 1, 64)), f, LF, 0.2, u_range=(-1, 1))
        b = evolve(State(m, rng.uniform(-0.2, 0.3, 64)), f, LF, 0.2, u_range=(-1, 1))
        assert a.step_dt == b.step_dt


@given(c=st.floats(-5, 5), n=st.integers(3, 30))
def test_constant_state_property(c, n):
    m = build_circle_mesh(n, weight=weight_closure("sine"))
    f = named_flux("burgers-circle", m)
    s = State(m, np.full(n, c))
    out = step(s, f, GOD, cfl_timestep(m, f, s, 0.9, u_range=(-5, 5)), u_range=(-5, 5))
    assert np.max(np.abs(out.u - c)) <= 1e-12 * max(1.0, abs(c))


@given(seed=st.integers(0, 2**31 - 1))
def test_step_max_principle_property(seed):
    rng = np.random.default_rng(seed)
    m = build_torus_mesh(6, 5, weight=weight_closure("sine"))
    f = named_flux("torus-weighted-burgers", m)
    u = rng.uniform(-2, 2, m.n_cells)
    out = step(State(m, u), f, LF, cfl_timestep(m, f, u, 1.0))
    assert out.u.min() >= u.min() and out.u.max() <= u.max()
