import numpy as np
import pytest
from hypothesis import given, strategies as st

from manifold_fv.analysis import (BURGERS_SINE_SHOCK_TIME, BoundaryTerm, TestFunction,
                                  YoungMeasureField, balance_check, burgers_riemann, burgers_sine,
                                  cell_error, circle_transport, conservation_check,
                                  contraction_check, convergence_rate, cosine_bell,
                                  empirical_young_measure, entropy_battery, entropy_residual,
                                  entropy_residuals, l1_distance, max_principle_check,
                                  measure_valued_residual, riemann_flux, rotate, sphere_rotation,
                                  standard_battery, time_reversed, tol_entropy, tol_trace,
                                  trapezoid_weights, validate_test_function)
from manifold_fv.boundary_lorentzian import BoundaryData, evolve_foliated
from manifold_fv.flux_model import (WeightedConstantField, make_product_flux, named_flux,
                                    weight_closure, zero_flux)
from manifold_fv.fv_core import SchemeConfig, State, evolve
from manifold_fv.geometry import (build_circle_mesh, build_flrw_strip, build_interval_mesh,
                                  build_sphere_mesh, build_torus_mesh)

LF = SchemeConfig("lax-friedrichs")
GOD = SchemeConfig("godunov-1d", cfl=0.9)


def burgers_run(n, T, snaps=41, scheme=GOD):
    m = build_circle_mesh(n)
    f = named_flux("burgers-circle", m)
    u0 = np.sin(2 * np.pi * m.cell_center[:, 0])
    return evolve(State(m, u0), f, scheme, T, snapshot_times=np.linspace(0, T, snaps))


class TestL1:
    def test_equal(self):
        m = build_circle_mesh(7)
        u = np.arange(7.0)
        assert l1_distance(m, u, u) == 0.0

    def test_unit_offset(self):
        m = build_torus_mesh(5, 4, weight=weight_closure("sine"))
        assert l1_distance(m, np.ones(20), np.zeros(20)) == pytest.approx(m.total_volume)

    def test_direct_summation(self, rng):
        m = build_circle_mesh(10, weight=rng.uniform(0.5, 2, 10))
        u, v = rng.normal(size=10), rng.normal(size=10)
        ref = 0.0
        for i in range(10):
            ref += m.cell_measure[i] * abs(u[i] - v[i])
        assert l1_distance(m, u, v) == pytest.approx(ref, rel=1e-15)

    def test_shape(self):
        with pytest.raises(ValueError):
            l1_distance(build_circle_mesh(4), np.zeros(4), np.zeros(5))


class TestContraction:
    def test_identical(self):
        a = burgers_run(50, 0.2)
        r = contraction_check(a, a)
        assert np.all(r.distances == 0.0) and r.status == "pass"

    def test_burgers_random_pair(self, rng):
        m = build_circle_mesh(100)
        f = named_flux("burgers-circle", m)
        kw = dict(u_range=(-1, 1), record_steps=True)
        a = evolve(State(m, rng.uniform(-1, 1, 100)), f, LF, 1.0, **kw)
        b = evolve(State(m, rng.uniform(-1, 1, 100)), f, LF, 1.0, **kw)
        assert len(a.states) >= 201
        r = contraction_check(a, b)
        assert r.nonincreasing and r.status == "pass"

    def test_mismatched_steps(self, rng):
        m = build_circle_mesh(40)
        f = named_flux("burgers-circle", m)
        a = evolve(State(m, rng.uniform(-1, 1, 40)), f, LF, 0.2)
        b = evolve(State(m, 3 * rng.uniform(-1, 1, 40)), f, LF, 0.2)
        with pytest.raises(ValueError):
            contraction_check(a, b)

    def test_not_claimed_for_sources(self):
        m = build_torus_mesh(8, 8, weight=weight_closure("sine"))
        f = named_flux("torus-incompatible", m)
        sch = SchemeConfig(mode="source-term")
        a = evolve(State(m, np.zeros(64)), f, sch, 0.05, u_range=(-1, 2))
        r = contraction_check(a, a)
        assert r.status == "not claimed"


class TestConservation:
    def test_compatible(self):
        assert conservation_check(burgers_run(64, 0.4)) <= 1e-12

    def test_zero_flux(self):
        m = build_circle_mesh(20)
        f = make_product_flux(zero_flux(), WeightedConstantField((1.0,)), m)
        tr = evolve(State(m, np.linspace(0, 1, 20)), f, LF, 1.0)
        assert conservation_check(tr) == 0.0

    def test_strip_balance(self):
        st_ = build_flrw_strip(80, 0.6, spatial_topology="interval")
        f = named_flux("burgers-strip", st_.mesh)
        tr = evolve_foliated(st_, f, BoundaryData(initial=lambda x: 0.3 * np.sin(2 * np.pi * x),
                                                  left=0.5, right=-0.2), GOD)
        # the mass itself moves, the balance closes with the accumulated boundary flux
        assert conservation_check(tr) > 1e-3
        assert balance_check(tr) <= 1e-10


class TestMaxPrinciple:
    def test_burgers(self):
        r = max_principle_check(burgers_run(50, 1.0))
        assert r.ok and r.observed_max <= 1.0

    def test_extra_values(self):
        tr = burgers_run(30, 0.1)
        tr.umax.append(1.5)
        assert not max_principle_check(tr).ok
        assert max_principle_check(tr, extra_values=[1.5]).ok


class TestTestFunctions:
    def test_bump_shape(self):
        m = build_circle_mesh(100)
        phi = TestFunction((0.5,), 0.2, 0.5, 0.25)
        psi = phi.psi(m)
        assert psi.max() <= 1.0 and psi[np.abs(m.cell_center[:, 0] - 0.5) >= 0.2].max() == 0.0
        assert phi.chi(0.5) == 1.0 and phi.chi(0.76) == 0.0

    def test_periodic_wrap(self):
        m = build_circle_mesh(100)
        phi = TestFunction((0.05,), 0.1, 0.5, 0.25)
        assert phi.psi(m, np.array([[0.99]]))[0] > 0.0

    def test_derivatives(self):
        m = build_torus_mesh(4, 4)
        phi = TestFunction((0.5, 0.5), 0.3, 0.4, 0.2)
        t, eps = 0.33, 1e-6
        assert phi.dchi(t) == pytest.approx((phi.chi(t + eps) - phi.chi(t - eps)) / (2 * eps), rel=1e-6)
        x = np.array([[0.6, 0.45]])
        g = phi.grad_psi(m, x)[0]
        fd = [(phi.psi(m, x + eps * e) - phi.psi(m, x - eps * e))[0] / (2 * eps) for e in np.eye(2)]
        assert np.allclose(g, fd, rtol=1e-6)

    def test_sphere_gradient_tangent(self):
        m = build_sphere_mesh(2)
        phi = TestFunction((1.0, 0.0, 0.0), 0.6, 0.5, 0.2)
        g = phi.grad_psi(m)
        assert np.allclose(np.einsum("ij,ij->i", g, m.cell_center), 0.0, atol=1e-12)

    def test_battery(self):
        for m in (build_circle_mesh(20), build_torus_mesh(8, 8), build_sphere_mesh(1)):
            bumps = standard_battery(m, 0.4)
            assert len(bumps) == 28
            assert sum(b.t_center == 0.0 for b in bumps) == 1
            for b in bumps:
                validate_test_function(b, m, 0.4)

    def test_validation(self):
        m = build_circle_mesh(20)
        with pytest.raises(ValueError):
            validate_test_function(TestFunction((0.5,), 0.2, 0.9, 0.2), m, 1.0)
        with pytest.raises(ValueError):
            validate_test_function(TestFunction((0.5,), 0.6, 0.5, 0.2), m, 1.0)
        with pytest.raises(ValueError):
            validate_test_function(TestFunction((0.1,), 0.2, 0.5, 0.2), build_interval_mesh(20), 1.0)
        with pytest.raises(ValueError):
            validate_test_function(TestFunction((0.5,), 0.0, 0.5, 0.2), m, 1.0)

    def test_trapezoid_weights(self):
        t = np.array([0.0, 0.1, 0.3, 0.6])
        assert trapezoid_weights(t) @ t**1 == pytest.approx(0.18)
        assert trapezoid_weights(np.array([1.0])).tolist() == [0.0]


class TestEntropyResidual:
    def test_constant_solution(self):
        # only quadrature error remains: midpoint in space, trapezoid in time
        worst = []
        for level in (2, 3):
            m = build_sphere_mesh(level)
            f = named_flux("sphere-rotation", m)
            tr = evolve(State(m, np.full(m.n_cells, 0.4)), f, LF, 0.5,
                        snapshot_times=np.linspace(0, 0.5, 41))
            vals = []
            for phi in standard_battery(m, 0.5)[:9]:
                for k in (-1.0, 0.4, 0.9):
                    r = entropy_residual(tr, k, phi)
                    assert abs(r.residual) <= r.tolerance
                    vals.append(abs(r.residual))
            worst.append(max(vals))
        assert worst[1] < worst[0]

    def test_constant_solution_circle(self):
        m = build_circle_mesh(200)
        f = named_flux("advection-circle", m)
        tr = evolve(State(m, np.full(200, -0.3)), f, LF, 0.4, snapshot_times=np.linspace(0, 0.4, 201))
        for phi in standard_battery(m, 0.4):
            assert abs(entropy_residual(tr, 0.1, phi).residual) <= 1e-5

    def test_shock_dissipates(self):
        T = 0.4
        tr = burgers_run(400, T, snaps=81)
        phi = TestFunction((0.5,), 0.2, 0.3, 0.1)
        r = entropy_residual(tr, 0.0, phi)
        # fine-grid value: the dissipation at the shock is u_-^2 per unit time
        assert r.residual > 10 * r.tolerance

    def test_time_reversed_flagged(self):
        T = 0.4
        tr = burgers_run(200, T, snaps=81)
        rev = time_reversed(tr)
        assert rev.meta["synthetic"] == "time-reversed"
        rep = entropy_battery(rev)
        assert not rep.passed
        k, ident, val = rep.worst_case()
        assert val < -rep.tolerance

    def test_battery_passes_forward(self):
        rep = entropy_battery(burgers_run(100, 0.4, snaps=41))
        assert rep.passed
        assert rep.residuals.shape == (33, 28)

    def test_tolerances_vanish(self):
        assert tol_entropy(0.01) > tol_entropy(0.0025) > tol_entropy(1e-6)
        assert tol_trace(1e-8) < 1e-3
        assert tol_entropy(0.01, scale=2.0) == pytest.approx(2 * tol_entropy(0.01))

    def test_source_term_uses_divergence(self):
        m = build_torus_mesh(16, 16, weight=weight_closure("sine"))
        f = named_flux("torus-incompatible", m)
        sch = SchemeConfig(mode="source-term")
        tr = evolve(State(m, np.full(256, 1.0)), f, sch, 0.2, snapshot_times=np.linspace(0, 0.2, 21),
                    u_range=(0, 2))
        assert entropy_battery(tr).passed


class TestYoungMeasures:
    def test_dirac_matches(self):
        tr = burgers_run(80, 0.3)
        field = YoungMeasureField.dirac(tr)
        phi = standard_battery(tr.mesh, 0.3)[4]
        for k in (-0.5, 0.1, 0.7):
            a = measure_valued_residual(field, k, phi, tr.flux)
            b = entropy_residual(tr, k, phi).residual
            assert abs(a - b) <= 1e-10

    def test_constant_dirac_zero(self):
        m = build_circle_mesh(30)
        f = named_flux("burgers-circle", m)
        tr = evolve(State(m, np.full(30, 0.3)), f, LF, 0.2, snapshot_times=np.linspace(0, 0.2, 11))
        field = YoungMeasureField.dirac(tr)
        for phi in standard_battery(m, 0.2)[:5]:
            assert abs(measure_valued_residual(field, 0.0, phi, f)) <= 1e-12

    def test_linearity(self):
        m = build_circle_mesh(30)
        f = named_flux("burgers-circle", m)
        times = np.linspace(0, 0.2, 11)
        M = np.tile(m.cell_measure, (11, 1))
        base = np.full((11, 30, 2), 0.3)
        probs = np.full((11, 30, 2), 0.5)
        a, b = -0.4, 0.8
        mixed = base.copy()
        mixed[5, 15] = [a, b]
        da, db = base.copy(), base.copy()
        da[5, 15] = a
        db[5, 15] = b
        phi = TestFunction((0.5,), 0.2, 0.1, 0.05)
        u0 = np.full(30, 0.3)
        r = [measure_valued_residual(YoungMeasureField(m, times, M, x, probs), 0.1, phi, f, u_init=u0)
             for x in (mixed, da, db)]
        assert r[0] == pytest.approx(0.5 * (r[1] + r[2]), abs=1e-14)

    def test_field_validation(self):
        m = build_circle_mesh(4)
        t = np.array([0.0, 1.0])
        M = np.ones((2, 4))
        with pytest.raises(ValueError):
            YoungMeasureField(m, t, M, np.zeros((2, 4, 1)), np.full((2, 4, 1), 0.5))
        with pytest.raises(ValueError):
            YoungMeasureField(m, t, M, np.zeros((2, 3, 1)), np.ones((2, 3, 1)))
        atoms = np.zeros((2, 4, 1))
        atoms[1, 2] = np.nan
        with pytest.raises(ValueError):
            YoungMeasureField(m, t, M, atoms, np.ones((2, 4, 1)))

    def test_boundary_term_sign(self):
        m = build_interval_mesh(40)
        f = named_flux("burgers-strip", m)
        times = np.linspace(0, 0.2, 11)
        M = np.tile(m.cell_measure, (11, 1))
        field = YoungMeasureField(m, times, M, np.full((11, 40, 1), 0.5), np.ones((11, 40, 1)))
        phi = TestFunction((0.1,), 0.3, 0.1, 0.1)
        bt = BoundaryTerm(point=(0.0,), u_B=np.full(11, 0.5), b=np.full(11, 0.5), normal=np.full(11, -1.0))
        r0 = measure_valued_residual(field, 0.0, phi, f)
        r1 = measure_valued_residual(field, 0.0, phi, f, boundary_terms=[bt])
        # E_N = sgn(0.5) * (-1) * (0.125 - 0) and the term enters as -int E theta
        w = trapezoid_weights(times) @ (phi.chi(times) * phi.psi(m, np.array([[0.0]]))[0])
        assert r1 - r0 == pytest.approx(0.125 * w, rel=1e-12)

    def test_empirical_constant(self):
        runs = []
        for n in (32, 64, 128):
            m = build_circle_mesh(n)
            runs.append(evolve(State(m, np.full(n, 0.2)), named_flux("burgers-circle", m), LF, 0.1))
        ym = empirical_young_measure(runs, (0.3,), 0.1)
        assert np.all(ym.variances == 0.0)
        assert np.allclose(ym.means, 0.2)

    def test_empirical_concentration(self):
        runs = [burgers_run(n, 0.3, snaps=4) for n in (100, 200, 400)]
        ym = empirical_young_measure(runs, (0.2,), 0.3)
        v = ym.variances
        assert v[0] > v[1] > v[2]

    def test_empirical_needs_levels(self):
        with pytest.raises(ValueError):
            empirical_young_measure([burgers_run(20, 0.1)] * 2, (0.5,), 0.1)


class TestRates:
    def test_linear(self):
        hs = [0.1, 0.05, 0.025, 0.0125]
        assert convergence_rate([(h, h) for h in hs]) == pytest.approx(1.0)
        assert convergence_rate([(h, np.sqrt(h)) for h in hs]) == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(ValueError):
            convergence_rate([(0.1, 1.0), (0.05, 0.5)])
        with pytest.raises(ValueError):
            convergence_rate([(0.1, 1.0), (0.2, 0.5), (0.05, 0.2)])
        with pytest.raises(ValueError):
            convergence_rate([(0.1, 1.0), (0.05, 0.0), (0.025, 0.2)])

    @given(p=st.floats(0.1, 3.0), c=st.floats(0.01, 100.0))
    def test_power_law_property(self, p, c):
        hs = [0.2 / 2**i for i in range(4)]
        assert convergence_rate([(h, c * h**p) for h in hs]) == pytest.approx(p, rel=1e-9)


class TestExactSolutions:
    def test_riemann_shock(self):
        xi = np.array([0.49, 0.51])
        assert burgers_riemann(1.0, 0.0, xi).tolist() == [1.0, 0.0]
        assert riemann_flux(lambda u: 0.5 * u * u, 1.0, 0.0) == 0.5

    def test_riemann_fan(self):
        xi = np.array([-2.0, -0.5, 0.0, 0.7, 3.0])
        assert burgers_riemann(-1.0, 1.0, xi).tolist() == [-1.0, -0.5, 0.0, 0.7, 1.0]
        assert riemann_flux(lambda u: 0.5 * u * u, -1.0, 1.0) == 0.0

    def test_transport(self):
        u0 = lambda x: np.cos(2 * np.pi * x)  # noqa: E731
        x = np.linspace(0, 1, 7)
        assert np.allclose(circle_transport(u0, 0.7, 0.3, x), u0(x - 0.21))

    def test_rotation(self):
        p = np.array([[1.0, 0.0, 0.0]])
        assert np.allclose(rotate(p, (0, 0, 1), np.pi / 2), [[0, 1, 0]], atol=1e-15)
        bell = cosine_bell()
        assert sphere_rotation(bell, (0, 0, 1), np.pi / 2, np.array([[0.0, 1.0, 0.0]]))[0] == pytest.approx(1.0)
        assert bell(np.array([[0.0, 0.0, 1.0]]))[0] == 0.0

    def test_burgers_sine_oracle(self):
        # values from a 30-digit root solve of xi + t sin(2 pi xi) = x
        assert burgers_sine(0.1, np.array([0.3]))[0] == pytest.approx(0.95874605209846268, abs=1e-13)
        assert burgers_sine(0.3, np.array([0.2]))[0] == pytest.approx(0.43053909740267963, abs=1e-13)
        assert burgers_sine(0.3, np.array([0.45]))[0] == pytest.approx(0.9026715055483867, abs=1e-13)
        assert burgers_sine(0.1, np.array([0.05]))[0] == pytest.approx(0.1921957450294546, abs=1e-13)

    @given(t=st.floats(0, 0.5), x=st.floats(0.001, 0.499))
    def test_burgers_sine_odd(self, t, x):
        a = burgers_sine(t, np.array([x, 1.0 - x]))
        assert a[0] == pytest.approx(-a[1], abs=1e-14)
        assert 0.0 <= a[0] <= 1.0

    def test_shock_time(self):
        assert BURGERS_SINE_SHOCK_TIME == pytest.approx(0.15915494309189535)
        after = burgers_sine(0.3, np.array([0.4999, 0.5001]))
        assert after[0] > 0.5 and after[1] < -0.5

    def test_cell_error(self):
        m = build_circle_mesh(10)
        assert cell_error(m, np.zeros(10), lambda x: np.ones(x.shape[0])) == pytest.approx(1.0)
