import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad

from stabsense.bloch import BlochState, DecoherenceParams, ExperimentConfig, integrate_trajectory, solve_bloch
from stabsense.errors import BreakdownSingularityError, DomainError
from stabsense.stabilization import (
    InitialState,
    breakdown_time,
    build_schedule,
    control_field,
    is_stable,
    sample_schedule,
    stability_threshold,
)


def ode_breakdown(init, params, h_max=1e4):
    """First time v_z of the capped closed-loop system reaches the cap level."""
    g2, vx = params.gamma_2, init.v_x0
    z_cut = g2 * vx / (2 * h_max)

    def law(t, v):
        return min(g2 * vx / (2 * v[2]), h_max) if v[2] > 0 else h_max

    def ev(t, v):
        return v[2] - z_cut

    ev.terminal, ev.direction = True, -1
    sol = solve_bloch(init.bloch.as_array(), params, h_y=law, t_span=(0, 200 / g2), events=ev)
    return sol.t_events[0][0]


def quad_breakdown(init, params):
    g1, g2, eta = params.gamma_1, params.gamma_2, params.eta
    c = g2 * init.v_x0**2
    val, _ = quad(lambda z: z / (c - g1 * z * (eta - z)), 0.0, init.v_z0, epsabs=1e-13, epsrel=1e-12)
    return val


class TestControlLaw:
    def test_substitution(self):
        assert control_field(0.5, 0.5, 1.0) == pytest.approx(0.5)

    def test_nothing_to_stabilize(self):
        assert control_field(0.3, 0.0, 2.0) == 0.0

    def test_singular(self):
        with pytest.raises(BreakdownSingularityError):
            control_field(0.0, 0.5, 1.0)

    def test_monotone_until_cutoff(self, unit_params):
        init = InitialState.from_vx(0.671)
        s = build_schedule(init, unit_params)
        t, h = sample_schedule(s, s.cutoff_time * 0.999, 400)
        assert np.all(np.diff(h) > 0)


class TestStability:
    def test_below(self, unit_params):
        assert is_stable(0.3, unit_params)

    def test_boundary_inclusive(self, unit_params):
        assert stability_threshold(unit_params) == pytest.approx(0.5)
        assert is_stable(0.5, unit_params)
        assert breakdown_time(InitialState.from_vx(0.5), unit_params).stable

    def test_no_relaxation(self):
        p = DecoherenceParams.from_ratio(math.inf)
        assert not is_stable(1e-6, p)

    def test_domain(self, unit_params):
        with pytest.raises(DomainError):
            is_stable(1.5, unit_params)


class TestInitialState:
    @given(st.floats(0, math.pi / 2))
    def test_pure(self, theta):
        s = InitialState(theta)
        assert s.v_x0**2 + s.v_z0**2 == pytest.approx(1.0, abs=1e-12)
        assert s.v_z0 >= 0

    def test_equator_exact(self):
        assert InitialState(math.pi / 2).v_z0 == 0.0

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            InitialState(2.0)


class TestBreakdownTime:
    def test_reference_state(self, unit_params):
        init = InitialState(0.213 * math.pi)
        b = breakdown_time(init, unit_params)
        assert b.t_b == pytest.approx(ode_breakdown(init, unit_params), abs=1e-3)
        assert b.tau_b == pytest.approx(b.t_b)
        assert b.alpha**2 == pytest.approx(4 * init.v_x0**2 - 1)

    @given(st.floats(0.05, 2.0), st.floats(0.0, 1.0), st.floats(0.3, 1.0))
    def test_matches_quadrature(self, ratio, frac, eta):
        p = DecoherenceParams.from_rates(gamma_1=ratio, gamma_2=1.0, eta=eta)
        thr = stability_threshold(p)
        vx = thr + (0.999 - thr) * frac
        assume(vx > thr + 1e-3)
        init = InitialState.from_vx(vx)
        assert breakdown_time(init, p).t_b == pytest.approx(quad_breakdown(init, p), rel=1e-8, abs=1e-10)

    @pytest.mark.parametrize("eta", [0.6, 0.85])
    def test_finite_temperature_against_ode(self, eta):
        p = DecoherenceParams.from_ratio(1.0, eta=eta)
        init = InitialState.from_vx(0.5)
        assert breakdown_time(init, p).t_b == pytest.approx(ode_breakdown(init, p), abs=1e-3)

    def test_diverges_at_boundary(self, unit_params):
        ts = [breakdown_time(InitialState.from_vx(0.5 + e), unit_params).t_b for e in (1e-2, 1e-4, 1e-6)]
        assert ts[0] < ts[1] < ts[2] and ts[2] > 50

    def test_decreasing_in_vx(self, unit_params):
        vs = np.linspace(0.52, 0.99, 15)
        ts = [breakdown_time(InitialState.from_vx(v), unit_params).t_b for v in vs]
        assert np.all(np.diff(ts) < 0)
        for v, t in zip(vs[::5], ts[::5]):
            assert t == pytest.approx(ode_breakdown(InitialState.from_vx(v), unit_params), abs=1e-3)

    def test_decreasing_with_temperature(self, unit_params):
        init = InitialState.from_vx(0.7)
        ts = [breakdown_time(init, DecoherenceParams.from_ratio(1.0, eta=e)).t_b for e in (1.0, 0.8, 0.6)]
        assert ts[0] > ts[1] > ts[2]

    def test_no_relaxation_limit(self):
        init = InitialState.from_vx(0.6)
        p0 = DecoherenceParams.from_ratio(math.inf)
        exact = init.v_z0**2 / (2 * init.v_x0**2)
        assert breakdown_time(init, p0).t_b == pytest.approx(exact, rel=1e-12)
        # small gamma_1 approaches it continuously
        p = DecoherenceParams.from_rates(gamma_1=1e-6, gamma_2=1.0)
        assert breakdown_time(init, p).t_b == pytest.approx(exact, rel=1e-5)
        assert breakdown_time(init, p).t_b == pytest.approx(quad_breakdown(init, p), rel=1e-9)

    def test_series_branch_continuity(self):
        init = InitialState.from_vx(0.6)
        a = breakdown_time(init, DecoherenceParams.from_rates(gamma_1=0.99e-8, gamma_2=1.0)).t_b
        b = breakdown_time(init, DecoherenceParams.from_rates(gamma_1=1.01e-8, gamma_2=1.0)).t_b
        assert a == pytest.approx(b, rel=1e-9)

    def test_equator(self, unit_params):
        assert breakdown_time(InitialState.from_vx(1.0), unit_params).t_b == 0.0

    @given(st.floats(0.05, 2.0), st.floats(0.0, 1.0))
    def test_classification_consistent(self, ratio, u):
        p = DecoherenceParams.from_rates(gamma_1=ratio, gamma_2=1.0)
        vx = 0.99 * u
        b = breakdown_time(InitialState.from_vx(vx), p)
        assert b.stable == is_stable(vx, p)
        assert math.isfinite(b.t_b) != b.stable


class TestSchedule:
    def test_stable_converges_to_fixed_drive(self, unit_params):
        vx = 0.45
        z_inf = 0.5 * (1 + math.sqrt(1 - 4 * vx**2))
        s = build_schedule(InitialState.from_vx(vx), unit_params)
        assert s.cutoff_time is None
        assert s(30.0) == pytest.approx(vx / (2 * z_inf), abs=1e-6)

    def test_boundary_drive(self, unit_params):
        # double root at the threshold: algebraic rather than exponential approach
        s = build_schedule(InitialState.from_vx(0.5), unit_params)
        assert s.cutoff_time is None
        assert s(90.0) == pytest.approx(0.5, abs=1e-2)
        assert s(500.0) == pytest.approx(0.5, abs=1e-12)

    def test_zero_state(self, unit_params):
        s = build_schedule(InitialState.from_vx(0.0), unit_params)
        assert np.all(s.sample(np.linspace(0, 10, 50)) == 0.0)

    def test_cutoff_converges(self, unit_params):
        init = InitialState.from_vx(0.671)
        t_b = breakdown_time(init, unit_params).t_b
        cuts = [build_schedule(init, unit_params, h).cutoff_time for h in (10, 1e2, 1e3, 1e4)]
        assert all(c <= t_b for c in cuts)
        assert np.all(np.diff(cuts) > 0)
        assert t_b - cuts[-1] < 1e-3
        assert t_b - build_schedule(init, unit_params).cutoff_time < 1e-3

    def test_cap_respected(self, unit_params):
        s = build_schedule(InitialState.from_vx(0.8), unit_params, h_max=5.0)
        h = s.sample(np.linspace(0, 5, 2001))
        assert np.all(np.abs(h) <= 5.0)
        assert np.all(h[np.linspace(0, 5, 2001) >= s.cutoff_time] == 0.0)

    def test_bad_cap(self, unit_params):
        with pytest.raises(DomainError):
            build_schedule(InitialState.from_vx(0.6), unit_params, h_max=0.0)

    def _vx_error(self, init, params, t_end, delta=0.0, n=400):
        s = build_schedule(init, params, h_max=1e4)
        cfg = ExperimentConfig(delta, BlochState(init.v_x0, 0.0, init.v_z0), tuple(np.linspace(0, t_end, n)))
        tr = integrate_trajectory(cfg, params, s)
        return np.max(np.abs(tr.v_x - init.v_x0))

    @pytest.mark.parametrize("ratio, vx", [(1.0, 0.671), (0.5, 0.8), (2.0, 0.9), (1.0, 0.4)])
    def test_stabilization_accuracy(self, ratio, vx):
        p = DecoherenceParams.from_ratio(ratio)
        init = InitialState.from_vx(vx)
        b = breakdown_time(init, p)
        t_end = 20.0 if b.stable else 0.999 * b.t_b
        assert self._vx_error(init, p, t_end) <= 1e-6

    def test_quadratic_in_detuning(self, unit_params):
        init = InitialState.from_vx(0.45)
        e1 = self._vx_error(init, unit_params, 10.0, 1e-2)
        e2 = self._vx_error(init, unit_params, 10.0, 1e-3)
        assert 50 < e1 / e2 < 200

    def test_stable_never_crosses(self):
        p = DecoherenceParams.from_ratio(0.6)
        init = InitialState.from_vx(0.98 * stability_threshold(p))
        s = build_schedule(init, p)
        cfg = ExperimentConfig(0.0, init.bloch, tuple(np.linspace(0, 50, 501)))
        assert np.all(integrate_trajectory(cfg, p, s).v_z > 0)
