import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import lambertw

from stabsense.bloch import DecoherenceParams, ExperimentConfig, integrate_trajectory
from stabsense.errors import DomainError
from stabsense.protocols import (
    PER_ROOT_TIME,
    PER_SHOT,
    STABLE_SNR_TIME,
    ProtocolTiming,
    lambert_w_minus1,
    optimal_time,
    post_breakdown_snr_offset,
    post_breakdown_vy,
    protocol_vy,
    ramsey_optimum,
    ramsey_vy,
    stabilized_vy,
)
from stabsense.stabilization import InitialState, breakdown_time, build_schedule

D = 0.01


def ode_vy(vx, params, delta, times, h_max=50.0):
    init = InitialState.from_vx(vx)
    sched = build_schedule(init, params, h_max) if vx < 1 else None
    grid = np.concatenate([[0.0], np.atleast_1d(times)])
    tr = integrate_trajectory(ExperimentConfig(delta, init.bloch, tuple(grid)), params, sched)
    return tr.v_y[1:]


class TestLambertW:
    def test_branch_point(self):
        assert lambert_w_minus1(-1 / math.e) == -1.0

    def test_exact_value(self):
        assert lambert_w_minus1(-2 * math.exp(-2)) == pytest.approx(-2.0, abs=1e-13)

    def test_time_optimum_value(self):
        w = lambert_w_minus1(-0.5 / math.sqrt(math.e))
        assert w == pytest.approx(-1.7564, abs=1e-4)
        assert STABLE_SNR_TIME == pytest.approx(1.256, abs=1e-3)

    @given(st.floats(-1 / math.e + 1e-15, -1e-300))
    def test_against_high_precision(self, x):
        mpmath.mp.dps = 40
        w = lambert_w_minus1(x)
        ref = float(mpmath.lambertw(mpmath.mpf(x), -1))
        # near -1/e one ulp in x moves W by about ulp / |1 + W|
        cond = 2.2e-16 / abs(1.0 + ref)
        assert w <= -1
        assert abs(w - ref) <= 1e-12 * abs(ref) + cond
        assert abs(w * math.exp(w) - x) <= 1e-12

    @pytest.mark.parametrize("x", [-0.3, -0.2, -1e-3, -1e-100])
    def test_against_scipy(self, x):
        assert lambert_w_minus1(x) == pytest.approx(lambertw(x, -1).real, rel=1e-13)

    @pytest.mark.parametrize("x", [0.0, 0.1, -0.5])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            lambert_w_minus1(x)


class TestRamsey:
    def test_no_detuning(self):
        assert np.all(ramsey_vy(0.0, 1.0, np.linspace(0, 5, 11)) == 0)

    def test_value_at_t2(self):
        assert ramsey_vy(0.01, 1.0, 1.0) == pytest.approx(0.01 / math.e, abs=1e-6)

    @given(st.floats(-0.5, 0.5), st.floats(0.1, 5.0))
    def test_matches_ode(self, delta, t):
        p = DecoherenceParams.from_ratio(1.0)
        assert ode_vy(1.0, p, delta, [t])[0] == pytest.approx(ramsey_vy(delta, 1.0, t), abs=1e-8)

    def test_small_detuning_limits(self):
        tm, v = ramsey_optimum(1e-6, 1.0, PER_SHOT)
        assert tm.t_meas == pytest.approx(1.0, rel=1e-10)
        assert v / 1e-6 == pytest.approx(1 / math.e, rel=1e-8)
        tm, v = ramsey_optimum(1e-6, 1.0, PER_ROOT_TIME)
        assert tm.t_meas == pytest.approx(0.5, rel=1e-8)
        assert v / 1e-6 == pytest.approx(0.429, abs=5e-4)
        assert v / 1e-6 == pytest.approx(1 / math.sqrt(2 * math.e), rel=1e-8)

    def test_unit_ratio(self):
        tm, v = ramsey_optimum(1.0, 1.0, PER_SHOT)
        assert tm.t_meas == pytest.approx(math.pi / 4)
        assert v == pytest.approx(math.sin(math.pi / 4) * math.exp(-math.pi / 4))

    @pytest.mark.parametrize("delta", [0.05, 0.3, 1.0, 3.0])
    @pytest.mark.parametrize("mode", [PER_SHOT, PER_ROOT_TIME])
    def test_against_dense_scan(self, delta, mode):
        tm, v = ramsey_optimum(delta, 1.0, mode)
        t = np.linspace(1e-4, math.pi / delta, 200001)
        obj = ramsey_vy(delta, 1.0, t) / (np.sqrt(t) if mode == PER_ROOT_TIME else 1.0)
        assert tm.t_meas == pytest.approx(t[np.argmax(obj)], abs=2 * (t[1] - t[0]))
        # the exact optimum can only beat the grid, by at most O(step^2)
        assert obj.max() <= v <= obj.max() * (1 + 1e-7)

    def test_zero_detuning(self):
        tm, v = ramsey_optimum(0.0, 2.0, PER_ROOT_TIME)
        assert tm.t_meas == pytest.approx(0.25) and v == 0.0


class TestStabilizedSignals:
    def test_start(self):
        assert stabilized_vy(0.0, 0.5, D, 1.0) == 0.0

    def test_asymptote(self):
        assert stabilized_vy(60.0, 0.4, D, 1.0) == pytest.approx(0.4 * D)

    def test_continuity(self):
        for tau in (0.1, 1.0, 3.0):
            assert post_breakdown_vy(0.0, 0.7, tau, D, 1.0) == stabilized_vy(tau, 0.7, D, 1.0)

    def test_ramsey_reduction(self):
        t = np.linspace(0, 4, 9)
        assert np.allclose(post_breakdown_vy(t, 1.0, 0.0, D, 1.0), D * t * np.exp(-t), atol=1e-18)
        assert np.allclose(protocol_vy(t, 1.0, DecoherenceParams.from_ratio(1.0), D),
                           D * t * np.exp(-t), atol=1e-18)

    def test_stable_against_ode(self, unit_params):
        t = np.linspace(0.1, 10, 50)
        assert np.allclose(ode_vy(0.5, unit_params, D, t), stabilized_vy(t, 0.5, D, 1.0), atol=2 * D**2)

    def test_post_breakdown_against_ode(self, unit_params):
        b = breakdown_time(InitialState.from_vx(0.671), unit_params)
        t = b.t_b + np.linspace(0.0, 4.0, 40)
        expected = post_breakdown_vy(t - b.t_b, 0.671, b.tau_b, D, 1.0)
        assert np.allclose(ode_vy(0.671, unit_params, D, t), expected, atol=2 * D**2)

    @pytest.mark.parametrize("ratio", [0.1, 0.5, 1.0, 2.0])
    def test_grid_against_ode(self, ratio):
        p = DecoherenceParams.from_rates(gamma_1=ratio, gamma_2=1.0)
        t = np.linspace(0.05, 8, 60)
        for vx in np.linspace(0.02, 1.0, 10):
            assert np.allclose(ode_vy(vx, p, D, t), protocol_vy(t, vx, p, D), atol=2 * D**2)


class TestOptimalTime:
    def test_stable_snr(self, unit_params):
        tm = optimal_time(0.3, unit_params, PER_ROOT_TIME)
        assert tm.branch == "stable_snr"
        assert tm.t_meas == pytest.approx(1.256, abs=1e-3)

    def test_stable_per_shot_horizon(self, unit_params):
        tm = optimal_time(0.3, unit_params, PER_SHOT)
        assert tm.branch == "stable_vy" and tm.asymptotic
        assert tm.t_meas == 5.0

    def test_offset_limits(self):
        assert post_breakdown_snr_offset(0.0) == pytest.approx(0.5, abs=1e-14)
        assert post_breakdown_snr_offset(STABLE_SNR_TIME) == pytest.approx(0.0, abs=1e-12)
        assert post_breakdown_snr_offset(50.0) < 0
        assert math.isfinite(post_breakdown_snr_offset(800.0))

    def test_per_shot_offset_vanishes(self):
        p = DecoherenceParams.from_ratio(1.0)
        vx = 0.5 + 1e-9
        tm = optimal_time(vx, p, PER_SHOT)
        assert tm.t_meas - tm.t_b < 1e-6

    @pytest.mark.parametrize("ratio, vx", [(1.0, 0.671), (0.5, 0.724), (2.0, 0.9), (1.0, 0.95), (0.764, 0.776)])
    @pytest.mark.parametrize("mode", [PER_SHOT, PER_ROOT_TIME])
    def test_first_order_optimality(self, ratio, vx, mode):
        p = DecoherenceParams.from_ratio(ratio)
        tm = optimal_time(vx, p, mode)
        b = breakdown_time(InitialState.from_vx(vx), p)

        def obj(t):
            v = protocol_vy(t, vx, p, D, b.t_b) / D
            return v / math.sqrt(t) if mode == PER_ROOT_TIME else v

        h = 1e-5
        assert abs(obj(tm.t_meas + h) - obj(tm.t_meas - h)) / (2 * h) <= 1e-6
        assert tm.t_meas >= tm.t_b or tm.branch == "stable_snr"

    def test_maximizes_ode_signal(self, unit_params):
        tm = optimal_time(0.671, unit_params, PER_SHOT)
        t = np.linspace(0.5, 4.0, 351)
        v = ode_vy(0.671, unit_params, D, t)
        i = int(np.argmax(v))
        res = minimize_scalar(lambda s: -ode_vy(0.671, unit_params, D, [s])[0],
                              bracket=(t[i - 1], t[i], t[i + 1]), method="golden", options={"xtol": 1e-6})
        assert tm.t_meas == pytest.approx(res.x, abs=1e-2)

    def test_invalid_branch(self):
        with pytest.raises(DomainError):
            ProtocolTiming(1.0, "bogus")
        with pytest.raises(DomainError):
            ProtocolTiming(0.0, "ramsey_vy")

    def test_invalid_mode(self, unit_params):
        with pytest.raises(DomainError):
            optimal_time(0.5, unit_params, "per_minute")
