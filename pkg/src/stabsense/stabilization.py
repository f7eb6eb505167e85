"""Coherence-stabilizing control: the drive law, stability criterion,
breakdown time, and sampled control schedules with amplitude cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import BlochState, ControlSchedule, DecoherenceParams, solve_bloch
from .errors import BreakdownSingularityError, DomainError, InconsistentStateError

DEFAULT_H_MAX = 50.0  # in units of 1/T2
DEFAULT_HORIZON = 100.0  # reference trajectory length for stable states, in T2

# below this gamma_1/gamma_2 the breakdown time uses its small-relaxation series
_SERIES_GAMMA1 = 1e-8


@dataclass(frozen=True)
class InitialState:
    """Pure state in the xz plane at polar angle ``theta`` from +z."""

    theta: float
    v_x0: float = field(init=False)
    v_z0: float = field(init=False)

    def __post_init__(self):
        if not -1e-12 <= self.theta <= math.pi / 2 + 1e-12:
            raise DomainError(f"theta must lie in [0, pi/2], got {self.theta}")
        object.__setattr__(self, "v_x0", math.sin(self.theta))
        v_z0 = 0.0 if self.theta >= math.pi / 2 else math.cos(self.theta)
        object.__setattr__(self, "v_z0", v_z0)

    @classmethod
    def from_vx(cls, v_x0: float) -> "InitialState":
        if not 0.0 <= v_x0 <= 1.0:
            raise DomainError(f"v_x0 must lie in [0, 1], got {v_x0}")
        state = cls(math.asin(v_x0))
        # keep the caller's v_x0 bit-exact rather than sin(asin(v_x0))
        object.__setattr__(state, "v_x0", float(v_x0))
        object.__setattr__(state, "v_z0", math.sqrt(max(0.0, 1.0 - v_x0 * v_x0)))
        return state

    @property
    def bloch(self) -> BlochState:
        return BlochState(self.v_x0, 0.0, self.v_z0)


@dataclass(frozen=True)
class BreakdownResult:
    t_b: float
    tau_b: float
    alpha: float

    @property
    def stable(self) -> bool:
        return math.isinf(self.t_b)


def control_field(v_z: float, v_x0: float, gamma_2: float) -> float:
    """Drive amplitude ``gamma_2 * v_x0 / (2 v_z)`` that holds v_x at ``v_x0``."""
    if v_z == 0:
        raise BreakdownSingularityError("control law is singular at v_z = 0")
    return gamma_2 * v_x0 / (2.0 * v_z)


def stability_threshold(params: DecoherenceParams) -> float:
    """Largest v_x0 that can be held indefinitely, ``(eta/2) sqrt(gamma_1/gamma_2)``."""
    return 0.5 * params.eta * math.sqrt(params.gamma_1 / params.gamma_2)


def is_stable(v_x0: float, params: DecoherenceParams) -> bool:
    if not 0.0 <= v_x0 <= 1.0:
        raise DomainError(f"v_x0 must lie in [0, 1], got {v_x0}")
    return v_x0 <= stability_threshold(params)


def breakdown_time(init: InitialState, params: DecoherenceParams) -> BreakdownResult:
    """Time at which v_z reaches zero while v_x is held at ``v_x0``.

    Stable states return ``t_b = inf``. A state already on the equator
    (``v_z0 = 0``) breaks down immediately.

    Holding v_x fixed reduces the dynamics to
    ``dv_z/dt = gamma_1 (eta - v_z) - gamma_2 v_x0**2 / v_z``, whose time to reach
    zero is ``int_0^{v_z0} z dz / (gamma_2 v_x0**2 - gamma_1 z (eta - z))``.
    """
    g1, g2, eta = params.gamma_1, params.gamma_2, params.eta
    vx, vz = init.v_x0, init.v_z0
    if is_stable(vx, params):
        return BreakdownResult(math.inf, math.inf, math.nan)
    if vz <= 0:
        return BreakdownResult(0.0, 0.0, math.inf if g1 == 0 else math.sqrt(4 * vx**2 * g2 / g1 - eta**2))

    c = g2 * vx * vx
    if g1 < _SERIES_GAMMA1 * g2:
        # expansion of the integrand in gamma_1; exact at gamma_1 = 0
        t_b = vz * vz / (2.0 * c) + g1 * (eta * vz**3 / 3.0 - vz**4 / 4.0) / c**2
        return BreakdownResult(t_b, g2 * t_b, math.inf)

    alpha2 = 4.0 * c / g1 - eta * eta
    if alpha2 <= 0:
        raise InconsistentStateError(
            f"alpha^2 = {alpha2} <= 0 for an unstable state (v_x0={vx}, params={params})"
        )
    alpha = math.sqrt(alpha2)
    u = 2.0 * vz - eta
    log_term = math.log1p((u * u - eta * eta) / (alpha2 + eta * eta))
    atan_term = (2.0 * eta / alpha) * (math.atan(u / alpha) + math.atan(eta / alpha))
    t_b = (log_term + atan_term) / (2.0 * g1)
    return BreakdownResult(t_b, g2 * t_b, alpha)


def build_schedule(
    init: InitialState,
    params: DecoherenceParams,
    h_max: float = DEFAULT_H_MAX,
    horizon: float | None = None,
) -> ControlSchedule:
    """Open-loop drive waveform for stabilizing ``init`` under ``params``.

    The waveform is the stabilizing law evaluated along the detuning-free
    reference trajectory, which is integrated alongside (the drive depends on
    the reference's own v_z). When the drive would first exceed ``h_max`` the
    schedule is cut to zero for good. Stable states never cut off; past the
    reference horizon they hold the fixed-point drive.
    """
    if h_max <= 0:
        raise DomainError(f"h_max must be positive, got {h_max}")
    g2 = params.gamma_2
    vx = init.v_x0
    if vx == 0:
        return ControlSchedule(lambda t: 0.0, h_max=h_max)

    z_cut = g2 * vx / (2.0 * h_max)
    if init.v_z0 <= z_cut:
        return ControlSchedule(lambda t: 0.0, h_max=h_max, cutoff_time=0.0)

    stable = is_stable(vx, params)
    if horizon is None:
        if stable:
            horizon = DEFAULT_HORIZON / g2
        else:
            # the cutoff event precedes t_b; the margin only guards the event search
            horizon = 2.0 * breakdown_time(init, params).t_b + 10.0 / g2

    def law(t, v):
        return g2 * vx / (2.0 * v[2])

    def hits_cap(t, v):
        return v[2] - z_cut

    hits_cap.terminal = True
    hits_cap.direction = -1

    sol = solve_bloch(init.bloch.as_array(), params, h_y=law, t_span=(0.0, horizon),
                      events=hits_cap, dense_output=True)
    cutoff = float(sol.t_events[0][0]) if sol.t_events[0].size else None
    reference = sol.sol
    t_last = float(sol.t[-1])

    if cutoff is None:
        z_inf = _stable_fixed_point(vx, params)
        h_inf = g2 * vx / (2.0 * z_inf) if z_inf > 0 else float(law(t_last, sol.y[:, -1]))

        def h_of_t(t):
            if t > t_last:
                return h_inf
            return g2 * vx / (2.0 * reference(t)[2])
    else:
        def h_of_t(t):
            return g2 * vx / (2.0 * reference(min(t, cutoff))[2])

    return ControlSchedule(h_of_t, h_max=h_max, cutoff_time=cutoff)


def _stable_fixed_point(v_x0: float, params: DecoherenceParams) -> float:
    """Upper root of ``gamma_1 z (eta - z) = gamma_2 v_x0**2``, the attracting v_z."""
    g1, g2, eta = params.gamma_1, params.gamma_2, params.eta
    if g1 == 0:
        return 0.0
    disc = eta * eta - 4.0 * g2 * v_x0 * v_x0 / g1
    return 0.5 * (eta + math.sqrt(max(disc, 0.0)))


def sample_schedule(schedule: ControlSchedule, t_end: float, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    times = np.linspace(0.0, t_end, n_samples)
    return times, schedule.sample(times)
