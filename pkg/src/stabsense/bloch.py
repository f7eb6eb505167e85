"""Bloch-vector dynamics of a driven, decohering qubit.

State and parameter types, the Bloch equations with thermal relaxation,
closed-form special cases, and the adaptive integrator that every other
module uses as its numerical reference.

Time is dimensionless by convention (``t / T2`` with ``gamma_2 = 1``), but
nothing here assumes it: all rates are carried explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, IntegrationError

RTOL = 1e-10
ATOL = 1e-12
NORM_TOL = 1e-9

# exp(-beta*omega01) is below double precision relative to 1 past this point
_ETA_SATURATION = 50.0


@dataclass(frozen=True)
class BlochState:
    v_x: float
    v_y: float
    v_z: float

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "BlochState":
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.v_x, self.v_y, self.v_z], dtype=float)

    @property
    def norm(self) -> float:
        return math.sqrt(self.v_x**2 + self.v_y**2 + self.v_z**2)


@dataclass(frozen=True)
class DecoherenceParams:
    """Relaxation rate ``gamma_1``, coherence decay ``gamma_2``, pure dephasing
    ``gamma_phi`` and thermal asymmetry ``eta``.

    The three rates are tied by ``gamma_2 = gamma_phi + gamma_1 / 2``. Use
    :meth:`from_rates`, :meth:`from_times` or :meth:`from_ratio` to build an
    instance from any two of them.
    """

    gamma_1: float
    gamma_2: float
    gamma_phi: float
    eta: float = 1.0

    def __post_init__(self):
        for name in ("gamma_1", "gamma_2", "gamma_phi", "eta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
        if self.gamma_1 < 0 or self.gamma_phi < 0:
            raise DomainError(
                f"rates must be non-negative (gamma_1={self.gamma_1}, gamma_phi={self.gamma_phi})"
            )
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        expected = self.gamma_phi + 0.5 * self.gamma_1
        if abs(self.gamma_2 - expected) > 1e-12 * max(abs(self.gamma_2), abs(expected), 1e-300):
            raise DomainError(
                f"gamma_2={self.gamma_2} inconsistent with gamma_phi + gamma_1/2 = {expected}"
            )

    @classmethod
    def from_rates(
        cls,
        gamma_1: float | None = None,
        gamma_2: float | None = None,
        gamma_phi: float | None = None,
        eta: float = 1.0,
    ) -> "DecoherenceParams":
        given = [r is not None for r in (gamma_1, gamma_2, gamma_phi)]
        if sum(given) < 2:
            raise DomainError("at least two of gamma_1, gamma_2, gamma_phi are required")
        if gamma_phi is None:
            gamma_phi = gamma_2 - 0.5 * gamma_1
            if gamma_phi < 0:
                # tolerate round-off at the relaxation-limited boundary gamma_2 = gamma_1/2
                if gamma_phi > -1e-12 * gamma_2:
                    gamma_phi = 0.0
                else:
                    raise DomainError(
                        f"gamma_2={gamma_2} < gamma_1/2={0.5 * gamma_1} implies negative dephasing"
                    )
            return cls(float(gamma_1), float(gamma_2), float(gamma_phi), float(eta))
        if gamma_2 is None:
            gamma_2 = gamma_phi + 0.5 * gamma_1
        elif gamma_1 is None:
            gamma_1 = 2.0 * (gamma_2 - gamma_phi)
        return cls(float(gamma_1), float(gamma_2), float(gamma_phi), float(eta))

    @classmethod
    def from_times(cls, t1: float, t2: float, eta: float = 1.0) -> "DecoherenceParams":
        """``t1`` may be ``math.inf`` (no relaxation)."""
        if t1 <= 0 or t2 <= 0:
            raise DomainError(f"T1 and T2 must be positive, got T1={t1}, T2={t2}")
        return cls.from_rates(gamma_1=1.0 / t1, gamma_2=1.0 / t2, eta=eta)

    @classmethod
    def from_ratio(cls, t1_over_t2: float, t2: float = 1.0, eta: float = 1.0) -> "DecoherenceParams":
        return cls.from_times(t1_over_t2 * t2, t2, eta)

    @property
    def t1(self) -> float:
        return math.inf if self.gamma_1 == 0 else 1.0 / self.gamma_1

    @property
    def t2(self) -> float:
        return math.inf if self.gamma_2 == 0 else 1.0 / self.gamma_2

    @property
    def t1_over_t2(self) -> float:
        return math.inf if self.gamma_1 == 0 else self.gamma_2 / self.gamma_1

    def scaled(self, gamma_1_factor: float, gamma_2_factor: float) -> "DecoherenceParams":
        """Rates multiplied independently; raises if the result is unphysical."""
        if gamma_1_factor < 0 or gamma_2_factor <= 0:
            raise DomainError(
                f"rate scalings must be positive, got {gamma_1_factor}, {gamma_2_factor}"
            )
        return DecoherenceParams.from_rates(
            gamma_1=self.gamma_1 * gamma_1_factor,
            gamma_2=self.gamma_2 * gamma_2_factor,
            eta=self.eta,
        )


@dataclass(frozen=True)
class ControlSchedule:
    """Drive amplitude ``h_y(t)`` with an amplitude cap and an optional cutoff.

    Calling the schedule applies both: the value is clipped to ``[-h_max, h_max]``
    and is exactly zero from ``cutoff_time`` on.
    """

    h_of_t: Callable[[float], float]
    h_max: float = math.inf
    cutoff_time: float | None = None

    def __call__(self, t: float) -> float:
        if self.cutoff_time is not None and t >= self.cutoff_time:
            return 0.0
        h = self.h_of_t(t)
        if h > self.h_max:
            return self.h_max
        if h < -self.h_max:
            return -self.h_max
        return h

    def sample(self, times: Sequence[float]) -> np.ndarray:
        return np.array([self(float(t)) for t in times])

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return () if self.cutoff_time is None else (self.cutoff_time,)

    @classmethod
    def zero(cls) -> "ControlSchedule":
        return cls(lambda t: 0.0)

    @classmethod
    def constant(cls, h_y: float, h_max: float = math.inf) -> "ControlSchedule":
        return cls(lambda t: h_y, h_max=h_max)


@dataclass(frozen=True)
class ExperimentConfig:
    delta: float
    initial_state: BlochState
    time_grid: tuple[float, ...]

    def __post_init__(self):
        if self.initial_state.v_y != 0.0:
            raise DomainError(f"initial state must lie in the xz plane, got v_y={self.initial_state.v_y}")
        grid = np.asarray(self.time_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise DomainError("time_grid must be a non-empty 1-D sequence")
        if grid[0] != 0.0:
            raise DomainError(f"time_grid must start at 0, got {grid[0]}")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("time_grid must be strictly increasing")
        object.__setattr__(self, "time_grid", tuple(float(t) for t in grid))


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a time grid, with the drive amplitude applied there."""

    times: np.ndarray
    states: np.ndarray  # shape (n, 3)
    h_y: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[tuple[float, BlochState]]:
        for t, v in zip(self.times, self.states):
            yield float(t), BlochState.from_array(v)

    @property
    def v_x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def v_y(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def v_z(self) -> np.ndarray:
        return self.states[:, 2]

    def final(self) -> BlochState:
        return BlochState.from_array(self.states[-1])


def eta_from_temperature(beta: float, omega01: float) -> float:
    """Thermal asymmetry factor from inverse temperature and qubit gap.

    ``(1 - exp(-beta*omega01)) / (1 + exp(-beta*omega01))``, which is 1 at zero
    temperature and 0 at infinite temperature.
    """
    if beta < 0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    if omega01 <= 0:
        raise DomainError(f"omega01 must be positive, got {omega01}")
    x = beta * omega01
    if x >= _ETA_SATURATION:
        return 1.0
    # tanh(x/2) is the same expression without cancellation at small x
    return math.tanh(0.5 * x)


def bloch_derivative(state: BlochState, params: DecoherenceParams, h_y: float, delta: float) -> np.ndarray:
    """Right-hand side of the Bloch equations, ``d/dt (v_x, v_y, v_z)``."""
    return _rhs(state.v_x, state.v_y, state.v_z, params.gamma_1, params.gamma_2, params.eta, h_y, delta)


def _rhs(x, y, z, g1, g2, eta, h, delta) -> np.ndarray:
    return np.array([
        -g2 * x - delta * y + 2.0 * h * z,
        -g2 * y + delta * x,
        g1 * (eta - z) - 2.0 * h * x,
    ])


def solve_bloch(
    v0: Sequence[float],
    params: DecoherenceParams,
    *,
    delta: float = 0.0,
    h_y: Callable[[float, np.ndarray], float] | None = None,
    t_span: tuple[float, float],
    t_eval: Sequence[float] | None = None,
    events=None,
    dense_output: bool = False,
):
    """Integrate the Bloch equations with a state-dependent drive.

    ``h_y(t, v)`` may depend on the current state, which is how feedback laws
    (and the reference trajectory behind open-loop schedules) are realized.
    Returns the scipy ``OdeResult``; raises :class:`IntegrationError` if the
    solver gives up.
    """
    g1, g2, eta = params.gamma_1, params.gamma_2, params.eta
    if h_y is None:
        def rhs(t, v):
            x, y, z = v
            return [-g2 * x - delta * y, -g2 * y + delta * x, g1 * (eta - z)]
    else:
        def rhs(t, v):
            x, y, z = v
            h = h_y(t, v)
            return [-g2 * x - delta * y + 2.0 * h * z, -g2 * y + delta * x, g1 * (eta - z) - 2.0 * h * x]

    sol = solve_ivp(
        rhs, t_span, np.asarray(v0, dtype=float), method="RK45",
        rtol=RTOL, atol=ATOL, t_eval=t_eval, events=events, dense_output=dense_output,
    )
    if sol.status < 0:
        t_fail = float(sol.t[-1]) if sol.t.size else t_span[0]
        raise IntegrationError(f"integration failed at t={t_fail:.12g}: {sol.message}", time=t_fail)
    return sol


def integrate_trajectory(
    config: ExperimentConfig,
    params: DecoherenceParams,
    control: ControlSchedule | None = None,
) -> Trajectory:
    """Integrate from ``config.initial_state`` and sample at ``config.time_grid``.

    Integration is restarted at every control breakpoint (the cutoff), so the
    solver never steps across the drive discontinuity.
    """
    control = control or ControlSchedule.zero()
    grid = np.asarray(config.time_grid)
    t_end = grid[-1]
    edges = [0.0] + [b for b in control.breakpoints if 0.0 < b < t_end] + [t_end]

    states = np.empty((grid.size, 3))
    states[0] = config.initial_state.as_array()
    v = states[0]
    h_fn = (lambda t, _v: control(t))
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        mask = (grid > a) & (grid <= b)
        sol = solve_bloch(v, params, delta=config.delta, h_y=h_fn, t_span=(a, b), dense_output=True)
        if mask.any():
            states[mask] = sol.sol(grid[mask]).T
        v = sol.y[:, -1]
    return Trajectory(times=grid, states=states, h_y=control.sample(grid))


def free_decay(initial: BlochState, params: DecoherenceParams, t: float) -> BlochState:
    """Closed-form evolution with no drive and no detuning."""
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    d2 = math.exp(-params.gamma_2 * t)
    # written as v_z(0) - (v_z(0) - eta)(1 - d1) so that t = 0 is exact
    return BlochState(
        initial.v_x * d2,
        initial.v_y * d2,
        initial.v_z + (initial.v_z - params.eta) * math.expm1(-params.gamma_1 * t),
    )


@dataclass(frozen=True)
class DriveRegime:
    """Decay structure of the ``(v_x, v_z)`` block under a constant drive.

    In the overdamped regime ``rates`` holds ``(gamma_plus, gamma_minus)`` with
    ``gamma_plus >= gamma_minus``. ``attachment`` names which rate continues
    from ``gamma_2`` (v_x) and which from ``gamma_1`` (v_z) as the drive is
    switched off; it is ``None`` when ``gamma_1 == gamma_2`` makes that
    ambiguous. In the oscillatory regime ``frequency`` and ``decay`` are set.
    """

    kind: str
    rates: tuple[float, float] | None = None
    frequency: float | None = None
    decay: float | None = None
    attachment: dict | None = None


def constant_drive_rates(params: DecoherenceParams, h_y: float) -> DriveRegime:
    if not math.isfinite(h_y):
        raise DomainError(f"h_y must be finite, got {h_y}")
    g1, g2 = params.gamma_1, params.gamma_2
    split = abs(g1 - g2)
    drive = 4.0 * abs(h_y)
    mean = 0.5 * (g1 + g2)
    if split > drive:
        root = 0.5 * math.sqrt((g1 - g2) ** 2 - drive**2)
        plus, minus = mean + root, mean - root
        if g1 > g2:
            attachment = {"v_x": minus, "v_z": plus}
        else:
            attachment = {"v_x": plus, "v_z": minus}
        return DriveRegime("overdamped", rates=(plus, minus), attachment=attachment)
    freq = 0.5 * math.sqrt(drive**2 - (g1 - g2) ** 2)
    return DriveRegime("oscillatory", frequency=freq, decay=mean)


def steady_state(params: DecoherenceParams, h_y: float, delta: float = 0.0) -> BlochState:
    """Fixed point of the Bloch equations under a constant drive."""
    g1, g2, eta = params.gamma_1, params.gamma_2, params.eta
    den = 4.0 * h_y**2 * g2 + g1 * (g2**2 + delta**2)
    if not den > 0:
        raise DomainError("no unique steady state: relaxation and drive both vanish")
    v_x = 2.0 * eta * h_y * g1 * g2 / den
    v_y = (delta / g2) * v_x
    v_z = eta * g1 * (g2**2 + delta**2) / den
    return BlochState(v_x, v_y, v_z)
