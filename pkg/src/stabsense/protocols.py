"""Closed-form signals and optimal measurement times.

Ramsey expressions are exact in the detuning. Everything describing the
stabilized protocol is first order in ``delta / gamma_2``: it assumes v_x is
held exactly at ``v_x0`` until breakdown and evolves freely afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bloch import DecoherenceParams
from .errors import DomainError
from .stabilization import InitialState, breakdown_time

PER_SHOT = "per_shot"
PER_ROOT_TIME = "per_root_time"
MODES = (PER_SHOT, PER_ROOT_TIME)

BRANCHES = ("ramsey_vy", "ramsey_snr", "stable_vy", "stable_snr", "breakdown_vy", "breakdown_snr")

# measurement time for stable states under the per-shot objective, in T2
STABLE_VY_HORIZON = 5.0

_INV_E = math.exp(-1.0)


def lambert_w_minus1(x: float) -> float:
    """Lower real branch of the Lambert W function on ``[-1/e, 0)``.

    Halley iteration from a branch-point series seed near ``-1/e`` and the
    asymptotic seed ``ln(-x) - ln(-ln(-x))`` elsewhere.
    """
    if not -_INV_E - 1e-16 <= x < 0:
        raise DomainError(f"W_-1 is real only on [-1/e, 0), got {x}")
    if x <= -_INV_E:
        return -1.0
    if x < -0.25:
        p = -math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    else:
        ln = math.log(-x)
        w = ln - math.log(-ln)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-15 * abs(w):
            break
    return w


# time maximizing (1 - exp(-t)) / sqrt(t), in units of T2 (about 1.2564)
STABLE_SNR_TIME = -0.5 * (1.0 + 2.0 * lambert_w_minus1(-0.5 / math.sqrt(math.e)))


@dataclass(frozen=True)
class ProtocolTiming:
    t_meas: float
    branch: str
    t_b: float = math.inf
    asymptotic: bool = False

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise DomainError(f"unknown branch {self.branch!r}")
        if not self.t_meas > 0:
            raise DomainError(f"t_meas must be positive, got {self.t_meas}")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")


def ramsey_vy(delta, gamma_2: float, t):
    """Exact free-evolution signal from ``(1, 0, 0)``: ``sin(delta t) exp(-gamma_2 t)``."""
    return np.sin(delta * t) * np.exp(-gamma_2 * t)


def ramsey_optimum(delta: float, gamma_2: float, mode: str) -> tuple[ProtocolTiming, float]:
    """Exact maximizer of the Ramsey signal (``per_shot``) or of signal / sqrt(t).

    At ``delta = 0`` the small-detuning times ``T2`` and ``T2/2`` are returned
    with zero signal.
    """
    _check_mode(mode)
    if mode == PER_SHOT:
        t = 1.0 / gamma_2 if delta == 0 else math.atan(abs(delta) / gamma_2) / abs(delta)
        return ProtocolTiming(t, "ramsey_vy"), float(ramsey_vy(delta, gamma_2, t))

    if delta == 0:
        return ProtocolTiming(0.5 / gamma_2, "ramsey_snr"), 0.0
    d = abs(delta)

    def stationarity(t):
        return 2.0 * t * d * math.cos(d * t) - (2.0 * gamma_2 * t + 1.0) * math.sin(d * t)

    # positive just above 0, negative at the first quarter period
    t = brentq(stationarity, 1e-9 / gamma_2, 0.5 * math.pi / d, xtol=1e-15, rtol=1e-14)
    return ProtocolTiming(t, "ramsey_snr"), float(ramsey_vy(delta, gamma_2, t) / math.sqrt(t))


def stabilized_vy(t, v_x0: float, delta: float, gamma_2: float):
    """Signal while v_x is held at ``v_x0``: ``(1 - exp(-gamma_2 t)) v_x0 delta / gamma_2``."""
    return -np.expm1(-gamma_2 * np.asarray(t, dtype=float)) * v_x0 * delta / gamma_2


def post_breakdown_vy(t_prime, v_x0: float, tau_b: float, delta: float, gamma_2: float):
    """Free decay after the control is cut at breakdown, to first order in ``delta``."""
    t_prime = np.asarray(t_prime, dtype=float)
    vy_b = -math.expm1(-tau_b) * v_x0 * delta / gamma_2
    return (vy_b + v_x0 * delta * t_prime) * np.exp(-gamma_2 * t_prime)


def protocol_vy(t, v_x0: float, params: DecoherenceParams, delta: float, t_b: float | None = None):
    """Closed-form stabilized-protocol signal at time(s) ``t``, across breakdown."""
    g2 = params.gamma_2
    if t_b is None:
        t_b = breakdown_time(InitialState.from_vx(v_x0), params).t_b
    t = np.asarray(t, dtype=float)
    if math.isinf(t_b):
        return stabilized_vy(t, v_x0, delta, g2)
    return np.where(
        t <= t_b,
        stabilized_vy(np.minimum(t, t_b), v_x0, delta, g2),
        post_breakdown_vy(np.maximum(t - t_b, 0.0), v_x0, g2 * t_b, delta, g2),
    )


def post_breakdown_snr_offset(tau_b: float) -> float:
    """Delay after breakdown maximizing signal / sqrt(t), in units of T2.

    Written with ``exp(-tau_b)`` factored in so it stays finite for large
    ``tau_b``. Negative once ``tau_b`` exceeds :data:`STABLE_SNR_TIME`, i.e.
    when the maximum falls before breakdown.
    """
    em = math.exp(-tau_b)
    a = 2.0 * tau_b + 1.0
    disc = 4.0 * em * a + (4.0 * tau_b * (tau_b + 1.0) - 7.0) + 4.0 * em * em
    return (math.sqrt(disc) + 2.0 * em - a) / 4.0


def optimal_time(
    v_x0: float,
    params: DecoherenceParams,
    mode: str,
    horizon: float = STABLE_VY_HORIZON,
) -> ProtocolTiming:
    """Measurement time maximizing the closed-form signal (``per_shot``) or
    signal / sqrt(t) (``per_root_time``) for initial ``v_x0``.

    Stable states under ``per_shot`` have no finite optimum; ``horizon`` (in T2)
    is returned with ``asymptotic=True``.
    """
    _check_mode(mode)
    g2 = params.gamma_2
    b = breakdown_time(InitialState.from_vx(v_x0), params)
    if b.stable:
        if mode == PER_SHOT:
            return ProtocolTiming(horizon / g2, "stable_vy", asymptotic=True)
        return ProtocolTiming(STABLE_SNR_TIME / g2, "stable_snr")
    if mode == PER_SHOT:
        return ProtocolTiming(b.t_b + math.exp(-b.tau_b) / g2, "breakdown_vy", t_b=b.t_b)
    # the closed-form signal is C^1 across t_b, so the maximum sits before
    # breakdown exactly when tau_b passes the stable optimum
    if b.tau_b >= STABLE_SNR_TIME:
        return ProtocolTiming(STABLE_SNR_TIME / g2, "stable_snr", t_b=b.t_b)
    return ProtocolTiming(b.t_b + post_breakdown_snr_offset(b.tau_b) / g2, "breakdown_snr", t_b=b.t_b)
