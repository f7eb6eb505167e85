"""Shot-level Monte Carlo of the sensing experiment and the chunked
slope-ratio estimator used to turn it into an improvement ratio.

Every (iteration, detuning, protocol) cell draws from its own generator,
seeded from the master seed and the cell index, so results do not depend
on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bloch import DecoherenceParams
from .errors import DomainError, FitError
from .protocols import PER_ROOT_TIME, PER_SHOT, optimal_time
from .sensitivity import ShotPlan, fit_slope, ramsey_time, simulate_vy
from .stabilization import DEFAULT_H_MAX, InitialState, build_schedule

RNG_ALGORITHM = "PCG64"
DEFAULT_DELTAS = (-0.02, -0.01, 0.0, 0.01, 0.02)  # Delta * T2
MAX_SMALL_DELTA = 0.05

RAMSEY = "ramsey"
STABILIZED = "stabilized"


@dataclass(frozen=True)
class ShotRecord:
    protocol: str
    delta: float
    t_meas: float
    N: int
    k_plus: int
    seed: int
    iteration: int = 0
    t2: float = 1.0  # T2 the experimenter measured for this iteration

    def __post_init__(self):
        if not 0 <= self.k_plus <= self.N:
            raise DomainError(f"k_plus={self.k_plus} outside [0, N={self.N}]")

    @property
    def v_y_hat(self) -> float:
        return 2.0 * self.k_plus / self.N - 1.0


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def cell_seed(master: int, *index: int) -> int:
    """Deterministic 63-bit seed for one sweep cell."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_shots(v_y: float, N: int, C: float = 1.0, seed: int = 0, *,
                 protocol: str = RAMSEY, delta: float = 0.0, t_meas: float = 0.0,
                 iteration: int = 0, t2: float = 1.0) -> ShotRecord:
    """Draw ``N`` binary |+i> outcomes with ``P = (1 + C v_y) / 2``."""
    if abs(v_y) > 1:
        raise DomainError(f"|v_y| must be <= 1, got {v_y}")
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    p = min(max(0.5 * (1.0 + C * v_y), 0.0), 1.0)
    k = int(make_rng(seed).binomial(N, p))
    return ShotRecord(protocol, float(delta), float(t_meas), int(N), k, int(seed), iteration, t2)


def run_detuning_sweep(
    init: InitialState,
    params: DecoherenceParams,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    plan: ShotPlan = ShotPlan(N=10**6),
    seed: int = 0,
    n_iterations: int = 20,
    mode: str = PER_SHOT,
    t2_drift: float = 0.0,
    h_max: float = DEFAULT_H_MAX,
    max_delta: float = MAX_SMALL_DELTA,
) -> list[ShotRecord]:
    """Simulated detuning sweeps with interleaved stabilized and Ramsey shots.

    ``deltas`` are angular detunings in the time units of ``params``. With
    ``t2_drift > 0``, each iteration's T1 and T2 are both rescaled by a factor
    drawn uniformly from ``1 +/- t2_drift``; the experimenter is assumed to
    re-measure them, so waveform and times track the drift. Records come out
    in acquisition order: iteration, then detuning, then stabilized before
    Ramsey.
    """
    deltas = [float(d) for d in deltas]
    for d in deltas:
        if abs(d) / params.gamma_2 > max_delta:
            raise DomainError(f"|Delta| T2 = {abs(d) / params.gamma_2} exceeds small-detuning limit {max_delta}")
    drift_rng = make_rng([seed, 0xD1F7])
    cache: dict = {}
    records: list[ShotRecord] = []
    for it in range(n_iterations):
        scale = 1.0 + t2_drift * (2.0 * drift_rng.random() - 1.0) if t2_drift > 0 else 1.0
        p_it = params.scaled(1.0 / scale, 1.0 / scale) if scale != 1.0 else params
        key = scale
        if key not in cache:
            cache[key] = _iteration_signals(init, p_it, deltas, mode, h_max)
        t_c, t_r, signals = cache[key]
        for j, d in enumerate(deltas):
            v_c, v_r = signals[j]
            for k, (proto, v, t) in enumerate(((STABILIZED, v_c, t_c), (RAMSEY, v_r, t_r))):
                N = plan.shots(t)
                records.append(sample_shots(v, N, plan.C, cell_seed(seed, it, j, k), protocol=proto,
                                            delta=d, t_meas=t, iteration=it, t2=p_it.t2))
    return records


def _iteration_signals(init, params, deltas, mode, h_max):
    schedule = build_schedule(init, params, h_max) if init.v_x0 < 1.0 else None
    t_c = optimal_time(init.v_x0, params, mode).t_meas
    t_r = ramsey_time(params, mode)
    ramsey = InitialState.from_vx(1.0)
    signals = []
    for d in deltas:
        v_c = float(simulate_vy(init, params, d, [t_c], schedule)[0])
        v_r = float(simulate_vy(ramsey, params, d, [t_r])[0])
        signals.append((v_c, v_r))
    return t_c, t_r, signals


@dataclass(frozen=True)
class RatioEstimate:
    mean: float
    stderr: float
    chunk_ratios: tuple[float, ...]


def chunked_ratio_estimate(records: Sequence[ShotRecord], n_chunks: int = 10,
                           mode: str = PER_SHOT) -> RatioEstimate:
    """Stabilized-to-Ramsey slope ratio averaged over interspersed chunks.

    Iteration ``i`` goes to chunk ``i % n_chunks``. Within a chunk the
    detuning axis is rescaled by each iteration's T2 and all points are fit
    through the origin; for ``per_root_time`` each point is first divided by
    ``sqrt(t / T2)`` of its iteration. The error is the standard deviation of
    the chunk ratios over ``sqrt(n_chunks)``.
    """
    iterations = sorted({r.iteration for r in records})
    if len(iterations) < 2 * n_chunks:
        raise DomainError(f"need at least {2 * n_chunks} iterations for {n_chunks} chunks, got {len(iterations)}")
    rank = {it: i for i, it in enumerate(iterations)}
    chunks: list[dict] = [{RAMSEY: ([], []), STABILIZED: ([], [])} for _ in range(n_chunks)]
    for r in records:
        x, y = chunks[rank[r.iteration] % n_chunks][r.protocol]
        scale = math.sqrt(r.t_meas / r.t2) if mode == PER_ROOT_TIME else 1.0
        x.append(r.delta * r.t2)
        y.append(r.v_y_hat / scale)
    ratios = []
    for c in chunks:
        slopes = {}
        for proto, (x, y) in c.items():
            if np.unique(x).size < 3:
                raise FitError(f"chunk has fewer than 3 detunings for {proto}")
            slopes[proto] = fit_slope(x, y).slope
        if slopes[RAMSEY] == 0:
            raise FitError("Ramsey slope is zero in a chunk")
        ratios.append(slopes[STABILIZED] / slopes[RAMSEY])
    ratios = np.array(ratios)
    # spread about the first ratio: exactly zero for identical chunks
    stderr = float(np.std(ratios - ratios[0], ddof=1) / math.sqrt(n_chunks)) if n_chunks > 1 else 0.0
    return RatioEstimate(float(ratios.mean()), stderr, tuple(float(r) for r in ratios))


def empirical_frequency_uncertainty(slope: float, delta: float, N: int, C: float = 1.0,
                                    repeats: int = 2000, seed: int = 0) -> float:
    """``sqrt(N)`` times the spread of repeated single-point detuning estimates.

    Each repeat draws ``N`` shots at ``v_y = slope * delta`` and inverts the
    linear response; compare with ``1 / (slope * C)``.
    """
    v_y = slope * delta
    p = 0.5 * (1.0 + C * v_y)
    k = make_rng(seed).binomial(N, p, size=repeats)
    delta_hat = ((2.0 * k / N - 1.0) / C) / slope
    return math.sqrt(N) * float(np.std(delta_hat, ddof=1))
