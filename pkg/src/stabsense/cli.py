"""``stabsense`` command-line front end.

Every subcommand reads one JSON run configuration (``--config``), applies
``--set key.path=value`` overrides (values parsed as JSON, falling back to a
plain string), and writes CSV or JSON plot data. Without ``-o`` the file goes
to ``$STABSENSE_OUTPUT_DIR`` (default: the working directory) as
``<command>.csv`` or ``<command>.json``.

Exit codes: 0 on success, 1 on a numerical or runtime failure, 2 on a
configuration or domain error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bloch import BlochState, ExperimentConfig, integrate_trajectory
from .config import RunConfig
from .errors import ConfigError, DomainError, FitError, InconsistentStateError, IntegrationError
from .protocols import PER_SHOT
from .sensitivity import (
    ShotPlan,
    improvement_rs,
    improvement_rv,
    miscalibration_grid,
    optimize_initial_state,
    sweep_improvement,
)
from .serialize import (
    provenance,
    report_payload,
    write_json,
    write_miscal,
    write_records,
    write_sweep,
    write_trajectory,
    write_waveform,
)
from .shots import RNG_ALGORITHM, chunked_ratio_estimate, run_detuning_sweep
from .stabilization import InitialState, build_schedule, sample_schedule

log = logging.getLogger("stabsense")

OUTPUT_DIR_ENV = "STABSENSE_OUTPUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _output_path(cfg: RunConfig, command: str, ext: str, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.raw.get("output"):
        return Path(cfg.raw["output"])
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{command}.{ext}"


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    meta = provenance(command, cfg.units, cfg.raw, cfg.time_scale)
    meta.update(extra)
    return meta


def _resolve_state(cfg: RunConfig, params) -> InitialState:
    init = cfg.initial_state()
    if init is None:
        best = optimize_initial_state(params, cfg.mode(), confirm=False).best_v_x0
        init = InitialState.from_vx(best)
    return init


def cmd_simulate(cfg: RunConfig, out: str | None = None) -> Path:
    """Trajectory of either protocol sampled on ``n_points`` times in [0, t_end]."""
    params = cfg.params()
    t_end = cfg.t_end()
    times = np.linspace(0.0, t_end, cfg.get("n_points"))
    if cfg.get("protocol") == "ramsey":
        init, schedule = InitialState.from_vx(1.0), None
    else:
        init = _resolve_state(cfg, params)
        schedule = None
        if init.v_x0 < 1.0:
            schedule = build_schedule(init, params, cfg.h_max())
    exp = ExperimentConfig(cfg.detuning(), BlochState(init.v_x0, 0.0, init.v_z0), tuple(times))
    traj = integrate_trajectory(exp, params, schedule)
    cutoff = schedule.cutoff_time if schedule is not None else None
    meta = _meta(cfg, "simulate", v_x0=init.v_x0,
                 cutoff_time=None if cutoff is None else cutoff * cfg.time_scale)
    return write_trajectory(_output_path(cfg, "simulate", "csv", out), traj, meta, cfg.time_scale, cfg.si)


def cmd_optimize(cfg: RunConfig, out: str | None = None) -> Path:
    params = cfg.params()
    opt = cfg.raw.get("optimize", {})
    report = optimize_initial_state(params, cfg.mode(), n_scan=int(opt.get("n_scan", 200)),
                                    confirm=bool(opt.get("confirm", True)), delta=cfg.detuning(),
                                    h_max=cfg.h_max())
    payload = report_payload(report, _meta(cfg, "optimize"), cfg.time_scale, cfg.si)
    return write_json(_output_path(cfg, "optimize", "json", out), payload)


def cmd_sweep(cfg: RunConfig, out: str | None = None) -> Path:
    mode = cfg.mode()
    delta = cfg.detuning()
    result = sweep_improvement(cfg.grid("sweep.t1_over_t2"), cfg.grid("sweep.v_x0"), mode, delta,
                               eta=cfg.params().eta, h_max=cfg.h_max())
    return write_sweep(_output_path(cfg, "sweep", "csv", out), result, _meta(cfg, "sweep", mode=mode, delta=delta))


def _miscal_axis(cfg: RunConfig, key: str) -> np.ndarray:
    if key in cfg.raw.get("miscal", {}):
        return cfg.grid(f"miscal.{key}")
    extent, n = cfg.get("miscal.extent"), cfg.get("miscal.n")
    if not isinstance(n, int) or n < 1 or not isinstance(extent, (int, float)) or not 0 <= extent < 1:
        raise ConfigError("miscal", f"need integer n >= 1 and 0 <= extent < 1, got n={n!r}, extent={extent!r}")
    return np.linspace(-extent, extent, n)


def cmd_miscal(cfg: RunConfig, out: str | None = None) -> Path:
    """Ratio map over ``gamma_actual / gamma_nominal - 1`` for both rates."""
    mode = cfg.mode()
    result = miscalibration_grid(cfg.params(), _miscal_axis(cfg, "gamma_1"), _miscal_axis(cfg, "gamma_2"),
                                 mode, cfg.detuning(), cfg.h_max())
    meta = _meta(cfg, "miscal", mode=mode, nominal_ratio=result.nominal.ratio,
                 nominal_v_x0=result.nominal.best_v_x0)
    return write_miscal(_output_path(cfg, "miscal", "csv", out), result, meta)


def cmd_shots(cfg: RunConfig, out: str | None = None) -> tuple[Path, Path]:
    """Shot records CSV plus a summary JSON next to it."""
    params = cfg.params()
    mode = cfg.mode()
    init = _resolve_state(cfg, params)
    s = cfg.get("shots")
    N, n_it, n_chunks = s["N"], s["n_iterations"], s["n_chunks"]
    for name, value in (("N", N), ("n_iterations", n_it), ("n_chunks", n_chunks)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"shots.{name}", f"must be a positive integer, got {value!r}")
    plan = ShotPlan(N=N, C=float(s["contrast"]))
    seed = cfg.get("seed")
    records = run_detuning_sweep(init, params, cfg.shot_deltas(), plan, seed, n_it, mode,
                                 t2_drift=float(s["t2_drift"]), h_max=cfg.h_max())
    est = chunked_ratio_estimate(records, n_chunks, mode)
    analytic = (improvement_rv if mode == PER_SHOT else improvement_rs)(init.v_x0, params)

    records_path = _output_path(cfg, "shots", "csv", out)
    summary_path = records_path.with_suffix(".json")
    meta = _meta(cfg, "shots", mode=mode, rng=RNG_ALGORITHM, seed=seed)
    write_records(records_path, records, meta, cfg.time_scale, cfg.si)
    summary = {
        "mode": mode,
        "v_x0": init.v_x0,
        "ratio": est.mean,
        "stderr": est.stderr,
        "chunk_ratios": list(est.chunk_ratios),
        "analytic_ratio": analytic,
        "z_score": (est.mean - analytic) / est.stderr if est.stderr > 0 else None,
        "n_records": len(records),
        "records_file": records_path.name,
        "provenance": meta,
    }
    write_json(summary_path, summary)
    return records_path, summary_path


def cmd_waveform(cfg: RunConfig, out: str | None = None) -> Path:
    """Open-loop drive h_y(t) sampled uniformly on [0, waveform.t_end]."""
    params = cfg.params()
    init = _resolve_state(cfg, params)
    n = cfg.get("waveform.n_samples")
    if not isinstance(n, int) or n < 2:
        raise ConfigError("waveform.n_samples", f"must be an integer >= 2, got {n!r}")
    t_end = cfg.t_end("waveform.t_end")
    schedule = build_schedule(init, params, cfg.h_max())
    times, h = sample_schedule(schedule, t_end, n)
    cutoff = schedule.cutoff_time
    meta = _meta(cfg, "waveform", v_x0=init.v_x0,
                 cutoff_time=None if cutoff is None else cutoff * cfg.time_scale)
    return write_waveform(_output_path(cfg, "waveform", "csv", out), times, h, meta, cfg.time_scale, cfg.si)


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "miscal": cmd_miscal,
    "shots": cmd_shots,
    "waveform": cmd_waveform,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stabsense", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).split("\n")[0])
        p.add_argument("--config", "-c", help="JSON run configuration")
        p.add_argument("--set", "-s", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path (value parsed as JSON)")
        p.add_argument("--output", "-o", help="output file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.set)
        written = COMMANDS[args.command](cfg, args.output)
    except (ConfigError, DomainError) as exc:
        print(f"stabsense: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, InconsistentStateError, FitError, ArithmeticError, RuntimeError) as exc:
        print(f"stabsense: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written if isinstance(written, tuple) else (written,):
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
