"""
Command-line front end.

Subcommands:

    impedance    single-contact impedance rendering trace (CSV)
    experiment   deliver a randomized trial schedule and score the responses
    serve        run the line protocol against a live simulated device
    analyze      confusion-matrix report from a trial log

Exit codes: 0 success, 1 usage, 2 configuration or input, 3 runtime.
"""

import argparse
import asyncio
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np
import pandas as pd

from .config import DeviceSettings, load_device_settings, load_geometry
from .controllers import closed_loop
from .device_sim import DeviceSimulator, DeviceState, DeviceTrace, concat_traces
from .exceptions import ConfigError, HapticError, TrialCountMismatch, UnknownPatternError
from .impedance_core import ImpedanceParams, ImpedanceState, discretize, step
from .linkage_kinematics import ContactPoint, reachable_y_range
from .models.presets import FORCE_PRESETS, IMPEDANCE_PRESETS, PRESETS_BY_NUMBER, StiffnessPreset
from .models.trace_schemas import IMPEDANCE_TRACE_COLUMNS, TRIAL_LOG_COLUMNS
from .patterns import (
    HOMING_DURATION_S,
    PatternRenderer,
    TrialSchedule,
    build_schedule,
    build_training_schedule,
    confusion_matrix,
    library_by_id,
    pattern_library,
    trial_log_frame,
)
from .session_server import DeviceLoop, serve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_FORCE_N = 0.1
STIFFNESS_PLACEMENT_PATTERN = 2


class UsageError(Exception):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Resolved options shared by the subcommands."""

    subcommand: str
    geometry_path: Optional[Path]
    patterns_path: Optional[Path]
    device_path: Optional[Path]
    duration: Optional[float]
    tick: float
    seed: int
    out: Optional[Path]

    def __post_init__(self) -> None:
        if not self.tick > 0:
            raise ConfigError(f"--tick must be > 0, got {self.tick}")
        if self.duration is not None and self.duration < 0:
            raise ConfigError(f"--duration must be >= 0, got {self.duration}")
        for path in (self.geometry_path, self.patterns_path, self.device_path):
            if path is not None and not path.is_file():
                raise ConfigError(f"File not found: {path}")
        if self.out is not None and not self.out.parent.exists():
            raise ConfigError(f"Output directory does not exist: {self.out.parent}")


def _common_options() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--geometry", type=Path, help="Linkage geometry file (key=value)")
    common.add_argument("--patterns", type=Path, help="Pattern placement table (CSV)")
    common.add_argument("--device", type=Path, help="Device settings file (key=value)")
    common.add_argument("--tick", type=float, help="Loop period in seconds (default from device settings)")
    common.add_argument("--seed", type=int, help="Random seed (default from device settings)")
    common.add_argument("--out", type=Path, help="Output path")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for all subcommands."""
    common = _common_options()
    parser = _Parser(prog="palm-haptics", description="Palm haptic display rendering engine and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    impedance = sub.add_parser("impedance", parents=[common], help="Impedance rendering trace")
    impedance.add_argument("--preset", default="P1", help="Impedance preset P1..P3")
    impedance.add_argument("--mass", type=float, help="Desired mass in kg (with --damping and --stiffness)")
    impedance.add_argument("--damping", type=float, help="Desired damping in N*s/m")
    impedance.add_argument("--stiffness", type=float, help="Desired stiffness in N/m")
    impedance.add_argument("--duration", type=float, default=2.0, help="Seconds to simulate")
    impedance.add_argument("--force", type=float, default=DEFAULT_FORCE_N, help="Constant contact force in N")
    impedance.add_argument("--force-file", type=Path, help="CSV with a force_n column, one row per tick")

    experiment = sub.add_parser("experiment", parents=[common], help="Run an experiment protocol")
    experiment.add_argument("--protocol", choices=["patterns", "stiffness"], default="patterns")
    experiment.add_argument("--repetitions", type=int, default=5, help="Deliveries per stimulus")
    experiment.add_argument("--responses", type=Path, help="One predicted id per line; stdin when omitted")
    experiment.add_argument("--training", action="store_true", help="Deliver a training block first")
    experiment.add_argument("--duration", type=float, default=2.0, help="Seconds per stimulus")

    serve_cmd = sub.add_parser("serve", parents=[common], help="Serve the device protocol")
    serve_cmd.add_argument("--host", help="Listen address (default from device settings)")
    serve_cmd.add_argument("--port", type=int, help="Listen port (default from device settings)")
    serve_cmd.add_argument("--duration", type=float, help="Stop after this many seconds")

    analyze = sub.add_parser("analyze", parents=[common], help="Confusion matrix of a trial log")
    analyze.add_argument("log", type=Path, help="Trial log CSV (trial,actual_id,predicted_id)")
    analyze.add_argument("--labels", help="Comma-separated label ids (default 1..11)")

    return parser


def _load(config: RunConfig) -> Tuple[DeviceSettings, DeviceSimulator]:
    settings = load_device_settings(config.device_path)
    settings = replace(settings, tick_s=config.tick, seed=config.seed)
    geometry = load_geometry(config.geometry_path)
    return settings, DeviceSimulator.from_settings(geometry, settings)


def impedance_trace(
    params: ImpedanceParams,
    simulator: DeviceSimulator,
    forces: Sequence[float],
    tick: float,
    nominal_y: float,
) -> pd.DataFrame:
    """
    Render an impedance law on the middle unit at the midline.

    The link is driven by the palm reaction -force, so commanded_y starts at
    nominal_y and yields away from the palm. The device follows the
    commanded height clamped into the reachable band; the other units stay
    home.

    Returns:
        len(forces) + 1 rows starting at t = 0, or no rows for an empty profile
    """
    if len(forces) == 0:
        return pd.DataFrame(columns=IMPEDANCE_TRACE_COLUMNS)

    model = discretize(params, tick)
    x = simulator.geometry.midline_x
    lo, hi = reachable_y_range(simulator.geometry, x)
    home = simulator.home_point

    def command(y: float) -> List[ContactPoint]:
        return [home, ContactPoint(x, min(hi, max(lo, y))), home]

    state = simulator.initial_state(command(nominal_y))
    link = ImpedanceState()
    rows = []

    def record(t: float, commanded: float) -> None:
        unit = state.units[1]
        rows.append(
            {
                "time_s": t,
                "commanded_y_mm": commanded,
                "actual_y_mm": unit.contact.y,
                "palm_y_mm": simulator.palm.surface_y[1],
                "force_n": unit.sensed_force,
            }
        )

    record(0.0, nominal_y)
    for k, force in enumerate(forces, start=1):
        link = step(model, link, -float(force))  # F_ext = -sensed, as in impedance_control_step
        commanded = nominal_y + 1000.0 * link.displacement
        state = simulator.tick(state, command(commanded), tick)
        record(k * tick, commanded)

    return pd.DataFrame(rows, columns=IMPEDANCE_TRACE_COLUMNS)


def _impedance_params(args: argparse.Namespace) -> ImpedanceParams:
    explicit = [args.mass, args.damping, args.stiffness]
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise UsageError("--mass, --damping and --stiffness go together")
        try:
            return ImpedanceParams(args.mass, args.damping, args.stiffness)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    try:
        preset = StiffnessPreset.parse(args.preset)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if not preset.is_impedance:
        raise ConfigError(f"{preset.name} is a force-control preset; use P1..P3")
    return preset.impedance


def _force_profile(args: argparse.Namespace, ticks: int) -> np.ndarray:
    if args.force_file is None:
        return np.full(ticks, float(args.force))
    try:
        frame = pd.read_csv(args.force_file)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"Cannot read force profile {args.force_file}: {e}") from e
    if "force_n" not in frame.columns:
        raise ConfigError(f"{args.force_file} has no force_n column")
    forces = pd.to_numeric(frame["force_n"], errors="coerce").to_numpy(dtype=float)
    if len(forces) < ticks:
        raise ConfigError(f"{args.force_file} has {len(forces)} rows, {ticks} ticks needed")
    if not np.isfinite(forces[:ticks]).all():
        raise ConfigError(f"{args.force_file} has non-numeric or non-finite forces")
    return forces[:ticks]


def cmd_impedance(args: argparse.Namespace, config: RunConfig) -> int:
    """Write the commanded/actual impedance trace."""
    params = _impedance_params(args)
    settings, simulator = _load(config)
    ticks = int(round((config.duration or 0.0) / config.tick))
    forces = _force_profile(args, ticks)
    nominal = settings.palm_surface_y_mm + settings.impedance_depth_mm

    trace = impedance_trace(params, simulator, forces, config.tick, nominal)
    out = config.out or Path("impedance_trace.csv")
    trace.to_csv(out, index=False)
    print(f"Wrote {len(trace)} rows to {out}")
    return EXIT_OK


def _read_responses(source: Optional[Path], count: int, stdin: TextIO) -> List[int]:
    """Predicted ids, one per trial, from a file or line by line from stdin."""
    if source is not None:
        try:
            lines = [line.strip() for line in source.read_text().splitlines()]
        except OSError as e:
            raise ConfigError(f"Cannot read responses {source}: {e}") from e
        lines = [line for line in lines if line]
    else:
        lines = []
        for trial in range(1, count + 1):
            print(f"Trial {trial}/{count}: perceived id? ", end="", file=sys.stderr, flush=True)
            line = stdin.readline()
            if not line:
                break
            lines.append(line.strip())

    if len(lines) != count:
        raise TrialCountMismatch(f"{len(lines)} responses for {count} trials")
    try:
        return [int(line) for line in lines]
    except ValueError as e:
        raise ConfigError(f"Responses must be integer ids: {e}") from e


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(f"{out.stem}_{suffix}{out.suffix or '.csv'}")


def _run_pattern_protocol(
    args: argparse.Namespace, config: RunConfig, settings: DeviceSettings, simulator: DeviceSimulator
) -> Tuple[List[TrialSchedule], List[Tuple[str, Sequence[int]]], DeviceTrace]:
    library = pattern_library(config.patterns_path, simulator.geometry, settings)
    library = tuple(replace(p, duration=config.duration) for p in library)
    by_id = library_by_id(library)
    ids = sorted(by_id)
    renderer = PatternRenderer(simulator, config.tick)

    schedules = [build_schedule(ids, args.repetitions, config.seed)]
    state = simulator.calibrate(simulator.initial_state())
    traces = []
    if args.training:
        for pattern_id in build_training_schedule(ids).trials:
            traces.append(renderer.deliver(by_id[pattern_id], state))
            state = traces[-1].final_state
    for pattern_id in schedules[0].trials:
        traces.append(renderer.deliver(by_id[pattern_id], state))
        state = traces[-1].final_state
    return schedules, [("matrix", ids)], concat_traces(traces)


def _deliver_preset(
    preset: StiffnessPreset,
    simulator: DeviceSimulator,
    renderer: PatternRenderer,
    placement_x: Sequence[float],
    state: DeviceState,
    settings: DeviceSettings,
    duration: float,
) -> DeviceTrace:
    ticks = int(round(HOMING_DURATION_S / renderer.tick))
    start = [ContactPoint(x, simulator.home_y) for x in placement_x]
    moved = simulator.run(state, start, ticks, renderer.tick)
    rendered = closed_loop(
        preset,
        simulator,
        moved.final_state,
        duration,
        renderer.tick,
        approach_speed=settings.approach_speed_mm_s,
        impedance_depth=settings.impedance_depth_mm,
    )
    return concat_traces([moved, rendered, renderer.home(rendered.final_state)])


def _run_stiffness_protocol(
    args: argparse.Namespace, config: RunConfig, settings: DeviceSettings, simulator: DeviceSimulator
) -> Tuple[List[TrialSchedule], List[Tuple[str, Sequence[int]]], DeviceTrace]:
    library = library_by_id(pattern_library(config.patterns_path, simulator.geometry, settings))
    if STIFFNESS_PLACEMENT_PATTERN not in library:
        raise ConfigError(f"pattern {STIFFNESS_PLACEMENT_PATTERN} is needed to place the stiffness stimuli")
    placement = library[STIFFNESS_PLACEMENT_PATTERN].placements
    placement_x = [p.x if p is not None else simulator.geometry.midline_x for p in placement]
    renderer = PatternRenderer(simulator, config.tick)

    parts = [("impedance_matrix", IMPEDANCE_PRESETS), ("force_matrix", FORCE_PRESETS)]
    schedules = []
    traces = []
    state = simulator.calibrate(simulator.initial_state())
    for part, (_, presets) in enumerate(parts):
        ids = [p.number for p in presets]
        if args.training:
            for preset_id in build_training_schedule(ids).trials:
                traces.append(
                    _deliver_preset(
                        PRESETS_BY_NUMBER[preset_id], simulator, renderer, placement_x, state, settings, config.duration
                    )
                )
                state = traces[-1].final_state
        schedule = build_schedule(ids, args.repetitions, config.seed + part)
        schedules.append(schedule)
        for preset_id in schedule.trials:
            traces.append(
                _deliver_preset(
                    PRESETS_BY_NUMBER[preset_id], simulator, renderer, placement_x, state, settings, config.duration
                )
            )
            state = traces[-1].final_state

    labels = [(name, [p.number for p in presets]) for name, presets in parts]
    return schedules, labels, concat_traces(traces)


def cmd_experiment(args: argparse.Namespace, config: RunConfig, stdin: TextIO) -> int:
    """Deliver the schedule, collect responses, write the trial log and matrix reports."""
    if args.repetitions < 1:
        raise ConfigError(f"--repetitions must be >= 1, got {args.repetitions}")
    if config.duration is None or not config.duration > 0:
        raise ConfigError("--duration must be > 0 for an experiment")
    settings, simulator = _load(config)

    if args.protocol == "patterns":
        schedules, matrices, trace = _run_pattern_protocol(args, config, settings, simulator)
    else:
        schedules, matrices, trace = _run_stiffness_protocol(args, config, settings, simulator)

    total = sum(len(s) for s in schedules)
    responses = _read_responses(args.responses, total, stdin)

    out = config.out or Path("trials.csv")
    logs = []
    offset = 0
    for schedule, (name, labels) in zip(schedules, matrices):
        part_responses = responses[offset : offset + len(schedule)]
        offset += len(schedule)
        log = trial_log_frame(schedule, part_responses)
        matrix = confusion_matrix(zip(log["actual_id"], log["predicted_id"]), labels)
        matrix.report().to_csv(_sibling(out, name), index=False)
        print(f"{name}: recognition {100.0 * matrix.recognition_rate():.1f}% over {matrix.total} trials")
        logs.append(log)

    trial_log = pd.concat(logs, ignore_index=True)
    trial_log["trial"] = np.arange(1, len(trial_log) + 1)
    trial_log[TRIAL_LOG_COLUMNS].to_csv(out, index=False)
    trace.to_csv(_sibling(out, "trace"))
    print(f"Wrote {len(trial_log)} trials to {out}")
    return EXIT_OK


async def _serve(device_loop: DeviceLoop, settings: DeviceSettings, duration: Optional[float]) -> None:
    listener = await serve(device_loop, settings.host, settings.port)
    runner = asyncio.ensure_future(device_loop.run())
    try:
        if duration is not None:
            await asyncio.sleep(duration)
        else:
            await asyncio.Event().wait()
    finally:
        device_loop.stop()
        await runner
        listener.close()
        await listener.wait_closed()


def cmd_serve(args: argparse.Namespace, config: RunConfig) -> int:
    """Serve the protocol until interrupted (or for --duration seconds)."""
    settings, simulator = _load(config)
    if args.host is not None:
        settings = replace(settings, host=args.host)
    if args.port is not None:
        settings = replace(settings, port=args.port)

    holder: List[DeviceLoop] = []

    async def main() -> None:
        holder.append(DeviceLoop(simulator, tick_period=config.tick, record=config.out is not None))
        await _serve(holder[0], settings, args.duration)

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        logger.info("Interrupted, shutting down")
    except OSError as e:
        print(f"Error: cannot serve on {settings.host}:{settings.port}: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    if config.out is not None and holder:
        holder[0].trace().to_csv(config.out, index=False)
        print(f"Wrote device trace to {config.out}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> int:
    """Confusion-matrix report of an existing trial log."""
    try:
        log = pd.read_csv(args.log)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"Cannot read trial log {args.log}: {e}") from e
    missing = [c for c in TRIAL_LOG_COLUMNS if c not in log.columns]
    if missing:
        raise ConfigError(f"{args.log} lacks columns: {', '.join(missing)}")

    labels = None
    if args.labels:
        try:
            labels = [int(v) for v in args.labels.split(",")]
        except ValueError as e:
            raise ConfigError(f"--labels must be comma-separated integers: {e}") from e

    pairs = zip(log["actual_id"].astype(int), log["predicted_id"].astype(int))
    report = confusion_matrix(pairs, labels).report()
    if config.out is not None:
        report.to_csv(config.out, index=False)
        print(f"Wrote matrix report to {config.out}")
    else:
        print(report.to_csv(index=False), end="")
    return EXIT_OK


def _run_config(args: argparse.Namespace) -> RunConfig:
    if args.device is not None and not args.device.is_file():
        raise ConfigError(f"File not found: {args.device}")
    defaults = load_device_settings(args.device)
    return RunConfig(
        subcommand=args.command,
        geometry_path=args.geometry,
        patterns_path=args.patterns,
        device_path=args.device,
        duration=getattr(args, "duration", None),
        tick=args.tick if args.tick is not None else defaults.tick_s,
        seed=args.seed if args.seed is not None else defaults.seed,
        out=args.out,
    )


def main(argv: Optional[Sequence[str]] = None, stdin: Optional[TextIO] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"palm-haptics: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        config = _run_config(args)
        if args.command == "impedance":
            return cmd_impedance(args, config)
        if args.command == "experiment":
            return cmd_experiment(args, config, stdin or sys.stdin)
        if args.command == "serve":
            return cmd_serve(args, config)
        return cmd_analyze(args, config)
    except UsageError as e:
        print(f"palm-haptics: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, TrialCountMismatch, UnknownPatternError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HapticError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
