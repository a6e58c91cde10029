"""Command line interface: run, compare and validate loading-cycle setups.

Exit codes are a stable contract: 0 success, 2 configuration error,
3 simulation fault, 4 I/O error.  Set LOADCYCLE_LOG=DEBUG (or INFO, ...)
for diagnostics on stderr.  All outputs are plain CSV/JSON so every figure
quantity can be recomputed downstream; numeric formatting is fixed at 17
significant digits to keep runs byte-comparable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import build_sim_config, load_config_file
from .errors import ConfigError, SimulationFault
from .sim import CycleLog, Metrics, SimConfig, compare_runs, run_cycle

log = logging.getLogger("loadcycle")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAULT = 3
EXIT_IO = 4


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_telemetry(cycle_log: CycleLog, path: Path) -> None:
    with open(path, "w") as f:
        f.write(",".join(cycle_log.columns) + "\n")
        for row in cycle_log.rows:
            f.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def write_trajectory(cycle_log: CycleLog, cfg: SimConfig, path: Path) -> None:
    """Edge pose sampled every marker interval (the trajectory figure data)."""
    idx = {name: i for i, name in enumerate(cycle_log.columns)}
    with open(path, "w") as f:
        f.write("t,edge_x,edge_z,edge_angle\n")
        next_mark = 0.0
        for row in cycle_log.rows:
            t = row[idx["t"]]
            if t + 1e-9 >= next_mark:
                f.write(",".join(_fmt(v) for v in
                                 (t, row[idx["edge_x"]], row[idx["edge_z"]],
                                  row[idx["edge_angle"]])) + "\n")
                next_mark += cfg.marker_interval


def write_duty(metrics: Metrics, path: Path, tag: str | None = None) -> None:
    with open(path, "w") as f:
        if tag is None:
            f.write("norm_speed,norm_torque\n")
            for w, q in metrics.duty_points:
                f.write(f"{_fmt(w)},{_fmt(q)}\n")
        else:
            f.write("run,norm_speed,norm_torque\n")
            for w, q in metrics.duty_points:
                f.write(f"{tag},{_fmt(w)},{_fmt(q)}\n")


def write_metrics(metrics: Metrics, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(metrics.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_bundle(cycle_log: CycleLog, metrics: Metrics, cfg: SimConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_telemetry(cycle_log, out_dir / "telemetry.csv")
    write_metrics(metrics, out_dir / "metrics.json")
    write_trajectory(cycle_log, cfg, out_dir / "trajectory.csv")
    write_duty(metrics, out_dir / "duty.csv")


def _load(config_path: str) -> tuple[SimConfig, dict, list[str]]:
    resolved, notes = load_config_file(config_path)
    cfg = build_sim_config(resolved)
    for note in notes:
        log.info("config %s: %s", config_path, note)
    return cfg, resolved, notes


def cmd_run(config_path: str, out_dir: str) -> int:
    """Run one cycle and write the output bundle."""
    try:
        cfg, _, _ = _load(config_path)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        cycle_log, metrics = run_cycle(cfg)
    except SimulationFault as e:
        print(f"simulation fault: {e}", file=sys.stderr)
        return EXIT_FAULT
    try:
        write_bundle(cycle_log, metrics, cfg, Path(out_dir))
    except OSError as e:
        print(f"cannot write outputs: {e}", file=sys.stderr)
        return EXIT_IO
    log.info("cycle complete: %.2f s, %.1f g fuel, fill %.2f",
             metrics.cycle_time, metrics.fuel_total, metrics.bucket_fill_final)
    return EXIT_OK


def cmd_compare(config_a: str, config_b: str, out_dir: str) -> int:
    """Run two setups, write both bundles plus the comparison summary."""
    out = Path(out_dir)
    legs: dict[str, Metrics] = {}
    for tag, path in (("a", config_a), ("b", config_b)):
        try:
            cfg, _, _ = _load(path)
        except ConfigError as e:
            print(f"configuration error in {tag}: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as e:
            print(f"cannot read config {tag}: {e}", file=sys.stderr)
            return EXIT_IO
        try:
            cycle_log, metrics = run_cycle(cfg)
        except SimulationFault as e:
            print(f"simulation fault in {tag}: {e}", file=sys.stderr)
            try:
                out.mkdir(parents=True, exist_ok=True)
                with open(out / "comparison.json", "w") as f:
                    json.dump({"status": "fault", "failed_run": tag, "error": str(e),
                               "completed_runs": sorted(legs)}, f, indent=2, sort_keys=True)
                    f.write("\n")
            except OSError:
                pass
            return EXIT_FAULT
        try:
            write_bundle(cycle_log, metrics, cfg, out / tag)
        except OSError as e:
            print(f"cannot write outputs for {tag}: {e}", file=sys.stderr)
            return EXIT_IO
        legs[tag] = metrics

    report = compare_runs(legs["a"], legs["b"])
    try:
        with open(out / "comparison.json", "w") as f:
            json.dump({"status": "ok", **report.to_dict()}, f, indent=2, sort_keys=True)
            f.write("\n")
        with open(out / "duty.csv", "w") as f:
            f.write("run,norm_speed,norm_torque\n")
            for tag in ("a", "b"):
                for w, q in legs[tag].duty_points:
                    f.write(f"{tag},{_fmt(w)},{_fmt(q)}\n")
    except OSError as e:
        print(f"cannot write comparison: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_validate(config_path: str) -> int:
    """Schema + admissibility checks; prints the resolved parameter set."""
    try:
        resolved, notes = load_config_file(config_path)
        build_sim_config(resolved)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    for note in notes:
        print(f"note: {note}")
    print(json.dumps(resolved, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadcycle",
        description="Deterministic wheel-loader loading-cycle simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one loading cycle")
    p_run.add_argument("config", help="JSON configuration file")
    p_run.add_argument("-o", "--out-dir", required=True, help="output directory")

    p_cmp = sub.add_parser("compare", help="run two setups and compare")
    p_cmp.add_argument("config_a", help="baseline configuration")
    p_cmp.add_argument("config_b", help="variant configuration")
    p_cmp.add_argument("-o", "--out-dir", required=True, help="output directory")

    p_val = sub.add_parser("validate", help="check a configuration without running")
    p_val.add_argument("config", help="JSON configuration file")
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LOADCYCLE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out_dir)
    if args.command == "compare":
        return cmd_compare(args.config_a, args.config_b, args.out_dir)
    return cmd_validate(args.config)


def entrypoint() -> None:
    sys.exit(main())
