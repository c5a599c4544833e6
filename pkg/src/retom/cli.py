"""``retom-bench``: run the toy pipeline over a grid of merge settings.

Any configuration key can come from a JSON file (``--config``) and be
overridden by a flag. ``--sweep KEY V1 V2 ...`` adds a sweep axis; the
cross product of all axes is run in the order given.

Example (the window size x destination grid)::

    retom-bench --grid 32x32 --dim 32 --seed 42 \\
        --sweep window fixed:2 fixed:8 fixed:16 adaptive \\
        --sweep destination representative random \\
        --output table2.csv
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import bench
from .config import FIELD_TYPES, RunConfig, build_config, load_config_file
from .errors import ValidationError

OUTPUT_DIR_ENV = "RETOM_OUTPUT_DIR"

log = logging.getLogger("retom")


def _grid(text: str):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid: expected HxW, got {text!r}") from None
    return h, w


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    p = argparse.ArgumentParser(
        prog="retom-bench",
        description="Benchmark windowed representative-token merging on a synthetic attention pipeline.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"Output goes to --output, or to ${OUTPUT_DIR_ENV}/retom_results.<format> (default directory: .).",
    )
    a = p.add_argument
    a("--config", metavar="FILE", help="JSON object of configuration keys; flags override it")
    a("--grid", type=_grid, metavar="HxW", help=f"token grid (default {d.grid_height}x{d.grid_width})")
    a("--dim", type=int, help=f"token feature width (default {d.dim})")
    a("--layers", dest="layer_roles", metavar="ROLES",
      help=f"comma-separated layer roles (default {','.join(d.layer_roles)})")
    a("--window", help=f"fixed:S, adaptive or adaptive:SMALL,LARGE (default {d.window})")
    a("--ratio", type=float, help=f"fraction of each window merged away (default {d.ratio})")
    a("--alpha", type=float, help=f"weight of the destination token in a merge (default {d.alpha})")
    a("--period", type=int, help=f"timesteps between similarity recomputations (default {d.period})")
    a("--timesteps", type=int, help=f"number of timesteps (default {d.timesteps})")
    a("--drift", type=float, help=f"per-step Gaussian drift scale (default {d.drift})")
    a("--seed", type=int, help=f"run seed (default {d.seed})")
    a("--destination", choices=["representative", "least", "random"], help=f"merge destination (default {d.destination})")
    a("--mode", choices=["baseline", "merged"], help=f"pipeline mode (default {d.mode})")
    a("--no-cache", dest="cache", action="store_const", const=False, help="recompute selections every timestep")
    a("--sharpness", type=float, help=f"attention logit scale of the toy layers (default {d.sharpness})")
    a("--timing-repeats", type=int, help=f"timed repetitions per mode, 0 disables timing (default {d.timing_repeats})")
    a("--output", "-o", help="output file")
    a("--format", choices=["csv", "json"], help=f"output format (default {d.format})")
    a("--sweep", nargs="+", action="append", metavar=("KEY", "VALUE"), default=[],
      help="sweep axis: a configuration key followed by its values; repeatable")
    a("--workers", type=int, default=1, help="parallel worker processes for sweeps (default 1)")
    a("--serial-timing", action="store_true", help="force one worker whenever timing is enabled")
    a("--drift-report", action="store_true", help="also write within-window similarity matrices over time")
    a("--drift-window", type=int, default=0, help="window id (first layer's partition) for --drift-report")
    a("--drift-timesteps", type=int, nargs="+", help="timesteps sampled by --drift-report (default: 4 evenly spaced)")
    a("-v", "--verbose", action="store_true")
    return p


def parse_config(argv: Optional[List[str]] = None):
    """Return ``(config, sweep_axes, args)``; raises ValidationError on bad input."""
    args = build_parser().parse_args(argv)
    file_values: Dict = {}
    axes: Dict[str, list] = {}
    if args.config:
        file_values = load_config_file(args.config)
        file_sweep = file_values.pop("sweep", {})
        if not isinstance(file_sweep, dict):
            raise ValidationError("sweep: expected an object of key -> list of values")
        axes.update(file_sweep)
    overrides = {}
    for key in FIELD_TYPES:
        if key in ("grid_height", "grid_width"):
            continue
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.grid is not None:
        overrides["grid_height"], overrides["grid_width"] = args.grid
    config = build_config(file_values, overrides)
    for axis in args.sweep:
        key, values = axis[0].replace("-", "_"), axis[1:]
        if key not in FIELD_TYPES and key != "grid":
            raise ValidationError(f"{axis[0]}: unknown sweep key")
        if not values:
            raise ValidationError(f"{axis[0]}: sweep axis has no values")
        axes[key] = values
    for key, values in axes.items():
        if key.replace("-", "_") not in FIELD_TYPES and key != "grid":
            raise ValidationError(f"{key}: unknown sweep key")
        if not isinstance(values, list) or not values:
            raise ValidationError(f"{key}: sweep values must be a non-empty list")
        for v in values:
            config.with_values(**{key: v})
    return config, axes, args


def default_output(config: RunConfig) -> Path:
    if config.output:
        return Path(config.output)
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"retom_results.{config.format}"


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config, axes, args = parse_config(argv)
    except ValidationError as exc:
        print(f"retom-bench: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    workers = args.workers
    if args.serial_timing and config.timing_repeats > 0:
        workers = 1
    try:
        rows = bench.run_sweep(config, axes, workers=workers)
    except bench.SweepError as exc:
        print(f"retom-bench: error: {exc}", file=sys.stderr)
        return 1

    out = default_output(config)
    try:
        bench.emit_results(rows, config.format, out)
        written = [out]
        if args.drift_report:
            report = bench.drift_report_for(config, args.drift_window, args.drift_timesteps)
            written += bench.write_drift_report(report, out.parent, prefix=f"{out.stem}_drift")
    except (OSError, ValueError, ValidationError) as exc:
        print(f"retom-bench: error: {exc}", file=sys.stderr)
        return 1

    for row in rows:
        speed = row["speedup"]
        log.info(
            "window=%s destination=%s ratio=%s flop_ratio=%.4f mse=%.3e speedup=%s",
            row["window"], row["destination"], row["ratio"], row["flop_ratio"], row["output_mse_vs_baseline"],
            f"{speed:.2f}x" if speed else "-",
        )
    print(f"wrote {len(rows)} row(s): " + ", ".join(str(p) for p in written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
