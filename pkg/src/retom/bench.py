"""Sweeps over run configurations and serialization of their metrics."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

from .config import RunConfig
from .pipeline import DriftReport, MetricsRecord, run, similarity_drift_report
from .windows import partition

SCHEMA = "retom-metrics/1"

PARAM_COLUMNS = [
    "grid", "dim", "layer_roles", "window", "window_sides", "ratio", "alpha", "period", "timesteps",
    "drift", "seed", "destination", "mode", "cache", "sharpness",
]
METRIC_COLUMNS = [
    "baseline_flops", "merged_flops", "flop_ratio", "tokens_before", "tokens_after", "tokens_after_per_layer",
    "cache_recomputes", "cache_hits", "output_mse_vs_baseline", "drift_corr_min", "drift_corr_mean",
    "drift_correlations",
]
TIMING_COLUMNS = ["timing_repeats", "wall_time_baseline_ns", "wall_time_merged_ns", "speedup"]
COLUMNS = ["schema"] + PARAM_COLUMNS + METRIC_COLUMNS + TIMING_COLUMNS


class SweepError(RuntimeError):
    def __init__(self, combination: Mapping[str, Any], cause: BaseException):
        self.combination = dict(combination)
        super().__init__(f"run failed for {self.combination}: {cause}")


def make_row(config: RunConfig, metrics: MetricsRecord) -> Dict[str, Any]:
    """One output row: the full parameter set followed by the metrics."""
    corr = metrics.drift_correlations
    timed = metrics.wall_time_baseline_ns is not None
    row = {
        "schema": SCHEMA,
        "grid": f"{config.grid_height}x{config.grid_width}",
        "dim": config.dim,
        "layer_roles": ",".join(config.layer_roles),
        "window": config.window,
        "window_sides": config.window_sides(),
        "ratio": config.ratio,
        "alpha": config.alpha,
        "period": config.period,
        "timesteps": config.timesteps,
        "drift": config.drift,
        "seed": config.seed,
        "destination": config.destination,
        "mode": config.mode,
        "cache": config.cache,
        "sharpness": config.sharpness,
        "baseline_flops": metrics.baseline_flops,
        "merged_flops": metrics.merged_flops,
        "flop_ratio": metrics.flop_ratio,
        "tokens_before": metrics.tokens_before,
        "tokens_after": metrics.tokens_after,
        "tokens_after_per_layer": list(metrics.tokens_after_per_layer),
        "cache_recomputes": metrics.cache_recomputes,
        "cache_hits": metrics.cache_hits,
        "output_mse_vs_baseline": metrics.output_mse_vs_baseline,
        "drift_corr_min": min(corr) if corr else None,
        "drift_corr_mean": math.fsum(corr) / len(corr) if corr else None,
        "drift_correlations": list(corr),
        "timing_repeats": config.timing_repeats,
        "wall_time_baseline_ns": metrics.wall_time_baseline_ns if timed else None,
        "wall_time_merged_ns": metrics.wall_time_merged_ns if timed else None,
        "speedup": metrics.speedup if timed else None,
    }
    assert list(row) == COLUMNS
    return row


def run_config(config: RunConfig) -> MetricsRecord:
    return run(
        config.pipeline_spec(),
        config.merge_config(),
        mode=config.mode,
        destination=config.destination,
        use_cache=config.cache,
        timing_repeats=config.timing_repeats,
    )


def _run_one(config: RunConfig) -> Dict[str, Any]:
    return make_row(config, run_config(config))


def expand_axes(config: RunConfig, axes: Mapping[str, Sequence[Any]]) -> List[RunConfig]:
    """Cross product of ``axes`` in the given key and value order."""
    keys = list(axes)
    for key in keys:
        if not axes[key]:
            raise ValueError(f"sweep axis {key!r} has no values")
    combos = []
    for values in itertools.product(*(axes[k] for k in keys)):
        combos.append(config.with_values(**dict(zip(keys, values))))
    return combos


def run_sweep(config: RunConfig, axes: Mapping[str, Sequence[Any]] | None = None, workers: int = 1) -> List[Dict[str, Any]]:
    """One row per combination of ``axes`` applied on top of ``config``.

    Rows come back in axis order whatever the worker count. The first
    failing combination aborts the sweep with a SweepError naming it.
    """
    axes = dict(axes or {})
    configs = expand_axes(config, axes)
    labels = [dict(zip(axes, values)) for values in itertools.product(*axes.values())]
    rows: List[Dict[str, Any]] = []
    if workers <= 1:
        for label, cfg in zip(labels, configs):
            try:
                rows.append(_run_one(cfg))
            except Exception as exc:
                raise SweepError(label, exc) from exc
        return rows
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, cfg) for cfg in configs]
        for label, fut in zip(labels, futures):
            try:
                rows.append(fut.result())
            except Exception as exc:
                raise SweepError(label, exc) from exc
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def to_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def to_json(rows: Sequence[Mapping[str, Any]]) -> str:
    # float repr is the shortest string that parses back to the same double
    return json.dumps([{c: row[c] for c in COLUMNS} for row in rows], indent=1) + "\n"


def emit_results(rows: Sequence[Mapping[str, Any]], fmt: str, path) -> Path:
    """Write ``rows`` as CSV (header always present) or as a JSON array of objects."""
    if fmt == "csv":
        text = to_csv(rows)
    elif fmt == "json":
        text = to_json(rows)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def drift_report_for(config: RunConfig, window_id: int = 0, sample_timesteps: Sequence[int] | None = None) -> DriftReport:
    """Drift report on window ``window_id`` of the first layer's partition."""
    spec = config.pipeline_spec()
    part = partition(spec.grid, spec.layers[0].window_side)
    if not 0 <= window_id < len(part):
        raise ValueError(f"window id {window_id} outside [0, {len(part)})")
    if sample_timesteps is None:
        last = spec.timesteps - 1
        sample_timesteps = sorted({round(last * k / 3) for k in range(4)})
    return similarity_drift_report(spec, part.windows[window_id], sample_timesteps)


def write_drift_report(report: DriftReport, directory, prefix: str = "drift") -> List[Path]:
    """One CSV per sampled similarity matrix plus a correlations table."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    tokens = [int(i) for i in report.window]
    for t, mat in zip(report.timesteps, report.matrices):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["token"] + tokens)
        for tok, values in zip(tokens, mat):
            writer.writerow([tok] + [_fmt(float(v)) for v in values])
        path = directory / f"{prefix}_t{t:05d}.csv"
        path.write_text(buf.getvalue())
        written.append(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t_from", "t_to", "gap", "pearson"])
    for (a, b), c in zip(zip(report.timesteps, report.timesteps[1:]), report.correlations):
        writer.writerow([a, b, b - a, _fmt(c)])
    path = directory / f"{prefix}_correlations.csv"
    path.write_text(buf.getvalue())
    written.append(path)
    return written
