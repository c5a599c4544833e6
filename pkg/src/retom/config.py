"""Run configuration shared by the CLI, config files and sweeps."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple

from .errors import ValidationError
from .merger import MergeConfig
from .pipeline import ToyPipelineSpec
from .selector import DESTINATION_MODES
from .windows import GridSpec, LayerSpec, Role, adaptive_schedule, check_role_sequence

DEFAULT_ROLES = ("down", "down", "bottleneck", "up", "up")
DEFAULT_SMALL, DEFAULT_LARGE = 2, 8


@dataclass(frozen=True)
class RunConfig:
    grid_height: int = 32
    grid_width: int = 32
    dim: int = 32
    layer_roles: Tuple[str, ...] = DEFAULT_ROLES
    window: str = "adaptive"
    ratio: float = 0.5
    alpha: float = 0.5
    period: int = 5
    timesteps: int = 10
    drift: float = 0.01
    seed: int = 0
    destination: str = "representative"
    mode: str = "merged"
    cache: bool = True
    sharpness: float = 8.0
    timing_repeats: int = 5
    output: str = ""
    format: str = "csv"

    def __post_init__(self):
        roles = self.layer_roles
        if isinstance(roles, str):
            roles = tuple(r.strip() for r in roles.split(",") if r.strip())
        object.__setattr__(self, "layer_roles", tuple(roles))
        _check(self.grid_height >= 1, "grid_height", self.grid_height, ">= 1")
        _check(self.grid_width >= 1, "grid_width", self.grid_width, ">= 1")
        _check(self.dim >= 1, "dim", self.dim, ">= 1")
        _check(len(self.layer_roles) >= 1, "layer_roles", self.layer_roles, "non-empty")
        _check(all(r in Role._value2member_map_ for r in self.layer_roles), "layer_roles", self.layer_roles,
               "made of down, bottleneck, up")
        try:
            check_role_sequence(self.layer_roles)
        except ValidationError as exc:
            raise ValidationError(f"layer_roles: {exc}") from None
        parse_window(self.window)
        _check(0.0 <= self.ratio <= 1.0, "ratio", self.ratio, "in [0, 1]")
        _check(0.0 <= self.alpha <= 1.0, "alpha", self.alpha, "in [0, 1]")
        _check(self.period >= 1, "period", self.period, ">= 1")
        _check(self.timesteps >= 1, "timesteps", self.timesteps, ">= 1")
        _check(self.drift >= 0.0, "drift", self.drift, ">= 0")
        _check(0 <= self.seed < 2**64, "seed", self.seed, "a 64-bit unsigned integer")
        _check(self.destination in DESTINATION_MODES, "destination", self.destination, "one of " + ", ".join(DESTINATION_MODES))
        _check(self.mode in ("baseline", "merged"), "mode", self.mode, "baseline or merged")
        _check(self.sharpness > 0, "sharpness", self.sharpness, "> 0")
        _check(self.timing_repeats >= 0, "timing_repeats", self.timing_repeats, ">= 0")
        _check(self.format in ("csv", "json"), "format", self.format, "csv or json")

    def window_sides(self) -> List[int]:
        kind, sizes = parse_window(self.window)
        if kind == "fixed":
            return [sizes[0]] * len(self.layer_roles)
        return adaptive_schedule(self.layer_roles, *sizes)

    def pipeline_spec(self) -> ToyPipelineSpec:
        layers = [LayerSpec(i, role, side) for i, (role, side) in enumerate(zip(self.layer_roles, self.window_sides()))]
        return ToyPipelineSpec(
            grid=GridSpec(self.grid_height, self.grid_width),
            dim=self.dim,
            layers=layers,
            timesteps=self.timesteps,
            drift_scale=self.drift,
            seed=self.seed,
            attention_sharpness=self.sharpness,
        )

    def merge_config(self) -> MergeConfig:
        return MergeConfig(ratio=self.ratio, alpha=self.alpha, period=self.period)

    def with_values(self, **values) -> "RunConfig":
        return replace(self, **coerce_values(values))


def _check(ok: bool, key: str, value, expected: str) -> None:
    if not ok:
        raise ValidationError(f"{key}: expected {expected}, got {value!r}")


def parse_window(text: str) -> Tuple[str, Tuple[int, ...]]:
    """``fixed:S``, ``adaptive`` or ``adaptive:SMALL,LARGE``."""
    kind, _, rest = str(text).partition(":")
    try:
        if kind == "fixed":
            side = int(rest)
            if side < 1:
                raise ValueError
            return "fixed", (side,)
        if kind == "adaptive":
            if not rest:
                return "adaptive", (DEFAULT_SMALL, DEFAULT_LARGE)
            small, large = (int(v) for v in rest.split(","))
            if small < 1 or large < small:
                raise ValueError
            return "adaptive", (small, large)
    except ValueError:
        pass
    raise ValidationError(f"window: expected fixed:S, adaptive or adaptive:SMALL,LARGE, got {text!r}")


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def coerce_values(values: Mapping[str, Any]) -> Dict[str, Any]:
    """Normalize key spelling and cast values to field types; unknown keys are rejected."""
    out = {}
    for raw_key, value in values.items():
        key = raw_key.replace("-", "_")
        if key == "grid":
            try:
                h, w = (int(v) for v in str(value).lower().split("x"))
            except ValueError:
                raise ValidationError(f"grid: expected HxW, got {value!r}") from None
            out["grid_height"], out["grid_width"] = h, w
            continue
        if key not in FIELD_TYPES:
            raise ValidationError(f"{raw_key}: unknown configuration key")
        kind = FIELD_TYPES[key]
        try:
            if kind == "bool":
                value = _to_bool(value)
            elif kind in _CASTS:
                if kind == "int" and isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                if kind == "int" and isinstance(value, bool):
                    raise ValueError(value)
                value = _CASTS[kind](value)
            elif key == "layer_roles" and not isinstance(value, str):
                value = tuple(str(v) for v in value)
        except (TypeError, ValueError):
            raise ValidationError(f"{key}: cannot interpret {value!r} as {kind}") from None
        out[key] = value
    return out


def load_config_file(path) -> Dict[str, Any]:
    """Read a JSON object of configuration values (plus an optional ``sweep`` table)."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"config file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path}: top level must be an object")
    return data


def build_config(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults, then file values, then explicit overrides."""
    merged = dict(coerce_values(file_values or {}))
    merged.update(coerce_values(overrides or {}))
    return RunConfig(**merged)


def config_as_dict(config: RunConfig) -> Dict[str, Any]:
    d = asdict(config)
    d["layer_roles"] = list(config.layer_roles)
    return d
