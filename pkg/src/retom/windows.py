"""Square-window partitioning of a token grid and per-layer window sizes."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence

import numpy as np

from .errors import ValidationError


class Role(str, Enum):
    DOWN = "down"
    BOTTLENECK = "bottleneck"
    UP = "up"


def parse_role(value) -> Role:
    try:
        return Role(value)
    except ValueError:
        raise ValidationError(f"unknown layer role {value!r}; expected one of down, bottleneck, up") from None


@dataclass(frozen=True)
class GridSpec:
    """Row-major token grid: token (r, c) has index ``r * width + c``."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError(f"grid must be at least 1x1, got {self.height}x{self.width}")

    @property
    def n_tokens(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class LayerSpec:
    layer_id: int
    role: Role
    window_side: int

    def __post_init__(self):
        object.__setattr__(self, "role", parse_role(self.role))
        if self.window_side < 1:
            raise ValidationError(f"window_side must be >= 1, got {self.window_side}")


@dataclass(frozen=True)
class WindowPartition:
    grid: GridSpec
    window_side: int
    windows: tuple  # tuple of int64 index arrays, tile row-major

    def __len__(self):
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)


def partition(grid: GridSpec, window_side: int) -> WindowPartition:
    """Tile ``grid`` with ``window_side`` squares, clipping at the right/bottom edges."""
    s = int(window_side)
    if s < 1:
        raise ValidationError(f"window_side must be >= 1, got {window_side}")
    ids = np.arange(grid.n_tokens, dtype=np.int64).reshape(grid.height, grid.width)
    windows = []
    for r0 in range(0, grid.height, s):
        for c0 in range(0, grid.width, s):
            windows.append(ids[r0:r0 + s, c0:c0 + s].reshape(-1).copy())
    return WindowPartition(grid=grid, window_side=s, windows=tuple(windows))


def adaptive_schedule(roles: Iterable, small: int = 2, large: int = 8) -> List[int]:
    """Window side per layer: ``small`` for down/up stages, ``large`` for the bottleneck."""
    if small < 1 or large < small:
        raise ValidationError(f"need 1 <= small <= large, got small={small}, large={large}")
    sides = []
    for role in roles:
        sides.append(large if parse_role(role) is Role.BOTTLENECK else small)
    return sides


def check_role_sequence(roles: Sequence) -> None:
    """Roles must read down*, bottleneck*, up* in that order."""
    rank = {Role.DOWN: 0, Role.BOTTLENECK: 1, Role.UP: 2}
    prev = 0
    for i, role in enumerate(roles):
        cur = rank[parse_role(role)]
        if cur < prev:
            raise ValidationError(f"layer {i} has role {parse_role(role).value!r} after a later stage")
        prev = cur
