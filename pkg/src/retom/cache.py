"""Period-based reuse of window selections across timesteps."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, List, Optional, Tuple

from .errors import StaleCacheError, ValidationError
from .selector import RepSelection, select_representative

logger = logging.getLogger(__name__)

Key = Tuple[Hashable, int]


@dataclass
class CacheEntry:
    selection: Optional[RepSelection]
    window: tuple
    computed_at: int


class SimilarityCache:
    """Stores one selection per ``(layer_id, window_id)``.

    A selection is recomputed whenever ``t % period == 0``, on a cold miss,
    or when the stored window no longer matches the requested one. Every
    other access returns the stored selection object unchanged.
    """

    def __init__(self, period: int = 1):
        if int(period) != period or period < 1:
            raise ValidationError(f"period must be an integer >= 1, got {period}")
        self.period = int(period)
        self._entries: Dict[Key, CacheEntry] = {}
        self.hits = 0
        self.recomputes = 0
        self.stale = 0
        self.recompute_log: Dict[Key, List[int]] = defaultdict(list)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def lookup(self, key: Key, window) -> CacheEntry:
        """Return the stored entry; raises KeyError or StaleCacheError."""
        entry = self._entries[key]
        if entry.window != _window_key(window):
            raise StaleCacheError(f"cached selection for {key} was computed on a different window")
        return entry

    def get_or_compute(
        self,
        t: int,
        key: Key,
        tokens,
        window,
        compute: Optional[Callable[[], Optional[RepSelection]]] = None,
    ) -> Optional[RepSelection]:
        """Selection for ``key`` at timestep ``t``.

        ``compute`` defaults to ``select_representative(tokens, window)``;
        pass a closure to choose the destination mode or keep matrices.
        """
        if t < 0:
            raise ValidationError(f"timestep must be >= 0, got {t}")
        if t % self.period != 0:
            try:
                entry = self.lookup(key, window)
            except KeyError:
                pass
            except StaleCacheError as exc:
                self.stale += 1
                logger.warning("%s; recomputing at t=%d", exc, t)
            else:
                self.hits += 1
                return entry.selection
        if compute is None:
            selection = select_representative(tokens, window, window_id=key[1])
        else:
            selection = compute()
        self._entries[key] = CacheEntry(selection, _window_key(window), t)
        self.recomputes += 1
        self.recompute_log[key].append(t)
        return selection

    def invalidate(self, layer_id=None) -> None:
        """Drop every entry, or only those of ``layer_id``."""
        if layer_id is None:
            self._entries.clear()
            return
        for key in [k for k in self._entries if k[0] == layer_id]:
            del self._entries[key]

    def entry(self, key: Key) -> CacheEntry:
        return self._entries[key]


def _window_key(window) -> tuple:
    return tuple(sorted(int(i) for i in window))
