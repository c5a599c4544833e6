"""Slow reference implementations for cross-checking the engine.

Everything here works on nested Python lists with scalar loops and imports
nothing from the rest of the package, so a bug in the vectorized kernels
cannot hide behind a shared helper.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, List, Sequence, Tuple

NORM_FLOOR = 1e-12


def _rows(tokens) -> List[List[float]]:
    return [[float(v) for v in row] for row in tokens]


def oracle_cosine(tokens, indices: Sequence[int]) -> List[List[float]]:
    x = _rows(tokens)
    idx = [int(i) for i in indices]
    n = len(idx)
    out = [[0.0] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            xa, xb = x[idx[a]], x[idx[b]]
            dot = 0.0
            na = 0.0
            nb = 0.0
            for k in range(len(xa)):
                dot += xa[k] * xb[k]
                na += xa[k] * xa[k]
                nb += xb[k] * xb[k]
            na, nb = math.sqrt(na), math.sqrt(nb)
            if na < NORM_FLOOR or nb < NORM_FLOOR:
                out[a][b] = 0.0
            else:
                out[a][b] = dot / (na * nb)
    return out


def oracle_avg_sims(tokens, indices: Sequence[int]) -> List[float]:
    sim = oracle_cosine(tokens, indices)
    n = len(sim)
    avgs = []
    for i in range(n):
        total = 0.0
        for j in range(n):
            if j != i:
                total += sim[i][j]
        avgs.append(total / (n - 1))
    return avgs


def oracle_sort_desc(values: Sequence[float], labels: Sequence[int] | None = None) -> List[int]:
    """Positions ordered by (value descending, label ascending), via insertion sort."""
    labels = list(range(len(values))) if labels is None else list(labels)
    order: List[int] = []
    for i in range(len(values)):
        pos = 0
        while pos < len(order):
            j = order[pos]
            if values[i] > values[j] or (values[i] == values[j] and labels[i] < labels[j]):
                break
            pos += 1
        order.insert(pos, i)
    return order


def oracle_select(tokens, window: Sequence[int], least: bool = False) -> Tuple[int, List[int]]:
    """(destination token, remaining tokens ranked by average similarity)."""
    win = [int(i) for i in window]
    avgs = oracle_avg_sims(tokens, win)
    order = oracle_sort_desc(avgs, win)
    if least:
        best = 0
        for k in range(1, len(win)):
            if avgs[k] < avgs[best] or (avgs[k] == avgs[best] and win[k] < win[best]):
                best = k
    else:
        best = order[0]
    ranked = [win[k] for k in order if k != best]
    return win[best], ranked


def oracle_merge(dest: Sequence[float], sources: Sequence[Sequence[float]], alpha: float) -> List[float]:
    """``alpha * dest + (1 - alpha) * mean(sources)``, element by element."""
    r = len(sources)
    out = []
    for k in range(len(dest)):
        if r == 0:
            out.append(float(dest[k]))
            continue
        total = 0.0
        for s in sources:
            total += float(s[k])
        out.append(alpha * float(dest[k]) + (1.0 - alpha) * (total / r))
    return out


def oracle_cover_check(windows: Sequence[Sequence[int]], height: int, width: int, side: int) -> bool:
    """True iff ``windows`` tile the grid exactly with (edge-clipped) side x side rectangles."""
    seen = [0] * (height * width)
    for win in windows:
        cells = [int(i) for i in win]
        if not cells:
            return False
        for i in cells:
            if i < 0 or i >= height * width:
                return False
            seen[i] += 1
        rows = sorted({i // width for i in cells})
        cols = sorted({i % width for i in cells})
        if rows != list(range(rows[0], rows[-1] + 1)) or cols != list(range(cols[0], cols[-1] + 1)):
            return False
        if len(cells) != len(rows) * len(cols):
            return False
        if rows[0] % side or cols[0] % side:
            return False
        want_rows = min(side, height - rows[0])
        want_cols = min(side, width - cols[0])
        if len(rows) != want_rows or len(cols) != want_cols:
            return False
    for count in seen:
        if count != 1:
            return False
    return True


def oracle_attention(tokens, wq, wk, wv, wo) -> List[List[float]]:
    x, wq, wk, wv, wo = _rows(tokens), _rows(wq), _rows(wk), _rows(wv), _rows(wo)
    n, d = len(x), len(wq)

    def project(row, w):
        return [sum(row[a] * w[a][b] for a in range(d)) for b in range(d)]

    q = [project(r, wq) for r in x]
    k = [project(r, wk) for r in x]
    v = [project(r, wv) for r in x]
    out = []
    for i in range(n):
        logits = [sum(q[i][c] * k[j][c] for c in range(d)) / math.sqrt(d) for j in range(n)]
        top = max(logits)
        e = [math.exp(l - top) for l in logits]
        z = sum(e)
        mixed = [sum(e[j] / z * v[j][c] for j in range(n)) for c in range(d)]
        out.append(project(mixed, wo))
    return out


@dataclass
class OracleReport:
    case_id: str
    module_under_test: str
    max_abs_diff: float
    passed: bool
    inputs: dict = field(default_factory=dict)

    def write_replay(self, directory) -> Path:
        """Dump the report, inputs included, as JSON for replaying a failure."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.module_under_test}_{self.case_id}.json"
        path.write_text(json.dumps(asdict(self), default=_jsonable, indent=1))
        return path


def _jsonable(value: Any):
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError(type(value))


def max_abs_diff(a, b) -> float:
    fa = [float(v) for row in a for v in (row if hasattr(row, "__len__") else [row])]
    fb = [float(v) for row in b for v in (row if hasattr(row, "__len__") else [row])]
    if len(fa) != len(fb):
        return math.inf
    return max((abs(p - q) for p, q in zip(fa, fb)), default=0.0)
