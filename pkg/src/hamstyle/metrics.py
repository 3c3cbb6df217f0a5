"""Composite style-transfer scores over pre-computed component scores, plus a latent statistic distance."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, TextIO

import numpy as np

from .errors import ShapeError
from .tensor import channel_stats

SCORE_COLUMNS = ("method", "dino", "clip_i", "clip_t", "fid", "lpips")
REPORT_COLUMNS = ("dc", "cc", "artfid")


@dataclass(frozen=True)
class ComponentScores:
    dino: Optional[float] = None
    clip_i: Optional[float] = None
    clip_t: Optional[float] = None
    fid: Optional[float] = None
    lpips: Optional[float] = None

    def __post_init__(self):
        for name in ("dino", "clip_i", "clip_t", "fid", "lpips"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")


def _need(s: ComponentScores, *names):
    vals = [getattr(s, n) for n in names]
    missing = [n for n, v in zip(names, vals) if v is None]
    if missing:
        raise ValueError(f"missing component score(s): {', '.join(missing)}")
    return vals


def dc_score(s: ComponentScores) -> float:
    """``(DINO + 1) * (CLIP-T + 1)``."""
    dino, clip_t = _need(s, "dino", "clip_t")
    return (dino + 1.0) * (clip_t + 1.0)


def cc_score(s: ComponentScores) -> float:
    """``(CLIP-I + 1) * (CLIP-T + 1)``."""
    clip_i, clip_t = _need(s, "clip_i", "clip_t")
    return (clip_i + 1.0) * (clip_t + 1.0)


def artfid_form(fid: float, lpips: float) -> float:
    """``(1 + FID) * (1 + LPIPS)``."""
    if fid < 0 or lpips < 0:
        raise ValueError(f"fid and lpips must be non-negative, got {fid}, {lpips}")
    return (1.0 + fid) * (1.0 + lpips)


def channel_stat_distance(a, b, channel_axis: int = 0) -> float:
    """Euclidean distance between the concatenated per-channel (mean, std) vectors of ``a`` and ``b``."""
    sa, sb = channel_stats(a, channel_axis), channel_stats(b, channel_axis)
    if sa.channels != sb.channels:
        raise ShapeError(f"channel counts differ: {sa.channels} vs {sb.channels}")
    return float(np.linalg.norm(sa.as_vector() - sb.as_vector()))


# -- CSV report -----------------------------------------------------------------

class ScoreCSVError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class ScoreRow:
    method: str
    scores: ComponentScores
    line: int
    cells: tuple = ()


def read_scores(f: TextIO) -> List[ScoreRow]:
    """Parse a ``method,dino,clip_i,clip_t,fid,lpips`` CSV.  Empty fid/lpips cells are allowed."""
    reader = csv.reader(f)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ScoreCSVError("empty file", line=1) from None
    if tuple(header) != SCORE_COLUMNS:
        raise ScoreCSVError(f"header must be {','.join(SCORE_COLUMNS)}, got {','.join(header)}", line=1)
    rows = []
    for record in reader:
        line = reader.line_num
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(SCORE_COLUMNS):
            raise ScoreCSVError(f"expected {len(SCORE_COLUMNS)} fields, got {len(record)}", line=line)
        values = {}
        for name, cell in zip(SCORE_COLUMNS[1:], record[1:]):
            cell = cell.strip()
            if not cell and name in ("fid", "lpips"):
                values[name] = None
                continue
            try:
                values[name] = float(cell)
            except ValueError:
                raise ScoreCSVError(f"non-numeric value {cell!r} in row {record[0]!r}", line=line, column=name) from None
            if not math.isfinite(values[name]):
                raise ScoreCSVError(f"non-finite value {cell!r} in row {record[0]!r}", line=line, column=name)
        rows.append(ScoreRow(record[0].strip(), ComponentScores(**values), line, tuple(c.strip() for c in record)))
    return rows


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def score_report(rows: Iterable[ScoreRow]) -> str:
    """CSV text with the input columns followed by ``dc,cc,artfid``."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SCORE_COLUMNS + REPORT_COLUMNS)
    for r in rows:
        s = r.scores
        art = artfid_form(s.fid, s.lpips) if s.fid is not None and s.lpips is not None else None
        cells = r.cells or (r.method, *(_fmt(getattr(s, c)) for c in SCORE_COLUMNS[1:]))
        w.writerow([*cells, _fmt(dc_score(s)), _fmt(cc_score(s)), _fmt(art)])
    return out.getvalue()
