"""CSV and JSON serialization for paths, dissected pieces, gains and reports.

Path CSV (long format, one number per row)::

    scenario_id,time,piece,asset_index,side,value

``side`` is V for the value at ``time`` and R for the right limit stored at a
piece start (t = 0 included). V rows carry the owning piece, 0 for the
initial value; R rows carry the piece that starts there. Floats are written
with ``repr`` so that reading back gives the same bits.

Dissected pieces use the same columns plus ``k`` after ``scenario_id``;
every row has side V. Gains and wealth use ``scenario_id,time,value``.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dissection import DissectedPiece
from .paths import PathPiece, PiecewisePath, TimeGrid

__all__ = [
    "CsvFormatError",
    "PATH_COLUMNS",
    "PIECE_COLUMNS",
    "GAINS_COLUMNS",
    "fmt",
    "write_paths_csv",
    "read_paths_csv",
    "write_pieces_csv",
    "read_pieces_csv",
    "write_series_csv",
    "read_series_csv",
    "write_json",
    "canonical_json",
    "config_hash",
    "file_sha256",
]

PATH_COLUMNS = ("scenario_id", "time", "piece", "asset_index", "side", "value")
PIECE_COLUMNS = ("scenario_id", "k", "time", "piece", "asset_index", "side", "value")
GAINS_COLUMNS = ("scenario_id", "time", "value")


class CsvFormatError(ValueError):
    def __init__(self, source, line: int | None, message: str):
        where = f"{source}" if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")
        self.line = line


def fmt(x: float) -> str:
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


# -- paths ---------------------------------------------------------------------


def _path_rows(sid: int, path: PiecewisePath):
    times = path.grid.times
    starts = {p.start: p for p in path.pieces}
    for i in range(len(times)):
        t = fmt(times[i])
        if i == 0:
            piece, val = 0, path.initial_value
        else:
            p = path.piece_at_index(i)
            piece, val = p.index, p.samples[i - p.start - 1]
        for a, v in enumerate(np.asarray(val).reshape(-1)):
            yield (sid, t, piece, a, "V", fmt(v))
        if i in starts:
            p = starts[i]
            for a, v in enumerate(p.start_right_limit):
                yield (sid, t, p.index, a, "R", fmt(v))


def write_paths_csv(dest, paths: Iterable[PiecewisePath], ids: Sequence[int] | None = None) -> None:
    with open(dest, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(PATH_COLUMNS)
        for n, path in enumerate(paths):
            sid = n if ids is None else ids[n]
            w.writerows(_path_rows(sid, path))


def _rows(source, header: Sequence[str]):
    with open(source, newline="") as fh:
        r = csv.reader(fh)
        first = next(r, None)
        if first is None or tuple(first) != tuple(header):
            raise CsvFormatError(source, 1, f"expected header {','.join(header)}")
        for line, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(source, line, f"expected {len(header)} fields, got {len(row)}")
            yield line, row


def _vectors(entries: dict, source) -> list:
    """{(time, piece): {asset: value}} -> ordered list of (time, piece, vector)."""
    out = []
    for (t, piece), comps in entries.items():
        idx = sorted(comps)
        if idx != list(range(len(idx))):
            raise CsvFormatError(source, None, f"asset indices at t={t} piece {piece} are not 0..n-1")
        out.append((t, piece, np.array([comps[a] for a in idx])))
    return out


def _assemble(sid, vals, rls, source) -> PiecewisePath:
    times = [t for t, _, _ in vals]
    if len(set(times)) != len(times):
        raise CsvFormatError(source, None, f"scenario {sid}: more than one V vector at a time")
    grid = TimeGrid(np.array(times))
    if vals[0][1] != 0:
        raise CsvFormatError(source, None, f"scenario {sid}: the initial value must be tagged piece 0")
    index = {t: i for i, t in enumerate(times)}
    starts = []
    for t, piece, rl in rls:
        if t not in index:
            raise CsvFormatError(source, None, f"scenario {sid}: right limit at t={t} is off the grid")
        starts.append((piece, index[t], rl))
    starts.sort()
    if [s[0] for s in starts] != list(range(1, len(starts) + 1)):
        raise CsvFormatError(source, None, f"scenario {sid}: pieces must be numbered 1..K")
    bounds = [s[1] for s in starts] + [grid.last]
    blocks = [[] for _ in starts]
    for i, (t, piece, v) in enumerate(vals[1:], start=1):
        if not 1 <= piece <= len(starts):
            raise CsvFormatError(source, None, f"scenario {sid}: unknown piece {piece} at t={t}")
        if not bounds[piece - 1] < i <= bounds[piece]:
            raise CsvFormatError(source, None, f"scenario {sid}: t={t} lies outside piece {piece}")
        blocks[piece - 1].append(v)
    pieces = [PathPiece(k + 1, bounds[k], bounds[k + 1], starts[k][2], blocks[k]) for k in range(len(starts))]
    return PiecewisePath(grid, vals[0][2], pieces)


def read_paths_csv(source) -> dict[int, PiecewisePath]:
    """scenario_id -> path, in order of first appearance.

    Rows may come in any order within a scenario; ragged pieces are kept so
    that validation can report them.
    """
    v_ent: dict = defaultdict(lambda: defaultdict(dict))
    r_ent: dict = defaultdict(lambda: defaultdict(dict))
    for line, (sid, t, piece, a, side, val) in _rows(source, PATH_COLUMNS):
        try:
            key = (float(t), int(piece))
            sid_i, a_i, v = int(sid), int(a), float(val)
        except ValueError as exc:
            raise CsvFormatError(source, line, str(exc)) from None
        if side == "V":
            target = v_ent[sid_i][key]
        elif side == "R":
            target = r_ent[sid_i][key]
        else:
            raise CsvFormatError(source, line, f"side must be V or R, got {side!r}")
        if a_i in target:
            raise CsvFormatError(source, line, f"duplicate entry for asset {a_i}")
        target[a_i] = v
    out = {}
    for sid, ent in v_ent.items():
        vals = sorted(_vectors(ent, source), key=lambda e: e[0])
        rls = _vectors(r_ent.get(sid, {}), source)
        out[sid] = _assemble(sid, vals, rls, source)
    return out


# -- dissected pieces ---------------------------------------------------------


def write_pieces_csv(dest, dissections: Iterable[Sequence[DissectedPiece]], paths: Sequence[PiecewisePath],
                     ids: Sequence[int] | None = None) -> None:
    with open(dest, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(PIECE_COLUMNS)
        for n, (pieces, path) in enumerate(zip(dissections, paths)):
            sid = n if ids is None else ids[n]
            times = path.grid.times
            owner = [0] + [path.piece_at_index(i).index for i in range(1, len(times))]
            for d in pieces:
                for i, row in enumerate(d.values):
                    t = fmt(times[i])
                    for a, v in enumerate(row):
                        w.writerow((sid, d.k, t, owner[i], a, "V", fmt(v)))


def read_pieces_csv(source) -> dict[int, list[DissectedPiece]]:
    """scenario_id -> dissected pieces (values only) in k order."""
    ent: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(dict)))
    for line, (sid, k, t, piece, a, side, val) in _rows(source, PIECE_COLUMNS):
        if side != "V":
            raise CsvFormatError(source, line, "dissected pieces only carry V rows")
        try:
            ent[int(sid)][int(k)][float(t)][int(a)] = float(val)
        except ValueError as exc:
            raise CsvFormatError(source, line, str(exc)) from None
    out = {}
    for sid, by_k in ent.items():
        pieces = []
        for k in sorted(by_k):
            rows = [by_k[k][t] for t in sorted(by_k[k])]
            n = len(rows[0])
            if any(sorted(r) != list(range(n)) for r in rows):
                raise CsvFormatError(source, None, f"scenario {sid} piece {k}: inconsistent dimension")
            vals = np.array([[r[a] for a in range(n)] for r in rows])
            pieces.append(DissectedPiece(k, n, vals))
        out[sid] = pieces
    return out


# -- gains and wealth -----------------------------------------------------------


def write_series_csv(dest, series: Iterable[tuple[np.ndarray, np.ndarray]], ids: Sequence[int] | None = None) -> None:
    """Rows for (times, values) pairs, one pair per scenario."""
    with open(dest, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(GAINS_COLUMNS)
        for n, (times, values) in enumerate(series):
            sid = n if ids is None else ids[n]
            w.writerows((sid, fmt(t), fmt(v)) for t, v in zip(times, values))


def read_series_csv(source) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    acc: dict = defaultdict(list)
    for line, (sid, t, v) in _rows(source, GAINS_COLUMNS):
        try:
            acc[int(sid)].append((float(t), float(v)))
        except ValueError as exc:
            raise CsvFormatError(source, line, str(exc)) from None
    out = {}
    for sid, rows in acc.items():
        a = np.array(rows)
        out[sid] = (a[:, 0], a[:, 1])
    return out


# -- json ------------------------------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(dest, obj) -> None:
    with open(dest, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
