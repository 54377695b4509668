"""Space-time binning of raw trajectory records into occupancy counts.

Cells live on an anchored equirectangular quadtree. Level 0 tiles the globe
with eight 90 x 90 degree faces (2 rows by 4 columns, anchored at lat -90,
lon -180); every level halves the cell width in both directions, so a level-L
cell spans ``90 / 2**L`` degrees. At the equator that gives edge lengths of
about 9.8 km, 611 m and 76 m at levels 10, 14 and 17.

Intervals are half-open ``[low, high)``; the north pole and the antimeridian
(lat = 90, lon = 180) fold into the last row/column.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import EmptyInputError, InputError

FACE_DEGREES = 90.0
MAX_LEVEL = 30
KM_PER_DEGREE = 111.32
PANEL_FORMAT = "occucast-panel"
PANEL_VERSION = 1


@dataclass(frozen=True, slots=True)
class RawObservation:
    agent_id: str
    lat: float
    lon: float
    timestamp: int

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise InputError(f"lat out of range: {self.lat}", field="lat")
        if not -180.0 <= self.lon <= 180.0:
            raise InputError(f"lon out of range: {self.lon}", field="lon")
        if self.timestamp < 0:
            raise InputError(f"timestamp is negative: {self.timestamp}", field="timestamp")


@dataclass(frozen=True, order=True, slots=True)
class CellId:
    """Grid cell at ``level``; ``row`` counts up from the south pole, ``col`` east from -180."""

    level: int
    row: int
    col: int

    @property
    def token(self) -> str:
        return f"{self.level}/{self.row}/{self.col}"

    def __str__(self):
        return self.token

    @classmethod
    def from_token(cls, token: str) -> "CellId":
        try:
            level, row, col = (int(part) for part in token.split("/"))
        except ValueError:
            raise InputError(f"malformed cell token: {token!r}", field="cell") from None
        n = 1 << level
        if not (0 <= level <= MAX_LEVEL and 0 <= row < 2 * n and 0 <= col < 4 * n):
            raise InputError(f"cell token outside the grid: {token!r}", field="cell")
        return cls(level, row, col)

    def parent(self) -> "CellId":
        if self.level == 0:
            raise ValueError("level-0 cells have no parent")
        return CellId(self.level - 1, self.row >> 1, self.col >> 1)

    def children(self) -> tuple["CellId", ...]:
        lv, r, c = self.level + 1, self.row << 1, self.col << 1
        return (CellId(lv, r, c), CellId(lv, r, c + 1), CellId(lv, r + 1, c), CellId(lv, r + 1, c + 1))

    def contains(self, other: "CellId") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return (other.row >> shift, other.col >> shift) == (self.row, self.col)

    @property
    def size_degrees(self) -> float:
        return FACE_DEGREES / (1 << self.level)

    def bounds(self) -> tuple[float, float, float, float]:
        """(lat_low, lon_low, lat_high, lon_high) in degrees."""
        d = self.size_degrees
        lat0 = -90.0 + self.row * d
        lon0 = -180.0 + self.col * d
        return lat0, lon0, lat0 + d, lon0 + d

    def center(self) -> tuple[float, float]:
        lat0, lon0, lat1, lon1 = self.bounds()
        return 0.5 * (lat0 + lat1), 0.5 * (lon0 + lon1)

    def edge_length_m(self) -> float:
        """Geometric mean of the east-west and north-south edges at the cell centre."""
        d_km = self.size_degrees * KM_PER_DEGREE
        ew = d_km * math.cos(math.radians(self.center()[0]))
        return 1000.0 * math.sqrt(max(ew, 0.0) * d_km)


def equator_edge_length_m(level: int) -> float:
    return 1000.0 * FACE_DEGREES / (1 << level) * KM_PER_DEGREE


def _check_level(level):
    if not (isinstance(level, (int, np.integer)) and 0 <= level <= MAX_LEVEL):
        raise InputError(f"level must be an integer in [0, {MAX_LEVEL}], got {level!r}", field="level")


def _axis_index(x: float, low: float, d: float, n_max: int) -> int:
    i = min(int(math.floor((x - low) / d)), n_max - 1)
    # the division can round across an edge; settle against the same
    # arithmetic bounds() uses
    if i > 0 and x < low + i * d:
        i -= 1
    elif i < n_max - 1 and x >= low + (i + 1) * d:
        i += 1
    return i


def _grid_index(lat: float, lon: float, level: int) -> tuple[int, int]:
    n = 1 << level
    d = FACE_DEGREES / n
    return _axis_index(lat, -90.0, d, 2 * n), _axis_index(lon, -180.0, d, 4 * n)


def encode_cell(lat: float, lon: float, level: int) -> CellId:
    if not (isinstance(lat, (int, float)) and -90.0 <= lat <= 90.0):
        raise InputError(f"lat out of range: {lat!r}", field="lat")
    if not (isinstance(lon, (int, float)) and -180.0 <= lon <= 180.0):
        raise InputError(f"lon out of range: {lon!r}", field="lon")
    _check_level(level)
    row, col = _grid_index(lat, lon, level)
    return CellId(level, row, col)


class RejectedRecord(InputError):
    """A single record that cannot be binned; tallied rather than fatal."""


@dataclass(frozen=True, slots=True)
class TimeBin:
    index: int
    origin: int
    width: int


def encode_time(timestamp: int, origin: int, width: int) -> TimeBin:
    if width <= 0:
        raise InputError(f"bin width must be positive, got {width}", field="width")
    if timestamp < origin:
        raise RejectedRecord(f"timestamp {timestamp} precedes origin {origin}", field="timestamp")
    return TimeBin((timestamp - origin) // width, origin, width)


@dataclass
class OccupancyPanel:
    level: int
    width: int
    origin: int
    n_bins: int
    series: dict[CellId, np.ndarray]
    rejections: dict[str, int] = field(default_factory=dict)

    @property
    def cells(self) -> list[CellId]:
        return sorted(self.series)

    def __len__(self):
        return len(self.series)

    def counts(self, cell: CellId) -> np.ndarray:
        return self.series[cell]

    def sparsity(self) -> dict[CellId, float]:
        return {c: float(np.mean(v == 0)) for c, v in self.series.items()}

    def subset(self, cells: Iterable[CellId]) -> "OccupancyPanel":
        return OccupancyPanel(self.level, self.width, self.origin, self.n_bins,
                              {c: self.series[c] for c in cells})

    def truncated(self, n_bins: int) -> "OccupancyPanel":
        return OccupancyPanel(self.level, self.width, self.origin, n_bins,
                              {c: v[:n_bins].copy() for c, v in self.series.items()})


class PanelAccumulator:
    """Mergeable partial state for ``build_panel``.

    Shards may be accumulated independently and combined with :meth:`merge`;
    the merge is a set union, so it is associative and commutative.
    """

    def __init__(self, level: int, width: int, origin: int | None = None):
        _check_level(level)
        if width <= 0:
            raise InputError(f"bin width must be positive, got {width}", field="width")
        self.level = level
        self.width = int(width)
        self.origin = origin
        self._seen: set[tuple[int, int, int, str]] = set()
        self.rejections: Counter = Counter()
        self.n_records = 0

    def add(self, obs: RawObservation) -> None:
        self.n_records += 1
        if self.origin is None:
            b = obs.timestamp // self.width
        elif obs.timestamp < self.origin:
            self.rejections["before_origin"] += 1
            return
        else:
            b = (obs.timestamp - self.origin) // self.width
        row, col = _grid_index(obs.lat, obs.lon, self.level)
        self._seen.add((row, col, b, obs.agent_id))

    def add_all(self, observations: Iterable[RawObservation]) -> "PanelAccumulator":
        for obs in observations:
            self.add(obs)
        return self

    def reject(self, reason: str, n: int = 1) -> None:
        self.n_records += n
        self.rejections[reason] += n

    def merge(self, other: "PanelAccumulator") -> "PanelAccumulator":
        if (self.level, self.width, self.origin) != (other.level, other.width, other.origin):
            raise InputError("cannot merge accumulators with different resolutions")
        self._seen |= other._seen
        self.rejections.update(other.rejections)
        self.n_records += other.n_records
        return self

    def to_panel(self, n_bins: int | None = None) -> OccupancyPanel:
        if not self._seen:
            raise EmptyInputError("no valid observations to bin")
        counts = Counter((r, c, b) for r, c, b, _ in self._seen)
        if self.origin is None:
            b0 = min(b for _, _, b in counts)
            origin = b0 * self.width
        else:
            b0, origin = 0, self.origin
        last = max(b for _, _, b in counts) - b0
        if n_bins is None:
            n_bins = last + 1
        rejections = dict(self.rejections)
        series: dict[CellId, np.ndarray] = {}
        dropped = 0
        for (r, c, b), n in counts.items():
            t = b - b0
            if t >= n_bins:
                dropped += 1
                continue
            cell = CellId(self.level, r, c)
            arr = series.get(cell)
            if arr is None:
                arr = series[cell] = np.zeros(n_bins, dtype=np.int64)
            arr[t] = n
        if dropped:
            rejections["after_window"] = rejections.get("after_window", 0) + dropped
        if not series:
            raise EmptyInputError("no observations fall inside the panel window")
        series = {c: series[c] for c in sorted(series)}
        return OccupancyPanel(self.level, self.width, origin, n_bins, series, rejections)


def build_panel(observations: Iterable[RawObservation], level: int, width: int,
                origin: int | None = None, n_bins: int | None = None) -> OccupancyPanel:
    """Count unique agents per (cell, time bin).

    Without an explicit ``origin`` the window starts at the bin boundary at or
    below the earliest timestamp. Every occupied cell gets a dense vector
    with zeros for its empty bins.
    """
    return PanelAccumulator(level, width, origin).add_all(observations).to_panel(n_bins)


# -- text formats -----------------------------------------------------------

def _parse_timestamp(value) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean timestamp")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError("fractional timestamp")
        return int(value)
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        as_float = float(text)
        if not as_float.is_integer():
            raise ValueError("fractional timestamp") from None
        return int(as_float)


def iter_observations(path: str | Path, accumulator: PanelAccumulator | None = None,
                      fmt: str | None = None) -> Iterator[RawObservation]:
    """Yield observations from a delimited or JSON-lines file.

    Malformed lines are skipped; when ``accumulator`` is given they are
    tallied on its rejection report under ``malformed`` or ``out_of_range``.
    """
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "delimited"
    if fmt not in ("jsonl", "delimited"):
        raise InputError(f"unsupported input format: {fmt}", field="format")

    def tally(reason):
        if accumulator is not None:
            accumulator.reject(reason)

    with open(path, encoding="utf-8") as fh:
        delimiter = None
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                if fmt == "jsonl":
                    rec = json.loads(line)
                    agent, lat, lon, ts = rec["agent_id"], rec["lat"], rec["lon"], rec["timestamp"]
                else:
                    if delimiter is None:
                        delimiter = "\t" if "\t" in line else ","
                    parts = [p.strip() for p in line.split(delimiter)]
                    if lineno == 0 and parts[0].lower() in ("agent_id", "id", "agent"):
                        continue
                    if len(parts) != 4:
                        raise ValueError("expected 4 fields")
                    agent, lat, lon, ts = parts
                lat, lon, ts = float(lat), float(lon), _parse_timestamp(ts)
                if not (math.isfinite(lat) and math.isfinite(lon)):
                    raise ValueError("non-finite coordinate")
            except (ValueError, KeyError, TypeError, json.JSONDecodeError):
                tally("malformed")
                continue
            try:
                yield RawObservation(str(agent), lat, lon, ts)
            except InputError:
                tally("out_of_range")


def write_observations(path: str | Path, observations: Iterable[RawObservation]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("agent_id,lat,lon,timestamp\n")
        for obs in observations:
            fh.write(f"{obs.agent_id},{obs.lat!r},{obs.lon!r},{obs.timestamp}\n")
            n += 1
    return n


def write_panel(path: str | Path, panel: OccupancyPanel, meta: dict | None = None) -> None:
    """Write a panel as JSON lines: one header record, then one record per cell."""
    header = {
        "kind": "header", "format": PANEL_FORMAT, "version": PANEL_VERSION,
        "level": panel.level, "width": panel.width, "origin": panel.origin,
        "n_bins": panel.n_bins, "n_cells": len(panel.series),
    }
    if meta:
        header["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for cell in panel.cells:
            rec = {"kind": "cell", "cell": cell.token, "origin": panel.origin,
                   "width": panel.width, "counts": panel.series[cell].tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_panel(path: str | Path) -> tuple[OccupancyPanel, dict]:
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: unreadable panel header ({exc})") from None
        if header.get("format") != PANEL_FORMAT:
            raise InputError(f"{path}: not a panel file")
        if header.get("version") != PANEL_VERSION:
            raise InputError(f"{path}: unsupported panel version {header.get('version')}")
        level, width, origin, n_bins = header["level"], header["width"], header["origin"], header["n_bins"]
        series = {}
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            counts = np.asarray(rec["counts"], dtype=np.int64)
            if counts.shape != (n_bins,) or (counts < 0).any():
                raise InputError(f"{path}: bad count vector for cell {rec.get('cell')}")
            series[CellId.from_token(rec["cell"])] = counts
    return OccupancyPanel(level, width, origin, n_bins, series), header.get("meta", {})
