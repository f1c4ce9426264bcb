"""Session-level aggregation of per-block key-rate records.

Produces the selection-criteria averages (how many satellites per time slot
clear a key-rate threshold under a given elevation/azimuth/constellation
filter), the availability summary (how often at least one satellite clears a
threshold), sky-plot exports, and distribution statistics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptySessionError, ParameterError
from .infotheory import SkrRecord, secure_bit_rate
from .ubx import Constellation, constellation_from_name

DEFAULT_SLOT_DURATION = 300.0  # seconds
DEFAULT_EXCEED_THRESHOLDS = (0.4, 0.2, 0.0)
DEFAULT_BELOW_THRESHOLDS = (0.0, -0.2)

# Compass sectors as (start, end) azimuth intervals; an interval wraps when
# start > end. Both endpoints are inclusive.
SECTORS: dict[str, tuple[float, float]] = {
    "NW-NE": (315.0, 45.0),
    "SW-SE": (135.0, 225.0),
}


def _in_interval(azimuth: float, interval: tuple[float, float]) -> bool:
    start, end = interval
    if start <= end:
        return start <= azimuth <= end
    return azimuth >= start or azimuth <= end


@dataclass(frozen=True)
class CriteriaFilter:
    """Predicate over block records; fields left at None do not constrain.

    elevation_range bounds are inclusive; set elevation_lower_exclusive for
    half-open bins. azimuth_sectors entries are either names from SECTORS or
    explicit (start, end) degree pairs, normalized modulo 360. hour_range
    selects on the block start's hour of day and may wrap midnight.
    """
    label: str
    elevation_range: tuple[float | None, float | None] | None = None
    elevation_lower_exclusive: bool = False
    azimuth_sectors: tuple | None = None
    constellations: frozenset[Constellation] | None = None
    hour_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.elevation_range is not None:
            lo, hi = self.elevation_range
            for bound in (lo, hi):
                if bound is not None and not -90.0 <= bound <= 90.0:
                    raise ParameterError(f"elevation bound {bound} outside [-90, 90]")
        if self.azimuth_sectors is not None:
            object.__setattr__(self, "azimuth_sectors",
                               tuple(_resolve_sector(s) for s in self.azimuth_sectors))
        if self.constellations is not None:
            object.__setattr__(self, "constellations", frozenset(
                c if isinstance(c, Constellation) else constellation_from_name(c)
                for c in self.constellations))
        if self.hour_range is not None:
            start, end = self.hour_range
            if not (0.0 <= start < 24.0 and 0.0 <= end <= 24.0):
                raise ParameterError(f"hour range {self.hour_range} outside [0, 24]")

    def matches(self, record: SkrRecord) -> bool:
        if self.elevation_range is not None:
            if record.mean_elevation is None:
                return False
            lo, hi = self.elevation_range
            if lo is not None:
                if self.elevation_lower_exclusive:
                    if not record.mean_elevation > lo:
                        return False
                elif not record.mean_elevation >= lo:
                    return False
            if hi is not None and not record.mean_elevation <= hi:
                return False
        if self.azimuth_sectors is not None:
            if record.mean_azimuth is None:
                return False
            if not any(_in_interval(record.mean_azimuth, s)
                       for s in self.azimuth_sectors):
                return False
        if self.constellations is not None:
            if record.sat.constellation not in self.constellations:
                return False
        if self.hour_range is not None:
            hour = (record.start_epoch % 86400.0) / 3600.0
            start, end = self.hour_range
            if start <= end:
                if not start <= hour < end:
                    return False
            elif not (hour >= start or hour < end):
                return False
        return True


def _resolve_sector(sector) -> tuple[float, float]:
    if isinstance(sector, str):
        try:
            return SECTORS[sector]
        except KeyError:
            raise ParameterError(
                f"unknown sector {sector!r}, expected one of {sorted(SECTORS)}"
            ) from None
    start, end = sector
    return (float(start) % 360.0, float(end) % 360.0)


def filter_records(records: list[SkrRecord],
                   flt: CriteriaFilter) -> list[SkrRecord]:
    """Records matching every constraint the filter carries.

    Records without geometry cannot satisfy a position constraint and are
    excluded by it.
    """
    return [r for r in records if flt.matches(r)]


def slot_index(record: SkrRecord,
               slot_duration: float = DEFAULT_SLOT_DURATION) -> int:
    return int(record.start_epoch // slot_duration)


@dataclass(frozen=True)
class CriteriaRow:
    label: str
    avg_count_above: dict[float, float]
    avg_count_nonpositive: float

    def __post_init__(self) -> None:
        counts = [self.avg_count_above[t]
                  for t in sorted(self.avg_count_above, reverse=True)]
        if any(b < a for a, b in zip(counts, counts[1:])):
            raise ValueError("per-threshold averages must grow as the threshold drops")
        if any(c < 0 for c in counts) or self.avg_count_nonpositive < 0:
            raise ValueError("averages must be non-negative")


def criteria_table(records: list[SkrRecord],
                   filters: list[CriteriaFilter],
                   thresholds: tuple[float, ...] = DEFAULT_EXCEED_THRESHOLDS,
                   slot_duration: float = DEFAULT_SLOT_DURATION) -> list[CriteriaRow]:
    """Mean satellites per slot clearing each threshold, one row per filter.

    The denominator is every slot observed in the session, so a filter that
    matches nothing in some slot still divides by it. Values keep full
    precision; rounding happens only when a table is written out.
    """
    if not records:
        raise EmptySessionError("no records to aggregate")
    session_slots = {slot_index(r, slot_duration) for r in records}
    total = len(session_slots)
    rows = []
    for flt in filters:
        subset = filter_records(records, flt)
        above = {}
        for thr in sorted(thresholds, reverse=True):
            qualifying = {(slot_index(r, slot_duration), r.sat)
                          for r in subset if r.r_sk > thr}
            above[thr] = len(qualifying) / total
        nonpositive = {(slot_index(r, slot_duration), r.sat)
                       for r in subset if r.r_sk <= 0.0}
        rows.append(CriteriaRow(flt.label, above, len(nonpositive) / total))
    return rows


@dataclass(frozen=True)
class AvailabilityEntry:
    hours: float
    percent: float


@dataclass(frozen=True)
class AvailabilityRow:
    entries: dict[str, AvailabilityEntry]
    secure_bits: dict[str, str]
    total_slots: int

    def __post_init__(self) -> None:
        exceed = [self.entries[k].percent for k in self.entries if k.startswith(">")]
        if any(b < a for a, b in zip(exceed, exceed[1:])):
            raise ValueError("availability must grow as the threshold drops")


def availability_table(records: list[SkrRecord],
                       exceed_thresholds: tuple[float, ...] = DEFAULT_EXCEED_THRESHOLDS,
                       below_thresholds: tuple[float, ...] = DEFAULT_BELOW_THRESHOLDS,
                       session_hours: float | None = None,
                       slot_duration: float = DEFAULT_SLOT_DURATION,
                       sample_rate: float = 20.0) -> AvailabilityRow:
    """Share of slots in which at least one satellite clears each threshold.

    When session_hours is given it fixes the denominator (covering slots with
    no usable block at all); otherwise the observed slots are the session.
    The secure-bits labels translate each threshold band into the bits per
    second it guarantees at the given sample rate.
    """
    if not records:
        raise EmptySessionError("no records to aggregate")
    session_slots = {slot_index(r, slot_duration) for r in records}
    if session_hours is not None:
        total = int(round(session_hours * 3600.0 / slot_duration))
        if total < len(session_slots):
            raise ParameterError(
                f"session of {session_hours} h holds {total} slots but "
                f"{len(session_slots)} distinct slots were observed")
    else:
        total = len(session_slots)
    entries: dict[str, AvailabilityEntry] = {}
    secure: dict[str, str] = {}
    ordered = sorted(exceed_thresholds, reverse=True)
    bounds = [secure_bit_rate(t, sample_rate) for t in ordered]
    for i, thr in enumerate(ordered):
        slots = {slot_index(r, slot_duration) for r in records if r.r_sk > thr}
        key = f">{thr:g}"
        entries[key] = AvailabilityEntry(
            hours=len(slots) * slot_duration / 3600.0,
            percent=100.0 * len(slots) / total)
        secure[key] = f">{bounds[i]:g}" if i == 0 else f"{bounds[i]:g}-{bounds[i - 1]:g}"
    for thr in sorted(below_thresholds, reverse=True):
        slots = {slot_index(r, slot_duration) for r in records if r.r_sk <= thr}
        key = f"<={thr:g}"
        entries[key] = AvailabilityEntry(
            hours=len(slots) * slot_duration / 3600.0,
            percent=100.0 * len(slots) / total)
        secure[key] = "0"
    return AvailabilityRow(entries, secure, total)


def skyplot_export(records: list[SkrRecord]) -> list[tuple[float, float, float]]:
    """(azimuth, elevation, r_sk) rows for geometry-bearing records."""
    return [(r.mean_azimuth, r.mean_elevation, r.r_sk) for r in records
            if r.mean_azimuth is not None and r.mean_elevation is not None]


def mi_export(records: list[SkrRecord]) -> list[tuple[float, float, float]]:
    """(azimuth, elevation, i_ab) rows for geometry-bearing records."""
    return [(r.mean_azimuth, r.mean_elevation, r.i_ab.value_bits) for r in records
            if r.mean_azimuth is not None and r.mean_elevation is not None]


@dataclass(frozen=True)
class DistributionSummary:
    label: str
    count: int
    minimum: float | None = None
    q1: float | None = None
    median: float | None = None
    q3: float | None = None
    maximum: float | None = None
    mean: float | None = None


def rsk_distribution(records: list[SkrRecord],
                     filters: list[CriteriaFilter]) -> list[DistributionSummary]:
    """Order statistics of r_sk per filter; empty subsets yield bare counts."""
    out = []
    for flt in filters:
        values = np.array([r.r_sk for r in filter_records(records, flt)])
        if len(values) == 0:
            out.append(DistributionSummary(flt.label, 0))
            continue
        q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
        out.append(DistributionSummary(
            flt.label, len(values),
            float(values.min()), float(q1), float(median), float(q3),
            float(values.max()), float(values.mean())))
    return out


def builtin_filters() -> list[CriteriaFilter]:
    """Default selection criteria: contiguous elevation bins, the two compass
    sectors, and one filter per constellation."""
    filters = [
        CriteriaFilter("all-data"),
        CriteriaFilter("elev-le-2", elevation_range=(None, 2.0)),
        CriteriaFilter("elev-2-10", elevation_range=(2.0, 10.0),
                       elevation_lower_exclusive=True),
        CriteriaFilter("elev-10-45", elevation_range=(10.0, 45.0),
                       elevation_lower_exclusive=True),
        CriteriaFilter("elev-gt-45", elevation_range=(45.0, None),
                       elevation_lower_exclusive=True),
        CriteriaFilter("sector-nw-ne", azimuth_sectors=("NW-NE",)),
        CriteriaFilter("sector-sw-se", azimuth_sectors=("SW-SE",)),
    ]
    filters.extend(
        CriteriaFilter(c.value.lower(), constellations=frozenset({c}))
        for c in Constellation)
    return filters


CRITERIA_CSV_HEADER = "label,avg_gt_0.4,avg_gt_0.2,avg_gt_0,avg_le_0"


def write_criteria_csv(rows: list[CriteriaRow], path: str | Path,
                       thresholds: tuple[float, ...] = DEFAULT_EXCEED_THRESHOLDS,
                       ) -> None:
    ordered = sorted(thresholds, reverse=True)
    header = ["label"] + [f"avg_gt_{t:g}" for t in ordered] + ["avg_le_0"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row.label]
                            + [f"{row.avg_count_above[t]:.1f}" for t in ordered]
                            + [f"{row.avg_count_nonpositive:.1f}"])


def write_availability_csv(row: AvailabilityRow, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "hours", "percent", "secure_bits_per_s"])
        for key, entry in row.entries.items():
            writer.writerow([key, f"{entry.hours:.1f}", f"{entry.percent:.1f}",
                             row.secure_bits[key]])


def write_distribution_csv(summaries: list[DistributionSummary],
                           path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "count", "min", "q1", "median", "q3", "max", "mean"])
        for s in summaries:
            stats = [s.minimum, s.q1, s.median, s.q3, s.maximum, s.mean]
            writer.writerow([s.label, s.count]
                            + ["" if v is None else repr(v) for v in stats])


def write_sky_csv(rows: list[tuple[float, float, float]], path: str | Path,
                  value_name: str = "r_sk") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["azimuth_deg", "elevation_deg", value_name])
        for azimuth, elevation, value in rows:
            writer.writerow([repr(azimuth), repr(elevation), repr(value)])


def session_summary(records: list[SkrRecord],
                    filters: list[CriteriaFilter] | None = None,
                    session_hours: float | None = None,
                    slot_duration: float = DEFAULT_SLOT_DURATION,
                    sample_rate: float = 20.0) -> dict:
    """All session tables in one JSON-serializable document."""
    if filters is None:
        filters = builtin_filters()
    criteria = criteria_table(records, filters, slot_duration=slot_duration)
    availability = availability_table(records, session_hours=session_hours,
                                      slot_duration=slot_duration,
                                      sample_rate=sample_rate)
    distribution = rsk_distribution(records, filters)
    return {
        "record_count": len(records),
        "criteria": [
            {"label": row.label,
             "avg_above": {f">{t:g}": row.avg_count_above[t]
                           for t in sorted(row.avg_count_above, reverse=True)},
             "avg_nonpositive": row.avg_count_nonpositive}
            for row in criteria],
        "availability": {
            "total_slots": availability.total_slots,
            "entries": {key: {"hours": entry.hours, "percent": entry.percent,
                              "secure_bits_per_s": availability.secure_bits[key]}
                        for key, entry in availability.entries.items()}},
        "distribution": [
            {"label": s.label, "count": s.count, "min": s.minimum, "q1": s.q1,
             "median": s.median, "q3": s.q3, "max": s.maximum, "mean": s.mean}
            for s in distribution],
    }


def write_summary_json(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2) + "\n")
