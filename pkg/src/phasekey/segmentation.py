"""Epoch alignment across receiver roles and block extraction.

Three geometry-free series (Alice, Bob, Eve) are merged onto a common epoch
grid, then cut into non-overlapping fixed-length windows. Windows touched by
a tracking gap, a one-band dropout, or a cycle slip are omitted, with the
reason recorded per window.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import GeometryMissingError, ParameterError
from .observables import DEFAULT_SAMPLE_INTERVAL, GAP_FACTOR, GfSeries
from .ubx import SatelliteId, SatGeometry

DEFAULT_BLOCK_DURATION = 300.0  # seconds
DEFAULT_SAMPLE_RATE = 20.0      # Hz
DEFAULT_ALIGN_TOLERANCE = 0.010  # seconds


@dataclass(frozen=True)
class AlignedGrid:
    """Triple-valid epochs of one satellite with per-role values.

    Also carries what the block cutter needs to attribute omissions: slip
    epochs (all roles merged) and the epochs of invalid samples, both sorted.
    """
    sat: SatelliteId
    epochs: np.ndarray
    values_a: np.ndarray
    values_b: np.ndarray
    values_e: np.ndarray
    slip_epochs: np.ndarray
    invalid_epochs: np.ndarray
    nominal_interval: float

    def __len__(self) -> int:
        return len(self.epochs)


@dataclass(frozen=True)
class AlignedBlock:
    sat: SatelliteId
    start_epoch: float
    sample_rate: float
    series_a: np.ndarray
    series_b: np.ndarray
    series_e: np.ndarray
    block_duration: float = DEFAULT_BLOCK_DURATION
    mean_elevation: float | None = None
    mean_azimuth: float | None = None

    def __post_init__(self) -> None:
        expected = block_sample_count(self.block_duration, self.sample_rate)
        for name in ("series_a", "series_b", "series_e"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if len(arr) != expected:
                raise ValueError(f"{name} has {len(arr)} samples, expected {expected}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.mean_elevation is not None and not -90.0 <= self.mean_elevation <= 90.0:
            raise ValueError(f"mean_elevation {self.mean_elevation} outside [-90, 90]")

    @property
    def end_epoch(self) -> float:
        return self.start_epoch + self.block_duration


@dataclass(frozen=True)
class BlockOmission:
    sat: SatelliteId
    start_epoch: float
    reason: str  # "slip", "invalid" or "gap"


def block_sample_count(block_duration: float, sample_rate: float) -> int:
    """Number of samples in one block; duration times rate must be integral."""
    if block_duration <= 0 or sample_rate <= 0:
        raise ParameterError("block duration and sample rate must be positive")
    count = block_duration * sample_rate
    if abs(count - round(count)) > 1e-9:
        raise ParameterError(
            f"block duration {block_duration} s at {sample_rate} Hz does not "
            f"give an integer sample count")
    return int(round(count))


def _valid_arrays(series: GfSeries) -> tuple[np.ndarray, np.ndarray]:
    epochs = np.array([s.epoch for s in series.samples if s.valid], dtype=float)
    values = np.array([s.value for s in series.samples if s.valid], dtype=float)
    return epochs, values


def _nearest_within(targets: np.ndarray, epochs: np.ndarray,
                    tolerance: float) -> np.ndarray:
    """Index of the nearest element of `epochs` per target, or -1 beyond tolerance."""
    if len(epochs) == 0:
        return np.full(len(targets), -1)
    pos = np.searchsorted(epochs, targets)
    left = np.clip(pos - 1, 0, len(epochs) - 1)
    right = np.clip(pos, 0, len(epochs) - 1)
    d_left = np.abs(targets - epochs[left])
    d_right = np.abs(targets - epochs[right])
    best = np.where(d_right < d_left, right, left)
    out = np.where(np.abs(targets - epochs[best]) <= tolerance, best, -1)
    return out


def align_epochs(a: GfSeries, b: GfSeries, e: GfSeries,
                 tolerance: float = DEFAULT_ALIGN_TOLERANCE,
                 nominal_interval: float = DEFAULT_SAMPLE_INTERVAL) -> AlignedGrid:
    """Common epoch grid where all three roles have a valid sample.

    Grid epochs are labeled by the first role's timestamps; the other roles
    contribute their nearest valid sample within the tolerance.
    """
    if not (a.sat == b.sat == e.sat):
        raise ValueError("series must belong to the same satellite")
    ep_a, val_a = _valid_arrays(a)
    ep_b, val_b = _valid_arrays(b)
    ep_e, val_e = _valid_arrays(e)
    idx_b = _nearest_within(ep_a, ep_b, tolerance)
    idx_e = _nearest_within(ep_a, ep_e, tolerance)
    keep = (idx_b >= 0) & (idx_e >= 0)
    slips = sorted(set(a.slip_epochs) | set(b.slip_epochs) | set(e.slip_epochs))
    invalid = sorted({s.epoch for series in (a, b, e)
                      for s in series.samples if not s.valid})
    return AlignedGrid(
        sat=a.sat,
        epochs=ep_a[keep],
        values_a=val_a[keep],
        values_b=val_b[idx_b[keep]],
        values_e=val_e[idx_e[keep]],
        slip_epochs=np.array(slips, dtype=float),
        invalid_epochs=np.array(invalid, dtype=float),
        nominal_interval=nominal_interval,
    )


def _window_omission(grid: AlignedGrid, start: int, count: int) -> str | None:
    """Why a grid window cannot become a block, or None when it can.

    Holes in the grid are classified before slip flags: a dropout also trips
    the slip detector's gap rule, so consulting slips first would misreport
    gaps and one-band dropouts.
    """
    epochs = grid.epochs[start:start + count]
    diffs = np.diff(epochs)
    holes = np.nonzero(diffs > GAP_FACTOR * grid.nominal_interval)[0]
    if len(holes):
        inv = grid.invalid_epochs
        for h in holes:
            i0 = np.searchsorted(inv, epochs[h], side="right")
            i1 = np.searchsorted(inv, epochs[h + 1], side="left")
            if i1 > i0:
                return "invalid"
        return "gap"
    slips = grid.slip_epochs
    i0 = np.searchsorted(slips, epochs[0], side="right")
    i1 = np.searchsorted(slips, epochs[-1], side="right")
    if i1 > i0:
        return "slip"
    return None


def make_blocks(grid: AlignedGrid,
                block_duration: float = DEFAULT_BLOCK_DURATION,
                sample_rate: float = DEFAULT_SAMPLE_RATE,
                ) -> tuple[list[AlignedBlock], list[BlockOmission]]:
    """Cut the grid into consecutive windows of one block length.

    Windows tile from the first grid epoch; a trailing partial window is
    discarded silently. Each full window either becomes an AlignedBlock or
    one BlockOmission with reason "slip", "invalid" or "gap".
    """
    count = block_sample_count(block_duration, sample_rate)
    blocks: list[AlignedBlock] = []
    omissions: list[BlockOmission] = []
    for start in range(0, len(grid) - count + 1, count):
        reason = _window_omission(grid, start, count)
        start_epoch = float(grid.epochs[start])
        if reason is not None:
            omissions.append(BlockOmission(grid.sat, start_epoch, reason))
            continue
        blocks.append(AlignedBlock(
            sat=grid.sat,
            start_epoch=start_epoch,
            sample_rate=sample_rate,
            series_a=grid.values_a[start:start + count].copy(),
            series_b=grid.values_b[start:start + count].copy(),
            series_e=grid.values_e[start:start + count].copy(),
            block_duration=block_duration,
        ))
    return blocks, omissions


def block_geometry(block: AlignedBlock,
                   geometry: list[SatGeometry]) -> tuple[float, float]:
    """Mean elevation and azimuth over the block interval.

    Elevation is averaged arithmetically. Azimuth is averaged as a vector on
    the circle so that headings straddling north do not cancel.
    """
    records = [g for g in geometry
               if g.sat == block.sat and block.start_epoch <= g.epoch <= block.end_epoch]
    if not records:
        raise GeometryMissingError(
            f"no geometry for {block.sat} in "
            f"[{block.start_epoch}, {block.end_epoch}]")
    mean_elev = sum(g.elevation for g in records) / len(records)
    sin_sum = sum(math.sin(math.radians(g.azimuth)) for g in records)
    cos_sum = sum(math.cos(math.radians(g.azimuth)) for g in records)
    mean_azim = math.degrees(math.atan2(sin_sum, cos_sum)) % 360.0
    if mean_azim == 360.0:
        # tiny negative angles wrap to exactly 360.0 under float modulo
        mean_azim = 0.0
    return mean_elev, mean_azim


def attach_geometry(block: AlignedBlock,
                    geometry: list[SatGeometry]) -> AlignedBlock:
    """Copy of the block with mean geometry filled in, or unchanged when
    no geometry covers the interval."""
    try:
        elev, azim = block_geometry(block, geometry)
    except GeometryMissingError:
        return block
    return replace(block, mean_elevation=elev, mean_azimuth=azim)


MANIFEST_CSV_HEADER = "sat,start_epoch,mean_elevation,mean_azimuth,omitted_reason"


def write_manifest_csv(blocks: list[AlignedBlock], omissions: list[BlockOmission],
                       path: str | Path) -> None:
    rows = []
    for blk in blocks:
        rows.append((str(blk.sat), blk.start_epoch,
                     "" if blk.mean_elevation is None else repr(blk.mean_elevation),
                     "" if blk.mean_azimuth is None else repr(blk.mean_azimuth),
                     ""))
    for om in omissions:
        rows.append((str(om.sat), om.start_epoch, "", "", om.reason))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_CSV_HEADER.split(","))
        for sat, start, elev, azim, reason in rows:
            writer.writerow([sat, repr(start), elev, azim, reason])
