"""Geometry-free carrier-phase combinations and cycle-slip flagging.

The dual-frequency combination (c/f1) phi1 - (c/f2) phi2 cancels geometric
range and clock terms, leaving the frequency-dependent ionospheric delay and
multipath, the quantities the downstream information-theoretic stages feed on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidCombinationError, SatelliteNotFoundError
from .ubx import (
    Band,
    CarrierPhaseObs,
    ObservationStore,
    Role,
    SatelliteId,
    constellation_from_name,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s

DEFAULT_SAMPLE_INTERVAL = 0.05  # seconds, 20 Hz nominal rate
GAP_FACTOR = 1.5


def geometry_free(phase1: float, phase2: float, f1: float, f2: float) -> float:
    """Geometry-free combination of two carrier phases, in meters.

    phase1 and phase2 are in cycles, f1 and f2 in Hz. Returns
    (c/f1) phase1 - (c/f2) phase2.
    """
    if f1 <= 0 or f2 <= 0:
        raise InvalidCombinationError("carrier frequencies must be positive")
    if f1 == f2:
        raise InvalidCombinationError(
            "geometry-free combination needs two distinct frequencies")
    return (SPEED_OF_LIGHT / f1) * phase1 - (SPEED_OF_LIGHT / f2) * phase2


def detect_cycle_slips(observations: list[CarrierPhaseObs],
                       nominal_interval: float = DEFAULT_SAMPLE_INTERVAL,
                       ) -> set[float]:
    """Epochs at which phase continuity cannot be trusted.

    An epoch is flagged when, relative to its predecessor in the same
    (satellite, band) stream, (a) the lock-time counter decreased, (b) the
    half-cycle-ambiguity flag changed state, or (c) the epoch gap exceeds
    1.5 nominal sample intervals.
    """
    slips: set[float] = set()
    for prev, cur in zip(observations, observations[1:]):
        if cur.lock_time < prev.lock_time:
            slips.add(cur.epoch)
        elif cur.half_cycle_ambiguous != prev.half_cycle_ambiguous:
            slips.add(cur.epoch)
        elif cur.epoch - prev.epoch > GAP_FACTOR * nominal_interval:
            slips.add(cur.epoch)
    return slips


@dataclass(frozen=True)
class GfSample:
    epoch: float
    value: float    # meters; NaN when invalid
    valid: bool


@dataclass(frozen=True)
class GfSeries:
    sat: SatelliteId
    role: Role
    samples: tuple[GfSample, ...]
    slip_epochs: frozenset[float] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        epochs = [s.epoch for s in self.samples]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("samples must be strictly increasing in epoch")


def build_gf_series(store: ObservationStore, sat: SatelliteId,
                    nominal_interval: float = DEFAULT_SAMPLE_INTERVAL) -> GfSeries:
    """Per-epoch geometry-free series of one satellite from one receiver.

    Epochs where only one band was tracked are emitted with valid False.
    Slip epochs are the union of both bands' cycle-slip flags.
    """
    primary = store.band_series(sat, Band.PRIMARY)
    secondary = store.band_series(sat, Band.SECONDARY)
    if not primary and not secondary:
        raise SatelliteNotFoundError(f"no observations for {sat}")
    slips = detect_cycle_slips(primary, nominal_interval)
    slips |= detect_cycle_slips(secondary, nominal_interval)
    by_epoch_1 = {o.epoch: o for o in primary}
    by_epoch_2 = {o.epoch: o for o in secondary}
    samples = []
    for epoch in sorted(set(by_epoch_1) | set(by_epoch_2)):
        o1 = by_epoch_1.get(epoch)
        o2 = by_epoch_2.get(epoch)
        if o1 is None or o2 is None:
            samples.append(GfSample(epoch, math.nan, False))
        else:
            value = geometry_free(o1.carrier_phase, o2.carrier_phase,
                                  o1.frequency_hz, o2.frequency_hz)
            samples.append(GfSample(epoch, value, True))
    return GfSeries(sat, store.role, tuple(samples), frozenset(slips))


GF_CSV_HEADER = "role,constellation,prn,epoch,gf_m,valid"


def write_gf_csv(series_list: list[GfSeries], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GF_CSV_HEADER.split(","))
        for series in series_list:
            for s in series.samples:
                writer.writerow([
                    series.role.value, series.sat.constellation.value,
                    series.sat.prn, repr(s.epoch),
                    "" if math.isnan(s.value) else repr(s.value),
                    int(s.valid),
                ])


def read_gf_csv(path: str | Path, role: Role | None = None) -> list[GfSeries]:
    """Load geometry-free series from CSV, optionally restricted to one role.

    Rows are grouped by (role, satellite); each group must already be sorted
    by epoch. Slip epochs are not representable in this format, so loaded
    series carry none.
    """
    groups: dict[tuple[Role, SatelliteId], list[GfSample]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GF_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            row_role = Role(row["role"])
            if role is not None and row_role != role:
                continue
            sat = SatelliteId(constellation_from_name(row["constellation"]),
                              int(row["prn"]))
            valid = bool(int(row["valid"]))
            value = float(row["gf_m"]) if row["gf_m"] else math.nan
            groups.setdefault((row_role, sat), []).append(
                GfSample(float(row["epoch"]), value, valid))
    return [GfSeries(sat, row_role, tuple(samples))
            for (row_role, sat), samples in sorted(
                groups.items(), key=lambda kv: (kv[0][0].value, str(kv[0][1])))]
