"""Decoder for u-blox UBX binary streams.

Recognizes the two messages the pipeline needs, RXM-RAWX (raw carrier-phase
measurements) and NAV-SAT (satellite elevation/azimuth), and turns them into
typed observation records. Everything else is skipped. Corrupt input is never
fatal: frames failing the checksum are reported but excluded from decoding,
and scanning resynchronizes on the next sync pattern.
"""

from __future__ import annotations

import csv
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DecodeError, NoUsableDataError

SYNC = b"\xb5\x62"

_RAWX_CLASS, _RAWX_ID = 0x02, 0x15
_NAVSAT_CLASS, _NAVSAT_ID = 0x01, 0x35

_RAWX_HEADER = struct.Struct("<dHbBBB2x")
_RAWX_MEAS = struct.Struct("<ddfBBBBHBBBBBB")
_NAVSAT_HEADER = struct.Struct("<IBB2x")
_NAVSAT_ENTRY = struct.Struct("<BBBbhhI")


class Role(Enum):
    ALICE = "alice"
    BOB = "bob"
    EVE = "eve"


class Constellation(Enum):
    GPS = "GPS"
    GLONASS = "GLONASS"
    GALILEO = "Galileo"
    BEIDOU = "BeiDou"
    QZSS = "QZSS"

    @property
    def letter(self) -> str:
        return _LETTERS[self]

    @property
    def prn_range(self) -> tuple[int, int]:
        return _PRN_RANGES[self]


_LETTERS = {
    Constellation.GPS: "G",
    Constellation.GLONASS: "R",
    Constellation.GALILEO: "E",
    Constellation.BEIDOU: "C",
    Constellation.QZSS: "J",
}
_PRN_RANGES = {
    Constellation.GPS: (1, 32),
    Constellation.GLONASS: (1, 27),
    Constellation.GALILEO: (1, 36),
    Constellation.BEIDOU: (1, 63),
    Constellation.QZSS: (1, 10),
}
_BY_LETTER = {v: k for k, v in _LETTERS.items()}
_BY_NAME = {c.value: c for c in Constellation}

# gnssId values of the supported systems; SBAS (1), IMES (4) and anything
# newer are skipped at decode time.
_GNSS_IDS = {
    0: Constellation.GPS,
    2: Constellation.GALILEO,
    3: Constellation.BEIDOU,
    5: Constellation.QZSS,
    6: Constellation.GLONASS,
}


class Band(Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


# (gnssId, sigId) -> band, following the dual-frequency signal set a ZED-F9P
# class receiver tracks for each system.
_SIGNAL_BAND = {
    (0, 0): Band.PRIMARY,     # GPS L1 C/A
    (0, 3): Band.SECONDARY,   # GPS L2 CL
    (0, 4): Band.SECONDARY,   # GPS L2 CM
    (2, 0): Band.PRIMARY,     # Galileo E1 C
    (2, 1): Band.PRIMARY,     # Galileo E1 B
    (2, 5): Band.SECONDARY,   # Galileo E5 bI
    (2, 6): Band.SECONDARY,   # Galileo E5 bQ
    (3, 0): Band.PRIMARY,     # BeiDou B1I D1
    (3, 1): Band.PRIMARY,     # BeiDou B1I D2
    (3, 2): Band.SECONDARY,   # BeiDou B2I D1
    (3, 3): Band.SECONDARY,   # BeiDou B2I D2
    (5, 0): Band.PRIMARY,     # QZSS L1 C/A
    (5, 4): Band.SECONDARY,   # QZSS L2 CM
    (5, 5): Band.SECONDARY,   # QZSS L2 CL
    (6, 0): Band.PRIMARY,     # GLONASS L1 OF
    (6, 2): Band.SECONDARY,   # GLONASS L2 OF
}

_FIXED_FREQ_HZ = {
    (Constellation.GPS, Band.PRIMARY): 1575.42e6,
    (Constellation.GPS, Band.SECONDARY): 1227.60e6,
    (Constellation.GALILEO, Band.PRIMARY): 1575.42e6,
    (Constellation.GALILEO, Band.SECONDARY): 1207.14e6,
    (Constellation.BEIDOU, Band.PRIMARY): 1561.098e6,
    (Constellation.BEIDOU, Band.SECONDARY): 1207.14e6,
    (Constellation.QZSS, Band.PRIMARY): 1575.42e6,
    (Constellation.QZSS, Band.SECONDARY): 1227.60e6,
}


def carrier_frequency_hz(constellation: Constellation, band: Band,
                         freq_slot: int | None = None) -> float:
    """Carrier frequency of a tracked signal.

    GLONASS is FDMA: ``freq_slot`` is the channel number k in [-7, 6] and the
    frequency is 1602 + 0.5625 k MHz (primary) or 1246 + 0.4375 k MHz
    (secondary). All other systems use fixed CDMA carriers.
    """
    if constellation is Constellation.GLONASS:
        if freq_slot is None or not -7 <= freq_slot <= 6:
            raise DecodeError(f"invalid GLONASS frequency slot {freq_slot!r}")
        if band is Band.PRIMARY:
            return (1602.0 + freq_slot * 0.5625) * 1e6
        return (1246.0 + freq_slot * 0.4375) * 1e6
    return _FIXED_FREQ_HZ[(constellation, band)]


@dataclass(frozen=True, order=True)
class SatelliteId:
    constellation: Constellation
    prn: int

    def __post_init__(self) -> None:
        lo, hi = self.constellation.prn_range
        if not lo <= self.prn <= hi:
            raise ValueError(
                f"{self.constellation.value} PRN {self.prn} outside [{lo}, {hi}]")

    def __str__(self) -> str:
        return f"{self.constellation.letter}{self.prn:02d}"

    @classmethod
    def from_string(cls, text: str) -> "SatelliteId":
        """Parse identifiers like ``G27`` or ``E05``."""
        if len(text) < 2 or text[0] not in _BY_LETTER:
            raise ValueError(f"unrecognized satellite id {text!r}")
        return cls(_BY_LETTER[text[0]], int(text[1:]))


@dataclass(frozen=True)
class UbxFrame:
    message_class: int
    message_id: int
    payload: bytes
    checksum_valid: bool
    offset: int


@dataclass(frozen=True)
class CarrierPhaseObs:
    epoch: float            # receiver time of week, seconds
    sat: SatelliteId
    band: Band
    frequency_hz: float
    carrier_phase: float    # cycles
    pseudorange: float      # meters
    lock_time: int          # milliseconds since last loss of lock
    half_cycle_ambiguous: bool
    cn0: int                # dB-Hz

    def __post_init__(self) -> None:
        if self.lock_time < 0:
            raise ValueError("lock_time must be non-negative")
        if not self.frequency_hz > 0:
            raise ValueError("carrier frequency must be positive")


@dataclass(frozen=True)
class SatGeometry:
    epoch: float
    sat: SatelliteId
    elevation: float    # degrees, [-90, 90]
    azimuth: float      # degrees, [0, 360)

    def __post_init__(self) -> None:
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")


@dataclass(frozen=True)
class RawxMeta:
    """Epoch header of one RXM-RAWX frame."""
    rcv_tow: float
    week: int
    leap_seconds: int
    num_meas: int


@dataclass
class IngestSummary:
    frames_total: int = 0
    frames_valid: int = 0
    frames_dropped: int = 0
    truncated: int = 0
    rawx_frames: int = 0
    navsat_frames: int = 0
    observations: int = 0
    skipped_measurements: int = 0
    geometry_entries: int = 0
    skipped_geometry: int = 0

    def describe(self) -> str:
        return (
            f"frames: {self.frames_total} seen, {self.frames_valid} valid, "
            f"{self.frames_dropped} dropped, {self.truncated} truncated; "
            f"rawx: {self.rawx_frames} frames, {self.observations} observations "
            f"({self.skipped_measurements} skipped); "
            f"navsat: {self.navsat_frames} frames, {self.geometry_entries} entries "
            f"({self.skipped_geometry} skipped)"
        )


class ObservationStore:
    """All decoded records of one receiver role.

    Observations are keyed by (epoch, sat, band); inserting a duplicate key
    raises. Geometry records must arrive with non-decreasing epochs.
    """

    def __init__(self, role: Role):
        self.role = role
        self._obs: dict[tuple[float, SatelliteId, Band], CarrierPhaseObs] = {}
        self._geometry: list[SatGeometry] = []

    def add_observation(self, obs: CarrierPhaseObs) -> None:
        key = (obs.epoch, obs.sat, obs.band)
        if key in self._obs:
            raise ValueError(f"duplicate observation key {key}")
        self._obs[key] = obs

    def add_geometry(self, rec: SatGeometry) -> None:
        if self._geometry and rec.epoch < self._geometry[-1].epoch:
            raise ValueError("geometry epochs must be non-decreasing")
        self._geometry.append(rec)

    @property
    def observations(self) -> list[CarrierPhaseObs]:
        return list(self._obs.values())

    @property
    def geometry(self) -> list[SatGeometry]:
        return list(self._geometry)

    def __len__(self) -> int:
        return len(self._obs)

    def satellites(self) -> set[SatelliteId]:
        return {obs.sat for obs in self._obs.values()}

    def band_series(self, sat: SatelliteId, band: Band) -> list[CarrierPhaseObs]:
        """Epoch-sorted observations of one satellite on one band."""
        series = [o for o in self._obs.values() if o.sat == sat and o.band == band]
        series.sort(key=lambda o: o.epoch)
        return series

    def geometry_for(self, sat: SatelliteId) -> list[SatGeometry]:
        return [g for g in self._geometry if g.sat == sat]


def fletcher_checksum(body: bytes) -> bytes:
    """Two-byte running checksum over class, id, length and payload."""
    ck_a = ck_b = 0
    for byte in body:
        ck_a = (ck_a + byte) & 0xFF
        ck_b = (ck_b + ck_a) & 0xFF
    return bytes((ck_a, ck_b))


class ParsedStream(Sequence):
    """Frames recovered from one byte stream, plus a truncation diagnostic."""

    def __init__(self, frames: list[UbxFrame], truncated: int):
        self._frames = frames
        self.truncated = truncated

    def __getitem__(self, index):
        return self._frames[index]

    def __len__(self) -> int:
        return len(self._frames)


def parse_ubx_stream(data: bytes) -> ParsedStream:
    """Scan a byte stream for frames, resynchronizing across junk.

    Frames whose checksum fails are returned with checksum_valid False; their
    declared length is not trusted, so scanning resumes right after the sync
    bytes rather than past the claimed payload.
    """
    frames: list[UbxFrame] = []
    truncated = 0
    i, n = 0, len(data)
    while True:
        j = data.find(SYNC, i)
        if j < 0:
            break
        if j + 8 > n:
            # sync with no room left for header and checksum
            truncated += 1
            break
        length = int.from_bytes(data[j + 4:j + 6], "little")
        end = j + 6 + length + 2
        if end > n:
            truncated += 1
            i = j + 2
            continue
        body = data[j + 2:j + 6 + length]
        ok = fletcher_checksum(body) == data[j + 6 + length:end]
        frames.append(UbxFrame(data[j + 2], data[j + 3],
                               bytes(data[j + 6:j + 6 + length]), ok, j))
        i = end if ok else j + 2
    return ParsedStream(frames, truncated)


def _require(frame: UbxFrame, cls: int, mid: int, name: str) -> None:
    if frame.message_class != cls or frame.message_id != mid:
        raise DecodeError(
            f"frame at offset {frame.offset} is not {name} "
            f"(class 0x{frame.message_class:02x}, id 0x{frame.message_id:02x})")
    if not frame.checksum_valid:
        raise DecodeError(f"frame at offset {frame.offset} failed its checksum")


def decode_rawx(frame: UbxFrame,
                counters: dict[str, int] | None = None,
                ) -> tuple[RawxMeta, list[CarrierPhaseObs]]:
    """Decode one RXM-RAWX frame into carrier-phase observations.

    Measurements on unsupported constellations, without a valid carrier
    phase, or with an unknown signal id are skipped; when a ``counters``
    dict is supplied the skip reasons are tallied into it.
    """
    _require(frame, _RAWX_CLASS, _RAWX_ID, "RXM-RAWX")
    payload = frame.payload
    if len(payload) < _RAWX_HEADER.size:
        raise DecodeError(f"RXM-RAWX at offset {frame.offset}: header short")
    rcv_tow, week, leap_s, num_meas, _rec_stat, _version = _RAWX_HEADER.unpack_from(payload)
    expected = _RAWX_HEADER.size + _RAWX_MEAS.size * num_meas
    if len(payload) != expected:
        raise DecodeError(
            f"RXM-RAWX at offset {frame.offset}: payload {len(payload)} bytes, "
            f"expected {expected} for {num_meas} measurements")
    meta = RawxMeta(rcv_tow, week, leap_s, num_meas)

    def skip(reason: str) -> None:
        if counters is not None:
            counters[reason] = counters.get(reason, 0) + 1

    observations: list[CarrierPhaseObs] = []
    for k in range(num_meas):
        (pr_mes, cp_mes, _do_mes, gnss_id, sv_id, sig_id, freq_id, locktime,
         cno, _pr_stdev, _cp_stdev, _do_stdev, trk_stat, _reserved,
         ) = _RAWX_MEAS.unpack_from(payload, _RAWX_HEADER.size + _RAWX_MEAS.size * k)
        constellation = _GNSS_IDS.get(gnss_id)
        if constellation is None:
            skip("unsupported_constellation")
            continue
        band = _SIGNAL_BAND.get((gnss_id, sig_id))
        if band is None:
            skip("unknown_signal")
            continue
        if not trk_stat & 0x02:
            skip("phase_invalid")
            continue
        lo, hi = constellation.prn_range
        if not lo <= sv_id <= hi:
            skip("prn_out_of_range")
            continue
        try:
            freq = carrier_frequency_hz(
                constellation, band,
                freq_id - 7 if constellation is Constellation.GLONASS else None)
        except DecodeError:
            skip("bad_frequency_slot")
            continue
        observations.append(CarrierPhaseObs(
            epoch=rcv_tow,
            sat=SatelliteId(constellation, sv_id),
            band=band,
            frequency_hz=freq,
            carrier_phase=cp_mes,
            pseudorange=pr_mes,
            lock_time=locktime,
            half_cycle_ambiguous=not trk_stat & 0x04,
            cn0=cno,
        ))
    return meta, observations


def decode_navsat(frame: UbxFrame,
                  counters: dict[str, int] | None = None) -> list[SatGeometry]:
    """Decode one NAV-SAT frame into elevation/azimuth records.

    Entries whose elevation is outside [-90, 90] carry the receiver's
    "unknown" sentinel and are skipped. Azimuth is normalized modulo 360.
    """
    _require(frame, _NAVSAT_CLASS, _NAVSAT_ID, "NAV-SAT")
    payload = frame.payload
    if len(payload) < _NAVSAT_HEADER.size:
        raise DecodeError(f"NAV-SAT at offset {frame.offset}: header short")
    itow_ms, _version, num_svs = _NAVSAT_HEADER.unpack_from(payload)
    expected = _NAVSAT_HEADER.size + _NAVSAT_ENTRY.size * num_svs
    if len(payload) != expected:
        raise DecodeError(
            f"NAV-SAT at offset {frame.offset}: payload {len(payload)} bytes, "
            f"expected {expected} for {num_svs} satellites")

    def skip(reason: str) -> None:
        if counters is not None:
            counters[reason] = counters.get(reason, 0) + 1

    epoch = itow_ms * 1e-3
    records: list[SatGeometry] = []
    for k in range(num_svs):
        gnss_id, sv_id, _cno, elev, azim, _pr_res, _flags = _NAVSAT_ENTRY.unpack_from(
            payload, _NAVSAT_HEADER.size + _NAVSAT_ENTRY.size * k)
        constellation = _GNSS_IDS.get(gnss_id)
        if constellation is None:
            skip("unsupported_constellation")
            continue
        if not -90 <= elev <= 90:
            skip("unknown_elevation")
            continue
        lo, hi = constellation.prn_range
        if not lo <= sv_id <= hi:
            skip("prn_out_of_range")
            continue
        records.append(SatGeometry(
            epoch=epoch,
            sat=SatelliteId(constellation, sv_id),
            elevation=float(elev),
            azimuth=float(azim % 360),
        ))
    return records


def ingest_file(path: str | Path, role: Role) -> tuple[ObservationStore, IngestSummary]:
    """Read one receiver's UBX capture into an observation store.

    Raises NoUsableDataError when the file contains no decodable RXM-RAWX or
    NAV-SAT frame.
    """
    data = Path(path).read_bytes()
    stream = parse_ubx_stream(data)
    store = ObservationStore(role)
    summary = IngestSummary()
    summary.frames_total = len(stream)
    summary.truncated = stream.truncated
    counters: dict[str, int] = {}
    for frame in stream:
        if not frame.checksum_valid:
            summary.frames_dropped += 1
            continue
        summary.frames_valid += 1
        if (frame.message_class, frame.message_id) == (_RAWX_CLASS, _RAWX_ID):
            _meta, observations = decode_rawx(frame, counters)
            summary.rawx_frames += 1
            for obs in observations:
                try:
                    store.add_observation(obs)
                    summary.observations += 1
                except ValueError:
                    summary.skipped_measurements += 1
        elif (frame.message_class, frame.message_id) == (_NAVSAT_CLASS, _NAVSAT_ID):
            summary.navsat_frames += 1
            for rec in decode_navsat(frame, counters):
                try:
                    store.add_geometry(rec)
                    summary.geometry_entries += 1
                except ValueError:
                    summary.skipped_geometry += 1
    summary.skipped_measurements += sum(
        counters.get(r, 0) for r in
        ("unsupported_constellation", "unknown_signal", "phase_invalid",
         "prn_out_of_range", "bad_frequency_slot"))
    summary.skipped_geometry += counters.get("unknown_elevation", 0)
    if summary.rawx_frames == 0 and summary.navsat_frames == 0:
        raise NoUsableDataError(f"{path}: no decodable frames")
    return store, summary


OBSERVATION_CSV_HEADER = (
    "role,epoch,constellation,prn,band,carrier_phase_cycles,"
    "pseudorange_m,lock_time_ms,cn0_dbhz"
)
GEOMETRY_CSV_HEADER = "role,epoch,constellation,prn,elevation_deg,azimuth_deg"


def write_observations_csv(store: ObservationStore, path: str | Path) -> None:
    observations = sorted(store.observations,
                          key=lambda o: (o.epoch, str(o.sat), o.band.value))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OBSERVATION_CSV_HEADER.split(","))
        for o in observations:
            writer.writerow([
                store.role.value, repr(o.epoch), o.sat.constellation.value,
                o.sat.prn, o.band.value, repr(o.carrier_phase),
                repr(o.pseudorange), o.lock_time, o.cn0,
            ])


def write_geometry_csv(store: ObservationStore, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GEOMETRY_CSV_HEADER.split(","))
        for g in store.geometry:
            writer.writerow([
                store.role.value, repr(g.epoch), g.sat.constellation.value,
                g.sat.prn, repr(g.elevation), repr(g.azimuth),
            ])


def constellation_from_name(name: str) -> Constellation:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}") from None
