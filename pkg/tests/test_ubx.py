from __future__ import annotations

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasekey.errors import DecodeError, NoUsableDataError
from phasekey.ubx import (
    Band,
    Constellation,
    ObservationStore,
    Role,
    SatelliteId,
    decode_navsat,
    decode_rawx,
    fletcher_checksum,
    ingest_file,
    parse_ubx_stream,
)
from ubx_builder import (
    CANONICAL_SIG_ID,
    NavSatEntry,
    RawMeas,
    build_frame,
    build_navsat_frame,
    build_navsat_payload,
    build_rawx_frame,
    build_rawx_payload,
    encode_observations,
    reference_checksum,
)


def scrub_sync(junk: bytes) -> bytes:
    """Remove any sync pattern the random junk happens to contain."""
    data = bytearray(junk)
    for i in range(len(data) - 1):
        if data[i] == 0xB5 and data[i + 1] == 0x62:
            data[i + 1] = 0
    return bytes(data)


class TestParseStream:
    def test_empty_input(self):
        parsed = parse_ubx_stream(b"")
        assert len(parsed) == 0
        assert parsed.truncated == 0

    def test_hand_assembled_empty_frame(self):
        frame = build_frame(0x02, 0x15, b"")
        parsed = parse_ubx_stream(frame)
        assert len(parsed) == 1
        assert parsed[0].checksum_valid
        assert parsed[0].message_class == 0x02
        assert parsed[0].message_id == 0x15
        assert parsed[0].payload == b""

    def test_checksums_agree_with_reference(self):
        for body in (b"", b"\x01", b"\x02\x15\x00\x00", bytes(range(200))):
            assert fletcher_checksum(body) == reference_checksum(body)

    def test_corrupted_checksum_flagged(self):
        frame = bytearray(build_frame(0x02, 0x15, b""))
        frame[-1] ^= 0xFF
        parsed = parse_ubx_stream(bytes(frame))
        assert len(parsed) == 1
        assert not parsed[0].checksum_valid

    def test_single_bit_flips_never_accepted(self):
        frame = build_rawx_frame(1000.0, 2200, 18, [RawMeas()])
        original = (0x02, 0x15)
        for bit in range(2 * 8, len(frame) * 8):
            mutated = bytearray(frame)
            mutated[bit // 8] ^= 1 << (bit % 8)
            parsed = parse_ubx_stream(bytes(mutated))
            accepted = [f for f in parsed if f.checksum_valid]
            assert not accepted, f"bit {bit} produced {accepted}"
        del original

    def test_truncated_tail_counted(self):
        frame = build_rawx_frame(1.0, 1, 0, [RawMeas()])
        parsed = parse_ubx_stream(frame[:-3])
        assert len(parsed) == 0
        assert parsed.truncated == 1

    def test_frame_offset_reported(self):
        frame = build_frame(0x02, 0x15, b"")
        parsed = parse_ubx_stream(b"\x00" * 7 + frame)
        assert parsed[0].offset == 7

    @given(pre=st.binary(max_size=40), mid=st.binary(max_size=40),
           suf=st.binary(max_size=40))
    @settings(max_examples=200)
    def test_resynchronization(self, pre, mid, suf):
        frame1 = build_rawx_frame(5.0, 2100, 18, [RawMeas()])
        frame2 = build_navsat_frame(5000, [NavSatEntry()])
        stream = scrub_sync(pre) + frame1 + scrub_sync(mid) + frame2 + scrub_sync(suf)
        parsed = parse_ubx_stream(stream)
        recovered = [(f.message_class, f.message_id, f.payload)
                     for f in parsed if f.checksum_valid]
        assert recovered == [(0x02, 0x15, frame1[6:-2]), (0x01, 0x35, frame2[6:-2])]


class TestDecodeRawx:
    def test_zero_measurements(self):
        frame = parse_ubx_stream(build_rawx_frame(123.456, 2210, 18, []))[0]
        meta, observations = decode_rawx(frame)
        assert observations == []
        assert meta.rcv_tow == 123.456
        assert meta.week == 2210
        assert meta.leap_seconds == 18
        assert meta.num_meas == 0

    def test_gps_l1_measurement_echoed(self):
        meas = RawMeas(gnss_id=0, sv_id=7, sig_id=0, carrier_phase=1234.5,
                       pseudorange=2.04e7, lock_ms=5000, cn0=47,
                       trk_stat=0b0111)
        frame = parse_ubx_stream(build_rawx_frame(10.0, 2210, 18, [meas]))[0]
        _meta, (obs,) = decode_rawx(frame)
        assert obs.sat == SatelliteId(Constellation.GPS, 7)
        assert obs.band is Band.PRIMARY
        assert obs.carrier_phase == 1234.5
        assert obs.pseudorange == 2.04e7
        assert obs.lock_time == 5000
        assert obs.cn0 == 47
        assert not obs.half_cycle_ambiguous
        assert obs.frequency_hz == 1575.42e6
        assert obs.epoch == 10.0

    def test_declared_count_mismatch(self):
        payload = build_rawx_payload(1.0, 1, 0, [RawMeas()], declared_count=2)
        frame = parse_ubx_stream(build_frame(0x02, 0x15, payload))[0]
        with pytest.raises(DecodeError, match="offset"):
            decode_rawx(frame)

    def test_sbas_skipped_with_counter(self):
        meas = [RawMeas(gnss_id=1, sv_id=120), RawMeas(gnss_id=0, sv_id=3)]
        frame = parse_ubx_stream(build_rawx_frame(1.0, 1, 0, meas))[0]
        counters: dict[str, int] = {}
        _meta, observations = decode_rawx(frame, counters)
        assert len(observations) == 1
        assert counters["unsupported_constellation"] == 1

    def test_unknown_signal_and_invalid_phase_skipped(self):
        meas = [RawMeas(sig_id=7), RawMeas(trk_stat=0b0001), RawMeas(sv_id=9)]
        frame = parse_ubx_stream(build_rawx_frame(1.0, 1, 0, meas))[0]
        counters: dict[str, int] = {}
        _meta, observations = decode_rawx(frame, counters)
        assert [o.sat.prn for o in observations] == [9]
        assert counters == {"unknown_signal": 1, "phase_invalid": 1}

    def test_glonass_frequency_from_slot(self):
        meas = RawMeas(gnss_id=6, sv_id=5, sig_id=0, freq_id=9)  # slot +2
        frame = parse_ubx_stream(build_rawx_frame(1.0, 1, 0, [meas]))[0]
        _meta, (obs,) = decode_rawx(frame)
        assert obs.frequency_hz == pytest.approx((1602.0 + 2 * 0.5625) * 1e6)
        secondary = RawMeas(gnss_id=6, sv_id=5, sig_id=2, freq_id=0)  # slot -7
        frame = parse_ubx_stream(build_rawx_frame(1.0, 1, 0, [secondary]))[0]
        _meta, (obs,) = decode_rawx(frame)
        assert obs.frequency_hz == pytest.approx((1246.0 - 7 * 0.4375) * 1e6)

    def test_rejects_wrong_message(self):
        frame = parse_ubx_stream(build_navsat_frame(1000, []))[0]
        with pytest.raises(DecodeError):
            decode_rawx(frame)

    def test_rejects_bad_checksum(self):
        raw = bytearray(build_rawx_frame(1.0, 1, 0, []))
        raw[-1] ^= 0x01
        frame = parse_ubx_stream(bytes(raw))[0]
        with pytest.raises(DecodeError, match="checksum"):
            decode_rawx(frame)


class TestDecodeNavsat:
    def test_passthrough(self):
        frame = parse_ubx_stream(build_navsat_frame(
            45_000, [NavSatEntry(elev=45, azim=180)]))[0]
        (rec,) = decode_navsat(frame)
        assert rec.elevation == 45.0
        assert rec.azimuth == 180.0
        assert rec.epoch == 45.0

    def test_azimuth_360_normalized(self):
        frame = parse_ubx_stream(build_navsat_frame(
            1000, [NavSatEntry(azim=360)]))[0]
        (rec,) = decode_navsat(frame)
        assert rec.azimuth == 0.0

    def test_unknown_elevation_skipped(self):
        frame = parse_ubx_stream(build_navsat_frame(
            1000, [NavSatEntry(elev=91), NavSatEntry(sv_id=2, elev=10)]))[0]
        counters: dict[str, int] = {}
        records = decode_navsat(frame, counters)
        assert [r.sat.prn for r in records] == [2]
        assert counters["unknown_elevation"] == 1

    def test_declared_count_mismatch(self):
        payload = build_navsat_payload(1000, [NavSatEntry()], declared_count=3)
        frame = parse_ubx_stream(build_frame(0x01, 0x35, payload))[0]
        with pytest.raises(DecodeError, match="offset"):
            decode_navsat(frame)


finite_doubles = st.floats(min_value=-1e9, max_value=1e9,
                           allow_nan=False, allow_infinity=False)


@st.composite
def canonical_measurements(draw) -> RawMeas:
    constellation = draw(st.sampled_from(list(Constellation)))
    band = draw(st.sampled_from([Band.PRIMARY, Band.SECONDARY]))
    lo, hi = constellation.prn_range
    gnss_ids = {Constellation.GPS: 0, Constellation.GALILEO: 2,
                Constellation.BEIDOU: 3, Constellation.QZSS: 5,
                Constellation.GLONASS: 6}
    return RawMeas(
        gnss_id=gnss_ids[constellation],
        sv_id=draw(st.integers(lo, hi)),
        sig_id=CANONICAL_SIG_ID[(constellation, band)],
        freq_id=draw(st.integers(0, 13)) if constellation is Constellation.GLONASS else 0,
        pseudorange=draw(finite_doubles),
        carrier_phase=draw(finite_doubles),
        lock_ms=draw(st.integers(0, 65535)),
        cn0=draw(st.integers(0, 63)),
        trk_stat=draw(st.sampled_from([0b0011, 0b0111])),
    )


class TestRoundTrip:
    @given(tow=st.floats(min_value=0, max_value=604800, allow_nan=False),
           week=st.integers(0, 4095), leap=st.integers(-60, 60),
           measurements=st.lists(canonical_measurements(), max_size=8))
    @settings(max_examples=200)
    def test_encode_decode_rawx(self, tow, week, leap, measurements):
        frame_bytes = build_rawx_frame(tow, week, leap, measurements)
        frame = parse_ubx_stream(frame_bytes)[0]
        assert frame.checksum_valid
        meta, observations = decode_rawx(frame)
        assert len(observations) == len(measurements)
        assert encode_observations(meta, observations) == frame_bytes


class TestSatelliteId:
    def test_string_round_trip(self):
        for text in ("G27", "R05", "E36", "C63", "J02"):
            assert str(SatelliteId.from_string(text)) == text

    def test_prn_range_enforced(self):
        with pytest.raises(ValueError):
            SatelliteId(Constellation.GPS, 33)
        with pytest.raises(ValueError):
            SatelliteId(Constellation.QZSS, 0)

    def test_unknown_letter(self):
        with pytest.raises(ValueError):
            SatelliteId.from_string("I05")


class TestIngest:
    def _write(self, tmp_path, blobs: list[bytes]):
        path = tmp_path / "capture.ubx"
        path.write_bytes(b"".join(blobs))
        return path

    def test_three_valid_frames(self, tmp_path):
        frames = [build_rawx_frame(t, 2210, 18, [RawMeas()])
                  for t in (1.0, 1.05, 1.10)]
        store, summary = ingest_file(self._write(tmp_path, frames), Role.ALICE)
        assert summary.rawx_frames == 3
        assert len(store) == 3
        assert {o.epoch for o in store.observations} == {1.0, 1.05, 1.10}

    def test_corrupt_frame_dropped(self, tmp_path):
        good = [build_rawx_frame(t, 2210, 18, [RawMeas()]) for t in (1.0, 1.05)]
        bad = bytearray(build_rawx_frame(1.10, 2210, 18, [RawMeas()]))
        bad[10] ^= 0xFF
        store, summary = ingest_file(
            self._write(tmp_path, [good[0], bytes(bad), good[1]]), Role.BOB)
        assert summary.frames_dropped == 1
        assert summary.rawx_frames == 2
        assert len(store) == 2

    def test_empty_file(self, tmp_path):
        with pytest.raises(NoUsableDataError):
            ingest_file(self._write(tmp_path, []), Role.EVE)

    def test_geometry_ingested(self, tmp_path):
        frames = [
            build_rawx_frame(1.0, 2210, 18, [RawMeas()]),
            build_navsat_frame(1000, [NavSatEntry(sv_id=1, elev=30, azim=90)]),
        ]
        store, summary = ingest_file(self._write(tmp_path, frames), Role.ALICE)
        assert summary.geometry_entries == 1
        (rec,) = store.geometry_for(SatelliteId(Constellation.GPS, 1))
        assert (rec.elevation, rec.azimuth) == (30.0, 90.0)

    def test_epoch_sorted_streams_keep_store_invariants(self, tmp_path):
        measurements = [RawMeas(sv_id=1), RawMeas(sv_id=2)]
        frames = [build_rawx_frame(t, 2210, 18, measurements)
                  for t in (1.0, 1.05, 1.1)]
        store, _summary = ingest_file(self._write(tmp_path, frames), Role.ALICE)
        for sat in store.satellites():
            series = store.band_series(sat, Band.PRIMARY)
            epochs = [o.epoch for o in series]
            assert epochs == sorted(epochs)


class TestObservationStore:
    def test_duplicate_key_rejected(self):
        store = ObservationStore(Role.ALICE)
        frame = parse_ubx_stream(build_rawx_frame(1.0, 1, 0, [RawMeas()]))[0]
        _meta, (obs,) = decode_rawx(frame)
        store.add_observation(obs)
        with pytest.raises(ValueError, match="duplicate"):
            store.add_observation(obs)

    def test_geometry_must_be_time_ordered(self):
        store = ObservationStore(Role.ALICE)
        early = decode_navsat(parse_ubx_stream(
            build_navsat_frame(2000, [NavSatEntry()]))[0])[0]
        late = decode_navsat(parse_ubx_stream(
            build_navsat_frame(1000, [NavSatEntry()]))[0])[0]
        store.add_geometry(early)
        with pytest.raises(ValueError):
            store.add_geometry(late)
