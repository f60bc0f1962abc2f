import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_edf_bytes
from eegmove.edf import (
    HEADER_BYTES,
    Annotation,
    EdfError,
    EdfHeader,
    SignalSpec,
    canonical_label,
    encode_edf,
    extract_trials,
    header_to_bytes,
    parse_edf,
    parse_filename,
    parse_header,
    read_edf,
    verify_manifest,
    write_manifest,
)


class TestLabels:
    @pytest.mark.parametrize(
        "raw, expected",
        [("Fc5.", "FC5"), ("Fcz.", "FCz"), ("C3..", "C3"), ("T10.", "T10"), ("Iz..", "Iz"), ("Af7.", "AF7")],
    )
    def test_canonical(self, raw, expected):
        assert canonical_label(raw) == expected

    def test_annotation_label_untouched(self):
        assert canonical_label("EDF Annotations") == "EDF Annotations"

    def test_filename(self):
        assert parse_filename("/x/S001/S001R03.edf") == (1, 3)
        assert parse_filename("recording.edf") == (None, None)


class TestHeader:
    def test_round_trip(self, edf_bytes):
        header, signals = parse_header(edf_bytes)
        again = header_to_bytes(header, signals)
        assert again == edf_bytes[: len(again)]

    def test_fields(self, edf_bytes):
        header, signals = parse_header(edf_bytes)
        assert header.n_signals == 65
        assert header.record_duration == 1.0
        assert header.is_edfplus
        assert header.start == datetime.datetime(2009, 8, 12, 16, 15, 0)
        assert signals[0].label == "Fc5."
        assert signals[-1].is_annotation

    def test_truncated_header(self, edf_bytes):
        with pytest.raises(EdfError, match="truncated header"):
            parse_header(edf_bytes[:100])

    def test_truncated_signal_block(self, edf_bytes):
        with pytest.raises(EdfError, match="truncated signal header"):
            parse_header(edf_bytes[:HEADER_BYTES + 300])

    def test_non_numeric_field_reports_offset(self, edf_bytes):
        bad = bytearray(edf_bytes)
        bad[236:244] = b"abc     "  # n_records
        with pytest.raises(EdfError) as info:
            parse_header(bytes(bad))
        assert info.value.offset == 236
        assert "byte offset 236" in str(info.value)

    def test_invalid_header_values(self):
        with pytest.raises(ValueError):
            EdfHeader("0", "", "", None, n_records=-2, record_duration=1.0, n_signals=1)
        with pytest.raises(ValueError):
            SignalSpec("C3", 160, 1.0, 1.0, -10, 10)


class TestParse:
    def test_calibration(self):
        data, digital = make_edf_bytes(n_seconds=3)
        rec = parse_edf(data)
        gain = (8092 - -8092) / (32767 - -32768)
        expected = -8092 + (digital.astype(float) - -32768) * gain
        np.testing.assert_allclose(rec.samples, expected, rtol=0, atol=1e-9)
        assert rec.fs == 160
        assert rec.samples.shape == (64, 480)
        assert not rec.samples.flags.writeable

    def test_annotations(self, edf_bytes):
        rec = parse_edf(edf_bytes)
        assert [(a.onset, a.duration, a.label) for a in rec.annotations] == [
            (0.0, 4.2, "T0"), (4.2, 4.1, "T1"), (8.3, 1.7, "T0"),
        ]

    def test_truncated_data(self, edf_bytes):
        with pytest.raises(EdfError, match="truncated file"):
            parse_edf(edf_bytes[:-10])

    def test_unknown_record_count_inferred(self, edf_bytes):
        bad = bytearray(edf_bytes)
        bad[236:244] = b"-1      "
        rec = parse_edf(bytes(bad))
        assert rec.n_samples == 1600

    def test_length_mismatch(self):
        data, _ = make_edf_bytes(n_seconds=2, labels=["C3..", "C4.."])
        bad = bytearray(data)
        # samples_per_record of signal 1 (3 signals: 2 data + annotations)
        off = 256 + 3 * 216 + 8
        bad[off : off + 8] = b"80      "
        with pytest.raises(EdfError, match="length mismatch") as info:
            parse_edf(bytes(bad))
        assert info.value.offset == off

    def test_read_edf_takes_ids_from_name(self, tmp_path, edf_bytes):
        path = tmp_path / "S012R07.edf"
        path.write_bytes(edf_bytes)
        rec = read_edf(path)
        assert (rec.subject, rec.run) == (12, 7)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.integers(-32768, 32767), min_size=160, max_size=160),
        st.integers(1, 3),
    )
    def test_digital_round_trip(self, values, n_channels):
        digital = np.tile(np.array(values, dtype=np.int16), (n_channels, 1))
        labels = [f"C{i + 1}" for i in range(n_channels)]
        rec = parse_edf(encode_edf(labels, digital, 160))
        back = np.round((rec.samples + 8092) / rec.signals[0].gain - 32768).astype(np.int64)
        np.testing.assert_array_equal(back, digital)


class TestTrials:
    def test_extract(self, edf_bytes):
        rec = parse_edf(edf_bytes, subject=1, run=3)
        trials = extract_trials(rec)
        assert len(trials) == 1
        t = trials[0]
        assert t.kind == "Left" and t.label == 0
        assert t.onset_sample == 672
        assert t.data.shape == (64, 656)
        assert t.trial_id == "S001R03#00"
        np.testing.assert_array_equal(t.data, rec.samples[:, 672:1328])

    def test_excluded_subject(self, edf_bytes):
        assert extract_trials(parse_edf(edf_bytes, subject=88, run=3)) == []

    def test_unknown_label(self):
        data, _ = make_edf_bytes(annotations=[Annotation(1.0, 2.0, "T3")])
        with pytest.raises(ValueError, match="unexpected annotation label 'T3'"):
            extract_trials(parse_edf(data))

    def test_short_trial_dropped(self, caplog):
        data, _ = make_edf_bytes(annotations=[Annotation(1.0, 4.1, "T2"), Annotation(9.5, 4.1, "T1")])
        trials = extract_trials(parse_edf(data), min_samples=320)
        assert [t.kind for t in trials] == ["Right"]
        assert "dropping trial" in caplog.text

    def test_annotation_validation(self):
        with pytest.raises(ValueError):
            Annotation(-1.0, 1.0, "T0")


class TestManifest:
    def test_verify(self, tmp_path, edf_bytes):
        (tmp_path / "S001").mkdir()
        (tmp_path / "S001" / "S001R03.edf").write_bytes(edf_bytes)
        (tmp_path / "S001" / "S001R07.edf").write_bytes(edf_bytes)
        manifest = tmp_path / "MANIFEST.sha256"
        write_manifest(tmp_path, manifest)
        assert verify_manifest(tmp_path, manifest).ok

        (tmp_path / "S001" / "S001R07.edf").write_bytes(edf_bytes[:-2])
        (tmp_path / "S001" / "S001R03.edf").unlink()
        (tmp_path / "extra.edf").write_bytes(b"x")
        report = verify_manifest(tmp_path, manifest)
        assert not report.ok
        assert report.missing == ["S001/S001R03.edf"]
        assert [c[0] for c in report.corrupt] == ["S001/S001R07.edf"]
        assert report.extra == ["extra.edf"]
        assert report.lines()[-1].startswith("FAILED")
