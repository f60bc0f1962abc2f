"""EDF/EDF+ reading for the PhysioNet EEG Motor Movement/Imagery recordings.

Only what the movement pipeline needs is supported: 16-bit little-endian
samples, one data-record layout per file and an optional ``EDF Annotations``
channel carrying time-stamped annotation lists (TALs).

A small encoder (:func:`encode_edf`) exists so synthetic recordings and test
fixtures travel through exactly the same parsing path as real files.
"""
from __future__ import annotations

import datetime
import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

HEADER_BYTES = 256
SIGNAL_HEADER_BYTES = 256
ANNOTATION_LABEL = "EDF Annotations"
DEFAULT_EXCLUDED = frozenset({43, 88, 89, 92, 100, 104})
MOVEMENT_RUNS = (3, 7, 11)
TRIAL_LABELS = {"T1": "Left", "T2": "Right"}
KNOWN_LABELS = frozenset({"T0", "T1", "T2"})

# (name, width) of the fixed part of the header
_MAIN_FIELDS = (
    ("version", 8),
    ("subject_id", 80),
    ("recording_id", 80),
    ("startdate", 8),
    ("starttime", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("n_records", 8),
    ("record_duration", 8),
    ("n_signals", 4),
)
# per-signal fields, stored column-wise (all labels, then all transducers, ...)
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)

_FILENAME_RE = re.compile(r"S(\d{3})R(\d{2})", re.IGNORECASE)


class EdfError(ValueError):
    """Malformed or truncated EDF content.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class EdfHeader:
    version: str
    subject_id: str
    recording_id: str
    start: datetime.datetime | None
    n_records: int
    record_duration: float
    n_signals: int
    reserved: str = ""

    def __post_init__(self):
        if self.n_records < 1 and self.n_records != -1:
            raise ValueError(f"n_records must be >= 1 or -1, got {self.n_records}")
        if not self.record_duration > 0:
            raise ValueError(f"record_duration must be > 0, got {self.record_duration}")
        if self.n_signals < 1:
            raise ValueError(f"n_signals must be >= 1, got {self.n_signals}")

    @property
    def is_edfplus(self) -> bool:
        return self.reserved.startswith("EDF+")


@dataclass(frozen=True)
class SignalSpec:
    label: str
    samples_per_record: int
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    transducer: str = ""
    prefiltering: str = ""
    physical_dimension: str = "uV"
    reserved: str = ""

    def __post_init__(self):
        if self.digital_max <= self.digital_min:
            raise ValueError(f"{self.label!r}: digital_max must exceed digital_min")
        if self.physical_max == self.physical_min:
            raise ValueError(f"{self.label!r}: physical_max equals physical_min")

    @property
    def is_annotation(self) -> bool:
        return self.label == ANNOTATION_LABEL

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)

    def to_physical(self, digital: np.ndarray) -> np.ndarray:
        """Affine map from digital counts to physical units."""
        return self.physical_min + (np.asarray(digital, dtype=np.float64) - self.digital_min) * self.gain


@dataclass(frozen=True)
class Annotation:
    onset: float
    duration: float
    label: str

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError(f"annotation onset must be >= 0, got {self.onset}")
        if self.duration < 0:
            raise ValueError(f"annotation duration must be >= 0, got {self.duration}")


@dataclass(frozen=True, eq=False)
class Recording:
    """A parsed recording. ``samples`` is (n_channels, n_samples) in microvolts."""

    header: EdfHeader
    signals: tuple[SignalSpec, ...]
    channel_labels: tuple[str, ...]
    fs: float
    samples: np.ndarray
    annotations: tuple[Annotation, ...]
    subject: int | None = None
    run: int | None = None

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channel_labels):
            raise ValueError("samples must be (n_channels, n_samples) matching channel_labels")
        self.samples.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def channel(self, label: str) -> np.ndarray:
        return self.samples[self.channel_labels.index(canonical_label(label))]


@dataclass(frozen=True, eq=False)
class Trial:
    subject: int | None
    run: int | None
    kind: str
    onset_sample: int
    data: np.ndarray
    index: int = 0
    channel_labels: tuple[str, ...] = field(default=())

    @property
    def label(self) -> int:
        """Binary target: Left (T1) -> 0, Right (T2) -> 1."""
        return 0 if self.kind == "Left" else 1

    @property
    def trial_id(self) -> str:
        subject = f"S{self.subject:03d}" if self.subject is not None else "S???"
        run = f"R{self.run:02d}" if self.run is not None else "R??"
        return f"{subject}{run}#{self.index:02d}"


def canonical_label(raw: str) -> str:
    """Normalize a 10-10 electrode label: ``'Fc5.'`` -> ``'FC5'``, ``'Fcz.'`` -> ``'FCz'``."""
    name = raw.strip().strip(".").strip()
    if name == ANNOTATION_LABEL:
        return name
    if name[-1:] in ("z", "Z"):
        return name[:-1].upper() + "z"
    return name.upper()


def _field(data: bytes, offset: int, width: int) -> str:
    raw = data[offset : offset + width]
    if len(raw) < width:
        raise EdfError(f"truncated header: expected {offset + width} bytes, got {len(data)}", offset)
    return raw.decode("ascii", errors="replace").rstrip(" \x00")


def _number(text: str, kind, name: str, offset: int):
    try:
        return kind(text.strip())
    except ValueError:
        raise EdfError(f"header field {name!r} is not a number: {text!r}", offset) from None


def _parse_start(date: str, time: str) -> datetime.datetime | None:
    try:
        day, month, year = (int(v) for v in date.split("."))
        hour, minute, second = (int(v) for v in time.split("."))
        year += 1900 if year >= 85 else 2000
        return datetime.datetime(year, month, day, hour, minute, second)
    except ValueError:
        logger.warning("unparseable start date/time %r %r", date, time)
        return None


def parse_header(data: bytes) -> tuple[EdfHeader, tuple[SignalSpec, ...]]:
    """Parse the fixed header and the per-signal header block."""
    if len(data) < HEADER_BYTES:
        raise EdfError(f"truncated header: expected {HEADER_BYTES} bytes, got {len(data)}", len(data))
    raw = {}
    offset = 0
    for name, width in _MAIN_FIELDS:
        raw[name] = (_field(data, offset, width), offset)
        offset += width

    def num(name, kind):
        return _number(raw[name][0], kind, name, raw[name][1])

    n_signals = num("n_signals", int)
    header_bytes = num("header_bytes", int)
    expected = HEADER_BYTES + SIGNAL_HEADER_BYTES * n_signals
    if n_signals < 1:
        raise EdfError(f"n_signals must be >= 1, got {n_signals}", raw["n_signals"][1])
    if header_bytes != expected:
        raise EdfError(
            f"header_bytes field says {header_bytes} but {n_signals} signals need {expected}",
            raw["header_bytes"][1],
        )
    if len(data) < expected:
        raise EdfError(f"truncated signal header: expected {expected} bytes, got {len(data)}", len(data))
    header = EdfHeader(
        version=raw["version"][0],
        subject_id=raw["subject_id"][0],
        recording_id=raw["recording_id"][0],
        start=_parse_start(raw["startdate"][0], raw["starttime"][0]),
        n_records=num("n_records", int),
        record_duration=num("record_duration", float),
        n_signals=n_signals,
        reserved=raw["reserved"][0],
    )

    columns = {}
    for name, width in _SIGNAL_FIELDS:
        values = []
        for i in range(n_signals):
            text = _field(data, offset, width)
            if name in ("physical_min", "physical_max"):
                values.append(_number(text, float, f"{name}[{i}]", offset))
            elif name in ("digital_min", "digital_max", "samples_per_record"):
                values.append(_number(text, int, f"{name}[{i}]", offset))
            else:
                values.append(text)
            offset += width
        columns[name] = values
    signals = tuple(
        SignalSpec(**{name: columns[name][i] for name, _ in _SIGNAL_FIELDS}) for i in range(n_signals)
    )
    return header, signals


def _fmt_number(value: float | int, width: int = 8) -> str:
    if float(value).is_integer() and abs(value) < 10 ** (width - 1):
        text = str(int(value))
    else:
        text = f"{value:.{width}g}"
        digits = width
        while len(text) > width and digits > 1:
            digits -= 1
            text = f"{value:.{digits}g}"
    if len(text) > width:
        raise ValueError(f"{value!r} does not fit an EDF field of width {width}")
    return text


def _pad(text: str, width: int) -> bytes:
    encoded = text.encode("ascii")
    if len(encoded) > width:
        raise ValueError(f"{text!r} exceeds field width {width}")
    return encoded.ljust(width, b" ")


def header_to_bytes(header: EdfHeader, signals: tuple[SignalSpec, ...] | list[SignalSpec]) -> bytes:
    """Serialize a header and signal specs; inverse of :func:`parse_header`."""
    if len(signals) != header.n_signals:
        raise ValueError("number of signal specs does not match header.n_signals")
    start = header.start or datetime.datetime(1985, 1, 1)
    main = {
        "version": header.version,
        "subject_id": header.subject_id,
        "recording_id": header.recording_id,
        "startdate": start.strftime("%d.%m.") + f"{start.year % 100:02d}",
        "starttime": start.strftime("%H.%M.%S"),
        "header_bytes": str(HEADER_BYTES + SIGNAL_HEADER_BYTES * len(signals)),
        "reserved": header.reserved,
        "n_records": str(header.n_records),
        "record_duration": _fmt_number(header.record_duration),
        "n_signals": str(header.n_signals),
    }
    out = [_pad(main[name], width) for name, width in _MAIN_FIELDS]
    for name, width in _SIGNAL_FIELDS:
        for sig in signals:
            value = getattr(sig, name)
            out.append(_pad(value if isinstance(value, str) else _fmt_number(value, width), width))
    return b"".join(out)


def _parse_tals(blob: bytes, record_offset: int) -> list[Annotation]:
    annotations = []
    for tal in blob.split(b"\x00"):
        if not tal:
            continue
        parts = tal.split(b"\x14")
        stamp = parts[0].decode("ascii", errors="replace")
        onset_text, _, duration_text = stamp.partition("\x15")
        try:
            onset = float(onset_text)
            duration = float(duration_text) if duration_text else 0.0
        except ValueError:
            raise EdfError(f"malformed TAL time stamp {stamp!r}", record_offset) from None
        for text in parts[1:]:
            label = text.decode("utf-8", errors="replace").strip()
            if label:
                annotations.append(Annotation(onset=max(onset, 0.0), duration=duration, label=label))
    return annotations


def parse_edf(data: bytes, subject: int | None = None, run: int | None = None) -> Recording:
    """Parse the bytes of one EDF/EDF+ file into a :class:`Recording`.

    Parameters
    ----------
    data : bytes
        Complete file content.
    subject, run : int, optional
        Dataset identifiers, usually taken from the file name by :func:`read_edf`.

    Raises
    ------
    EdfError
        On truncation, non-numeric header fields or inconsistent data channels.
    """
    header, signals = parse_header(data)
    data_start = HEADER_BYTES + SIGNAL_HEADER_BYTES * header.n_signals
    spr = np.array([s.samples_per_record for s in signals])
    record_bytes = int(2 * spr.sum())
    n_records = header.n_records
    if n_records == -1:
        n_records, rest = divmod(len(data) - data_start, record_bytes)
        if rest:
            raise EdfError(
                f"data section of {len(data) - data_start} bytes is not a multiple of the "
                f"{record_bytes}-byte record",
                data_start,
            )
    expected = data_start + n_records * record_bytes
    if len(data) < expected:
        raise EdfError(f"truncated file: expected {expected} bytes, got {len(data)}", len(data))

    data_idx = [i for i, s in enumerate(signals) if not s.is_annotation]
    annot_idx = [i for i, s in enumerate(signals) if s.is_annotation]
    if not data_idx:
        raise EdfError("file has no data channels", HEADER_BYTES)
    lengths = {signals[i].samples_per_record for i in data_idx}
    if len(lengths) > 1:
        bad = next(i for i in data_idx if signals[i].samples_per_record != signals[data_idx[0]].samples_per_record)
        # samples_per_record column starts 216 bytes per signal into the signal block
        field_offset = HEADER_BYTES + header.n_signals * 216 + 8 * bad
        raise EdfError(
            f"signal length mismatch: {signals[bad].label!r} has {signals[bad].samples_per_record} "
            f"samples per record, expected {signals[data_idx[0]].samples_per_record}",
            field_offset,
        )

    raw = np.frombuffer(data, dtype="<i2", count=n_records * record_bytes // 2, offset=data_start)
    raw = raw.reshape(n_records, record_bytes // 2)
    bounds = np.concatenate([[0], np.cumsum(spr)])
    samples = np.empty((len(data_idx), n_records * int(spr[data_idx[0]])))
    for row, i in enumerate(data_idx):
        digital = raw[:, bounds[i] : bounds[i + 1]].reshape(-1)
        samples[row] = signals[i].to_physical(digital)

    annotations: list[Annotation] = []
    for i in annot_idx:
        for r in range(n_records):
            blob = raw[r, bounds[i] : bounds[i + 1]].tobytes()
            annotations.extend(_parse_tals(blob, data_start + r * record_bytes + 2 * int(bounds[i])))

    fs = signals[data_idx[0]].samples_per_record / header.record_duration
    return Recording(
        header=header,
        signals=tuple(signals[i] for i in data_idx),
        channel_labels=tuple(canonical_label(signals[i].label) for i in data_idx),
        fs=fs,
        samples=samples,
        annotations=tuple(annotations),
        subject=subject,
        run=run,
    )


def parse_filename(path: str | Path) -> tuple[int | None, int | None]:
    """``S001R03.edf`` -> ``(1, 3)``; unknown names give ``(None, None)``."""
    match = _FILENAME_RE.search(Path(path).name)
    if not match:
        return None, None
    return int(match.group(1)), int(match.group(2))


def read_edf(path: str | Path) -> Recording:
    subject, run = parse_filename(path)
    return parse_edf(Path(path).read_bytes(), subject=subject, run=run)


def extract_trials(
    rec: Recording,
    excluded=DEFAULT_EXCLUDED,
    data: np.ndarray | None = None,
    min_samples: int = 0,
    channel_labels: tuple[str, ...] | None = None,
) -> list[Trial]:
    """Cut one :class:`Trial` per T1/T2 annotation.

    Each trial spans the annotation's duration from its onset. By default the
    window is taken from the raw 64-channel samples; pass ``data`` (any
    ``(channels, n_samples)`` array aligned with the recording, e.g. the
    preprocessed differential channels) to cut from that instead.

    Trials shorter than ``min_samples`` (end-of-file truncation) are dropped
    with a warning. Subjects in ``excluded`` yield no trials.
    """
    if rec.subject is not None and rec.subject in excluded:
        return []
    source = rec.samples if data is None else np.asarray(data)
    if source.shape[-1] != rec.n_samples:
        raise ValueError("data must have as many samples as the recording")
    labels = channel_labels if channel_labels is not None else (rec.channel_labels if data is None else ())
    trials = []
    for ann in rec.annotations:
        if ann.label not in KNOWN_LABELS:
            raise ValueError(f"unexpected annotation label {ann.label!r} at onset {ann.onset}s")
        if ann.label == "T0":
            continue
        start = int(round(ann.onset * rec.fs))
        stop = min(start + int(round(ann.duration * rec.fs)), rec.n_samples)
        index = len(trials)
        if stop - start < max(min_samples, 1):
            logger.warning(
                "dropping trial %d of subject %s run %s: %d samples < %d",
                index, rec.subject, rec.run, stop - start, min_samples,
            )
            continue
        trials.append(
            Trial(
                subject=rec.subject,
                run=rec.run,
                kind=TRIAL_LABELS[ann.label],
                onset_sample=start,
                data=source[:, start:stop],
                index=index,
                channel_labels=labels,
            )
        )
    return trials


def encode_edf(
    labels: list[str],
    digital: np.ndarray,
    fs: int,
    physical_range: tuple[float, float] = (-8092.0, 8092.0),
    digital_range: tuple[int, int] = (-32768, 32767),
    annotations: list[Annotation] = (),
    subject_id: str = "X X X X",
    recording_id: str = "Startdate X X X X",
    start: datetime.datetime | None = None,
    annotation_samples: int | None = None,
) -> bytes:
    """Encode int16 channel data and annotations as a one-second-record EDF+C file.

    ``digital`` is (n_channels, n_samples) with ``n_samples`` a multiple of ``fs``.
    All annotations are written into the first records' TAL blocks.
    """
    digital = np.asarray(digital)
    n_channels, n_samples = digital.shape
    if n_samples % fs:
        raise ValueError("n_samples must be a whole number of one-second records")
    n_records = n_samples // fs

    tals_per_record: list[list[bytes]] = [[] for _ in range(n_records)]
    for k, ann in enumerate(annotations):
        stamp = f"{ann.onset:+g}"
        if ann.duration:
            stamp += f"\x15{ann.duration:g}"
        tals_per_record[min(int(ann.onset), n_records - 1)].append(
            stamp.encode() + b"\x14" + ann.label.encode() + b"\x14\x00"
        )
    blocks = []
    for r in range(n_records):
        keep = f"+{r}".encode() + b"\x14\x14\x00"
        blocks.append(keep + b"".join(tals_per_record[r]))
    needed = max(len(b) for b in blocks)
    if annotation_samples is None:
        annotation_samples = (needed + 1) // 2
    if 2 * annotation_samples < needed:
        raise ValueError("annotation_samples too small for the annotation text")

    pmin, pmax = physical_range
    dmin, dmax = digital_range
    specs = [
        SignalSpec(
            label=lab, samples_per_record=fs, physical_min=pmin, physical_max=pmax,
            digital_min=dmin, digital_max=dmax,
        )
        for lab in labels
    ]
    specs.append(
        SignalSpec(
            label=ANNOTATION_LABEL, samples_per_record=annotation_samples, physical_min=-1,
            physical_max=1, digital_min=-32768, digital_max=32767, physical_dimension="",
        )
    )
    header = EdfHeader(
        version="0", subject_id=subject_id, recording_id=recording_id,
        start=start or datetime.datetime(2009, 8, 12, 16, 15, 0), n_records=n_records,
        record_duration=1.0, n_signals=len(specs), reserved="EDF+C",
    )
    body = np.empty((n_records, n_channels * fs + annotation_samples), dtype="<i2")
    body[:, : n_channels * fs] = (
        digital.astype("<i2").reshape(n_channels, n_records, fs).transpose(1, 0, 2).reshape(n_records, -1)
    )
    for r, block in enumerate(blocks):
        body[r, n_channels * fs :] = np.frombuffer(block.ljust(2 * annotation_samples, b"\x00"), dtype="<i2")
    return header_to_bytes(header, specs) + body.tobytes()


@dataclass
class ManifestReport:
    missing: list[str] = field(default_factory=list)
    corrupt: list[tuple[str, str, str]] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)
    ok_count: int = 0

    @property
    def ok(self) -> bool:
        return not (self.missing or self.corrupt or self.extra)

    def lines(self) -> list[str]:
        out = [f"missing {p}" for p in self.missing]
        out += [f"corrupt {p} expected={e} actual={a}" for p, e, a in self.corrupt]
        out += [f"extra {p}" for p in self.extra]
        out.append(f"{'ok' if self.ok else 'FAILED'}: {self.ok_count} files verified")
        return out


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_manifest(manifest: str | Path) -> dict[str, str]:
    entries = {}
    for lineno, line in enumerate(Path(manifest).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{manifest}:{lineno}: expected '<relative-path> <hex-digest>'")
        entries[parts[0]] = parts[1].lower()
    return entries


def write_manifest(directory: str | Path, manifest: str | Path, paths=None) -> dict[str, str]:
    """Write a manifest of sha256 digests for ``paths`` (default: every EDF under ``directory``)."""
    directory = Path(directory)
    if paths is None:
        paths = sorted(p.relative_to(directory).as_posix() for p in directory.rglob("*.edf"))
    entries = {p: file_digest(directory / p) for p in paths}
    Path(manifest).write_text("".join(f"{p} {d}\n" for p, d in entries.items()))
    return entries


def verify_manifest(directory: str | Path, manifest: str | Path) -> ManifestReport:
    """Compare a directory against a manifest of ``<relative-path> <sha256>`` lines.

    Files under ``directory`` that are not listed (other than the manifest
    itself) are reported as extra.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"cannot read dataset directory {directory}")
    expected = read_manifest(manifest)
    report = ManifestReport()
    manifest_path = Path(manifest).resolve()
    for rel, digest in expected.items():
        path = directory / rel
        if not path.is_file():
            report.missing.append(rel)
            continue
        actual = file_digest(path)
        if actual != digest:
            report.corrupt.append((rel, digest, actual))
        else:
            report.ok_count += 1
    for path in sorted(directory.rglob("*")):
        if path.is_file() and path.resolve() != manifest_path:
            rel = path.relative_to(directory).as_posix()
            if rel not in expected:
                report.extra.append(rel)
    return report
