"""Segmentation into overlapping time steps and the 11 per-channel features.

Feature layout of one time step is channel-major: the value for channel
``c`` and feature ``f`` sits at index ``c * 11 + f`` with ``f`` following
:data:`FEATURE_NAMES`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dsp import FilterSpec, Montage, make_montage, preprocess
from .edf import DEFAULT_EXCLUDED, Recording, extract_trials

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "mean",
    "variance",
    "skewness",
    "kurtosis",
    "zero_crossings",
    "abs_area",
    "peak2peak",
    "relpow_delta",
    "relpow_theta",
    "relpow_alpha",
    "relpow_beta",
)
N_FEATURES = len(FEATURE_NAMES)
BANDS = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 12.0),
    "beta": (12.0, 30.0),
}
TOTAL_BAND = (0.5, 70.0)


@dataclass(frozen=True)
class SegmentSpec:
    segment_len: float = 2.0
    fs: float = 160.0
    n_steps: int = 7
    overlap: float = 0.5

    @property
    def window(self) -> int:
        """Samples per time step; with 7 steps at 50% overlap this is a quarter of the segment."""
        span = 1 + (self.n_steps - 1) * (1 - self.overlap)
        w = self.segment_len * self.fs / span
        if abs(w - round(w)) > 1e-9 or round(w) < 1:
            raise ValueError(f"segment of {self.segment_len}s at {self.fs} Hz gives a non-integer window {w}")
        return int(round(w))

    @property
    def hop(self) -> int:
        h = self.window * (1 - self.overlap)
        if abs(h - round(h)) > 1e-9 or round(h) < 1:
            raise ValueError(f"window of {self.window} samples gives a non-integer hop {h}")
        return int(round(h))

    @property
    def n_samples(self) -> int:
        return self.window + (self.n_steps - 1) * self.hop


def segment(data: np.ndarray, spec: SegmentSpec, start: int = 0) -> np.ndarray:
    """Cut ``n_steps`` windows from ``data[..., start:]``; returns (n_steps, channels, window)."""
    data = np.asarray(data)
    need = start + spec.n_samples
    if data.shape[-1] < need:
        raise ValueError(f"trial has {data.shape[-1]} samples, segment needs {need}")
    w, hop = spec.window, spec.hop
    return np.stack([data[..., start + i * hop : start + i * hop + w] for i in range(spec.n_steps)])


def _simpson(y: np.ndarray, dx: float) -> np.ndarray:
    """Composite Simpson along the last axis; a trailing odd interval uses the trapezoid rule."""
    n = y.shape[-1]
    if n < 2:
        return np.zeros(y.shape[:-1])
    m = n - 1 if (n - 1) % 2 == 0 else n - 2  # even number of Simpson intervals
    total = np.zeros(y.shape[:-1])
    if m >= 2:
        total = dx / 3 * (y[..., 0] + 4 * y[..., 1:m:2].sum(-1) + 2 * y[..., 2 : m - 1 : 2].sum(-1) + y[..., m])
    if m != n - 1:
        total = total + dx / 2 * (y[..., -2] + y[..., -1])
    return total


def time_features(x: np.ndarray, fs: float) -> np.ndarray:
    """The seven time-domain features along the last axis; returns (..., 7).

    Skewness divides the 1/N third central moment by the 1/(N-1) variance
    raised to 3/2; kurtosis is the excess (-3) form with 1/N moments.
    Constant windows (or ones whose variance underflows) get skewness and kurtosis 0.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    mean = x.mean(-1)
    d = x - mean[..., None]
    m2 = (d**2).mean(-1)
    m3 = (d**3).mean(-1)
    m4 = (d**4).mean(-1)
    flat = (np.ptp(x, axis=-1) == 0) | (m2 == 0)  # m2 underflows for denormal-scale spread
    if np.any(flat):
        logger.debug("%d constant windows: skewness/kurtosis set to 0", int(np.sum(flat)))
    safe_m2 = np.where(flat, 1.0, m2)
    unbiased = safe_m2 * n / (n - 1)
    skew = np.where(flat, 0.0, m3 / unbiased**1.5)
    kurt = np.where(flat, 0.0, m4 / safe_m2**2 - 3.0)
    zc = np.sum(x[..., 1:] * x[..., :-1] < 0, axis=-1).astype(np.float64)
    area = _simpson(np.abs(x), 1.0 / fs)
    p2p = x.max(-1) - x.min(-1)
    return np.stack([mean, m2, skew, kurt, zc, area, p2p], axis=-1)


def psd(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided rectangular-window periodogram along the last axis.

    Returns ``(freqs, power)`` with power in units^2/Hz; summing
    ``power * fs / N`` gives the mean power of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    n = x.shape[-1]
    if n < 8:
        raise ValueError(f"need at least 8 samples for a spectrum, got {n}")
    spec = np.abs(np.fft.rfft(x, axis=-1)) ** 2 / (n * fs)
    interior = slice(1, None) if n % 2 else slice(1, -1)
    spec[..., interior] *= 2
    return np.fft.rfftfreq(n, d=1.0 / fs), spec


def band_powers(freqs: np.ndarray, power: np.ndarray, relative_to: str = "total") -> np.ndarray:
    """Relative delta/theta/alpha/beta power along the last axis; returns (..., 4).

    Bins are assigned by centre frequency to half-open bands. ``relative_to``
    is ``"total"`` (power in [0.5, 70) Hz) or ``"bands"`` (sum of the four).
    Zero total power gives zeros.
    """
    absolute = np.stack(
        [power[..., (freqs >= lo) & (freqs < hi)].sum(-1) for lo, hi in BANDS.values()], axis=-1
    )
    if relative_to == "total":
        lo, hi = TOTAL_BAND
        total = power[..., (freqs >= lo) & (freqs < hi)].sum(-1)
    elif relative_to == "bands":
        total = absolute.sum(-1)
    else:
        raise ValueError(f"relative_to must be 'total' or 'bands', not {relative_to!r}")
    zero = total <= 0
    return np.where(zero[..., None], 0.0, absolute / np.where(zero, 1.0, total)[..., None])


def featurize_segment(windows: np.ndarray, fs: float, relative_to: str = "total") -> np.ndarray:
    """(n_steps, channels, window) -> (n_steps, channels * 11) feature matrix."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError("windows must be (n_steps, channels, window)")
    freqs, power = psd(windows, fs)
    feats = np.concatenate([time_features(windows, fs), band_powers(freqs, power, relative_to)], axis=-1)
    return feats.reshape(windows.shape[0], -1)


def feature_table(montage: Montage) -> list[tuple[int, str, str]]:
    """``(index, pair, feature)`` for every position of a time-step vector."""
    return [
        (c * N_FEATURES + f, pair, name)
        for c, pair in enumerate(montage.names)
        for f, name in enumerate(FEATURE_NAMES)
    ]


@dataclass
class FeatureDataset:
    """Featurized segments: ``X`` is (n, n_steps, n_channels * 11)."""

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    trial_ids: list[str]
    offsets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.X)
        if not (len(self.y) == len(self.subjects) == len(self.trial_ids) == len(self.offsets) == n):
            raise ValueError("dataset columns have inconsistent lengths")

    def __len__(self):
        return len(self.X)

    def subset(self, idx) -> "FeatureDataset":
        idx = np.asarray(idx, dtype=int)
        return FeatureDataset(
            X=self.X[idx],
            y=self.y[idx],
            subjects=self.subjects[idx],
            trial_ids=[self.trial_ids[i] for i in idx],
            offsets=self.offsets[idx],
            meta=dict(self.meta),
        )

    @classmethod
    def concatenate(cls, parts: list["FeatureDataset"], meta: dict | None = None) -> "FeatureDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        return cls(
            X=np.concatenate([p.X for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            subjects=np.concatenate([p.subjects for p in parts]),
            trial_ids=[t for p in parts for t in p.trial_ids],
            offsets=np.concatenate([p.offsets for p in parts]),
            meta=dict(meta if meta is not None else parts[0].meta),
        )


def featurize_recording(
    rec: Recording,
    seg: SegmentSpec,
    offsets=(0.0,),
    filter_spec: FilterSpec | None = None,
    montage: Montage | None = None,
    excluded=DEFAULT_EXCLUDED,
    relative_to: str = "total",
) -> FeatureDataset:
    """Preprocess one recording and featurize every movement trial at each offset (s)."""
    montage = montage or make_montage(rec.channel_labels)
    if seg.fs != rec.fs:
        raise ValueError(f"segment spec is for {seg.fs} Hz but recording is {rec.fs} Hz")
    diff = preprocess(rec, montage, filter_spec or FilterSpec(fs=rec.fs))
    shifts = [int(round(o * rec.fs)) for o in offsets]
    trials = extract_trials(rec, excluded=excluded, data=diff, min_samples=seg.n_samples + min(shifts))
    rows, ys, ids, offs = [], [], [], []
    for trial in trials:
        for offset, shift in zip(offsets, shifts):
            if trial.data.shape[-1] < shift + seg.n_samples:
                logger.warning("trial %s too short for offset %.3fs; skipped", trial.trial_id, offset)
                continue
            rows.append(featurize_segment(segment(trial.data, seg, shift), rec.fs, relative_to))
            ys.append(trial.label)
            ids.append(trial.trial_id)
            offs.append(float(offset))
    width = len(montage) * N_FEATURES
    return FeatureDataset(
        X=np.array(rows).reshape(len(rows), seg.n_steps, width),
        y=np.array(ys, dtype=np.int64),
        subjects=np.full(len(rows), -1 if rec.subject is None else rec.subject, dtype=np.int64),
        trial_ids=ids,
        offsets=np.array(offs, dtype=np.float64),
        meta={"segment_len": seg.segment_len, "fs": rec.fs, "pairs": montage.names},
    )


def build_dataset(recordings, seg: SegmentSpec, offsets=(0.0,), **kwargs) -> FeatureDataset:
    """Featurize an iterable of recordings (or zero-argument loaders) into one dataset."""
    parts = []
    for rec in recordings:
        if callable(rec):
            rec = rec()
        parts.append(featurize_recording(rec, seg, offsets, **kwargs))
    parts = [p for p in parts if len(p)] or parts[:1]
    return FeatureDataset.concatenate(parts)
