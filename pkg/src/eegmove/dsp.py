"""Differential montage, zero-phase filtering and min-max normalization."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .edf import Recording, canonical_label

# The 64 electrode labels of the PhysioNet eegmmidb headers, in file order.
PHYSIONET_LABELS = (
    "Fc5.", "Fc3.", "Fc1.", "Fcz.", "Fc2.", "Fc4.", "Fc6.", "C5..", "C3..", "C1..", "Cz..",
    "C2..", "C4..", "C6..", "Cp5.", "Cp3.", "Cp1.", "Cpz.", "Cp2.", "Cp4.", "Cp6.", "Fp1.",
    "Fpz.", "Fp2.", "Af7.", "Af3.", "Afz.", "Af4.", "Af8.", "F7..", "F5..", "F3..", "F1..",
    "Fz..", "F2..", "F4..", "F6..", "F8..", "Ft7.", "Ft8.", "T7..", "T8..", "T9..", "T10.",
    "Tp7.", "Tp8.", "P7..", "P5..", "P3..", "P1..", "Pz..", "P2..", "P4..", "P6..", "P8..",
    "Po7.", "Po3.", "Poz.", "Po4.", "Po8.", "O1..", "Oz..", "O2..", "Iz..",
)

_LABEL_RE = re.compile(r"^([A-Z]+)(\d+|z)$")


class MontageError(ValueError):
    pass


@dataclass(frozen=True)
class Montage:
    pairs: tuple[tuple[str, str], ...]
    discarded: tuple[str, ...]

    def __post_init__(self):
        paired = [lab for pair in self.pairs for lab in pair]
        if len(set(paired)) != len(paired):
            raise MontageError("a label appears in more than one pair")
        if set(paired) & set(self.discarded):
            raise MontageError("discarded labels overlap the pairs")

    @property
    def names(self) -> list[str]:
        return [f"{left}-{right}" for left, right in self.pairs]

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class FilterSpec:
    fs: float = 160.0
    notch_freq: float = 50.0
    notch_q: float = 30.0
    band: tuple[float, float] = (0.5, 70.0)
    order: int = 4

    def __post_init__(self):
        low, high = self.band
        nyq = self.fs / 2
        if not 0 < low < high < nyq:
            raise ValueError(f"band {self.band} must satisfy 0 < low < high < fs/2 = {nyq}")
        if not 0 < self.notch_freq < nyq:
            raise ValueError(f"notch frequency {self.notch_freq} must lie in (0, fs/2 = {nyq})")
        if self.order < 1:
            raise ValueError("filter order must be >= 1")


def make_montage(labels, n_pairs: int = 27, n_midline: int = 10) -> Montage:
    """Pair each left-hemisphere electrode with its mirror on the right.

    Labels follow the 10-10 convention: odd suffix is left, even suffix
    right, ``z`` midline. Midline electrodes are discarded; pairs are
    ordered alphabetically by their left label.
    """
    labels = [canonical_label(lab) for lab in labels]
    if len(set(labels)) != len(labels):
        raise MontageError("duplicate channel labels")
    parsed = {}
    for lab in labels:
        match = _LABEL_RE.match(lab)
        if not match:
            raise MontageError(f"label {lab!r} does not follow 10-10 naming")
        parsed[lab] = match.groups()
    midline = sorted(lab for lab, (_, pos) in parsed.items() if pos == "z")
    by_name = set(labels)
    pairs = []
    for lab, (prefix, pos) in parsed.items():
        if pos == "z" or int(pos) % 2 == 0:
            continue
        mirror = f"{prefix}{int(pos) + 1}"
        if mirror not in by_name:
            raise MontageError(f"no mirror electrode {mirror!r} for {lab!r}")
        pairs.append((lab, mirror))
    n_right = sum(1 for _, pos in parsed.values() if pos != "z" and int(pos) % 2 == 0)
    if n_right != len(pairs):
        raise MontageError("some right-hemisphere electrodes have no left mirror")
    if len(pairs) != n_pairs or len(midline) != n_midline:
        raise MontageError(
            f"expected {n_pairs} mirror pairs and {n_midline} midline labels, "
            f"got {len(pairs)} and {len(midline)} from {len(labels)} labels"
        )
    pairs.sort()
    return Montage(pairs=tuple(pairs), discarded=tuple(midline))


def apply_montage(rec: Recording | tuple, montage: Montage) -> np.ndarray:
    """Left-minus-right differential channels, shape (n_pairs, n_samples).

    ``rec`` may be a :class:`Recording` or a ``(labels, samples)`` tuple.
    """
    if isinstance(rec, Recording):
        labels, samples = rec.channel_labels, rec.samples
    else:
        labels, samples = rec
    index = {canonical_label(lab): i for i, lab in enumerate(labels)}
    missing = [lab for pair in montage.pairs for lab in pair if lab not in index]
    if missing:
        raise MontageError(f"recording lacks montage labels {missing}")
    samples = np.asarray(samples, dtype=np.float64)
    left = [index[a] for a, _ in montage.pairs]
    right = [index[b] for _, b in montage.pairs]
    return samples[left] - samples[right]


def _check_finite(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def notch_sos(spec: FilterSpec) -> np.ndarray:
    b, a = signal.iirnotch(spec.notch_freq, spec.notch_q, fs=spec.fs)
    return signal.tf2sos(b, a)


def bandpass_sos(spec: FilterSpec) -> np.ndarray:
    return signal.butter(spec.order, spec.band, btype="bandpass", fs=spec.fs, output="sos")


def zero_phase_gain(sos: np.ndarray, freqs, fs: float) -> np.ndarray:
    """Magnitude of the forward-backward response, |H(f)|^2, at ``freqs`` Hz."""
    _, h = signal.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=fs)
    return np.abs(h) ** 2


def _filtfilt(sos: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    padlen = min(3 * order, x.shape[-1] - 1)
    return signal.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=padlen)


def notch_filter(x: np.ndarray, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Second-order IIR notch at ``spec.notch_freq``, applied forward and backward."""
    x = _check_finite(x)
    return _filtfilt(notch_sos(spec), x, 2)


def bandpass_filter(x: np.ndarray, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Butterworth band-pass of ``spec.order``, applied forward and backward."""
    x = _check_finite(x)
    return _filtfilt(bandpass_sos(spec), x, spec.order)


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    """Scale each row to [0, 1]; a constant row maps to 0.5."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("cannot normalize an empty signal")
    lo = x.min(axis=-1, keepdims=True)
    span = x.max(axis=-1, keepdims=True) - lo
    flat = span == 0
    out = (x - lo) / np.where(flat, 1.0, span)
    return np.where(flat, 0.5, out)


def preprocess(rec: Recording, montage: Montage | None = None, spec: FilterSpec | None = None) -> np.ndarray:
    """montage -> notch -> band-pass -> min-max, per differential channel of one recording."""
    montage = montage or make_montage(rec.channel_labels)
    spec = spec or FilterSpec(fs=rec.fs)
    if spec.fs != rec.fs:
        raise ValueError(f"filter designed for {spec.fs} Hz but recording is {rec.fs} Hz")
    diff = apply_montage(rec, montage)
    return minmax_normalize(bandpass_filter(notch_filter(diff, spec), spec))
