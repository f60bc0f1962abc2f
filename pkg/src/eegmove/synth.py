"""Seeded synthetic recordings with a planted alpha-band hemispheric asymmetry.

Each subject gets ``n_runs`` runs laid out like the motor-execution runs of the
public dataset: rest (T0, 4.2 s) alternating with Left/Right cues (T1/T2,
4.1 s), ``trials_per_subject / n_runs`` cues per run. All 64 electrodes carry
independent white noise plus a shared common-mode and 50 Hz mains component.
On each designated pair a 10 Hz rhythm rides on one electrode only, with
amplitude ``alpha * (1 + effect)`` for one class and ``alpha * (1 - effect)``
for the other, so the differential channel's relative alpha power separates
the classes. Every other designated pair is mirrored (rhythm on the right
electrode, class roles swapped).

Samples are quantized to int16 exactly as an EDF file stores them, so the
in-memory recordings equal what :func:`write_synth` puts on disk.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding
from .dsp import PHYSIONET_LABELS
from .edf import DEFAULT_EXCLUDED, MOVEMENT_RUNS, Annotation, Recording, encode_edf, parse_edf, write_manifest

REST_S = 4.2
CUE_S = 4.1


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 20
    trials_per_subject: int = 45
    fs: int = 160
    effect: float = 0.25
    alpha: float = 20.0
    noise: float = 10.0
    common_mode: float = 30.0
    mains: float = 20.0
    onset_delay: float = 0.0
    pairs: tuple[str, ...] = ("C3", "FC3", "CP3", "FT7")
    subject_gain_sd: float = 0.2
    seed: int = 0
    n_runs: int = 3

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.trials_per_subject < self.n_runs or self.trials_per_subject % self.n_runs:
            raise ValueError(f"trials_per_subject must be a positive multiple of n_runs={self.n_runs}")
        if self.n_runs > len(MOVEMENT_RUNS):
            raise ValueError(f"at most {len(MOVEMENT_RUNS)} runs per subject")
        if not 0 <= self.effect < 1:
            raise ValueError("effect must be in [0, 1)")
        if self.onset_delay < 0 or self.onset_delay >= CUE_S:
            raise ValueError(f"onset_delay must be in [0, {CUE_S})")
        for name in ("alpha", "noise", "common_mode", "mains", "subject_gain_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def subjects(self) -> list[int]:
        """Subject ids 1, 2, ... skipping the ids excluded from the real dataset."""
        ids = (s for s in itertools.count(1) if s not in DEFAULT_EXCLUDED)
        return list(itertools.islice(ids, self.n_subjects))

    @property
    def trials_per_run(self) -> int:
        return self.trials_per_subject // self.n_runs


def _mirror(label: str) -> str:
    """``C3`` -> ``C4``: odd 10-10 suffixes are left, the next even number is its mirror."""
    stem = label.rstrip("0123456789")
    return f"{stem}{int(label[len(stem):]) + 1}"


def _labels() -> list[str]:
    return [lab.strip(".").upper() if not lab.strip(".").endswith("z") else lab.strip(".")
            for lab in PHYSIONET_LABELS]


def _digitize(phys: np.ndarray, pmin=-8092.0, pmax=8092.0, dmin=-32768, dmax=32767) -> np.ndarray:
    gain = (pmax - pmin) / (dmax - dmin)
    return np.clip(np.round((phys - pmin) / gain + dmin), dmin, dmax).astype(np.int16)


def _run_signal(spec: SynthSpec, subject: int, run: int, parity: int = 0) -> tuple[np.ndarray, list[Annotation]]:
    gen = seeding.rng(spec.seed, seeding.SYNTH, subject, run)
    subject_gen = seeding.rng(spec.seed, seeding.SYNTH, subject)
    gain = float(np.exp(spec.subject_gain_sd * subject_gen.standard_normal()))

    fs = spec.fs
    # With an odd cue count the extra cue alternates class from run to run,
    # which balances the classes over any even number of runs.
    k = spec.trials_per_run
    n_right = k // 2 + (k % 2) * (parity % 2)
    classes = gen.permutation(np.r_[np.zeros(k - n_right, int), np.ones(n_right, int)])
    annotations, t = [], 0.0
    for c in classes:
        annotations.append(Annotation(round(t, 6), REST_S, "T0"))
        t += REST_S
        annotations.append(Annotation(round(t, 6), CUE_S, "T1" if c == 0 else "T2"))
        t += CUE_S
    annotations.append(Annotation(round(t, 6), REST_S, "T0"))
    n = int(np.ceil(t + REST_S)) * fs
    time = np.arange(n) / fs

    labels = _labels()
    x = spec.noise * gen.standard_normal((len(labels), n))
    x += spec.common_mode * gen.standard_normal(n)
    x += spec.mains * np.sin(2 * np.pi * 50.0 * time + gen.uniform(0, 2 * np.pi))

    # Per-sample alpha amplitude: baseline at rest, class-modulated during cues.
    amp_up = np.full(n, spec.alpha)
    amp_down = np.full(n, spec.alpha)
    for ann in annotations:
        if ann.label == "T0":
            continue
        a = int(round((ann.onset + spec.onset_delay) * fs))
        b = int(round((ann.onset + ann.duration) * fs))
        sign = 1.0 if ann.label == "T1" else -1.0
        amp_up[a:b] = spec.alpha * (1 + sign * spec.effect)
        amp_down[a:b] = spec.alpha * (1 - sign * spec.effect)
    for j, left in enumerate(spec.pairs):
        right = _mirror(left)
        target, amp = (left, amp_up) if j % 2 == 0 else (right, amp_down)
        phase = gen.uniform(0, 2 * np.pi)
        x[labels.index(target)] += amp * np.sin(2 * np.pi * 10.0 * time + phase)
    return _digitize(gain * x), annotations


def encode_run(spec: SynthSpec, subject: int, run: int) -> bytes:
    parity = spec.subjects.index(subject) * spec.n_runs + MOVEMENT_RUNS.index(run)
    digital, annotations = _run_signal(spec, subject, run, parity)
    return encode_edf(list(PHYSIONET_LABELS), digital, spec.fs, annotations=annotations,
                      subject_id=f"S{subject:03d} X X X")


def synth_generate(spec: SynthSpec) -> list[Recording]:
    """In-memory recordings, one per (subject, run), ordered by subject then run."""
    recs = []
    for subject in spec.subjects:
        for run in MOVEMENT_RUNS[: spec.n_runs]:
            recs.append(parse_edf(encode_run(spec, subject, run), subject=subject, run=run))
    return recs


def write_synth(spec: SynthSpec, out: str | Path, manifest: str = "MANIFEST.sha256") -> list[Path]:
    """Write ``S{sss}/S{sss}R{rr}.edf`` files and a sha256 manifest under ``out``."""
    out = Path(out)
    paths = []
    for subject in spec.subjects:
        for run in MOVEMENT_RUNS[: spec.n_runs]:
            path = out / f"S{subject:03d}" / f"S{subject:03d}R{run:02d}.edf"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(encode_run(spec, subject, run))
            paths.append(path)
    write_manifest(out, out / manifest)
    return paths
