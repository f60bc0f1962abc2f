import numpy as np
import pytest

from eegmove.dsp import PHYSIONET_LABELS
from eegmove.edf import Annotation, encode_edf, parse_edf
from eegmove.features import SegmentSpec, build_dataset
from eegmove.synth import SynthSpec, synth_generate


def make_edf_bytes(n_seconds=10, fs=160, labels=PHYSIONET_LABELS, annotations=None, seed=0):
    """A small EDF+ file with random int16 data; returns (bytes, digital)."""
    gen = np.random.default_rng(seed)
    digital = gen.integers(-2000, 2000, (len(labels), n_seconds * fs)).astype(np.int16)
    if annotations is None:
        annotations = [
            Annotation(0.0, 4.2, "T0"),
            Annotation(4.2, 4.1, "T1"),
            Annotation(8.3, 1.7, "T0"),
        ]
    return encode_edf(list(labels), digital, fs, annotations=annotations), digital


@pytest.fixture
def edf_bytes():
    return make_edf_bytes()[0]


@pytest.fixture(scope="session")
def small_synth():
    """4 subjects x 15 cues, strong effect."""
    return SynthSpec(n_subjects=4, trials_per_subject=15, effect=0.5, seed=3)


@pytest.fixture(scope="session")
def small_recordings(small_synth):
    return synth_generate(small_synth)


@pytest.fixture(scope="session")
def small_dataset(small_recordings):
    return build_dataset(small_recordings, SegmentSpec())


@pytest.fixture(scope="session")
def synth_dataset():
    """The 10-subject, 30-cue set used by harness and analysis tests."""
    return build_dataset(synth_generate(SynthSpec(n_subjects=10, trials_per_subject=30, seed=1)), SegmentSpec())
