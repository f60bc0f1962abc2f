import numpy as np
import pytest

from eegmove.edf import extract_trials, read_edf, verify_manifest
from eegmove.features import SegmentSpec, build_dataset
from eegmove.harness import ExperimentConfig, baseline_logreg
from eegmove.synth import SynthSpec, encode_run, synth_generate, write_synth


class TestSpec:
    def test_subject_ids_skip_excluded(self):
        ids = SynthSpec(n_subjects=45).subjects
        assert 43 not in ids and ids[-1] == 46

    @pytest.mark.parametrize(
        "kwargs", [{"trials_per_subject": 44}, {"effect": 1.0}, {"onset_delay": 5.0}, {"noise": -1}, {"n_runs": 4}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SynthSpec(**kwargs)


class TestGenerate:
    def test_structure(self, small_recordings, small_synth):
        assert len(small_recordings) == 12
        rec = small_recordings[0]
        assert rec.samples.shape[0] == 64
        labels = [a.label for a in rec.annotations]
        assert labels[::2] == ["T0"] * 6
        assert set(labels[1::2]) == {"T1", "T2"}
        assert len(extract_trials(rec)) == small_synth.trials_per_run

    def test_classes_balance(self):
        ds_y = [
            a.label for r in synth_generate(SynthSpec(n_subjects=2, trials_per_subject=45)) for a in r.annotations
        ]
        assert ds_y.count("T1") == ds_y.count("T2") == 45

    def test_same_seed_same_bytes(self):
        spec = SynthSpec(n_subjects=1, trials_per_subject=3)
        assert encode_run(spec, 1, 3) == encode_run(spec, 1, 3)
        other = SynthSpec(n_subjects=1, trials_per_subject=3, seed=1)
        assert encode_run(spec, 1, 3) != encode_run(other, 1, 3)

    def test_written_files_match_memory(self, tmp_path):
        spec = SynthSpec(n_subjects=1, trials_per_subject=6)
        paths = write_synth(spec, tmp_path)
        assert [p.name for p in paths] == ["S001R03.edf", "S001R07.edf", "S001R11.edf"]
        np.testing.assert_array_equal(read_edf(paths[1]).samples, synth_generate(spec)[1].samples)
        assert verify_manifest(tmp_path, tmp_path / "MANIFEST.sha256").ok

    def test_class_means_differ_on_planted_pairs(self, small_dataset):
        alpha = small_dataset.X[..., 3 * 11 + 9].mean(1)  # C3-C4 relative alpha power
        left, right = alpha[small_dataset.y == 0], alpha[small_dataset.y == 1]
        assert left.mean() > right.mean() + 3 * np.hypot(left.std(), right.std()) / np.sqrt(len(left))


class TestSeparability:
    def test_large_effect_logreg(self, small_dataset):
        cfg = ExperimentConfig(n_folds=4)
        assert baseline_logreg(cfg, small_dataset).aggregate["accuracy"]["mean"] >= 0.9

    def test_zero_effect_is_chance(self):
        spec = SynthSpec(n_subjects=10, trials_per_subject=30, effect=0.0, seed=7)
        ds = build_dataset(synth_generate(spec), SegmentSpec())
        acc = baseline_logreg(ExperimentConfig(), ds).aggregate["accuracy"]["mean"]
        assert 0.35 <= acc <= 0.65
