# %% [markdown]
# # From raw EDF to a feature tensor
#
# This walkthrough follows one synthetic recording through the preprocessing
# chain: EDF decoding, the 27-pair differential montage, mains notch,
# band-pass, min-max normalization, and finally the (7, 297) feature matrix
# that the attention-LSTM consumes.

# %%
import numpy as np

from eegmove.dsp import FilterSpec, bandpass_sos, make_montage, notch_sos, preprocess, zero_phase_gain
from eegmove.edf import extract_trials
from eegmove.features import FEATURE_NAMES, SegmentSpec, feature_table, featurize_segment, segment
from eegmove.synth import SynthSpec, synth_generate

rec = synth_generate(SynthSpec(n_subjects=1, trials_per_subject=3, n_runs=3, seed=0))[0]
print(f"subject {rec.subject} run {rec.run}: {rec.samples.shape[0]} channels x {rec.samples.shape[1]} samples at {rec.fs} Hz")
print("first annotations:", [(a.onset, a.label) for a in rec.annotations[:4]])

# %% [markdown]
# ## Montage
#
# Ten midline electrodes are dropped and the remaining 54 are paired
# left-with-right into differential channels.

# %%
montage = make_montage(rec.channel_labels)
print(len(montage), "pairs, discarded:", ", ".join(montage.discarded))
print(montage.names[:6], "...")

# %% [markdown]
# ## Filters
#
# Both filters run forward and backward, so the effective magnitude response
# is the squared single-pass response and the phase is zero.

# %%
spec = FilterSpec()
freqs = np.array([0.05, 0.5, 10.0, 49.0, 50.0, 51.0, 70.0, 75.0])
gain = zero_phase_gain(notch_sos(spec), freqs, spec.fs) * zero_phase_gain(bandpass_sos(spec), freqs, spec.fs)
for f, g in zip(freqs, gain):
    print(f"{f:6.2f} Hz  {10 * np.log10(max(g, 1e-30)):8.1f} dB")

# %%
diff = preprocess(rec, montage, spec)
print("preprocessed:", diff.shape, "range", diff.min(), diff.max())

# %% [markdown]
# ## Segments and features
#
# A 2 s segment is split into 7 half-overlapping windows; each window yields
# 11 features per channel.

# %%
trials = extract_trials(rec, data=diff)
seg = SegmentSpec()
windows = segment(trials[0].data, seg)
feats = featurize_segment(windows, rec.fs)
print(f"trial {trials[0].trial_id} ({trials[0].kind}): windows {windows.shape} -> features {feats.shape}")

table = feature_table(montage)
for index, pair, name in table[:11]:
    print(f"{index:3d} {pair:8s} {name:14s} {feats[0, index]: .4f}")
print("feature order per channel:", FEATURE_NAMES)
