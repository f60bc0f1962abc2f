"""Left/right hand-movement classification from scalp EEG with an attention LSTM.

Pipeline: :mod:`~eegmove.edf` reading, :mod:`~eegmove.dsp` montage and
filtering, :mod:`~eegmove.features` windowed features, :mod:`~eegmove.nn`
model and training, :mod:`~eegmove.harness` cross-validation and
:mod:`~eegmove.analysis` post-hoc feature analysis.
"""
__version__ = "0.1.0"
