"""Random streams derived from a single integer seed.

Every consumer draws from ``numpy.random.default_rng([seed, STREAM, *keys])``
so streams never overlap and results do not depend on call order:

==========  ==========================================
stream      keys
==========  ==========================================
PLAN        (key,)            fold assignment (0 cross, subject intra)
INIT        (fold,)           model initialization
SHUFFLE     (fold, epoch)     minibatch order
DROPOUT     (fold, epoch)     dropout masks
SYNTH       (subject, run)    synthetic recordings; (subject,) gain
FOREST      (tree,)           bootstrap + feature draws
LABELS      ()                label-shuffled controls
==========  ==========================================
"""
from __future__ import annotations

import numpy as np

PLAN = 0
INIT = 1
SHUFFLE = 2
DROPOUT = 3
SYNTH = 4
FOREST = 5
LABELS = 6


def rng(seed: int, stream: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream, *(int(k) for k in keys)])
