"""From-scratch attention-LSTM classifier."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import (
    Cache,
    LstmLayerParams,
    Model,
    ModelConfig,
    StaleCacheError,
    attention_forward,
    backward,
    bce_loss,
    forward,
    init_params,
    lstm_cell_forward,
    objective,
    param_shapes,
)
from .optim import Adam, AdamState, adam_step
from .tape import Tape
from .train import fit, predict

__all__ = [
    "Adam",
    "AdamState",
    "Cache",
    "CheckpointError",
    "LstmLayerParams",
    "Model",
    "ModelConfig",
    "StaleCacheError",
    "Tape",
    "adam_step",
    "attention_forward",
    "backward",
    "bce_loss",
    "fit",
    "forward",
    "init_params",
    "load_checkpoint",
    "lstm_cell_forward",
    "objective",
    "param_shapes",
    "predict",
    "save_checkpoint",
]
