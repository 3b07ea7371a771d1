"""Self-encoder: a network trained to recognise each training sample, used as a learned nearest-neighbor geometry."""

from .encoder import (
    AffineTransform,
    NeighborRanking,
    SelfEncoderConfig,
    SelfEncoderModel,
    fit,
    load_model,
    predict_proba,
    rank_neighbors,
    sample_subset,
    save_model,
    transfer_weights,
)
from .linalg import Rng
from .nn import Activation
from .optim import TrainSchedule

__all__ = [
    "Activation",
    "AffineTransform",
    "NeighborRanking",
    "Rng",
    "SelfEncoderConfig",
    "SelfEncoderModel",
    "TrainSchedule",
    "fit",
    "load_model",
    "predict_proba",
    "rank_neighbors",
    "sample_subset",
    "save_model",
    "transfer_weights",
]
