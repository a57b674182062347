from .base import TensorModel, downsample
from .baselines import KINDS as BASELINE_KINDS
from .baselines import TrivialBaseline, TrivialPrediction, trivial_predict
from .cct import CctConfig, CctModel, CctOutput
from .checkpoint import CheckpointError, dumps, load_checkpoint, loads, save_checkpoint
from .cnn import CnnConfig, CnnModel, CnnOutput
from .knn import KnnResult, knn_bruteforce, knn_predict
from .linear import (
    LinearHyperparams,
    LinearModel,
    TrainingError,
    flatten_spectrogram,
    train_linear,
    unflatten_spectrogram,
)

__all__ = [
    "BASELINE_KINDS",
    "CctConfig",
    "CctModel",
    "CctOutput",
    "CheckpointError",
    "CnnConfig",
    "CnnModel",
    "CnnOutput",
    "KnnResult",
    "LinearHyperparams",
    "LinearModel",
    "TensorModel",
    "TrainingError",
    "TrivialBaseline",
    "TrivialPrediction",
    "downsample",
    "dumps",
    "flatten_spectrogram",
    "knn_bruteforce",
    "knn_predict",
    "load_checkpoint",
    "loads",
    "save_checkpoint",
    "train_linear",
    "trivial_predict",
    "unflatten_spectrogram",
]
