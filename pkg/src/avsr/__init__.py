"""Noise-robust audio-visual speech recognition on synthetic viseme/phoneme data."""

__version__ = "0.1.0"

from .config import ExperimentConfig
from .model import Recognizer, build_model, load_checkpoint, save_checkpoint
from .tensor import AdamW, Graph, Tensor, backward
from .train import TrainResult, train
from .vocab import Vocab

__all__ = [
    "AdamW", "ExperimentConfig", "Graph", "Recognizer", "Tensor", "TrainResult",
    "Vocab", "backward", "build_model", "load_checkpoint", "save_checkpoint",
    "train", "__version__",
]
