from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BLSTM, LSTM, Conv2d, Dense, ReLU, Sequential
from .model import ConvBlock, InQSSModel, ModelConfig, OutputGrads, Predictions
from .optim import Adam

__all__ = [
    "Adam", "BLSTM", "ConvBlock", "Conv2d", "Dense", "InQSSModel", "LSTM", "ModelConfig",
    "OutputGrads", "Predictions", "ReLU", "Sequential", "load_checkpoint", "save_checkpoint",
]
