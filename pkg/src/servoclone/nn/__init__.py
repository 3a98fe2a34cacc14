from .layers import Conv2d, Flatten, Linear, Param, ReLU, ResidualBlock
from .policy import (CheckpointError, DEFAULT_TWIST_SCALES, PolicyNet, TwistPolicy,
                     load_checkpoint, save_checkpoint)
from .train import (Adam, DivergenceError, SGDMomentum, TrainConfig, TrainResult,
                    batch_loss_and_grad, train, train_arrays, twist_loss)

__all__ = [
    "Adam", "CheckpointError", "Conv2d", "DEFAULT_TWIST_SCALES", "DivergenceError",
    "Flatten", "Linear", "Param", "PolicyNet", "ReLU", "ResidualBlock",
    "SGDMomentum", "TrainConfig", "TrainResult", "TwistPolicy",
    "batch_loss_and_grad", "load_checkpoint", "save_checkpoint", "train",
    "train_arrays", "twist_loss",
]
