from .model import (
    ModelParams,
    NetConfig,
    backward,
    backward_batch,
    forward,
    forward_batch,
    init,
    loss,
    predict,
    predict_batch,
    sgd_step,
)
from .train import TrainReport, train

__all__ = [
    "ModelParams", "NetConfig", "TrainReport", "backward", "backward_batch", "forward",
    "forward_batch", "init", "loss", "predict", "predict_batch", "sgd_step", "train",
]
