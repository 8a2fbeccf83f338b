"""Reverse-mode differentiation, a residual 3D U-Net and its training loop.

The training entry point is :func:`mipcarve.gradnet.train.train`.
"""

from .netio import load_net, save_net
from .network import NetConfig, NetState, backward, forward, init_state
from .optim import adam_step
from .train import Supervision, TrainConfig, TrainingVolume

__all__ = [
    "NetConfig", "NetState", "Supervision", "TrainConfig", "TrainingVolume",
    "adam_step", "backward", "forward", "init_state", "load_net", "save_net",
]
