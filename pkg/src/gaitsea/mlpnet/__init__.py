from .network import (
    BranchedNetwork,
    NetworkConfig,
    backward,
    decode_middle,
    encode_middle,
    forward,
    forward_batch,
    init_network,
    loss,
    predict,
)
from .optim import AdamState, TrainHyper, adam_step, adam_update
from .training import EpochRecord, FoldModel, FoldTest, TrainReport, train, train_fold
from .weights import deserialize_network, load_network, save_network, serialize_network

__all__ = [
    "AdamState",
    "BranchedNetwork",
    "EpochRecord",
    "FoldModel",
    "FoldTest",
    "NetworkConfig",
    "TrainHyper",
    "TrainReport",
    "adam_step",
    "adam_update",
    "backward",
    "decode_middle",
    "deserialize_network",
    "encode_middle",
    "forward",
    "forward_batch",
    "init_network",
    "load_network",
    "loss",
    "predict",
    "save_network",
    "serialize_network",
    "train",
    "train_fold",
]
