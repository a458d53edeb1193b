"""The assembled depth network, its loss, data plumbing and training loop."""

from .config import MODALITIES, NetConfig, toy_config
from .data import Batch, Sample, collate, iterate_batches, load_dataset, synthetic_samples
from .frames import DepthFrame, depth_loss, frame_loss, valid_mask
from .model import Decoder, DecoderBlock, Encoder, Preprocessor, ResidualBlock, UniCTDepth
from .train import TrainingError, evaluate, fit, predict, train_step

__all__ = [
    "Batch",
    "Decoder",
    "DecoderBlock",
    "DepthFrame",
    "Encoder",
    "MODALITIES",
    "NetConfig",
    "Preprocessor",
    "ResidualBlock",
    "Sample",
    "TrainingError",
    "UniCTDepth",
    "collate",
    "depth_loss",
    "evaluate",
    "fit",
    "frame_loss",
    "iterate_batches",
    "load_dataset",
    "predict",
    "synthetic_samples",
    "toy_config",
    "train_step",
    "valid_mask",
]
