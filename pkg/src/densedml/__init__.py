"""Desk-scale deep metric learning with anchor-densified embedding production."""

from .config import RunConfig, load_config, save_config
from .data import Dataset, generate_gaussian_clusters, load_csv, save_csv
from .das import DasConfig, FrequencyRecorder, TransformationBank
from .encoder import EncoderParams, OptimizerState, encode
from .losses import LossSpec, PairSet, TripletSet
from .metrics import EvalReport
from .sampling import BatchSpec
from .training import TrainResult, evaluate_checkpoint, run_comparison, train

__all__ = [
    "BatchSpec",
    "DasConfig",
    "Dataset",
    "EncoderParams",
    "EvalReport",
    "FrequencyRecorder",
    "LossSpec",
    "OptimizerState",
    "PairSet",
    "RunConfig",
    "TrainResult",
    "TransformationBank",
    "TripletSet",
    "encode",
    "evaluate_checkpoint",
    "generate_gaussian_clusters",
    "load_config",
    "load_csv",
    "run_comparison",
    "save_config",
    "save_csv",
    "train",
]

__version__ = "0.1.0"
