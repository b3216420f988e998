"""Fully dynamic graph neural network over continuous-time graph streams."""

from .events import (
    Activity,
    ActivityLedger,
    Event,
    GraphSnapshot,
    StreamHeader,
    Violation,
    activity,
    apply_event,
    read_stream,
    snapshot_at,
    validate_stream,
    write_stream,
)
from .intensity import Branch, IntensityReport, activation, intensity, intensity_table, total_intensity
from .model import FDGNN
from .params import ModelConfig, ModelParams, load_model, save_model
from .training import TrainConfig, evaluate, local_update, nll, train

__version__ = "0.1.0"
