"""Frequency-multiplexed qubit readout state discrimination at desk scale.

Synthetic shot generation, quantization-aware MLP discriminators, classical
baselines (boxcar, matched filter, linear SVM), assignment-fidelity metrics,
and an integer dataflow simulator with a folding-based latency model.
"""

from .metrics import FidelityReport, cross_fidelity_only, fidelity
from .qnn import ArchSpec, QnnModel, TrainConfig, build_model, forward, predict_states, train
from .quant import QuantSpec, calibrate_scale, fake_quantize, quantize
from .synth import (
    Dataset,
    DeviceConfig,
    QubitConfig,
    RawShot,
    boxcar_reduce,
    generate_dataset,
    generate_shot,
)

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "Dataset",
    "DeviceConfig",
    "FidelityReport",
    "QnnModel",
    "QuantSpec",
    "QubitConfig",
    "RawShot",
    "TrainConfig",
    "boxcar_reduce",
    "build_model",
    "calibrate_scale",
    "cross_fidelity_only",
    "fake_quantize",
    "fidelity",
    "forward",
    "generate_dataset",
    "generate_shot",
    "predict_states",
    "quantize",
    "train",
]
