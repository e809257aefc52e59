"""Streaming activation monitor: spectral features, detectors, replay."""

from ._core import (
    ConfigError,
    InputError,
    IoError,
    Models,
    ParseError,
    ProbeSet,
    ProtocolError,
    TrainError,
    Window,
    inst_features,
    inter_features,
    intra_features,
    reconstruct,
    replay,
    segment,
    select_mon,
    simulate,
    train_models,
    write_trace,
)

__all__ = [
    "ConfigError",
    "InputError",
    "IoError",
    "Models",
    "ParseError",
    "ProbeSet",
    "ProtocolError",
    "TrainError",
    "Window",
    "inst_features",
    "inter_features",
    "intra_features",
    "reconstruct",
    "replay",
    "segment",
    "select_mon",
    "simulate",
    "train_models",
    "write_trace",
]
