"""Audio distress classification: WAV in, spectrogram, CNN, alert out."""

from .errors import CryalertError
from .infer_alert import (
    AlertEvent,
    LoadedModel,
    decide_alert,
    emit_alert,
    load_model,
    predict,
    save_model,
)
from .optim_train import (
    AdamState,
    ConfusionMatrix,
    TrainConfig,
    TrainReport,
    adam_step,
    evaluate,
    fit_normalization,
    train,
)
from .spectro import Spectrogram, StftConfig, export_spectrogram, fft, stft_magnitude
from .synth import generate_corpus, synth_clip
from .tensor_nn import Network, build_network, network_backward, network_forward
from .wav_io import (
    AudioClip,
    LabeledDataset,
    load_dataset,
    load_wav,
    parse_wav,
    resample,
    standardize_length,
    write_wav,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AlertEvent",
    "AudioClip",
    "ConfusionMatrix",
    "CryalertError",
    "LabeledDataset",
    "LoadedModel",
    "Network",
    "Spectrogram",
    "StftConfig",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "build_network",
    "decide_alert",
    "emit_alert",
    "evaluate",
    "export_spectrogram",
    "fft",
    "fit_normalization",
    "generate_corpus",
    "load_dataset",
    "load_model",
    "load_wav",
    "network_backward",
    "network_forward",
    "parse_wav",
    "predict",
    "resample",
    "save_model",
    "standardize_length",
    "stft_magnitude",
    "synth_clip",
    "train",
    "write_wav",
]
