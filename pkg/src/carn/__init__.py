"""CARN speech enhancement toolkit.

Complex-spectrogram front-end, attention-gated convolutional-recurrent
mask estimator, power-compressed spectral training loss, and a WAV-in /
WAV-out command line, all on a small reverse-mode autodiff core.
"""

from .dsp import (ComplexSpectrogram, FrameParams, Waveform, hann_window,
                  istft, spec_to_tensor, stft, tensor_to_spec)
from .mask import Mask, apply_mask, oracle_crm
from .model import CarnConfig, CarnModel, carn_forward, count_parameters
from .tensor import Parameter, Tape, Tensor
from .training import (SynthConfig, TrainConfig, TrainState, compressed_loss,
                       early_stop, mix_at_snr, synth_batch, train_loop,
                       warmup_lr)

__version__ = "0.1.0"

__all__ = [
    "CarnConfig", "CarnModel", "ComplexSpectrogram", "FrameParams", "Mask",
    "Parameter", "SynthConfig", "Tape", "Tensor", "TrainConfig", "TrainState",
    "Waveform", "apply_mask", "carn_forward", "compressed_loss",
    "count_parameters", "early_stop", "hann_window", "istft", "mix_at_snr",
    "oracle_crm", "spec_to_tensor", "stft", "synth_batch", "tensor_to_spec",
    "train_loop", "warmup_lr",
]
