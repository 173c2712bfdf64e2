"""STFT analysis/synthesis front-end and spectrogram <-> tensor conversion.

Framing convention (fixed and documented here, since several conventions
exist): 512-sample periodic Hann window, 256-sample hop, 512-point FFT at
16 kHz (32 ms / 16 ms).  The signal is zero-padded by window - hop = 256
samples at the front and enough at the back that

    n_frames = ceil(len / hop) + 1

and every input sample is covered by the analysis windows.  Synthesis is
windowed overlap-add divided by the summed squared window, which inverts the
analysis exactly in the interior.  Only bins 0..256 (one-sided) are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

SAMPLE_RATE = 16000


@dataclass
class Waveform:
    """Mono audio samples in [-1, 1] at the pipeline's fixed 16 kHz rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(
                f"pipeline is fixed at {SAMPLE_RATE} Hz, got {self.sample_rate}")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameParams:
    window_length: int = 512
    hop: int = 256
    fft_size: int = 512

    def __post_init__(self):
        if self.window_length != self.fft_size:
            raise ValueError("window_length must equal fft_size")
        if self.hop * 2 != self.window_length:
            raise ValueError("hop must be half the window length")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass
class ComplexSpectrogram:
    """Paired real/imaginary time-frequency planes, [n_frames, n_bins]."""

    real: np.ndarray
    imag: np.ndarray
    params: FrameParams = field(default_factory=FrameParams)

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise ValueError(
                f"real/imag shapes differ: {self.real.shape} vs {self.imag.shape}")
        if self.real.ndim != 2:
            raise ValueError("spectrogram planes must be 2-D [frames, bins]")
        if not (np.isfinite(self.real).all() and np.isfinite(self.imag).all()):
            raise ValueError("spectrogram contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.real.shape[0]

    @property
    def n_bins(self) -> int:
        return self.real.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    def as_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window w[k] = 0.5 * (1 - cos(2 pi k / n))."""
    if n < 1:
        raise ValueError("window length must be positive")
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def fft(x: np.ndarray) -> np.ndarray:
    """Forward DFT of a (real or complex) vector."""
    return np.fft.fft(np.asarray(x))


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse DFT; ifft(fft(v)) recovers v."""
    return np.fft.ifft(np.asarray(x))


def n_frames_for(n_samples: int, params: FrameParams) -> int:
    return math.ceil(n_samples / params.hop) + 1


def stft(wave: Waveform, params: FrameParams | None = None) -> ComplexSpectrogram:
    """Short-time Fourier transform, one-sided (bins 0..fft_size/2)."""
    params = params or FrameParams()
    x = wave.samples
    if len(x) == 0:
        raise ValueError("cannot take the STFT of an empty waveform")
    hop, win_len = params.hop, params.window_length
    n_frames = n_frames_for(len(x), params)
    padded_len = (n_frames - 1) * hop + win_len
    front = win_len - hop
    padded = np.zeros(padded_len, dtype=np.float64)
    padded[front:front + len(x)] = x
    window = hann_window(win_len)
    strides = (hop * padded.strides[0], padded.strides[0])
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(n_frames, win_len), strides=strides)
    spectra = np.fft.rfft(frames * window, n=params.fft_size, axis=1)
    return ComplexSpectrogram(spectra.real.copy(), spectra.imag.copy(), params)


def istft(spec: ComplexSpectrogram, out_length: int) -> Waveform:
    """Inverse STFT by windowed overlap-add with squared-window normalization.

    Recovers up to n_frames * hop samples; longer requests are rejected.
    """
    params = spec.params
    hop, win_len = params.hop, params.window_length
    n_frames = spec.n_frames
    max_len = n_frames * hop
    if out_length > max_len:
        raise ValueError(
            f"requested {out_length} samples but {n_frames} frames support at most {max_len}")
    if out_length < 0:
        raise ValueError("out_length must be non-negative")
    window = hann_window(win_len)
    full = spec.real + 1j * spec.imag
    frames = np.fft.irfft(full, n=params.fft_size, axis=1)
    padded_len = (n_frames - 1) * hop + win_len
    acc = np.zeros(padded_len, dtype=np.float64)
    norm = np.zeros(padded_len, dtype=np.float64)
    wsq = window * window
    for m in range(n_frames):
        start = m * hop
        acc[start:start + win_len] += frames[m] * window
        norm[start:start + win_len] += wsq
    acc /= np.maximum(norm, 1e-10)
    front = win_len - hop
    return Waveform(acc[front:front + out_length])


def spec_to_tensor(spec: ComplexSpectrogram) -> Tensor:
    """Stack real/imag planes as a [2, T, n_bins-1] tensor (Nyquist dropped)."""
    stacked = np.stack([spec.real[:, :-1], spec.imag[:, :-1]], axis=0)
    return Tensor(stacked)


def tensor_to_spec(t: Tensor | np.ndarray,
                   params: FrameParams | None = None) -> ComplexSpectrogram:
    """Rebuild a spectrogram from a stacked [2, T, F] tensor.

    The Nyquist bin was dropped on the way in; it is restored as zero.
    """
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise ValueError(f"expected a [2, T, F] array, got shape {arr.shape}")
    T, F = arr.shape[1], arr.shape[2]
    real = np.zeros((T, F + 1), dtype=np.float64)
    imag = np.zeros((T, F + 1), dtype=np.float64)
    real[:, :F] = arr[0]
    imag[:, :F] = arr[1]
    return ComplexSpectrogram(real, imag, params or FrameParams())
