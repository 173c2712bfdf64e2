"""WAV reading/writing for the one accepted format: 16-bit PCM mono 16 kHz.

Anything else is rejected with a diagnostic naming the offending field.
Float -> PCM conversion scales by 32767, rounds half away from zero, and
clamps; reading divides by 32768.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, Waveform

MAX_SECONDS = 60.0  # whole-clip processing guard; streaming is out of scope


class WavFormatError(Exception):
    pass


def read_wav(path) -> Waveform:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            comptype = wf.getcomptype()
            n_frames = wf.getnframes()
            if channels != 1:
                raise WavFormatError(
                    f"{path.name}: channels={channels}, expected mono (1)")
            if sampwidth != 2:
                raise WavFormatError(
                    f"{path.name}: sample width={8 * sampwidth} bit, expected 16 bit")
            if rate != SAMPLE_RATE:
                raise WavFormatError(
                    f"{path.name}: sample rate={rate} Hz, expected {SAMPLE_RATE} Hz")
            if comptype != "NONE":
                raise WavFormatError(
                    f"{path.name}: compression={comptype}, expected uncompressed PCM")
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        raise WavFormatError(f"{path.name}: not a valid WAV file ({exc})") from exc
    if n_frames / SAMPLE_RATE > MAX_SECONDS:
        raise WavFormatError(
            f"{path.name}: {n_frames / SAMPLE_RATE:.1f} s exceeds the {MAX_SECONDS:.0f} s "
            "whole-clip limit; split the file first (streaming is unsupported)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0)


def write_wav(path, wave_out: Waveform) -> None:
    samples = np.asarray(wave_out.samples, dtype=np.float64)
    if not np.isfinite(samples).all():
        raise ValueError("refusing to write non-finite samples")
    scaled = samples * 32767.0
    pcm = np.copysign(np.floor(np.abs(scaled) + 0.5), scaled)  # half away from zero
    pcm = np.clip(pcm, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(pcm.tobytes())
