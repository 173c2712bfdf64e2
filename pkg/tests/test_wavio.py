"""WAV format acceptance/rejection and PCM conversion."""

import wave

import numpy as np
import pytest

from carn.dsp import Waveform
from carn.training import pseudo_speech
from carn.wavio import WavFormatError, read_wav, write_wav


def write_raw(path, rate=16000, channels=1, sampwidth=2, n=1600):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(sampwidth)
        wf.setframerate(rate)
        wf.writeframes(b"\x00" * (n * channels * sampwidth))


class TestRoundTrip:
    def test_write_read_within_quantization(self, rng, tmp_path):
        x = pseudo_speech(rng, 4000)
        path = tmp_path / "x.wav"
        write_wav(path, Waveform(x))
        back = read_wav(path)
        assert len(back) == len(x)
        assert np.max(np.abs(back.samples - x)) < 1.0 / 32767.0

    def test_pcm_conversion_rounds_half_away_from_zero(self, tmp_path):
        vals = np.array([0.5 / 32767.0, -0.5 / 32767.0, 1.0, -1.0])
        path = tmp_path / "r.wav"
        write_wav(path, Waveform(vals))
        with wave.open(str(path), "rb") as wf:
            pcm = np.frombuffer(wf.readframes(4), dtype="<i2")
        assert list(pcm) == [1, -1, 32767, -32767]

    def test_clamps_out_of_range(self, tmp_path):
        path = tmp_path / "c.wav"
        write_wav(path, Waveform(np.array([2.0, -2.0])))
        with wave.open(str(path), "rb") as wf:
            pcm = np.frombuffer(wf.readframes(2), dtype="<i2")
        assert list(pcm) == [32767, -32768]

    def test_refuses_non_finite(self, tmp_path):
        with pytest.raises(ValueError, match="non-finite"):
            write_wav(tmp_path / "nan.wav", Waveform(np.array([np.nan])))


class TestRejectionMatrix:
    def test_wrong_rate(self, tmp_path):
        path = tmp_path / "r8k.wav"
        write_raw(path, rate=8000)
        with pytest.raises(WavFormatError, match="sample rate=8000"):
            read_wav(path)

    def test_wrong_bits(self, tmp_path):
        path = tmp_path / "b8.wav"
        write_raw(path, sampwidth=1)
        with pytest.raises(WavFormatError, match="width=8 bit"):
            read_wav(path)

    def test_wrong_channels(self, tmp_path):
        path = tmp_path / "st.wav"
        write_raw(path, channels=2)
        with pytest.raises(WavFormatError, match="channels=2"):
            read_wav(path)

    def test_not_a_wav(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"definitely not RIFF data")
        with pytest.raises(WavFormatError, match="not a valid WAV"):
            read_wav(path)

    def test_sixty_second_guard(self, tmp_path):
        path = tmp_path / "long.wav"
        write_raw(path, n=61 * 16000)
        with pytest.raises(WavFormatError, match="60 s"):
            read_wav(path)

    def test_exactly_sixty_seconds_allowed(self, tmp_path):
        path = tmp_path / "ok.wav"
        write_raw(path, n=60 * 16000)
        assert len(read_wav(path)) == 60 * 16000
