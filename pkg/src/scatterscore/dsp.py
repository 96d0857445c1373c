"""Audio I/O and magnitude spectrograms for the spectrogram branch."""
from __future__ import annotations

import os
import wave
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CorruptFile, InputTooShort, NotFound, UnsupportedFormat

EXPECTED_RATE = 16000
PCM_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = EXPECTED_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("audio must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """T x (window/2 + 1) matrix of STFT magnitudes."""

    values: np.ndarray
    window: int = 512
    hop: int = 256

    @property
    def frames(self):
        return self.values.shape[0]

    @property
    def bins(self):
        return self.values.shape[1]


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM mono WAV file.

    Samples are divided by 32768 so that the full int16 range maps onto
    [-1, 1).
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise NotFound(f"no such file: {path}")
    try:
        with wave.open(path, "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg or "bad sample width" in msg:
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptFile(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise CorruptFile(f"{path}: truncated header") from exc
    if channels != 1:
        raise UnsupportedFormat(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise UnsupportedFormat(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if len(raw) != n_frames * width or n_frames == 0:
        raise CorruptFile(
            f"{path}: data chunk holds {len(raw)} bytes, header declares {n_frames * width}"
        )
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioBuffer(samples, rate)


def write_wav(path, audio: AudioBuffer):
    """Write ``audio`` as 16-bit PCM; values are clipped to the int16 range."""
    pcm = np.clip(np.round(audio.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(audio.sample_rate))
        wf.writeframes(pcm.tobytes())


def hann_periodic(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples, window, hop):
    """Frames ``[f*hop, f*hop + window)`` without padding, shape (T, window)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < window:
        raise InputTooShort(f"signal has {samples.size} samples, window needs {window}")
    return sliding_window_view(samples, window)[::hop]


def stft_magnitude(audio: AudioBuffer, window=512, hop=256) -> Spectrogram:
    """Magnitude STFT with a periodic Hann window and no centering.

    Frame count is ``(len - window) // hop + 1``; bins ``0 .. window // 2``.
    """
    if window < 1 or hop < 1:
        raise ValueError("window and hop must be positive")
    frames = frame_signal(audio.samples, window, hop) * hann_periodic(window)
    mag = np.abs(np.fft.rfft(frames, axis=1))
    return Spectrogram(mag, window, hop)
