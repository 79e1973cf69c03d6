"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
_SCALE = 32768.0


class AudioFormatError(ValueError):
    pass


def read_wav(path: str | Path, expected_rate: int | None = SAMPLE_RATE) -> tuple[np.ndarray, int]:
    """Samples as float64 in [-1, 1) and the sample rate."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels, width, rate, n = wf.getnchannels(), wf.getsampwidth(), wf.getframerate(), wf.getnframes()
            raw = wf.readframes(n)
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: {exc}") from None
    if channels != 1 or width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit mono PCM, got {channels} ch / {8 * width}-bit")
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError(f"{path}: sample rate {rate} != {expected_rate} (no implicit resampling)")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / _SCALE, rate


def wav_duration(path: str | Path) -> float:
    with wave.open(str(path), "rb") as wf:
        return wf.getnframes() / wf.getframerate()


def to_pcm16(samples: np.ndarray) -> tuple[np.ndarray, int]:
    """Quantize to int16; returns the samples and how many were clipped."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * _SCALE)
    clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
    return np.clip(scaled, -32768, 32767).astype("<i2"), clipped


def write_wav(path: str | Path, samples: np.ndarray, rate: int = SAMPLE_RATE) -> int:
    """Write float samples as 16-bit PCM; returns the clipped-sample count."""
    pcm, clipped = to_pcm16(samples)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())
    return clipped
