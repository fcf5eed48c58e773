"""STFT magnitude spectrograms.

The transform is a hand-written iterative radix-2 FFT (bit-reversal
permutation, then in-place butterfly stages) applied to Hann-windowed
frames that are zero-padded from frame_length up to fft_length.  Only
the non-negative frequency bins are kept, so a 16000-sample clip under
the defaults comes out as a (124, 129) magnitude array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError, SizeError, TooShortError
from .wav_io import AudioClip

WINDOW_KINDS = ("hann", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    frame_length: int = 255
    frame_step: int = 128
    fft_length: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_length < 1:
            raise ConfigError(f"frame_length must be >= 1, got {self.frame_length}")
        if not 0 < self.frame_step <= self.frame_length:
            raise ConfigError(
                f"frame_step must be in [1, frame_length], got {self.frame_step}"
            )
        n = self.fft_length
        if n < self.frame_length:
            raise ConfigError(f"fft_length {n} shorter than frame_length {self.frame_length}")
        if n < 1 or n & (n - 1):
            raise ConfigError(f"fft_length must be a power of two, got {n}")
        if self.window not in WINDOW_KINDS:
            raise ConfigError(f"unknown window {self.window!r}, want one of {WINDOW_KINDS}")

    @property
    def num_bins(self) -> int:
        return self.fft_length // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_length:
            raise TooShortError(
                f"need at least {self.frame_length} samples, got {num_samples}"
            )
        return (num_samples - self.frame_length) // self.frame_step + 1


@dataclass
class Spectrogram:
    """Magnitudes, frames along axis 0 and frequency bins along axis 1."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeError(f"spectrogram must be 2-D, got shape {self.values.shape}")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]


def window_coefficients(kind: str, n: int) -> np.ndarray:
    """Analysis window of length n: periodic Hann or all-ones."""
    if n < 1:
        raise ConfigError(f"window length must be >= 1, got {n}")
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if kind == "rectangular":
        return np.ones(n)
    raise ConfigError(f"unknown window {kind!r}, want one of {WINDOW_KINDS}")


@lru_cache(maxsize=16)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(x) -> np.ndarray:
    """Radix-2 DIT FFT along the last axis; length must be a power of two."""
    a = np.asarray(x)
    if a.ndim == 0:
        raise SizeError("fft input must have at least one axis")
    n = a.shape[-1]
    if n < 1 or n & (n - 1):
        raise SizeError(f"fft length must be a power of two, got {n}")
    out = np.ascontiguousarray(a[..., _bit_reversal(n)], dtype=np.complex128)
    half = 1
    while half < n:
        # butterflies for all blocks of width 2*half at once
        tw = np.exp(-1j * np.pi * np.arange(half) / half)
        blocks = out.reshape(out.shape[:-1] + (n // (2 * half), 2 * half))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        upper = even + odd
        lower = even - odd
        blocks[..., :half] = upper
        blocks[..., half:] = lower
        half *= 2
    return out


def ifft(x) -> np.ndarray:
    """Inverse of fft via the conjugation identity."""
    a = np.asarray(x)
    return np.conj(fft(np.conj(a))) / a.shape[-1]


def stft_magnitude(clip, cfg: StftConfig | None = None, dtype=np.float32) -> Spectrogram:
    """Magnitude spectrogram of a clip (or bare 1-D sample array).

    Frames are extracted at frame_step hops, windowed, zero-padded to
    fft_length and transformed; bins above fft_length/2 are dropped.
    Raises TooShortError if the signal is shorter than one frame.
    """
    if cfg is None:
        cfg = StftConfig()
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    num_frames = cfg.num_frames(len(samples))

    idx = np.arange(num_frames)[:, None] * cfg.frame_step + np.arange(cfg.frame_length)
    frames = samples[idx] * window_coefficients(cfg.window, cfg.frame_length)
    padded = np.zeros((num_frames, cfg.fft_length), dtype=np.complex128)
    padded[:, : cfg.frame_length] = frames
    mags = np.abs(fft(padded))[:, : cfg.num_bins]
    return Spectrogram(mags.astype(dtype))


def _shortest(v) -> str:
    # shortest decimal string that round-trips for the value's dtype
    return np.format_float_positional(v, trim="-")


def export_spectrogram(spec: Spectrogram, path, fmt: str) -> None:
    """Write a spectrogram as 'csv' (raw values) or 'pgm' (8-bit image).

    The PGM mapping is log1p followed by min-max scaling to 0..255,
    with time running down the vertical axis; a constant spectrogram
    maps to all zeros.
    """
    path = Path(path)
    if fmt == "csv":
        lines = []
        for row in spec.values:
            lines.append(",".join(_shortest(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "pgm":
        logv = np.log1p(spec.values.astype(np.float64))
        lo, hi = logv.min(), logv.max()
        if hi > lo:
            pixels = np.rint((logv - lo) / (hi - lo) * 255.0).astype(np.uint8)
        else:
            pixels = np.zeros_like(logv, dtype=np.uint8)
        header = f"P5\n{spec.num_bins} {spec.num_frames}\n255\n".encode("ascii")
        path.write_bytes(header + pixels.tobytes())
    else:
        raise ConfigError(f"unknown export format {fmt!r}, want 'csv' or 'pgm'")
