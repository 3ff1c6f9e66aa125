"""Spectrograms and 1/3-octave band power profiles.

Two representations drive everything downstream: a Hann-windowed power
spectrogram for event detection, and base-2 1/3-octave band powers (centers at
1000 * 2^(n/3) Hz) for noise characterization. Power is referenced to digital
full scale (a full-scale white signal has total power ~1.0, i.e. ~0 dB); no
calibrated SPL is involved anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .audio_io import SampleBuffer

__all__ = [
    "Band",
    "BandPowerProfile",
    "Spectrogram",
    "stft",
    "third_octave_bands",
    "band_powers",
    "frame_band_powers",
    "spectrogram_image",
]

_DB_FLOOR_POWER = 1e-30  # -300 dB, stands in for log(0)


class Band(NamedTuple):
    """One 1/3-octave band: center and half-open [lower, upper) edge pair."""

    center_hz: float
    lower_hz: float
    upper_hz: float


@dataclass(frozen=True)
class Spectrogram:
    """Time x frequency power matrix with frame metadata.

    ``power[k, j]`` is one-sided |DFT|^2 of the k-th Hann-windowed frame
    (interior bins doubled so each frame satisfies Parseval). Frame k covers
    samples [k*hop, k*hop + window_len).
    """

    power: np.ndarray
    hop: int
    window_len: int
    sample_rate_hz: int

    def __post_init__(self) -> None:
        if self.power.ndim != 2 or self.power.shape[1] != self.window_len // 2 + 1:
            raise ValueError("power must be [n_frames x (window_len/2 + 1)]")

    @property
    def n_frames(self) -> int:
        return self.power.shape[0]

    @property
    def n_bins(self) -> int:
        return self.power.shape[1]

    @property
    def frame_hop_s(self) -> float:
        return self.hop / self.sample_rate_hz

    @property
    def bin_frequencies_hz(self) -> np.ndarray:
        return np.arange(self.n_bins) * (self.sample_rate_hz / self.window_len)


@dataclass(frozen=True)
class BandPowerProfile:
    """1/3-octave band centers with summed power in dB re full-scale 1.0."""

    bands: tuple[Band, ...]
    power_db: np.ndarray

    def as_csv(self) -> str:
        lines = ["center_hz,power_db"]
        for band, db in zip(self.bands, self.power_db):
            lines.append(f"{band.center_hz:.6g},{db:.4f}")
        return "\n".join(lines) + "\n"


def _hann(window_len: int) -> np.ndarray:
    # Periodic Hann: sum(w^2) = 3N/8 exactly, which keeps the overlap
    # correction in the Parseval check closed-form.
    n = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)


def _onesided_power(frames: np.ndarray) -> np.ndarray:
    spectrum = np.fft.rfft(frames, axis=-1)
    power = np.abs(spectrum) ** 2
    if frames.shape[-1] % 2 == 0:
        power[..., 1:-1] *= 2.0  # DC and Nyquist appear once
    else:
        power[..., 1:] *= 2.0
    return power


def stft(buffer: SampleBuffer, window_len: int = 1024, hop: int = 256) -> Spectrogram:
    """Hann-windowed power spectrogram.

    ``n_frames = floor((len - window_len) / hop) + 1``; trailing samples that
    do not fill a window are dropped. Defaults give ~21.3 ms windows with
    ~5.3 ms hops at 48 kHz, enough temporal resolution to gate a 50 ms burst.
    """
    if window_len < 64 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two >= 64, got {window_len}")
    if not 0 < hop <= window_len:
        raise ValueError(f"hop must be in (0, window_len], got {hop}")
    x = buffer.samples
    if x.size < window_len:
        raise ValueError(f"buffer has {x.size} samples, shorter than one {window_len}-sample window")
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len)[::hop]
    power = _onesided_power(frames * _hann(window_len))
    return Spectrogram(power, hop, window_len, buffer.sample_rate_hz)


def third_octave_bands(min_hz: float, max_hz: float) -> list[Band]:
    """All base-2 1/3-octave bands whose centers lie in [min_hz, max_hz].

    Centers are 1000 * 2^(n/3) Hz for integer n; edges are center * 2^(-+1/6),
    so adjacent bands tile the axis exactly.
    """
    if not 0 < min_hz < max_hz:
        raise ValueError(f"need 0 < min_hz < max_hz, got ({min_hz}, {max_hz})")
    # 1e-9 relative slack so exact centers (e.g. 1000.0) land inside the range.
    n_lo = math.ceil(3.0 * math.log2(min_hz / 1000.0) - 1e-9)
    n_hi = math.floor(3.0 * math.log2(max_hz / 1000.0) + 1e-9)
    bands = [
        Band(center, center * 2.0 ** (-1.0 / 6.0), center * 2.0 ** (1.0 / 6.0))
        for n in range(n_lo, n_hi + 1)
        for center in (1000.0 * 2.0 ** (n / 3.0),)
    ]
    if not bands:
        raise ValueError(f"no 1/3-octave center falls in [{min_hz}, {max_hz}] Hz")
    return bands


def _bands_within_nyquist(bands: Sequence[Band], sample_rate_hz: int) -> list[Band]:
    nyquist = sample_rate_hz / 2.0
    return [b for b in bands if b.upper_hz <= nyquist * (1.0 + 1e-12)]


def band_powers(buffer: SampleBuffer, bands: Sequence[Band]) -> BandPowerProfile:
    """Sum full-buffer periodogram power into 1/3-octave bands, in dB.

    Each periodogram bin belongs to exactly one band (bin center frequency in
    the half-open [lower, upper) interval). Bands reaching above Nyquist are
    absent from the result rather than reported as zero.
    """
    if buffer.duration_s < 1.0:
        raise ValueError(f"need at least 1 s of audio for a stable estimate, got {buffer.duration_s:.3f} s")
    kept = _bands_within_nyquist(bands, buffer.sample_rate_hz)
    if not kept:
        raise ValueError("every band lies above Nyquist")
    x = buffer.samples
    n = x.size
    periodogram = _onesided_power(x[np.newaxis, :])[0] / (n * n)  # sums to mean(x^2)
    freqs = np.arange(periodogram.size) * (buffer.sample_rate_hz / n)
    power_db = np.empty(len(kept))
    for i, band in enumerate(kept):
        j0, j1 = np.searchsorted(freqs, (band.lower_hz, band.upper_hz), side="left")
        total = float(periodogram[j0:j1].sum())
        power_db[i] = 10.0 * math.log10(max(total, _DB_FLOOR_POWER))
    return BandPowerProfile(tuple(kept), power_db)


def frame_band_powers(spec: Spectrogram, bands: Sequence[Band]) -> np.ndarray:
    """Per-frame band powers [n_frames x n_bands] in mean-square units.

    Normalized by N * sum(hann^2) so stationary noise of variance s^2 yields
    band powers summing to ~s^2, directly comparable with ``band_powers``.
    """
    freqs = spec.bin_frequencies_hz
    window = _hann(spec.window_len)
    norm = spec.window_len * float(np.sum(window**2))
    columns = np.zeros((spec.n_bins, len(bands)))
    for i, band in enumerate(bands):
        j0, j1 = np.searchsorted(freqs, (band.lower_hz, band.upper_hz), side="left")
        columns[j0:j1, i] = 1.0
    return (spec.power @ columns) / norm


def spectrogram_image(spec: Spectrogram, path: str | Path, db_floor: float = -80.0) -> None:
    """Write the spectrogram as a grayscale PGM (P5) image.

    One column per frame, one row per bin with low frequencies at the bottom.
    Power is mapped log-scale relative to the spectrogram's peak: db_floor and
    below -> 0, 0 dB (the peak) -> 255. An all-zero spectrogram is all black.
    """
    if db_floor >= 0:
        raise ValueError(f"db_floor must be negative, got {db_floor}")
    peak = float(spec.power.max(initial=0.0))
    if peak > 0.0:
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(spec.power / peak)
        scaled = np.clip(1.0 - db / db_floor, 0.0, 1.0)
    else:
        scaled = np.zeros_like(spec.power)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    # rows top->bottom = bins high->low; columns left->right = frames
    image = pixels.T[::-1]
    header = f"P5\n{spec.n_frames} {spec.n_bins}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())
