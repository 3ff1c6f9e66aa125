"""Connector-click detection over a spectrogram.

The signature has two phases: a short broadband burst whose energy above
``burst_low_hz`` clears the rolling background by ``onset_threshold_db``, then
a band-limited tail inside ``tail_band_hz`` that stays elevated for a few
hundred milliseconds. Broadband factory transients can pass the burst gate but
have no tail, so the tail check is what separates the two classes.

All gating is relative to a causal per-band background estimate (trailing
median that excludes frames already flagged as event candidates), which makes
detection invariant to overall gain. A small absolute floor
(``silence_floor_db``, re full-scale power) keeps the relative thresholds
meaningful on digital silence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .audio_io import SampleBuffer
from .spectral import (
    Band,
    Spectrogram,
    _bands_within_nyquist,
    frame_band_powers,
    stft,
    third_octave_bands,
)

__all__ = [
    "ClickSignature",
    "NoiseEstimate",
    "DetectionEvent",
    "estimate_background",
    "detect_events",
    "snr_db",
    "ClickDetector",
]

Label = Literal["connection_click", "other_transient"]

_BLOCK_MAX = 2048  # frames per vectorized background block, grown adaptively
_STREAK = 4  # clean frames required before switching back to block mode


@dataclass(frozen=True)
class ClickSignature:
    """Gating template for the two-phase click shape.

    Durations are in seconds, thresholds in dB over the rolling background.
    ``silence_floor_db`` (re full-scale power, per band) is the absolute floor
    substituted when the background estimate is quieter than it.
    """

    burst_min_s: float = 0.02
    burst_max_s: float = 0.10
    burst_low_hz: float = 8000.0
    tail_band_hz: tuple[float, float] = (1000.0, 8000.0)
    tail_min_s: float = 0.10
    tail_max_s: float = 0.50
    onset_threshold_db: float = 12.0
    tail_threshold_db: float = 6.0
    silence_floor_db: float = -120.0

    def __post_init__(self) -> None:
        if not 0.0 < self.burst_min_s < self.burst_max_s:
            raise ValueError(f"need 0 < burst_min_s < burst_max_s, got ({self.burst_min_s}, {self.burst_max_s})")
        if not 0.0 < self.tail_min_s < self.tail_max_s:
            raise ValueError(f"need 0 < tail_min_s < tail_max_s, got ({self.tail_min_s}, {self.tail_max_s})")
        if self.onset_threshold_db <= 0.0 or self.tail_threshold_db <= 0.0:
            raise ValueError("thresholds must be positive dB values")
        lo, hi = self.tail_band_hz
        if not 0.0 < lo < hi:
            raise ValueError(f"tail_band_hz must be an increasing positive pair, got {self.tail_band_hz}")
        if self.burst_low_hz <= 0.0:
            raise ValueError(f"burst_low_hz must be positive, got {self.burst_low_hz}")
        if self.silence_floor_db >= 0.0:
            raise ValueError(f"silence_floor_db must be negative, got {self.silence_floor_db}")


@dataclass(frozen=True)
class NoiseEstimate:
    """Causal per-band background power, one row per spectrogram frame."""

    background_power: np.ndarray
    window_s: float


@dataclass(frozen=True)
class DetectionEvent:
    onset_s: float
    burst_duration_s: float
    tail_duration_s: float
    peak_snr_db: float
    score: float
    label: Label

    def __post_init__(self) -> None:
        if self.onset_s < 0 or self.burst_duration_s < 0 or self.tail_duration_s < 0:
            raise ValueError("event times and durations must be non-negative")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    def to_json_dict(self) -> dict:
        return {
            "onset_s": round(self.onset_s, 6),
            "burst_s": round(self.burst_duration_s, 6),
            "tail_s": round(self.tail_duration_s, 6),
            "snr_db": round(self.peak_snr_db, 4) if math.isfinite(self.peak_snr_db) else self.peak_snr_db,
            "score": round(self.score, 6),
            "label": self.label,
        }


def snr_db(event_power: float, background_power: float) -> float:
    """10*log10(event power / background power), both in linear power units.

    A zero background with positive event power returns +inf as a documented
    sentinel; zero event power returns -inf.
    """
    if event_power < 0 or background_power < 0:
        raise ValueError("powers must be non-negative")
    if background_power == 0.0:
        return math.inf if event_power > 0 else -math.inf
    if event_power == 0.0:
        return -math.inf
    return 10.0 * math.log10(event_power / background_power)


def _select_columns(
    bands: Sequence[Band], sig: ClickSignature, sample_rate_hz: int
) -> tuple[list[int], list[int]]:
    # Burst bands must lie entirely above burst_low_hz so a band-limited tail
    # cannot keep the burst gate alive. Tail bands are selected by center
    # (closed interval): the grid's "8 kHz band" is centered at 8000 Hz, and
    # it is where the tail clears a low-frequency-heavy floor most readily.
    nyquist = sample_rate_hz / 2.0 * (1.0 + 1e-12)
    burst_cols = [
        i for i, b in enumerate(bands) if b.lower_hz >= sig.burst_low_hz and b.upper_hz <= nyquist
    ]
    lo, hi = sig.tail_band_hz
    tail_cols = [
        i
        for i, b in enumerate(bands)
        if lo <= b.center_hz <= hi and b.upper_hz <= nyquist and i not in burst_cols
    ]
    return burst_cols, tail_cols


def _background_and_flags(
    band_power: np.ndarray,
    burst_cols: Sequence[int],
    tail_cols: Sequence[int],
    sig: ClickSignature,
    win: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Causal trailing-median background plus per-frame gate flags.

    Frame t's background is the per-band median over clean (never-flagged)
    frames within the trailing ``win`` frames; flagged frames are excluded so
    the events being detected cannot inflate their own reference. The pass is
    sequential by construction: clean stretches run in vectorized blocks whose
    size doubles while nothing is flagged, and the neighborhoods of flagged
    frames fall back to a scalar loop. Flagged rows are stored as +inf so a
    single multi-index partition yields every window's median of clean rows.
    """
    T, nb = band_power.shape
    onset_ratio = 10.0 ** (sig.onset_threshold_db / 10.0)
    tail_ratio = 10.0 ** (sig.tail_threshold_db / 10.0)
    floor = 10.0 ** (sig.silence_floor_db / 10.0)
    burst_ix = np.asarray(burst_cols, dtype=np.intp)
    tail_ix = np.asarray(tail_cols, dtype=np.intp)
    n_burst = burst_ix.size

    burst_total = band_power[:, burst_ix].sum(axis=1) if n_burst else None
    burst_floor = floor * max(n_burst, 1)
    tail_power = band_power[:, tail_ix] if tail_ix.size else None

    work = band_power.copy()  # flagged frames become +inf rows
    is_clean = np.ones(T, dtype=bool)
    bg = np.empty_like(band_power)
    burst_mask = np.zeros(T, dtype=bool)
    tail_mask = np.zeros(T, dtype=bool)
    flag_idx: list[int] = []
    last_bg = band_power[0].copy()

    t = 0
    streak = 0
    block = 64
    while t < T:
        if streak >= _STREAK and t >= win and t + 8 <= T:
            end = min(T, t + block)
            lo = t - win
            view = np.lib.stride_tricks.sliding_window_view(work[lo:end], (win, nb))[: end - t, 0]
            rows = np.arange(end - t)
            flags = np.asarray(flag_idx)  # all < t by construction
            n_flagged = np.searchsorted(flags, rows + t) - np.searchsorted(flags, rows + t - win)
            clean_count = win - n_flagged  # >= streak >= _STREAK
            k_lo = (clean_count - 1) // 2
            k_hi = clean_count // 2
            part = np.partition(view, np.unique(np.concatenate((k_lo, k_hi))), axis=1)
            med = 0.5 * (part[rows, k_lo] + part[rows, k_hi])
            if n_burst:
                ref = np.maximum(med[:, burst_ix].sum(axis=1), burst_floor)
                bflag = burst_total[t:end] >= onset_ratio * ref
            else:
                bflag = np.zeros(end - t, dtype=bool)
            if tail_ix.size:
                ref_t = np.maximum(med[:, tail_ix], floor)
                tflag = (tail_power[t:end] >= tail_ratio * ref_t).any(axis=1)
            else:
                tflag = np.zeros(end - t, dtype=bool)
            flagged = bflag | tflag
            k = int(np.argmax(flagged)) if flagged.any() else end - t
            stop = t + k
            bg[t:stop] = med[:k]
            burst_mask[t:stop] = bflag[:k]
            tail_mask[t:stop] = tflag[:k]
            if stop < end:  # first flagged frame of the block
                bg[stop] = med[k]
                burst_mask[stop] = bflag[k]
                tail_mask[stop] = tflag[k]
                work[stop] = np.inf
                is_clean[stop] = False
                flag_idx.append(stop)
                last_bg = med[k]
                streak = 0
                block = 64  # events cut blocks short; restart small
                t = stop + 1
            else:
                if k:
                    last_bg = med[k - 1]
                streak += k
                block = min(block * 2, _BLOCK_MAX)
                t = end
            continue

        # scalar path: warmup, and the neighborhood of flagged frames
        lo = max(0, t - win)
        if t == 0:
            cur = band_power[0].copy()
        else:
            window = band_power[lo:t][is_clean[lo:t]]
            cur = np.median(window, axis=0) if window.size else last_bg
        bg[t] = cur
        last_bg = cur
        bhit = False
        if n_burst:
            ref = max(float(cur[burst_ix].sum()), burst_floor)
            bhit = bool(burst_total[t] >= onset_ratio * ref)
        thit = False
        if tail_ix.size:
            ref_t = np.maximum(cur[tail_ix], floor)
            thit = bool((tail_power[t] >= tail_ratio * ref_t).any())
        burst_mask[t] = bhit
        tail_mask[t] = thit
        if bhit or thit:
            work[t] = np.inf
            is_clean[t] = False
            flag_idx.append(t)
            streak = 0
        else:
            streak += 1
        t += 1

    return bg, burst_mask, tail_mask


def estimate_background(
    spec: Spectrogram,
    bands: Sequence[Band],
    window_s: float = 2.0,
    signature: ClickSignature | None = None,
) -> NoiseEstimate:
    """Per-frame background power for each band (see module docstring).

    ``signature`` supplies the thresholds used to flag event-candidate frames
    for exclusion; detector defaults apply when omitted.
    """
    if window_s < 1.0:
        raise ValueError(f"window_s must be at least 1.0 s, got {window_s}")
    if spec.n_frames < 2:
        raise ValueError(f"need at least 2 frames, got {spec.n_frames}")
    sig = signature if signature is not None else ClickSignature()
    burst_cols, tail_cols = _select_columns(bands, sig, spec.sample_rate_hz)
    band_power = frame_band_powers(spec, bands)
    win = max(2, round(window_s / spec.frame_hop_s))
    bg, _, _ = _background_and_flags(band_power, burst_cols, tail_cols, sig, win)
    return NoiseEstimate(bg, window_s)


def _mask_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    edges = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))


def _run_duration_s(n_frames: int, spec: Spectrogram) -> float:
    # n_frames qualifying windows span the event plus ~one window of smear;
    # subtracting (window - hop) undoes the smear in expectation.
    samples = n_frames * spec.hop + spec.hop - spec.window_len
    return max(spec.hop, samples) / spec.sample_rate_hz


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def detect_events(
    spec: Spectrogram,
    sig: ClickSignature,
    bands: Sequence[Band],
    background_window_s: float = 2.0,
    merge_window_s: float = 0.5,
) -> list[DetectionEvent]:
    """Detect and classify click events; returns events sorted by onset.

    Pipeline per the signature: (1) frames whose summed power in bands at or
    above ``burst_low_hz`` clears the background by ``onset_threshold_db`` are
    onset candidates; (2) a maximal run of such frames is kept if its duration
    lies in [burst_min_s, burst_max_s]; (3) after the burst, per-band power
    inside ``tail_band_hz`` must clear the background by ``tail_threshold_db``
    (any band, so the tail registers wherever it clears the colored floor) for
    a duration in [tail_min_s, tail_max_s] -- frames that re-trigger the burst
    gate belong to a new event and terminate the tail; (4) score mixes burst
    SNR (20 dB => 1.0) and tail duration (0.3 s => 1.0) equally; (5) the event
    is a connection_click iff the tail check passed and score >= 0.5;
    (6) events with onsets closer than ``merge_window_s`` are merged keeping
    the higher score (ties keep the earlier onset).
    """
    hop_s = spec.frame_hop_s
    if hop_s > sig.burst_min_s:
        raise ValueError(
            f"frame hop {hop_s:.4f} s too coarse to gate a {sig.burst_min_s:.3f} s burst"
        )
    nyquist = spec.sample_rate_hz / 2.0
    if sig.tail_band_hz[1] > nyquist * (1.0 + 1e-12):
        raise ValueError(f"tail band {sig.tail_band_hz} extends above Nyquist ({nyquist} Hz)")
    burst_cols, tail_cols = _select_columns(bands, sig, spec.sample_rate_hz)
    if not burst_cols:
        raise ValueError(f"no band lies fully between burst_low_hz={sig.burst_low_hz} Hz and Nyquist")
    if not tail_cols:
        raise ValueError(f"no band centered inside tail_band_hz={sig.tail_band_hz}")

    # Median estimation is the hot path; run it only over the gated bands.
    med_cols = sorted(set(burst_cols) | set(tail_cols))
    remap = {col: i for i, col in enumerate(med_cols)}
    band_power = frame_band_powers(spec, bands)[:, med_cols]
    win = max(2, round(background_window_s / hop_s))
    bg, burst_mask, tail_mask = _background_and_flags(
        band_power,
        [remap[c] for c in burst_cols],
        [remap[c] for c in tail_cols],
        sig,
        win,
    )

    floor = 10.0 ** (sig.silence_floor_db / 10.0)
    burst_sub = [remap[c] for c in burst_cols]
    burst_total = band_power[:, burst_sub].sum(axis=1)
    bg_burst = np.maximum(bg[:, burst_sub].sum(axis=1), floor * len(burst_cols))

    T = spec.n_frames
    events: list[DetectionEvent] = []
    for start, stop in _mask_runs(burst_mask):
        burst_dur = _run_duration_s(stop - start, spec)
        if not sig.burst_min_s <= burst_dur <= sig.burst_max_s:
            continue
        u = stop
        while u < T and tail_mask[u] and not burst_mask[u]:
            u += 1
        tail_frames = u - stop
        tail_dur = _run_duration_s(tail_frames, spec) if tail_frames else 0.0
        tail_ok = sig.tail_min_s <= tail_dur <= sig.tail_max_s

        reference = float(bg_burst[start])
        excess = float(burst_total[start:stop].max()) - reference
        peak_snr = snr_db(max(excess, 0.0), reference)
        score = 0.5 * _clamp01(peak_snr / 20.0) + 0.5 * _clamp01(tail_dur / 0.3)
        label: Label = "connection_click" if tail_ok and score >= 0.5 else "other_transient"
        onset_s = max(0, start * spec.hop + spec.window_len - spec.hop) / spec.sample_rate_hz
        events.append(
            DetectionEvent(onset_s, burst_dur, tail_dur, peak_snr, score, label)
        )

    return _merge_events(events, merge_window_s)


def _merge_events(events: list[DetectionEvent], merge_window_s: float) -> list[DetectionEvent]:
    """Collapse chains of events with onset gaps < merge_window_s to the best one."""
    if not events:
        return []
    events = sorted(events, key=lambda e: e.onset_s)
    merged: list[DetectionEvent] = []
    cluster = [events[0]]
    for event in events[1:]:
        if event.onset_s - cluster[-1].onset_s < merge_window_s:
            cluster.append(event)
        else:
            merged.append(max(cluster, key=lambda e: (e.score, -e.onset_s)))
            cluster = [event]
    merged.append(max(cluster, key=lambda e: (e.score, -e.onset_s)))
    return merged


class ClickDetector:
    """Estimator-style detector: parameters at construction, `predict` on audio.

    Follows the scikit-learn parameter protocol (`get_params` / `set_params`,
    parameters stored verbatim under their constructor names, stateless
    `fit`), so instances compose with that ecosystem's tooling. `detect` is
    the domain-named alias for `predict`.
    """

    _PARAM_NAMES = (
        "burst_min_s",
        "burst_max_s",
        "burst_low_hz",
        "tail_band_hz",
        "tail_min_s",
        "tail_max_s",
        "onset_threshold_db",
        "tail_threshold_db",
        "silence_floor_db",
        "background_window_s",
        "merge_window_s",
        "window_len",
        "hop",
        "band_min_hz",
    )

    def __init__(
        self,
        *,
        burst_min_s: float = 0.02,
        burst_max_s: float = 0.10,
        burst_low_hz: float = 8000.0,
        tail_band_hz: tuple[float, float] = (1000.0, 8000.0),
        tail_min_s: float = 0.10,
        tail_max_s: float = 0.50,
        onset_threshold_db: float = 12.0,
        tail_threshold_db: float = 6.0,
        silence_floor_db: float = -120.0,
        background_window_s: float = 2.0,
        merge_window_s: float = 0.5,
        window_len: int = 1024,
        hop: int = 256,
        band_min_hz: float = 100.0,
    ) -> None:
        self.burst_min_s = burst_min_s
        self.burst_max_s = burst_max_s
        self.burst_low_hz = burst_low_hz
        self.tail_band_hz = tail_band_hz
        self.tail_min_s = tail_min_s
        self.tail_max_s = tail_max_s
        self.onset_threshold_db = onset_threshold_db
        self.tail_threshold_db = tail_threshold_db
        self.silence_floor_db = silence_floor_db
        self.background_window_s = background_window_s
        self.merge_window_s = merge_window_s
        self.window_len = window_len
        self.hop = hop
        self.band_min_hz = band_min_hz

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "ClickDetector":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r} for ClickDetector")
            setattr(self, name, value)
        return self

    def signature(self) -> ClickSignature:
        return ClickSignature(
            burst_min_s=self.burst_min_s,
            burst_max_s=self.burst_max_s,
            burst_low_hz=self.burst_low_hz,
            tail_band_hz=tuple(self.tail_band_hz),
            tail_min_s=self.tail_min_s,
            tail_max_s=self.tail_max_s,
            onset_threshold_db=self.onset_threshold_db,
            tail_threshold_db=self.tail_threshold_db,
            silence_floor_db=self.silence_floor_db,
        )

    def fit(self, X=None, y=None) -> "ClickDetector":
        """Stateless; validates parameters and returns self."""
        self.signature()
        if self.background_window_s < 1.0:
            raise ValueError("background_window_s must be at least 1.0 s")
        if self.merge_window_s <= 0:
            raise ValueError("merge_window_s must be positive")
        return self

    def bands_for(self, sample_rate_hz: int) -> list[Band]:
        bands = third_octave_bands(self.band_min_hz, sample_rate_hz / 2.0)
        return _bands_within_nyquist(bands, sample_rate_hz)

    def predict(self, buffer: SampleBuffer) -> list[DetectionEvent]:
        self.fit()
        spec = stft(buffer, self.window_len, self.hop)
        return detect_events(
            spec,
            self.signature(),
            self.bands_for(buffer.sample_rate_hz),
            background_window_s=self.background_window_s,
            merge_window_s=self.merge_window_s,
        )

    def detect(self, buffer: SampleBuffer) -> list[DetectionEvent]:
        return self.predict(buffer)
