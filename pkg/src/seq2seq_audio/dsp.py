"""Log-Mel spectrogram front end.

Audio is cut into periodic-Hamming-windowed frames with 50% overlap, turned
into a power spectrum, projected onto an HTK-scale triangular Mel filterbank
and expressed in dB relative to the loudest bin of the instance. Values below
an optional (negative) dB threshold are clipped before the matrix is mapped
affinely onto [-1, 1].
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile

DB_FLOOR = -120.0
CLIP_THRESHOLDS = (-70.0, -60.0, -50.0, -40.0)
MAGIC = b"MELS1"


class InvalidInputError(ValueError):
    pass


class TooShortError(ValueError):
    pass


class ContainerFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrogramConfig:
    window_width_s: float = 0.04
    overlap_fraction: float = 0.5
    n_mels: int = 128
    clip_threshold_db: float | None = None
    sample_rate: int = 16000

    def __post_init__(self):
        if not self.window_width_s > 0:
            raise ValueError("window_width_s must be positive")
        if not 0 < self.overlap_fraction < 1:
            raise ValueError("overlap_fraction must lie in (0, 1)")
        if self.n_mels < 1:
            raise ValueError("n_mels must be at least 1")
        if self.clip_threshold_db is not None and not self.clip_threshold_db < 0:
            raise ValueError("clip_threshold_db must be negative")
        if self.sample_rate < 1:
            raise ValueError("sample_rate must be positive")

    def window_length(self, sample_rate: int | None = None) -> int:
        return int(round(self.window_width_s * (sample_rate or self.sample_rate)))

    def hop_length(self, sample_rate: int | None = None) -> int:
        return max(1, int(round((1 - self.overlap_fraction) * self.window_length(sample_rate))))


@dataclass
class Spectrogram:
    instance_id: str
    frames: np.ndarray          # (T, n_mels) float32 in [-1, 1]
    config: SpectrogramConfig

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hamming_window(n: int) -> np.ndarray:
    """Periodic Hamming window ``0.54 - 0.46 cos(2 pi k / n)``."""
    if n < 1:
        raise ValueError("window length must be at least 1")
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft_bins: int, n_mels: int, sample_rate: float) -> np.ndarray:
    """Triangular HTK-Mel filters sampled at the FFT bin frequencies.

    Filter edges and centres are equally spaced in Mel between 0 Hz and
    Nyquist. Each row is rescaled so its largest sample is exactly 1, which
    keeps narrow low-frequency filters usable when they fall between bins.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")
    if n_fft_bins < n_mels:
        raise ValueError(f"{n_mels} mel bands need at least as many FFT bins, got {n_fft_bins}")
    nyquist = sample_rate / 2.0
    freqs = np.linspace(0.0, nyquist, n_fft_bins)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(nyquist), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1)
    if np.any(peaks <= 0):
        empty = int(np.argmin(peaks))
        raise ValueError(f"mel band {empty} covers no FFT bin: n_mels={n_mels} exceeds usable bins")
    return fb / peaks[:, None]


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def frame_count(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def _to_mono(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    elif x.ndim != 1:
        raise InvalidInputError(f"expected mono or (n, channels) audio, got shape {x.shape}")
    return x


def extract_mel_spectrogram(samples, sample_rate: int, config: SpectrogramConfig) -> np.ndarray:
    """Mel power spectrogram in dB relative to the per-instance maximum, (T, n_mels)."""
    x = _to_mono(samples)
    if x.size == 0:
        raise InvalidInputError("empty signal")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("signal contains NaN or Inf")
    win = config.window_length(sample_rate)
    hop = config.hop_length(sample_rate)
    T = frame_count(x.size, win, hop)
    if win < 1 or T < 1:
        raise TooShortError(f"{x.size} samples cannot hold one {win}-sample window")
    n_fft = _next_pow2(win)
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:T]
    spectrum = np.fft.rfft(frames * hamming_window(win), n=n_fft, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    mel = power @ mel_filterbank(n_fft // 2 + 1, config.n_mels, sample_rate).T
    peak = mel.max()
    if peak <= 0:
        return np.full((T, config.n_mels), DB_FLOOR)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(mel / peak)
    return np.maximum(db, DB_FLOOR)


def clip_and_normalize(db_matrix, clip_threshold_db: float | None = None) -> np.ndarray:
    """Floor values at the threshold, then map [min, max] affinely onto [-1, 1].

    A constant matrix maps to zeros.
    """
    x = np.asarray(db_matrix, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite dB values")
    if clip_threshold_db is not None:
        x = np.maximum(x, clip_threshold_db)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return np.clip(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def compute_spectrogram(instance_id: str, samples, sample_rate: int,
                        config: SpectrogramConfig) -> Spectrogram:
    config = replace(config, sample_rate=int(sample_rate))
    db = extract_mel_spectrogram(samples, sample_rate, config)
    frames = clip_and_normalize(db, config.clip_threshold_db).astype(np.float32)
    return Spectrogram(instance_id, frames, config)


# ---------------------------------------------------------------------------
# audio and container I/O


def read_wav(path) -> tuple[np.ndarray, int]:
    """PCM WAV as float64 mono in [-1, 1] plus its sample rate."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise InvalidInputError(f"unsupported WAV sample type {data.dtype}")
    return _to_mono(x), int(rate)


def write_wav(path, samples, sample_rate: int) -> Path:
    """16-bit PCM WAV from float samples in [-1, 1]."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    path = Path(path)
    wavfile.write(str(path), int(sample_rate), pcm)
    return path


def spectrogram_from_wav(path, instance_id: str, config: SpectrogramConfig) -> Spectrogram:
    samples, rate = read_wav(path)
    return compute_spectrogram(instance_id, samples, rate, config)


_HEADER = struct.Struct("<IIdddI")


def spectrogram_to_bytes(spec: Spectrogram) -> bytes:
    """``MELS1`` container: id, shape and config header, then float32 frames row-major."""
    raw_id = spec.instance_id.encode("utf-8")
    T, n_mels = spec.frames.shape
    cfg = spec.config
    clip = math.nan if cfg.clip_threshold_db is None else float(cfg.clip_threshold_db)
    head = MAGIC + struct.pack("<I", len(raw_id)) + raw_id
    head += _HEADER.pack(T, n_mels, cfg.window_width_s, cfg.overlap_fraction, clip, cfg.sample_rate)
    return head + np.ascontiguousarray(spec.frames, dtype="<f4").tobytes()


def spectrogram_from_bytes(data: bytes) -> Spectrogram:
    if data[:5] != MAGIC:
        raise ContainerFormatError("not a spectrogram container (bad magic)")
    (id_len,) = struct.unpack_from("<I", data, 5)
    pos = 9 + id_len
    instance_id = data[9:pos].decode("utf-8")
    T, n_mels, width, overlap, clip, rate = _HEADER.unpack_from(data, pos)
    pos += _HEADER.size
    if len(data) - pos != 4 * T * n_mels:
        raise ContainerFormatError("spectrogram container payload has the wrong size")
    frames = np.frombuffer(data, dtype="<f4", offset=pos).reshape(T, n_mels).astype(np.float32)
    config = SpectrogramConfig(width, overlap, n_mels, None if math.isnan(clip) else clip, rate)
    return Spectrogram(instance_id, frames, config)


def save_spectrogram(spec: Spectrogram, path) -> Path:
    path = Path(path)
    path.write_bytes(spectrogram_to_bytes(spec))
    return path


def load_spectrogram(path) -> Spectrogram:
    return spectrogram_from_bytes(Path(path).read_bytes())
