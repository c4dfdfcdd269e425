"""Multichannel waveforms, STFT/iSTFT and file I/O.

Spectrograms are complex arrays of shape ``(n_freq, n_frames, n_channels)``,
i.e. ``X_FTM`` in the naming used across the package. Waveforms store their
samples channel-first, ``(n_channels, n_samples)``.
"""

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .exceptions import ConfigMismatch, CorruptHeader, EmptySignal, UnsupportedFormat

__all__ = [
    "Waveform",
    "StftConfig",
    "stft",
    "istft",
    "read_wav",
    "write_wav",
    "write_spectrogram",
    "read_spectrogram",
]


@dataclass
class Waveform:
    """Real multichannel signal with samples shaped ``(n_channels, n_samples)``."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class StftConfig:
    """Analysis settings. Defaults: 64 ms Hamming window, 16 ms hop, 16 kHz."""

    window_ms: float = 64.0
    hop_ms: float = 16.0
    window_kind: str = "hamming"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.window_kind != "hamming":
            raise ConfigMismatch(f"unsupported window kind {self.window_kind!r}")
        if self.hop_length > self.win_length or self.hop_length <= 0:
            raise ConfigMismatch("hop must be positive and not exceed the window")
        if self.fft_size % self.hop_length:
            raise ConfigMismatch(
                f"hop {self.hop_length} does not divide FFT size {self.fft_size}"
            )

    @property
    def win_length(self):
        return int(round(self.window_ms * self.sample_rate / 1000))

    @property
    def hop_length(self):
        return int(round(self.hop_ms * self.sample_rate / 1000))

    @property
    def fft_size(self):
        return 1 << max(0, math.ceil(math.log2(self.win_length)))

    @property
    def n_freq(self):
        return self.fft_size // 2 + 1

    def window(self):
        """Periodic Hamming window, zero-padded symmetrically to ``fft_size``."""
        win = get_window(self.window_kind, self.win_length, fftbins=True)
        lead = (self.fft_size - self.win_length) // 2
        out = np.zeros(self.fft_size)
        out[lead : lead + self.win_length] = win
        return out

    def n_frames(self, n_samples):
        return 1 + math.ceil(n_samples / self.hop_length)


def _samples_of(w, cfg):
    if isinstance(w, Waveform):
        if w.sample_rate != cfg.sample_rate:
            raise ConfigMismatch(
                f"waveform at {w.sample_rate} Hz, config expects {cfg.sample_rate} Hz"
            )
        return w.samples
    samples = np.asarray(w, dtype=np.float64)
    return samples[None, :] if samples.ndim == 1 else samples


def stft(w, cfg=StftConfig()):
    """One-sided STFT of a waveform.

    Half a window of zeros is prepended, and the tail is zero-padded so that
    every sample is covered by full frames. Returns ``X_FTM`` with
    ``n_frames = 1 + ceil(n_samples / hop)``.
    """
    samples = _samples_of(w, cfg)
    n_ch, n_samples = samples.shape
    if n_samples < cfg.win_length:
        raise EmptySignal(
            f"signal of {n_samples} samples is shorter than one window ({cfg.win_length})"
        )
    n_fft, hop = cfg.fft_size, cfg.hop_length
    n_frames = cfg.n_frames(n_samples)
    lead = n_fft // 2
    total = (n_frames - 1) * hop + n_fft
    padded = np.zeros((n_ch, total))
    padded[:, lead : lead + n_samples] = samples

    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft, axis=1)[:, ::hop]
    spec = np.fft.rfft(frames * cfg.window(), axis=-1)  # (M, J, I)
    return np.ascontiguousarray(spec.transpose(2, 1, 0))


def istft(S, cfg=StftConfig(), length=None):
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window equals the analysis window and the overlap-added
    result is divided by the frame-summed squared window, so reconstruction
    is exact wherever that normalizer is nonzero.
    """
    S = np.asarray(S)
    if S.ndim == 2:
        S = S[:, :, None]
    n_freq, n_frames, n_ch = S.shape
    if n_freq != cfg.n_freq:
        raise ConfigMismatch(f"spectrogram has {n_freq} bins, config implies {cfg.n_freq}")
    n_fft, hop = cfg.fft_size, cfg.hop_length
    win = cfg.window()
    lead = n_fft // 2
    if length is None:
        length = (n_frames - 1) * hop

    frames = np.fft.irfft(S.transpose(2, 1, 0), n=n_fft, axis=-1) * win  # (M, J, N)
    total = (n_frames - 1) * hop + n_fft
    out = np.zeros((n_ch, total))
    norm = np.zeros(total)
    win_sq = win**2
    for j in range(n_frames):
        out[:, j * hop : j * hop + n_fft] += frames[:, j]
        norm[j * hop : j * hop + n_fft] += win_sq
    nonzero = norm > 1e-10
    out[:, nonzero] /= norm[nonzero]
    out[:, ~nonzero] = 0.0

    out = out[:, lead : lead + length]
    if out.shape[1] < length:
        out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
    return Waveform(out, cfg.sample_rate)


_PCM16_SCALE = 32768.0


def read_wav(path):
    """Read a PCM16 or IEEE-float32 WAV file into a :class:`Waveform`."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except wavfile.WavFileWarning as exc:
        raise CorruptHeader(f"{path}: {exc}") from exc
    except ValueError as exc:
        msg = str(exc)
        if "format" in msg.lower() or "not understood" in msg.lower():
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptHeader(f"{path}: {msg}") from exc
    except (EOFError, struct.error, UnboundLocalError) as exc:
        # scipy surfaces a RIFF file without a fmt chunk as UnboundLocalError
        raise CorruptHeader(f"{path}: truncated or incomplete file") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: sample type {data.dtype} not supported")
    samples = samples.T if samples.ndim == 2 else samples[None, :]
    return Waveform(samples, rate)


def write_wav(path, w, subtype="float32"):
    """Write a waveform as ``"float32"`` (lossless for float32 data) or ``"pcm16"``."""
    samples = w.samples.T
    if subtype == "float32":
        data = samples.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(samples * _PCM16_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise UnsupportedFormat(f"unknown WAV subtype {subtype!r}")
    wavfile.write(path, w.sample_rate, data)


def write_spectrogram(path, S):
    """Debug dump: ``<u32 I, J, M>`` header then little-endian complex128 in (i, j, m) order."""
    S = np.asarray(S, dtype=np.complex128)
    if S.ndim != 3:
        raise ValueError("expected an (I, J, M) spectrogram")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3I", *S.shape))
        fh.write(np.ascontiguousarray(S).astype("<c16").tobytes())


def read_spectrogram(path):
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise CorruptHeader(f"{path}: missing spectrogram header")
        shape = struct.unpack("<3I", header)
        payload = fh.read()
    expected = 16 * shape[0] * shape[1] * shape[2]
    if len(payload) != expected:
        raise CorruptHeader(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<c16").reshape(shape).astype(np.complex128)
