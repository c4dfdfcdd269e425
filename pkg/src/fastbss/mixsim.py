"""Synthetic reverberant mixtures with known source images.

Room impulse responses are a direct-path impulse followed by an exponentially
decaying white-noise tail. The tail decays by 60 dB at T60 and makes the
spatial covariance of every source full rank once T60 exceeds the STFT window.
Tails at different microphones carry the inter-channel coherence of a
spherically diffuse field, ``sinc(2 f d / c)`` for microphones ``d`` apart.
Dry sources are seeded harmonic note sequences, which have the low-rank
spectral structure the NMF source models expect.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .exceptions import LengthMismatch, SingularMixing
from .linalg import det
from .signal import Waveform

__all__ = [
    "SceneConfig",
    "MixtureScene",
    "default_delays",
    "default_gains",
    "diffuse_noise",
    "synth_rir",
    "convolve_mix",
    "synth_dry_source",
    "make_scene",
    "rank1_scene",
]


def default_delays(n_src, n_mic, base=8, step=1):
    """Direct-path delays in samples, one ``(n_src, n_mic)`` table.

    Source ``n`` arrives with an inter-microphone lag that grows linearly with
    the microphone index; lags are spread symmetrically around zero so every
    source has a distinct direction.
    """
    lags = (np.arange(n_src) - (n_src - 1) / 2) * 2 * step
    delays = base + np.outer(lags, np.arange(n_mic))
    delays -= min(0, delays.min())
    return np.round(delays).astype(int)


def default_gains(n_src, n_mic, off_axis=0.6):
    """Direct-path gains: source ``n`` reaches microphone ``n`` at 1, the others at ``off_axis``."""
    gains = np.full((n_src, n_mic), off_axis)
    for n in range(min(n_src, n_mic)):
        gains[n, n] = 1.0
    return gains


@dataclass
class SceneConfig:
    n_mic: int = 2
    n_src: int = 2
    t60_ms: float = 300.0
    drr_db: float = 0.0
    snr_db: float = 0.0
    sample_rate: int = 16000
    seed: int = 0
    direct_delays: np.ndarray = None
    direct_gains: np.ndarray = None
    rir_length: int = None
    mic_spacing_m: float = 0.04
    speed_of_sound: float = 343.0

    def __post_init__(self):
        if self.mic_spacing_m < 0:
            raise ValueError("mic_spacing_m must be nonnegative")
        if self.t60_ms < 0:
            raise ValueError("t60_ms must be nonnegative")
        if self.n_src != self.n_mic:
            raise ValueError("only the determined case n_src == n_mic is supported")
        if self.direct_delays is None:
            self.direct_delays = default_delays(self.n_src, self.n_mic)
        self.direct_delays = np.asarray(self.direct_delays, dtype=int)
        if self.direct_delays.shape != (self.n_src, self.n_mic):
            raise ValueError("direct_delays must have shape (n_src, n_mic)")
        if self.direct_gains is None:
            self.direct_gains = default_gains(self.n_src, self.n_mic)
        self.direct_gains = np.asarray(self.direct_gains, dtype=np.float64)
        if self.direct_gains.shape != (self.n_src, self.n_mic):
            raise ValueError("direct_gains must have shape (n_src, n_mic)")
        t60_samples = int(np.ceil(self.t60_ms * self.sample_rate / 1000))
        min_length = int(self.direct_delays.max()) + t60_samples + 1
        if self.rir_length is None:
            self.rir_length = min_length
        elif self.rir_length < min_length:
            raise ValueError(f"rir_length must cover T60 (>= {min_length} samples)")

    @property
    def t60_samples(self):
        return self.t60_ms * self.sample_rate / 1000


@dataclass
class MixtureScene:
    """A mixture and the per-source images that sum to it.

    ``images`` has shape ``(n_src, n_mic, n_samples)`` and ``rirs`` shape
    ``(n_src, n_mic, rir_length)``.
    """

    mixture: Waveform
    images: np.ndarray
    rirs: np.ndarray
    sources: np.ndarray = field(default=None, repr=False)

    def image(self, n):
        return Waveform(self.images[n], self.mixture.sample_rate)


def diffuse_noise(rng, n_mic, n_samples, spacing, sample_rate, speed_of_sound=343.0):
    """White noise ``(n_mic, n_samples)`` with diffuse-field coherence between channels.

    Microphones sit on a line ``spacing`` metres apart. Each frequency bin of
    independent noise is mixed by a square root of the coherence matrix, so
    every channel keeps a flat expected spectrum.
    """
    noise = rng.standard_normal((n_mic, n_samples))
    if n_mic == 1 or spacing == 0:
        return np.repeat(noise[:1], n_mic, axis=0) if spacing == 0 else noise
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    pos = np.arange(n_mic) * spacing
    dist = np.abs(pos[:, None] - pos[None, :])
    coherence = np.sinc(2.0 * freqs[:, None, None] * dist / speed_of_sound)
    evals, evecs = np.linalg.eigh(coherence)
    root = evecs * np.sqrt(np.maximum(evals, 0.0))[:, None, :]
    spec = np.fft.rfft(noise, axis=-1).T[:, :, None]  # (F, M, 1)
    mixed = (root @ spec)[:, :, 0].T
    return np.fft.irfft(mixed, n=n_samples, axis=-1)


def synth_rir(cfg):
    """Impulse responses ``(n_src, n_mic, rir_length)`` for a scene config."""
    rng = np.random.default_rng(cfg.seed)
    rirs = np.zeros((cfg.n_src, cfg.n_mic, cfg.rir_length))
    for n in range(cfg.n_src):
        noise = diffuse_noise(
            rng, cfg.n_mic, cfg.rir_length, cfg.mic_spacing_m, cfg.sample_rate, cfg.speed_of_sound
        )
        for m in range(cfg.n_mic):
            delay = cfg.direct_delays[n, m]
            direct = cfg.direct_gains[n, m]
            rirs[n, m, delay] = direct
            if cfg.t60_ms == 0:
                continue
            n_tail = cfg.rir_length - delay - 1
            t = np.arange(1, n_tail + 1)
            envelope = np.exp(-3.0 * np.log(10.0) * t / cfg.t60_samples)
            tail = noise[m, :n_tail] * envelope
            tail *= direct * np.sqrt(10.0 ** (-cfg.drr_db / 10.0) / np.sum(tail**2))
            rirs[n, m, delay + 1 :] = tail
    return rirs


def convolve_mix(sources, rirs, snr_db=0.0, sample_rate=16000):
    """Convolve dry sources with RIRs and sum the images.

    Sources are rescaled so that the power of image ``n`` (summed over
    microphones) is ``10**(-snr_db/10)`` times the power of image 0. Silent
    sources are left silent.
    """
    lengths = {len(np.ravel(s)) for s in sources}
    if len(lengths) > 1:
        raise LengthMismatch(f"sources have different lengths {sorted(lengths)}")
    sources = np.asarray(sources, dtype=np.float64)
    rirs = np.asarray(rirs, dtype=np.float64)
    if sources.ndim != 2:
        raise LengthMismatch("sources must be an (n_src, n_samples) array of equal lengths")
    if sources.shape[0] != rirs.shape[0]:
        raise LengthMismatch(
            f"{sources.shape[0]} sources but {rirs.shape[0]} rows of impulse responses"
        )
    n_src, n_samples = sources.shape

    images = np.stack(
        [fftconvolve(sources[n][None, :], rirs[n], axes=-1)[:, :n_samples] for n in range(n_src)]
    )
    power = np.mean(images**2, axis=(1, 2))
    target = power[0] * 10.0 ** (-snr_db / 10.0)
    gains = np.ones(n_src)
    for n in range(1, n_src):
        if power[n] > 0 and power[0] > 0:
            gains[n] = np.sqrt(target / power[n])
    images *= gains[:, None, None]
    sources = sources * gains[:, None]

    mixture = Waveform(images.sum(axis=0), sample_rate)
    return MixtureScene(mixture=mixture, images=images, rirs=rirs, sources=sources)


_MIDI_RANGES = [(57, 72), (38, 53), (65, 80), (45, 60)]


def synth_dry_source(rng, duration_s, sample_rate=16000, register=0, n_pitches=5, n_harmonics=10):
    """Seeded monophonic harmonic melody.

    The melody uses a small random pitch set drawn from the register's MIDI
    range, so its spectrogram is approximately low rank. Notes have random
    durations, a decaying envelope and a register-specific harmonic roll-off.
    """
    n_samples = int(round(duration_s * sample_rate))
    lo, hi = _MIDI_RANGES[register % len(_MIDI_RANGES)]
    pitches = rng.choice(np.arange(lo, hi + 1), size=n_pitches, replace=False)
    rolloff = 0.6 + 0.5 * (register % 3)
    out = np.zeros(n_samples)
    pos = 0
    while pos < n_samples:
        note_len = min(int(sample_rate * rng.uniform(0.15, 0.5)), n_samples - pos)
        f0 = 440.0 * 2.0 ** ((rng.choice(pitches) - 69) / 12)
        t = np.arange(note_len) / sample_rate
        envelope = np.minimum(1.0, t / 0.01) * np.exp(-t * rng.uniform(2.0, 6.0))
        note = np.zeros(note_len)
        for h in range(1, n_harmonics + 1):
            if h * f0 >= sample_rate / 2:
                break
            note += h ** (-1.0 / rolloff) * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
        if rng.uniform() < 0.1:
            note[:] = 0.0  # rest
        out[pos : pos + note_len] = note * envelope
        pos += note_len
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def make_scene(cfg, duration_s=4.0):
    """Dry sources plus RIRs plus mixing, all derived from ``cfg.seed``."""
    rng = np.random.default_rng([cfg.seed, 1])
    sources = np.stack(
        [synth_dry_source(rng, duration_s, cfg.sample_rate, register=n) for n in range(cfg.n_src)]
    )
    scene = convolve_mix(sources, synth_rir(cfg), snr_db=cfg.snr_db, sample_rate=cfg.sample_rate)
    peak = np.max(np.abs(scene.mixture.samples))
    scale = 0.5 / peak
    scene.mixture = Waveform(scene.mixture.samples * scale, cfg.sample_rate)
    scene.images *= scale
    scene.sources *= scale
    return scene


def rank1_scene(A_FMN, S_FTN):
    """Frequency-wise instantaneous mixing ``x_ij = A_i s_ij``.

    Parameters
    ----------
    A_FMN : (n_freq, n_mic, n_src) complex mixing matrices.
    S_FTN : (n_freq, n_frames, n_src) complex source spectrograms.

    Returns
    -------
    X_FTM : (n_freq, n_frames, n_mic)
    """
    A_FMN = np.asarray(A_FMN, dtype=np.complex128)
    if A_FMN.shape[-1] == A_FMN.shape[-2]:
        d = np.abs(det(A_FMN))
        scale = np.max(np.abs(A_FMN), axis=(-2, -1)) ** A_FMN.shape[-1]
        if np.any(d <= 1e-13 * scale):
            raise SingularMixing("mixing matrix is singular at some frequency")
    return np.einsum("imn,ijn->ijm", A_FMN, S_FTN)
