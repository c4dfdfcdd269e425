"""Projection-based SDR with a distortion filter, and SDR improvement.

The target component of an estimate is its least-squares projection onto the
reference and its first ``filter_taps - 1`` delayed copies (zero-filled, no
wrap-around). Everything outside that span counts as distortion. This is the
time-invariant-filter flavour of the usual BSS Eval SDR.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.signal import correlate, lfilter

from .exceptions import LengthMismatch, SilentReference

__all__ = ["SDR_CAP_DB", "SdrReport", "sdr", "best_permutation_sdr", "sdr_improvement"]

SDR_CAP_DB = 100.0
LOADING = 1e-10


def _delay_gram(reference, n_taps):
    """Exact Gram matrix of the zero-filled delayed copies of ``reference``."""
    n = len(reference)
    G = np.empty((n_taps, n_taps))
    for lag in range(n_taps):
        prod = reference[lag:] * reference[: n - lag]
        csum = np.cumsum(prod)
        # G[k, k + lag] = sum_{p=0}^{n-1-(k+lag)} ref[p+lag] ref[p]
        ks = np.arange(n_taps - lag)
        vals = csum[n - 1 - (ks + lag)]
        G[ks, ks + lag] = vals
        G[ks + lag, ks] = vals
    return G


def _target_component(estimate, reference, n_taps):
    G = _delay_gram(reference, n_taps)
    # c[k] = sum_n est[n] ref[n - k]
    c = correlate(estimate, reference, mode="full", method="fft")[len(reference) - 1 :][:n_taps]
    G[np.diag_indices_from(G)] += LOADING * np.trace(G) / n_taps
    coef = cho_solve(cho_factor(G), c)
    return lfilter(coef, [1.0], reference)


def sdr(estimate, reference, filter_taps=512):
    """SDR in dB of a single-channel estimate, capped at ``SDR_CAP_DB``."""
    estimate = np.asarray(estimate, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if estimate.shape != reference.shape:
        raise LengthMismatch(f"estimate {estimate.shape} vs reference {reference.shape}")
    if len(reference) < filter_taps:
        raise LengthMismatch(f"signals shorter than the {filter_taps}-tap filter")
    if not np.any(reference):
        raise SilentReference("reference signal is all zeros")

    target = _target_component(estimate, reference, filter_taps)
    distortion = estimate - target
    num = np.sum(target**2)
    den = np.sum(distortion**2)
    if den <= num * 10 ** (-SDR_CAP_DB / 10):
        return SDR_CAP_DB
    if num == 0:
        return -SDR_CAP_DB
    return float(10 * np.log10(num / den))


@dataclass
class SdrReport:
    sdr: np.ndarray  # per reference source, under `permutation`
    permutation: tuple  # permutation[n] is the estimate matched to reference n
    improvement: float = float("nan")

    @property
    def mean(self):
        return float(np.mean(self.sdr))


def best_permutation_sdr(estimates, references, filter_taps=512):
    """Exhaustive search for the estimate-to-reference assignment with the best mean SDR."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    references = np.atleast_2d(np.asarray(references, dtype=np.float64))
    n_src = references.shape[0]
    if estimates.shape[0] != n_src:
        raise LengthMismatch(f"{estimates.shape[0]} estimates for {n_src} references")
    if n_src > 4:
        raise ValueError("exhaustive permutation search is limited to 4 sources")

    table = np.array(
        [[sdr(estimates[e], references[r], filter_taps) for e in range(n_src)] for r in range(n_src)]
    )
    best = max(
        itertools.permutations(range(n_src)),
        key=lambda perm: np.mean(table[np.arange(n_src), perm]),
    )
    return SdrReport(sdr=table[np.arange(n_src), best], permutation=tuple(best))


def sdr_improvement(scene, estimates, reference=0, filter_taps=512):
    """Mean SDR of the estimates minus that of the unprocessed reference channel.

    ``estimates`` are ``(N, n_samples)`` signals at the reference microphone;
    ground truth are the scene's source images at that microphone.
    """
    refs = scene.images[:, reference, :]
    mix = scene.mixture.samples[reference]
    separated = best_permutation_sdr(estimates, refs, filter_taps)
    baseline = best_permutation_sdr(np.tile(mix, (len(refs), 1)), refs, filter_taps)
    separated.improvement = separated.mean - baseline.mean
    return separated
