"""Evaluation measures: coding gain, spectra, flatness and convergence."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal as sps

from .signals import Signal

__all__ = [
    "CodingGainReport",
    "SpectrumEstimate",
    "coding_gain",
    "am_gm_report",
    "welch_psd",
    "spectral_flatness",
    "convergence_report",
    "autocorrelation",
    "NEVER_CONVERGED",
]

PSD_FLOOR = 1e-300
NEVER_CONVERGED = -1


def _samples(s) -> np.ndarray:
    return s.samples if isinstance(s, Signal) else np.asarray(s, dtype=np.float64)


def _mean_square(v: np.ndarray) -> float:
    # correctly rounded, so the result cannot depend on SIMD alignment
    return math.fsum(v * v) / v.size


@dataclass(frozen=True)
class CodingGainReport:
    input_variance: float
    channel_variances: tuple
    G_SBC_db: float
    samples_used: int
    transient_discarded: int
    infinite: bool = False

    def to_json(self) -> str:
        d = asdict(self)
        d["channel_variances"] = list(self.channel_variances)
        if self.infinite:
            d["G_SBC_db"] = "inf"
        return json.dumps(d)


def coding_gain(x, outputs, discard_fraction: float = 0.2, min_blocks: int = 100) -> CodingGainReport:
    """Subband coding gain ``sigma_x^2 / (prod sigma_i^2)^(1/M)`` in dB.

    ``outputs`` is ``(blocks, M)``. The first ``discard_fraction`` of the
    blocks (and the matching stretch of ``x``) is dropped as transient. A zero
    channel variance gives an infinite gain flagged in the report.
    """
    e = np.asarray(outputs, dtype=np.float64)
    if e.ndim != 2:
        raise ValueError("outputs must be a (blocks, M) array")
    if not 0.0 <= discard_fraction < 1.0:
        raise ValueError("discard_fraction must lie in [0, 1)")
    nb, M = e.shape
    skip = int(np.floor(discard_fraction * nb))
    if nb - skip < min_blocks:
        raise ValueError(f"need at least {min_blocks} retained blocks, got {nb - skip}")
    xs = _samples(x)
    xk = xs[skip * M:] if xs.size > skip * M else xs
    sx = _mean_square(xk - math.fsum(xk) / xk.size)
    var = np.array([_mean_square(e[skip:, i]) for i in range(M)])
    if np.any(var <= 0.0):
        return CodingGainReport(sx, tuple(map(float, var)), float("inf"), nb - skip, skip, True)
    g = 10.0 * (np.log10(sx) - np.mean(np.log10(var)))
    return CodingGainReport(sx, tuple(map(float, var)), float(g), nb - skip, skip)


def am_gm_report(variances) -> dict:
    v = np.asarray(variances, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two variances")
    if np.any(v < 0):
        raise ValueError("variances must be non-negative")
    am = float(np.mean(v))
    gm = float(np.exp(np.mean(np.log(v)))) if np.all(v > 0) else 0.0
    ratio = am / gm if gm > 0 else float("inf")
    # rounding can push equal variances a hair below one
    return {"arith_mean": am, "geo_mean": gm, "ratio": max(ratio, 1.0)}


@dataclass(frozen=True)
class SpectrumEstimate:
    """Power per normalized frequency ``omega`` in ``[0, pi]``.

    Scaled so the mean over bins equals the variance of the signal: white
    noise of unit variance sits at 1.
    """

    frequencies: np.ndarray
    power: np.ndarray
    segment_len: int
    overlap: float
    window: str = "hann"

    def peak_frequency(self) -> float:
        return float(self.frequencies[int(np.argmax(self.power))])

    def to_csv(self) -> str:
        lines = ["omega,power"] + [f"{w!r},{p!r}" for w, p in zip(self.frequencies.tolist(), self.power.tolist())]
        return "\n".join(lines) + "\n"


def welch_psd(s, segment_len: int = 1024, overlap_fraction: float = 0.5) -> SpectrumEstimate:
    xs = _samples(s)
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise ValueError("segment length must be a power of two")
    if xs.size < segment_len:
        raise ValueError("signal shorter than one segment")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap fraction must lie in [0, 1)")
    # the global mean goes once; per-segment detrending would also eat most
    # of the windowed DC bin
    f, p = sps.welch(
        xs - xs.mean(), fs=1.0, window=sps.windows.hann(segment_len, sym=True), nperseg=segment_len,
        noverlap=int(segment_len * overlap_fraction), detrend=False,
    )
    # unit-variance white noise at 1 in every bin; the one-sided estimate
    # leaves DC and Nyquist at half height
    p = p / 2.0
    p[[0, -1]] *= 2.0
    return SpectrumEstimate(2 * np.pi * f, p, segment_len, overlap_fraction)


def spectral_flatness(spec) -> float:
    p = spec.power if isinstance(spec, SpectrumEstimate) else np.asarray(spec, dtype=np.float64)
    p = np.maximum(p, PSD_FLOOR)
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))


def autocorrelation(s, max_lag: int) -> np.ndarray:
    """Biased normalized autocorrelation ``r(k)/r(0)``, ``k = 0..max_lag``."""
    xs = _samples(s)
    xs = xs - xs.mean()
    r0 = float(xs @ xs)
    if r0 == 0.0:
        return np.zeros(max_lag + 1)
    return np.array([xs[k:] @ xs[: xs.size - k] for k in range(max_lag + 1)]) / r0


def convergence_report(trajectory, tol_fraction: float = 0.05, min_blocks: int = 100, scale: str = "set") -> dict:
    """First block after which every coefficient stays near its final value.

    ``trajectory`` is ``(blocks, n_coeffs)``. The band is ``tol_fraction``
    times the reference magnitude: each coefficient's own final value
    (``scale="own"``) or the largest final magnitude in the set
    (``scale="set"``, default), which keeps near-zero coefficients from
    demanding an absolute accuracy the estimate cannot reach.
    Returns ``{"index", "tolerance", "converged"}``; ``index`` is
    :data:`NEVER_CONVERGED` when the final block itself is the first in band.
    """
    t = np.asarray(trajectory, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if t.shape[0] < min_blocks:
        raise ValueError(f"need at least {min_blocks} blocks")
    final = t[-1]
    if scale == "own":
        ref = np.abs(final)
    elif scale == "set":
        ref = np.full_like(final, np.max(np.abs(final), initial=0.0))
    else:
        raise ValueError("scale must be 'own' or 'set'")
    band = tol_fraction * ref
    inside = np.all(np.abs(t - final) <= band + 1e-15 * np.abs(final), axis=1)
    bad = np.flatnonzero(~inside)
    idx = 0 if bad.size == 0 else int(bad[-1]) + 1
    converged = idx < t.shape[0] - 1 or bad.size == 0
    return {"index": idx if converged else NEVER_CONVERGED, "tolerance": band.tolist(), "converged": converged}
