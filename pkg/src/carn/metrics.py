"""Reference-based quality metrics computable without trained judges.

SI-SDR (projection based, scale invariant), segmental SNR (frame-wise,
clamped), and log-spectral distance through the package's own STFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import Waveform, stft

SI_SDR_CAP = 100.0
LSD_EPS = 1e-8


@dataclass
class MetricReport:
    si_sdr_db: float
    seg_snr_db: float
    lsd: float

    CSV_HEADER = "si_sdr_db,seg_snr_db,lsd"

    def as_csv(self) -> str:
        return f"{self.si_sdr_db:.4f},{self.seg_snr_db:.4f},{self.lsd:.4f}"


def si_sdr(estimate: Waveform, reference: Waveform) -> float:
    """Scale-invariant SDR in dB, capped at +-100.

    Projects the estimate onto the reference (alpha = <e,r>/<r,r>) and
    compares projected energy against the residual.
    """
    e, r = estimate.samples, reference.samples
    if len(e) != len(r):
        raise ValueError(f"length mismatch: estimate {len(e)} vs reference {len(r)}")
    r_energy = float(np.dot(r, r))
    if r_energy <= 0.0:
        raise ValueError("reference is silent")
    alpha = float(np.dot(e, r)) / r_energy
    target = alpha * r
    err = e - target
    num = float(np.dot(target, target))
    den = float(np.dot(err, err))
    if den == 0.0:
        return SI_SDR_CAP
    if num == 0.0:
        return -SI_SDR_CAP
    return float(np.clip(10.0 * math.log10(num / den), -SI_SDR_CAP, SI_SDR_CAP))


def seg_snr(estimate: Waveform, reference: Waveform, frame: int = 256,
            clamp: tuple = (-10.0, 35.0)) -> float:
    """Mean frame-wise SNR in dB; each frame clamped, silent reference frames skipped."""
    e, r = estimate.samples, reference.samples
    if len(e) != len(r):
        raise ValueError(f"length mismatch: estimate {len(e)} vs reference {len(r)}")
    lo, hi = clamp
    values = []
    for start in range(0, len(r) - frame + 1, frame):
        rf = r[start:start + frame]
        ef = e[start:start + frame]
        p_ref = float(np.dot(rf, rf))
        if p_ref <= 0.0:
            continue
        p_err = float(np.dot(ef - rf, ef - rf))
        snr = hi if p_err == 0.0 else 10.0 * math.log10(p_ref / p_err)
        values.append(float(np.clip(snr, lo, hi)))
    if not values:
        raise ValueError("reference has no non-silent frames")
    return float(np.mean(values))


def lsd(estimate: Waveform, reference: Waveform) -> float:
    """Log-spectral distance: per-frame RMS over bins of the dB magnitude ratio."""
    est_mag = stft(estimate).magnitude()
    ref_mag = stft(reference).magnitude()
    ratio_db = 20.0 * np.log10((est_mag + LSD_EPS) / (ref_mag + LSD_EPS))
    per_frame = np.sqrt(np.mean(ratio_db ** 2, axis=1))
    return float(np.mean(per_frame))


def evaluate(estimate: Waveform, reference: Waveform) -> MetricReport:
    return MetricReport(si_sdr(estimate, reference),
                        seg_snr(estimate, reference),
                        lsd(estimate, reference))
