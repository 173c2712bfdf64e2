"""Complex-ratio-mask algebra.

The oracle mask is the regularized complex quotient clean/noisy computed
per T-F bin; applying a mask is the complex product mask * noisy.  Both are
plain numpy functions; the differentiable path used in training applies the
same product through tape ops in the training module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram


@dataclass
class Mask:
    """Two-plane complex ratio mask, shapes matching its spectrogram."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise ValueError(
                f"mask planes differ in shape: {self.real.shape} vs {self.imag.shape}")
        if not (np.isfinite(self.real).all() and np.isfinite(self.imag).all()):
            raise ValueError("mask contains non-finite values")

    @property
    def shape(self):
        return self.real.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


def oracle_crm(noisy: ComplexSpectrogram, clean: ComplexSpectrogram,
               eps: float = 1e-8) -> Mask:
    """Ideal complex ratio mask: clean / noisy with an eps-regularized denominator.

    real = (Yr*Sr + Yi*Si) / (Yr^2 + Yi^2 + eps)
    imag = (Yr*Si - Yi*Sr) / (Yr^2 + Yi^2 + eps)
    """
    if noisy.real.shape != clean.real.shape:
        raise ValueError(
            f"spectrogram shapes differ: {noisy.real.shape} vs {clean.real.shape}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    yr, yi = noisy.real, noisy.imag
    sr, si = clean.real, clean.imag
    denom = yr * yr + yi * yi + eps
    return Mask((yr * sr + yi * si) / denom, (yr * si - yi * sr) / denom)


def apply_mask(mask: Mask, noisy: ComplexSpectrogram) -> ComplexSpectrogram:
    """Complex product mask * noisy per bin:

    est_real = Mr*Yr - Mi*Yi,  est_imag = Mr*Yi + Mi*Yr.
    """
    if mask.shape != noisy.real.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match spectrogram {noisy.real.shape}")
    yr, yi = noisy.real, noisy.imag
    mr, mi = mask.real, mask.imag
    return ComplexSpectrogram(mr * yr - mi * yi, mr * yi + mi * yr, noisy.params)


def clamp_mask_magnitude(mask: Mask, limit: float = 100.0) -> Mask:
    """Rescale bins whose magnitude exceeds ``limit`` (diagnostic tooling only;
    predicted masks are unbounded)."""
    mag = mask.magnitude()
    factor = np.ones_like(mag)
    over = mag > limit
    factor[over] = limit / mag[over]
    return Mask(mask.real * factor, mask.imag * factor)
