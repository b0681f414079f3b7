"""Uniform per-tensor quantizers for inputs, weights, and activations.

Signed specs use a balanced symmetric level set (the most-negative code is
dropped so negation stays closed); unsigned specs cover [0, 2^bits - 1].
Rounding is round-half-to-even throughout -- the integer compiler in
``qrd.hwsim`` relies on this being fixed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

SIGNED = "signed"
UNSIGNED = "unsigned"


@dataclass(frozen=True)
class QuantSpec:
    """Parameters of a uniform per-tensor quantizer."""

    bits: int
    signedness: str
    scale: float

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ValueError(f"bits must be in 1..8, got {self.bits}")
        if self.signedness not in (SIGNED, UNSIGNED):
            raise ValueError(f"unknown signedness {self.signedness!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    @property
    def signed(self) -> bool:
        return self.signedness == SIGNED

    @property
    def min_level(self) -> int:
        if not self.signed:
            return 0
        return -1 if self.bits == 1 else -(2 ** (self.bits - 1) - 1)

    @property
    def max_level(self) -> int:
        if self.signed:
            return 1 if self.bits == 1 else 2 ** (self.bits - 1) - 1
        return 2**self.bits - 1

    @property
    def n_levels(self) -> int:
        return self.max_level - self.min_level + 1


@dataclass(frozen=True)
class QuantizedTensor:
    """Integer levels plus the spec that maps them back to reals."""

    levels: np.ndarray
    spec: QuantSpec

    @property
    def shape(self) -> tuple:
        return self.levels.shape

    def dequantize(self) -> np.ndarray:
        return self.levels * self.spec.scale


def calibrate_scale(
    samples: np.ndarray, bits: int, signedness: str, percentile: float = 100.0
) -> QuantSpec:
    """Fit a scale so the given percentile of |samples| maps to the top level.

    percentile=100 is max-abs calibration.  All-zero samples are degenerate;
    the scale falls back to 1 and a warning is emitted.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("cannot calibrate on empty samples")
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    ref = QuantSpec(bits, signedness, 1.0)
    q = float(np.percentile(np.abs(samples), percentile))
    if q == 0.0:
        warnings.warn("all-zero calibration samples; falling back to scale=1")
        return ref
    return QuantSpec(bits, signedness, q / ref.max_level)


def quantize_levels(x: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Map reals to integer levels (returned as float64 holding exact ints)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    if spec.signed and spec.bits == 1:
        # Binary weights: level = sign(x) with sign(0) = +1.
        return np.where(x < 0, -1.0, 1.0)
    return np.clip(np.rint(x / spec.scale), spec.min_level, spec.max_level)


def quantize(x: np.ndarray, spec: QuantSpec) -> QuantizedTensor:
    return QuantizedTensor(quantize_levels(x, spec), spec)


def fake_quantize(x: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Quantize-dequantize round trip; idempotent."""
    return quantize_levels(x, spec) * spec.scale


def ste_range(spec: QuantSpec) -> tuple[float, float]:
    """Real-valued pass-through interval of the straight-through estimator."""
    hi = spec.max_level * spec.scale
    lo = -hi if spec.signed else 0.0
    return lo, hi


def ste_backward(
    x: np.ndarray, upstream_grad: np.ndarray, spec: QuantSpec
) -> np.ndarray:
    """Straight-through gradient: pass inside the representable range, zero
    where the quantizer clips.  Range boundaries pass through."""
    x = np.asarray(x, dtype=np.float64)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if x.shape != upstream_grad.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {upstream_grad.shape}")
    lo, hi = ste_range(spec)
    return np.where((x >= lo) & (x <= hi), upstream_grad, 0.0)
