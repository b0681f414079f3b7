"""Classical state discriminators: boxcar, matched filter, and linear SVM.

The boxcar discriminator thresholds the demodulated integral with a 2-D
mean-midpoint rule and is the weakest baseline.  The matched filter weights
each sample by the conjugated class-mean difference, which maximises SNR
under additive white Gaussian noise.  The SVM trains directly on the raw
[I || Q] trace with a Pegasos-style subgradient solver, implicitly learning
the demodulation; 8-bit quantized deployments come in two flavours, one
multiplying demodulation coefficients and weights separately ("two
multiplier") and one with the products fused ahead of time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quant import SIGNED, QuantSpec, calibrate_scale, quantize_levels
from .synth import Dataset, RawShot, splitmix64

_SVM_SALT = 0x2545F4914F6CDD1D

TWO_MULT = "two-multiplier"
FUSED = "fused"


def demodulate(shot: RawShot, f_hz: float, sample_rate_hz: float) -> complex:
    """Digital demodulation: sum_n (I[n] + iQ[n]) * exp(-i 2 pi f n / f_s)."""
    return demodulate_traces(shot.complex_trace(), f_hz, sample_rate_hz)


def demodulate_traces(traces: np.ndarray, f_hz: float, sample_rate_hz: float):
    if not 0 < f_hz < sample_rate_hz / 2:
        raise ValueError(f"frequency {f_hz} outside (0, {sample_rate_hz / 2})")
    n = traces.shape[-1]
    kernel = np.exp(-2j * np.pi * f_hz * np.arange(n) / sample_rate_hz)
    return traces @ kernel


@dataclass(frozen=True)
class DemodKernel:
    """Per-sample demodulation coefficients exp(-i 2 pi f n / f_s) of one qubit."""

    qubit: int
    coeffs: np.ndarray

    @classmethod
    def for_qubit(cls, qubit: int, f_hz: float, sample_rate_hz: float, n: int):
        phase = -2j * np.pi * f_hz * np.arange(n) / sample_rate_hz
        return cls(qubit=qubit, coeffs=np.exp(phase))


def _qubit_bit(labels: np.ndarray, qubit: int) -> np.ndarray:
    return (labels >> qubit) & 1


def _split_classes(dataset: Dataset, qubit: int):
    labels = dataset.labels()
    bits = _qubit_bit(labels, qubit)
    if bits.min() == bits.max():
        raise ValueError(f"qubit {qubit}: dataset contains only one preparation")
    return bits


# ---------------------------------------------------------------------------
# Matched filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchedFilter:
    qubit: int
    weights: np.ndarray  # complex, conj(mean_excited - mean_ground)
    threshold: float

    def statistic(self, traces: np.ndarray) -> np.ndarray:
        return np.real(traces @ self.weights)


def mf_train(dataset: Dataset, qubit: int) -> MatchedFilter:
    bits = _split_classes(dataset, qubit)
    traces = dataset.traces()
    mu1 = traces[bits == 1].mean(axis=0)
    mu0 = traces[bits == 0].mean(axis=0)
    w = np.conj(mu1 - mu0)
    if np.allclose(w, 0):
        raise ValueError(f"qubit {qubit}: class means coincide, filter degenerate")
    d = np.real(traces @ w)
    t = 0.5 * (d[bits == 1].mean() + d[bits == 0].mean())
    return MatchedFilter(qubit=qubit, weights=w, threshold=float(t))


def mf_train_bank(dataset: Dataset) -> list[MatchedFilter]:
    return [mf_train(dataset, q) for q in range(dataset.device.n_qubits)]


def mf_discriminate(bank: list[MatchedFilter], shot: RawShot) -> int:
    return int(mf_discriminate_traces(bank, shot.complex_trace()[None, :])[0])


def mf_discriminate_traces(bank: list[MatchedFilter], traces: np.ndarray):
    masks = np.zeros(traces.shape[0], dtype=np.int64)
    for mf in bank:
        masks |= (mf.statistic(traces) > mf.threshold).astype(np.int64) << mf.qubit
    return masks


# ---------------------------------------------------------------------------
# Boxcar (demodulated-integral) discriminator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxcarThreshold:
    qubit: int
    f_hz: float
    sample_rate_hz: float
    direction: complex  # mean_excited - mean_ground of the demodulated integral
    midpoint: complex

    def statistic(self, demod: np.ndarray) -> np.ndarray:
        return np.real(np.conj(self.direction) * (demod - self.midpoint))


def boxcar_train(dataset: Dataset) -> list[BoxcarThreshold]:
    if dataset.device.n_samples < 1:
        raise ValueError("cannot train on zero-length traces")
    traces = dataset.traces()
    fs = dataset.device.sample_rate_hz
    bank = []
    for q, qubit in enumerate(dataset.device.qubits):
        bits = _split_classes(dataset, q)
        z = demodulate_traces(traces, qubit.if_freq_hz, fs)
        m1 = z[bits == 1].mean()
        m0 = z[bits == 0].mean()
        if m1 == m0:
            raise ValueError(f"qubit {q}: demodulated class means coincide")
        bank.append(
            BoxcarThreshold(
                qubit=q, f_hz=qubit.if_freq_hz, sample_rate_hz=fs,
                direction=m1 - m0, midpoint=0.5 * (m1 + m0),
            )
        )
    return bank


def boxcar_discriminate(bank: list[BoxcarThreshold], shot: RawShot) -> int:
    return int(boxcar_discriminate_traces(bank, shot.complex_trace()[None, :])[0])


def boxcar_discriminate_traces(bank, traces: np.ndarray) -> np.ndarray:
    if traces.shape[-1] < 1:
        raise ValueError("cannot discriminate zero-length traces")
    masks = np.zeros(traces.shape[0], dtype=np.int64)
    for bt in bank:
        demod = demodulate_traces(traces, bt.f_hz, bt.sample_rate_hz)
        masks |= (bt.statistic(demod) > 0).astype(np.int64) << bt.qubit
    return masks


# ---------------------------------------------------------------------------
# Linear SVM (Pegasos) on raw [I || Q] features
# ---------------------------------------------------------------------------


def svm_features(dataset: Dataset) -> np.ndarray:
    i = np.array([s.i_samples for s in dataset.shots])
    q = np.array([s.q_samples for s in dataset.shots])
    return np.concatenate([i, q], axis=1)


def shot_svm_features(shot: RawShot) -> np.ndarray:
    return np.concatenate([shot.i_samples, shot.q_samples])


@dataclass
class LinearSvm:
    qubit: int
    weights: np.ndarray  # length 2 * n_samples
    bias: float
    lam: float
    trained: bool = True

    def statistic(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias


def svm_train(
    dataset: Dataset,
    qubit: int,
    lam: float = 1e-4,
    epochs: int = 20,
    seed: int = 0,
    batch_size: int = 256,
) -> LinearSvm:
    """Deterministic mini-batch Pegasos: step 1/(lam * t), hinge subgradient,
    unregularised bias, projection onto the 1/sqrt(lam) ball.

    Features are normalised to unit RMS vector norm internally (Pegasos'
    convergence budget scales with max ||x||^2); the returned weights are
    rescaled so the statistic applies to raw features.
    """
    bits = _split_classes(dataset, qubit)
    x = svm_features(dataset)
    y = 2.0 * bits - 1.0
    rng = np.random.Generator(np.random.PCG64(splitmix64(seed ^ _SVM_SALT ^ qubit)))

    feat_norm = float(np.sqrt(np.mean(np.sum(x * x, axis=1))))
    if feat_norm == 0.0:
        raise ValueError(f"qubit {qubit}: all-zero features")
    x = x / feat_norm

    w = np.zeros(x.shape[1])
    b = 0.0
    t = 0
    radius = 1.0 / np.sqrt(lam)
    # Averaging the tail iterates removes most of the subgradient jitter.
    tail_start = max(1, epochs - max(1, epochs // 4))
    w_avg = np.zeros_like(w)
    b_avg = 0.0
    n_avg = 0
    for epoch in range(epochs):
        perm = rng.permutation(len(y))
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            t += 1
            eta = 1.0 / (lam * t)
            margins = y[idx] * (x[idx] @ w + b)
            viol = margins < 1.0
            w = (1.0 - eta * lam) * w
            if np.any(viol):
                w = w + (eta / len(idx)) * (y[idx][viol] @ x[idx][viol])
                b = b + (eta / len(idx)) * np.sum(y[idx][viol])
            norm = np.linalg.norm(w)
            if norm > radius:
                w = w * (radius / norm)
            if epoch >= tail_start:
                w_avg += w
                b_avg += b
                n_avg += 1
    if n_avg > 0:
        w, b = w_avg / n_avg, b_avg / n_avg
    return LinearSvm(qubit=qubit, weights=w / feat_norm, bias=float(b), lam=lam)


def svm_train_bank(dataset: Dataset, lam=1e-4, epochs=20, seed=0) -> list[LinearSvm]:
    return [
        svm_train(dataset, q, lam=lam, epochs=epochs, seed=seed)
        for q in range(dataset.device.n_qubits)
    ]


def svm_discriminate_features(bank: list[LinearSvm], x: np.ndarray) -> np.ndarray:
    masks = np.zeros(x.shape[0], dtype=np.int64)
    for svm in bank:
        masks |= (svm.statistic(x) > 0).astype(np.int64) << svm.qubit
    return masks


def svm_discriminate(bank: list[LinearSvm], shot: RawShot) -> int:
    return int(svm_discriminate_features(bank, shot_svm_features(shot)[None, :])[0])


# ---------------------------------------------------------------------------
# Quantized SVM variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantizedSvm:
    """8-bit deployment of a LinearSvm.

    fused: one multiplier per sample; coefficients are the raw-trace weights
    (weight x demodulation products, combined a priori), quantized together.

    two-multiplier: the raw weights are rotated into the demodulated frame
    (wR[n], wI[n]); the hardware first multiplies the incoming I/Q pair by the
    quantized demodulation cos/sin, then by the quantized rotated weights.
    Both variants accumulate exactly in int64 and compare the rescaled
    accumulator against the bias-adjusted threshold.
    """

    variant: str
    qubit: int
    n_samples: int
    bias: float
    input_spec: QuantSpec
    coeff_levels: np.ndarray | None = None  # fused: 2n int levels
    coeff_scale: float = 1.0
    wrot_levels: np.ndarray | None = None  # two-mult: [wR || wI] int levels
    wrot_scale: float = 1.0
    demod_cos_levels: np.ndarray | None = None
    demod_sin_levels: np.ndarray | None = None
    demod_scale: float = 1.0
    bypass: bool = False  # debug: float weights, no quantization
    float_weights: np.ndarray | None = None

    def statistic(self, i: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Decision statistic for (B, n) I/Q sample blocks."""
        if self.bypass:
            return i @ self.float_weights[: self.n_samples] + \
                q @ self.float_weights[self.n_samples :] + self.bias
        qi = quantize_levels(i, self.input_spec).astype(np.int64)
        qq = quantize_levels(q, self.input_spec).astype(np.int64)
        if self.variant == FUSED:
            acc = qi @ self.coeff_levels[: self.n_samples] + \
                qq @ self.coeff_levels[self.n_samples :]
            return self.coeff_scale * self.input_spec.scale * acc + self.bias
        qc = self.demod_cos_levels
        qs = self.demod_sin_levels
        re_u = qi * qc + qq * qs  # demodulated sample stream, exact ints
        im_u = qq * qc - qi * qs
        acc = re_u @ self.wrot_levels[: self.n_samples] + \
            im_u @ self.wrot_levels[self.n_samples :]
        scale = self.wrot_scale * self.demod_scale * self.input_spec.scale
        return scale * acc + self.bias


def svm_quantize(
    svm: LinearSvm,
    variant: str,
    input_spec: QuantSpec,
    kernel: DemodKernel | None = None,
    bits: int = 8,
    bypass: bool = False,
) -> QuantizedSvm:
    if not svm.trained:
        raise ValueError("quantization requires a trained SVM")
    n = svm.weights.shape[0] // 2
    if bypass:
        return QuantizedSvm(
            variant=variant, qubit=svm.qubit, n_samples=n, bias=svm.bias,
            input_spec=input_spec, bypass=True, float_weights=svm.weights.copy(),
        )
    if variant == FUSED:
        spec = calibrate_scale(svm.weights, bits, SIGNED, 100.0)
        return QuantizedSvm(
            variant=FUSED, qubit=svm.qubit, n_samples=n, bias=svm.bias,
            input_spec=input_spec,
            coeff_levels=quantize_levels(svm.weights, spec).astype(np.int64),
            coeff_scale=spec.scale,
        )
    if variant != TWO_MULT:
        raise ValueError(f"unknown quantized SVM variant {variant!r}")
    if kernel is None:
        raise ValueError("two-multiplier variant needs the qubit's DemodKernel")
    # coeffs = exp(-i w n): cos = Re, sin = -Im.
    cos = kernel.coeffs.real
    sin = -kernel.coeffs.imag
    a = svm.weights[:n]  # weights on I[n]
    b = svm.weights[n:]  # weights on Q[n]
    wr = a * cos + b * sin  # weights in the demodulated frame
    wi = -a * sin + b * cos
    wrot = np.concatenate([wr, wi])
    wspec = calibrate_scale(wrot, bits, SIGNED, 100.0)
    dspec = calibrate_scale(np.concatenate([cos, sin]), bits, SIGNED, 100.0)
    return QuantizedSvm(
        variant=TWO_MULT, qubit=svm.qubit, n_samples=n, bias=svm.bias,
        input_spec=input_spec,
        wrot_levels=quantize_levels(wrot, wspec).astype(np.int64),
        wrot_scale=wspec.scale,
        demod_cos_levels=quantize_levels(cos, dspec).astype(np.int64),
        demod_sin_levels=quantize_levels(sin, dspec).astype(np.int64),
        demod_scale=dspec.scale,
    )


def svm_q_discriminate(bank: list[QuantizedSvm], shot: RawShot) -> int:
    i = shot.i_samples[None, :]
    q = shot.q_samples[None, :]
    mask = 0
    for qsvm in bank:
        mask |= int(qsvm.statistic(i, q)[0] > 0) << qsvm.qubit
    return mask


def svm_q_discriminate_arrays(
    bank: list[QuantizedSvm], i: np.ndarray, q: np.ndarray
) -> np.ndarray:
    masks = np.zeros(i.shape[0], dtype=np.int64)
    for qsvm in bank:
        masks |= (qsvm.statistic(i, q) > 0).astype(np.int64) << qsvm.qubit
    return masks
