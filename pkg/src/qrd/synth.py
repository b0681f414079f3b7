"""Synthetic frequency-multiplexed readout shots.

Generative model (per shot, N qubits, n complex samples at rate f_s):

    s[n] = sum_q a_q[n] * exp(i * 2*pi * f_q * n / f_s) + eta[n]

where the effective amplitude of qubit q couples linearly to its neighbours'
state deviations through the crosstalk matrix eps (eps_qq = 1):

    a_q[n] = alpha_q^(0) + sum_j eps_qj * (alpha_j^(x_j[n]) - alpha_j^(0))

x_j[n] is qubit j's instantaneous state: prepared state until an exponential
relaxation time tau_j ~ Exp(t1_us), ground afterwards (single downward jump,
no re-excitation; t1_us = 0 disables decay).  eta[n] is i.i.d. complex
Gaussian with per-quadrature std ``noise_sigma``.  I/Q streams are the real
and imaginary parts of s.

Seeding is fully reproducible: shot k of a dataset uses the 64-bit seed
``splitmix64(splitmix64(device.seed) + k)`` so any shot can be regenerated in
isolation; inside a shot the draw order is fixed (one Exp(t1) per qubit, then
the 2 x n Gaussian noise block).  The SplitMix64 constants are in
``splitmix64`` below.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

_MASK64 = (1 << 64) - 1
# Salt separating the label-shuffle stream from the per-shot streams.
_SHUFFLE_SALT = 0xD1B54A32D192ED03


def splitmix64(x: int) -> int:
    """SplitMix64 mix function (Steele et al. finalizer constants)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_shot_seed(device_seed: int, shot_index: int) -> int:
    """Per-shot seed for global shot index ``shot_index``."""
    return splitmix64((splitmix64(device_seed) + shot_index) & _MASK64)


@dataclass(frozen=True)
class QubitConfig:
    """One readout tone: IF frequency, state-dependent amplitudes, T1."""

    if_freq_hz: float
    alpha_ground: complex
    alpha_excited: complex
    t1_us: float
    label: int

    def validate(self, sample_rate_hz: float) -> None:
        if not 0 < self.if_freq_hz < sample_rate_hz / 2:
            raise ValueError(
                f"qubit {self.label}: if_freq_hz {self.if_freq_hz} outside "
                f"(0, {sample_rate_hz / 2}) Nyquist band"
            )
        if self.alpha_ground == self.alpha_excited:
            raise ValueError(f"qubit {self.label}: ground and excited amplitudes equal")
        if self.t1_us < 0:
            raise ValueError(f"qubit {self.label}: t1_us must be >= 0")


@dataclass(frozen=True)
class DeviceConfig:
    qubits: tuple[QubitConfig, ...]
    sample_rate_hz: float = 500e6
    n_samples: int = 512
    noise_sigma: float = 0.0
    crosstalk: np.ndarray | None = None  # N x N, ones on the diagonal
    seed: int = 0

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    def crosstalk_matrix(self) -> np.ndarray:
        if self.crosstalk is None:
            return np.eye(self.n_qubits)
        return np.asarray(self.crosstalk, dtype=np.float64)

    def validate(self) -> None:
        if self.n_qubits == 0:
            raise ValueError("device must have at least one qubit")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for q in self.qubits:
            q.validate(self.sample_rate_hz)
        freqs = [q.if_freq_hz for q in self.qubits]
        if len(set(freqs)) != len(freqs):
            raise ValueError("qubit IF frequencies must be pairwise distinct")
        eps = self.crosstalk_matrix()
        if eps.shape != (self.n_qubits, self.n_qubits):
            raise ValueError(f"crosstalk must be {self.n_qubits}x{self.n_qubits}")
        if not np.all(np.diag(eps) == 1.0):
            raise ValueError("crosstalk diagonal entries must equal 1 exactly")

    def to_dict(self) -> dict:
        return {
            "qubits": [
                {
                    "if_freq_hz": q.if_freq_hz,
                    "alpha_ground": [q.alpha_ground.real, q.alpha_ground.imag],
                    "alpha_excited": [q.alpha_excited.real, q.alpha_excited.imag],
                    "t1_us": q.t1_us,
                    "label": q.label,
                }
                for q in self.qubits
            ],
            "sample_rate_hz": self.sample_rate_hz,
            "n_samples": self.n_samples,
            "noise_sigma": self.noise_sigma,
            "crosstalk": self.crosstalk_matrix().tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceConfig":
        qubits = tuple(
            QubitConfig(
                if_freq_hz=float(q["if_freq_hz"]),
                alpha_ground=complex(*q["alpha_ground"]),
                alpha_excited=complex(*q["alpha_excited"]),
                t1_us=float(q["t1_us"]),
                label=int(q["label"]),
            )
            for q in d["qubits"]
        )
        return cls(
            qubits=qubits,
            sample_rate_hz=float(d["sample_rate_hz"]),
            n_samples=int(d["n_samples"]),
            noise_sigma=float(d["noise_sigma"]),
            crosstalk=np.asarray(d["crosstalk"], dtype=np.float64),
            seed=int(d["seed"]),
        )

    def with_seed(self, seed: int) -> "DeviceConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class RawShot:
    """One readout trace plus the true N-bit preparation bitmask."""

    i_samples: np.ndarray
    q_samples: np.ndarray
    label: int

    def __post_init__(self):
        if self.i_samples.shape != self.q_samples.shape:
            raise ValueError("I and Q streams must have identical length")

    @property
    def n_samples(self) -> int:
        return self.i_samples.shape[0]

    def complex_trace(self) -> np.ndarray:
        return self.i_samples + 1j * self.q_samples


@dataclass
class Dataset:
    device: DeviceConfig
    shots: list[RawShot]
    shots_per_state: int

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.shots], dtype=np.int64)

    def traces(self) -> np.ndarray:
        """All shots as an (n_shots, n_samples) complex matrix."""
        return np.array([s.complex_trace() for s in self.shots])


class ShotSynthesizer:
    """Caches the per-device phasor table so batch generation stays cheap."""

    def __init__(self, device: DeviceConfig):
        device.validate()
        self.device = device
        n = device.n_samples
        freqs = np.array([q.if_freq_hz for q in device.qubits])
        phase = 2j * np.pi * np.outer(freqs, np.arange(n)) / device.sample_rate_hz
        self._phasors = np.exp(phase)  # (N, n)
        self._alpha_g = np.array([q.alpha_ground for q in device.qubits])
        self._alpha_e = np.array([q.alpha_excited for q in device.qubits])
        self._t1_us = np.array([q.t1_us for q in device.qubits])
        self._eps = device.crosstalk_matrix()
        # Sample times in microseconds, for comparison against Exp(t1) draws.
        self._t_us = np.arange(n) / device.sample_rate_hz * 1e6

    def shot(self, label: int, shot_seed: int) -> RawShot:
        dev = self.device
        nq, n = dev.n_qubits, dev.n_samples
        if not 0 <= label < 2**nq:
            raise ValueError(f"label {label} out of range for {nq} qubits")
        rng = np.random.Generator(np.random.PCG64(shot_seed & _MASK64))

        # Fixed draw order: one relaxation time per qubit (drawn regardless of
        # preparation so the noise stream is label-independent), then noise.
        taus = np.array([rng.exponential(t1) if t1 > 0 else np.inf for t1 in self._t1_us])
        noise = rng.normal(0.0, 1.0, size=(2, n)) * dev.noise_sigma

        excited = np.array([(label >> q) & 1 for q in range(nq)], dtype=bool)
        # x[q, n]: 1 while qubit q is excited (prepared excited, t < tau).
        x = excited[:, None] & (self._t_us[None, :] < taus[:, None])
        deviation = (self._alpha_e - self._alpha_g)[:, None] * x
        amps = self._alpha_g[:, None] + self._eps @ deviation  # (N, n)

        signal = np.sum(amps * self._phasors, axis=0)
        signal = signal + noise[0] + 1j * noise[1]
        return RawShot(signal.real.copy(), signal.imag.copy(), label)


def generate_shot(device: DeviceConfig, label: int, shot_seed: int) -> RawShot:
    """Deterministic single-shot generation; see module docstring for the model."""
    return ShotSynthesizer(device).shot(label, shot_seed)


def generate_dataset(device: DeviceConfig, shots_per_state: int) -> Dataset:
    """Balanced dataset: every N-bit state appears exactly shots_per_state times.

    Labels are shuffled deterministically from device.seed; shot k draws from
    derive_shot_seed(device.seed, k), so shots are order-independent and any
    one of them can be regenerated alone.
    """
    if shots_per_state < 1:
        raise ValueError("shots_per_state must be >= 1")
    synth = ShotSynthesizer(device)
    n_states = 2**device.n_qubits
    total = n_states * shots_per_state
    if total > 2**31:
        raise ValueError(f"dataset of {total} shots exceeds supported size")

    labels = np.repeat(np.arange(n_states, dtype=np.int64), shots_per_state)
    shuffle_rng = np.random.Generator(
        np.random.PCG64(splitmix64(device.seed ^ _SHUFFLE_SALT))
    )
    shuffle_rng.shuffle(labels)

    shots = [
        synth.shot(int(labels[k]), derive_shot_seed(device.seed, k))
        for k in range(total)
    ]
    return Dataset(device=device, shots=shots, shots_per_state=shots_per_state)


def boxcar_reduce(shot: RawShot, window: int) -> np.ndarray:
    """Average consecutive length-``window`` blocks of I then Q samples.

    Output is [reduced I || reduced Q] of length 2 * n_samples / window.
    """
    return boxcar_reduce_arrays(shot.i_samples, shot.q_samples, window)


def boxcar_reduce_arrays(i: np.ndarray, q: np.ndarray, window: int) -> np.ndarray:
    n = i.shape[-1]
    if window < 1:
        raise ValueError("window must be >= 1")
    if n % window != 0:
        raise ValueError(f"window {window} does not divide n_samples {n}")
    ri = i.reshape(*i.shape[:-1], n // window, window).mean(axis=-1)
    rq = q.reshape(*q.shape[:-1], n // window, window).mean(axis=-1)
    return np.concatenate([ri, rq], axis=-1)


def feature_matrix(dataset: Dataset, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Boxcar-reduced features for every shot: (n_shots, 2*n/window) + labels."""
    i = np.array([s.i_samples for s in dataset.shots])
    q = np.array([s.q_samples for s in dataset.shots])
    return boxcar_reduce_arrays(i, q, window), dataset.labels()
