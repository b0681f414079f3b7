"""Little-endian binary file formats.

QRD1  datasets:      header (magic, version, n_qubits, n_samples, n_shots,
                     sample_rate) then per shot a u32 label and f32 I/Q
                     streams; the full DeviceConfig lives in a JSON sidecar
                     at ``<path>.json``.  I/Q values are stored as f32, so a
                     round trip narrows in-memory f64 traces.
QNM1  models:        architecture block, quantizer specs, then per layer f64
                     weights/bias and batch-norm parameters.
QMF1  matched-filter banks, QSV1 linear-SVM banks (optionally carrying the
                     deployed 8-bit input spec).
QTN1  threshold networks: i32 integer weights, i64 threshold vectors, and
                     the exact output affine.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .classical import LinearSvm, MatchedFilter
from .hwsim import OutputAffine, ThresholdLayer, ThresholdNetwork
from .qnn import ArchSpec, QnnLayer, QnnModel
from .quant import SIGNED, UNSIGNED, QuantSpec
from .synth import Dataset, DeviceConfig, RawShot

_KINDS = ("dense", "segmented", "piecewise")


def _write_array(f, arr: np.ndarray, dtype: str) -> None:
    np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tofile(f)


def _read_array(f, count: int, dtype: str) -> np.ndarray:
    dt = np.dtype(dtype)
    buf = f.read(count * dt.itemsize)
    if len(buf) != count * dt.itemsize:
        raise ValueError("truncated file")
    return np.frombuffer(buf, dtype=dt).copy()


def _pack(f, fmt: str, *values) -> None:
    f.write(struct.pack("<" + fmt, *values))


def _unpack(f, fmt: str):
    size = struct.calcsize("<" + fmt)
    buf = f.read(size)
    if len(buf) != size:
        raise ValueError("truncated file")
    return struct.unpack("<" + fmt, buf)


def _check_magic(f, magic: bytes, version: int) -> None:
    got = f.read(4)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    (ver,) = _unpack(f, "I")
    if ver != version:
        raise ValueError(f"unsupported {magic.decode()} version {ver}")


# ---------------------------------------------------------------------------
# QRD1 datasets
# ---------------------------------------------------------------------------


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    path = Path(path)
    dev = dataset.device
    with open(path, "wb") as f:
        f.write(b"QRD1")
        _pack(f, "IIIId", 1, dev.n_qubits, dev.n_samples, dataset.n_shots,
              dev.sample_rate_hz)
        for shot in dataset.shots:
            _pack(f, "I", shot.label)
            _write_array(f, shot.i_samples, "<f4")
            _write_array(f, shot.q_samples, "<f4")
    sidecar = {
        "device": dev.to_dict(),
        "shots_per_state": dataset.shots_per_state,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    device = DeviceConfig.from_dict(sidecar["device"])
    with open(path, "rb") as f:
        _check_magic(f, b"QRD1", 1)
        n_qubits, n_samples, n_shots, sample_rate = _unpack(f, "IIId")
        if n_qubits != device.n_qubits or n_samples != device.n_samples:
            raise ValueError("QRD1 header disagrees with its JSON sidecar")
        shots = []
        for _ in range(n_shots):
            (label,) = _unpack(f, "I")
            i = _read_array(f, n_samples, "<f4").astype(np.float64)
            q = _read_array(f, n_samples, "<f4").astype(np.float64)
            shots.append(RawShot(i, q, int(label)))
    return Dataset(device=device, shots=shots,
                   shots_per_state=int(sidecar["shots_per_state"]))


# ---------------------------------------------------------------------------
# Shared encodings
# ---------------------------------------------------------------------------


def _write_spec(f, spec: QuantSpec) -> None:
    _pack(f, "BBd", spec.bits, 0 if spec.signed else 1, spec.scale)


def _read_spec(f) -> QuantSpec:
    bits, sign, scale = _unpack(f, "BBd")
    return QuantSpec(bits, SIGNED if sign == 0 else UNSIGNED, scale)


def _write_arch(f, arch: ArchSpec) -> None:
    _pack(f, "B", _KINDS.index(arch.kind))
    _pack(f, "I", len(arch.layer_dims))
    for d in arch.layer_dims:
        _pack(f, "I", d)
    _pack(f, "II", arch.n_segments, arch.piece_len)
    _pack(f, "BBBB", arch.input_bits, arch.weight_bits, arch.act_bits,
          1 if arch.input_signed else 0)
    _pack(f, "d", arch.dropout_p)


def _read_arch(f) -> ArchSpec:
    (kind_idx,) = _unpack(f, "B")
    (n_dims,) = _unpack(f, "I")
    dims = tuple(_unpack(f, "I")[0] for _ in range(n_dims))
    n_segments, piece_len = _unpack(f, "II")
    in_bits, w_bits, a_bits, in_signed = _unpack(f, "BBBB")
    (dropout_p,) = _unpack(f, "d")
    return ArchSpec(
        kind=_KINDS[kind_idx], layer_dims=dims,
        input_bits=in_bits, weight_bits=w_bits, act_bits=a_bits,
        n_segments=n_segments, piece_len=piece_len,
        dropout_p=dropout_p, input_signed=bool(in_signed),
    )


# ---------------------------------------------------------------------------
# QNM1 models
# ---------------------------------------------------------------------------


def write_model(path: str | Path, model: QnnModel) -> None:
    with open(path, "wb") as f:
        f.write(b"QNM1")
        _pack(f, "I", 1)
        _write_arch(f, model.arch)
        _pack(f, "B", 0 if model.input_scale is None else 1)
        _pack(f, "d", model.input_scale if model.input_scale is not None else 0.0)
        _pack(f, "dd", model.bn_momentum, model.bn_eps)
        for layer in model.layers:
            out_dim, in_dim = layer.weight.shape
            _pack(f, "II", out_dim, in_dim)
            _write_array(f, layer.weight, "<f8")
            _write_array(f, layer.bias, "<f8")
            _pack(f, "d", layer.weight_scale)
            has_bn = layer.gamma is not None
            _pack(f, "B", 1 if has_bn else 0)
            if has_bn:
                for arr in (layer.gamma, layer.beta, layer.run_mean, layer.run_var):
                    _write_array(f, arr, "<f8")
                _pack(f, "dib", layer.act_scale if layer.act_scale else 1.0,
                      layer.act_exp if layer.act_exp is not None else 0,
                      1 if layer.act_ema is not None else 0)
                _pack(f, "d", layer.act_ema if layer.act_ema is not None else 0.0)


def read_model(path: str | Path) -> QnnModel:
    with open(path, "rb") as f:
        _check_magic(f, b"QNM1", 1)
        arch = _read_arch(f)
        (has_in_scale,) = _unpack(f, "B")
        (in_scale,) = _unpack(f, "d")
        bn_momentum, bn_eps = _unpack(f, "dd")
        layers = []
        for _ in arch.layer_shapes():
            out_dim, in_dim = _unpack(f, "II")
            weight = _read_array(f, out_dim * in_dim, "<f8").reshape(out_dim, in_dim)
            bias = _read_array(f, out_dim, "<f8")
            (weight_scale,) = _unpack(f, "d")
            layer = QnnLayer(weight=weight, bias=bias, weight_scale=weight_scale)
            (has_bn,) = _unpack(f, "B")
            if has_bn:
                layer.gamma = _read_array(f, out_dim, "<f8")
                layer.beta = _read_array(f, out_dim, "<f8")
                layer.run_mean = _read_array(f, out_dim, "<f8")
                layer.run_var = _read_array(f, out_dim, "<f8")
                act_scale, act_exp, has_ema = _unpack(f, "dib")
                (act_ema,) = _unpack(f, "d")
                layer.act_scale = act_scale
                layer.act_exp = act_exp
                layer.act_ema = act_ema if has_ema else None
            layers.append(layer)
    return QnnModel(
        arch=arch, layers=layers,
        input_scale=in_scale if has_in_scale else None,
        bn_momentum=bn_momentum, bn_eps=bn_eps,
    )


# ---------------------------------------------------------------------------
# QMF1 matched-filter banks / QSV1 SVM banks
# ---------------------------------------------------------------------------


def write_mf_bank(path: str | Path, bank: list[MatchedFilter]) -> None:
    n_samples = bank[0].weights.shape[0]
    with open(path, "wb") as f:
        f.write(b"QMF1")
        _pack(f, "III", 1, len(bank), n_samples)
        for mf in bank:
            _pack(f, "Id", mf.qubit, mf.threshold)
            _write_array(f, mf.weights.view(np.float64), "<f8")


def read_mf_bank(path: str | Path) -> list[MatchedFilter]:
    with open(path, "rb") as f:
        _check_magic(f, b"QMF1", 1)
        n_filters, n_samples = _unpack(f, "II")
        bank = []
        for _ in range(n_filters):
            qubit, threshold = _unpack(f, "Id")
            flat = _read_array(f, 2 * n_samples, "<f8")
            bank.append(MatchedFilter(
                qubit=int(qubit), weights=flat.view(np.complex128),
                threshold=float(threshold),
            ))
    return bank


def write_svm_bank(
    path: str | Path, bank: list[LinearSvm], input_spec: QuantSpec | None = None
) -> None:
    feat_len = bank[0].weights.shape[0]
    with open(path, "wb") as f:
        f.write(b"QSV1")
        _pack(f, "III", 1, len(bank), feat_len)
        _pack(f, "B", 1 if input_spec is not None else 0)
        if input_spec is not None:
            _write_spec(f, input_spec)
        for svm in bank:
            _pack(f, "Idd", svm.qubit, svm.bias, svm.lam)
            _write_array(f, svm.weights, "<f8")


def read_svm_bank(path: str | Path) -> tuple[list[LinearSvm], QuantSpec | None]:
    with open(path, "rb") as f:
        _check_magic(f, b"QSV1", 1)
        n_svms, feat_len = _unpack(f, "II")
        (has_spec,) = _unpack(f, "B")
        spec = _read_spec(f) if has_spec else None
        bank = []
        for _ in range(n_svms):
            qubit, bias, lam = _unpack(f, "Idd")
            weights = _read_array(f, feat_len, "<f8")
            bank.append(LinearSvm(
                qubit=int(qubit), weights=weights, bias=float(bias), lam=float(lam),
            ))
    return bank, spec


# ---------------------------------------------------------------------------
# QTN1 threshold networks
# ---------------------------------------------------------------------------


def write_threshold_network(path: str | Path, tn: ThresholdNetwork) -> None:
    with open(path, "wb") as f:
        f.write(b"QTN1")
        _pack(f, "I", 1)
        _write_arch(f, tn.arch)
        _pack(f, "BBd", tn.input_bits, 1 if tn.input_signed else 0, tn.input_scale)
        _pack(f, "I", len(tn.layers))
        for layer in tn.layers:
            out_dim, in_dim = layer.wlev.shape
            _pack(f, "III", out_dim, in_dim, layer.act_max)
            _write_array(f, layer.wlev, "<i4")
            _write_array(f, layer.thresholds, "<i8")
            _pack(f, "IIiiqq", layer.n_segments, layer.carry_dim,
                  layer.fresh_lo, layer.fresh_hi,
                  layer.mult_carry, layer.mult_fresh)
        out_dim, in_dim = tn.output.wlev.shape
        _pack(f, "IId", out_dim, in_dim, tn.output.scale)
        _write_array(f, tn.output.wlev, "<i4")
        _write_array(f, tn.output.bias, "<f8")


def read_threshold_network(path: str | Path) -> ThresholdNetwork:
    with open(path, "rb") as f:
        _check_magic(f, b"QTN1", 1)
        arch = _read_arch(f)
        in_bits, in_signed, in_scale = _unpack(f, "BBd")
        (n_layers,) = _unpack(f, "I")
        layers = []
        for _ in range(n_layers):
            out_dim, in_dim, act_max = _unpack(f, "III")
            wlev = _read_array(f, out_dim * in_dim, "<i4").astype(np.int64)
            thr = _read_array(f, out_dim * act_max, "<i8")
            n_segments, carry_dim, fresh_lo, fresh_hi, mc, mf_ = _unpack(f, "IIiiqq")
            layers.append(ThresholdLayer(
                wlev=wlev.reshape(out_dim, in_dim),
                thresholds=thr.reshape(out_dim, act_max),
                act_max=act_max, n_segments=n_segments, carry_dim=carry_dim,
                fresh_lo=fresh_lo, fresh_hi=fresh_hi,
                mult_carry=mc, mult_fresh=mf_,
            ))
        out_dim, in_dim, scale = _unpack(f, "IId")
        out_wlev = _read_array(f, out_dim * in_dim, "<i4").astype(np.int64)
        bias = _read_array(f, out_dim, "<f8")
    return ThresholdNetwork(
        arch=arch, input_bits=in_bits, input_signed=bool(in_signed),
        input_scale=in_scale, layers=layers,
        output=OutputAffine(
            wlev=out_wlev.reshape(out_dim, in_dim), scale=scale, bias=bias
        ),
    )
