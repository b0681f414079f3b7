"""Quantized MLP state discriminators with quantization-aware training.

Three topologies share one parameterisation:

* ``dense``      -- plain MLP, layer_dims = [N_I, H_1, ..., N_O].
* ``segmented``  -- the first hidden layer is split into equal segments that
  all see the full input and run as independent blocks; their outputs are
  activation-quantized with one shared spec and concatenated.
* ``piecewise``  -- the input arrives in consecutive pieces: layer 1 consumes
  layer_dims[0] features, every later hidden layer consumes ``piece_len``
  fresh features next to the previous layer's output.  layer_dims[1:-1] are
  the *input* widths of those layers; each hidden layer outputs
  layer_dims[1] - piece_len values.

Each hidden layer is linear -> batch norm -> dropout -> ReLU -> activation
quantizer; the output layer is a plain affine producing one logit per qubit.
Training uses straight-through-estimator gradients through the quantizers and
Adam with a linearly decaying learning rate.

Evaluation-mode affines are computed in factored form,
``scale * (integer_levels @ integer_weight_levels.T) + bias``, so the integer
compiler in :mod:`qrd.hwsim` can reproduce them bit-exactly.  For piecewise
layers the activation scale is snapped to a power-of-two multiple of the
input scale, which keeps the mixed carry/fresh accumulator on a single
integer grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quant import (
    SIGNED,
    UNSIGNED,
    QuantSpec,
    calibrate_scale,
    fake_quantize,
    quantize_levels,
    ste_backward,
)
from .synth import Dataset, feature_matrix, splitmix64

DENSE = "dense"
SEGMENTED = "segmented"
PIECEWISE = "piecewise"

_SHUFFLE_SALT = 0x9E6C63D0876A3F35
_DROPOUT_SALT = 0x5851F42D4C957F2D
_INIT_SALT = 0x41C64E6DA3BC0074


@dataclass(frozen=True)
class LayerShape:
    """Resolved geometry of one layer (hidden or output)."""

    out_dim: int
    in_dim: int
    is_output: bool
    n_segments: int = 1
    carry_dim: int = 0  # piecewise: leading inputs taken from previous layer
    fresh_lo: int = -1  # piecewise: slice of the feature vector fed fresh
    fresh_hi: int = -1


@dataclass(frozen=True)
class ArchSpec:
    kind: str
    layer_dims: tuple[int, ...]
    input_bits: int = 4
    weight_bits: int = 2
    act_bits: int = 2
    n_segments: int = 1
    piece_len: int = 0
    dropout_p: float = 0.1
    input_signed: bool = True

    def __post_init__(self):
        if self.kind not in (DENSE, SEGMENTED, PIECEWISE):
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"invalid layer_dims {dims}")
        for name in ("input_bits", "weight_bits", "act_bits"):
            b = getattr(self, name)
            if not 1 <= b <= 8:
                raise ValueError(f"{name} must be in 1..8, got {b}")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.kind == SEGMENTED:
            if len(dims) < 3:
                raise ValueError("segmented arch needs at least one hidden layer")
            if self.n_segments < 1 or dims[1] % self.n_segments != 0:
                raise ValueError(
                    f"n_segments {self.n_segments} must divide first hidden "
                    f"width {dims[1]}"
                )
        if self.kind == PIECEWISE:
            if len(dims) < 3:
                raise ValueError("piecewise arch needs at least two hidden layers")
            inner = dims[1:-1]
            if len(set(inner)) != 1:
                raise ValueError("piecewise inner layer widths must all be equal")
            if not 1 <= self.piece_len < inner[0]:
                raise ValueError(
                    f"piece_len {self.piece_len} must be in [1, {inner[0]})"
                )

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_hidden(self) -> int:
        if self.kind == PIECEWISE:
            return len(self.layer_dims) - 1
        return len(self.layer_dims) - 2

    @property
    def carry_dim(self) -> int:
        """Piecewise hidden-layer output width."""
        return self.layer_dims[1] - self.piece_len

    @property
    def n_features(self) -> int:
        """Length of the feature vector the model consumes."""
        if self.kind == PIECEWISE:
            return self.layer_dims[0] + (self.n_hidden - 1) * self.piece_len
        return self.layer_dims[0]

    def layer_shapes(self) -> list[LayerShape]:
        dims = self.layer_dims
        shapes: list[LayerShape] = []
        if self.kind == PIECEWISE:
            carry = self.carry_dim
            shapes.append(
                LayerShape(carry, dims[0], False, fresh_lo=0, fresh_hi=dims[0])
            )
            for k in range(1, self.n_hidden):
                lo = dims[0] + (k - 1) * self.piece_len
                shapes.append(
                    LayerShape(
                        carry,
                        carry + self.piece_len,
                        False,
                        carry_dim=carry,
                        fresh_lo=lo,
                        fresh_hi=lo + self.piece_len,
                    )
                )
            shapes.append(LayerShape(dims[-1], carry, True))
            return shapes
        for k in range(self.n_hidden):
            segs = self.n_segments if (self.kind == SEGMENTED and k == 0) else 1
            shapes.append(LayerShape(dims[k + 1], dims[k], False, n_segments=segs))
        shapes.append(LayerShape(dims[-1], dims[-2], True))
        return shapes

    def param_count(self) -> int:
        """Learnable parameters: weights + biases + batch-norm gamma/beta."""
        total = 0
        for s in self.layer_shapes():
            total += s.out_dim * s.in_dim + s.out_dim
            if not s.is_output:
                total += 2 * s.out_dim
        return total


@dataclass
class QnnLayer:
    weight: np.ndarray  # (out, in), full-precision master copy
    bias: np.ndarray
    gamma: np.ndarray | None = None  # batch-norm params; None on the output layer
    beta: np.ndarray | None = None
    run_mean: np.ndarray | None = None
    run_var: np.ndarray | None = None
    weight_scale: float = 1.0
    act_scale: float | None = None
    act_exp: int | None = None  # piecewise: act_scale = input_scale * 2**act_exp
    act_ema: float | None = None  # calibration observer state


@dataclass
class QnnModel:
    arch: ArchSpec
    layers: list[QnnLayer]
    input_scale: float | None = None
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    quant_bypass: bool = False  # debug: run all quantizers as identity

    @property
    def input_spec(self) -> QuantSpec:
        if self.input_scale is None:
            raise ValueError("model input quantizer is not calibrated yet")
        sign = SIGNED if self.arch.input_signed else UNSIGNED
        return QuantSpec(self.arch.input_bits, sign, self.input_scale)

    def weight_spec(self, layer_idx: int) -> QuantSpec:
        return QuantSpec(
            self.arch.weight_bits, SIGNED, self.layers[layer_idx].weight_scale
        )

    def act_scale_of(self, layer_idx: int) -> float:
        layer = self.layers[layer_idx]
        if self.arch.kind == PIECEWISE:
            if self.input_scale is None:
                raise ValueError("piecewise activation scales need the input scale")
            return float(np.ldexp(self.input_scale, layer.act_exp or 0))
        return float(layer.act_scale if layer.act_scale is not None else 1.0)

    def act_spec(self, layer_idx: int) -> QuantSpec:
        return QuantSpec(self.arch.act_bits, UNSIGNED, self.act_scale_of(layer_idx))


def _weight_scale(weight: np.ndarray, bits: int) -> float:
    """Per-tensor weight quantizer scale.

    Binary and ternary grids use mean-|w| statistics (max-abs scaling puts
    nearly every weight on the zero level); wider grids use max-abs.
    """
    absw = np.abs(weight)
    if bits == 1:
        m = float(absw.mean())
        return m if m > 0 else 1.0
    if bits == 2:
        m = 1.4 * float(absw.mean())  # ternary: |w| > 0.7 mean|w| snaps to +/-1
        return m if m > 0 else 1.0
    max_lev = QuantSpec(bits, SIGNED, 1.0).max_level
    m = float(absw.max())
    return m / max_lev if m > 0 else 1.0


def build_model(arch: ArchSpec, init_seed: int = 0) -> QnnModel:
    """He-uniform weights, zero biases, identity batch norm."""
    rng = np.random.Generator(np.random.PCG64(splitmix64(init_seed ^ _INIT_SALT)))
    layers = []
    for shape in arch.layer_shapes():
        limit = np.sqrt(6.0 / shape.in_dim)
        w = rng.uniform(-limit, limit, size=(shape.out_dim, shape.in_dim))
        layer = QnnLayer(
            weight=w,
            bias=np.zeros(shape.out_dim),
            weight_scale=_weight_scale(w, arch.weight_bits),
        )
        if not shape.is_output:
            layer.gamma = np.ones(shape.out_dim)
            layer.beta = np.zeros(shape.out_dim)
            layer.run_mean = np.zeros(shape.out_dim)
            layer.run_var = np.ones(shape.out_dim)
            layer.act_scale = 1.0
            layer.act_exp = 0
        layers.append(layer)
    return QnnModel(arch=arch, layers=layers)


def calibrate_input(
    model: QnnModel, features: np.ndarray, percentile: float = 99.9
) -> None:
    sign = SIGNED if model.arch.input_signed else UNSIGNED
    spec = calibrate_scale(features, model.arch.input_bits, sign, percentile)
    model.input_scale = spec.scale


# ---------------------------------------------------------------------------
# Evaluation path.  All quantities are precomputed into an EvalPlan whose
# arithmetic the integer compiler reproduces exactly.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalHiddenLayer:
    wlev: np.ndarray  # integer weight levels as float64
    s_b: float  # scale mapping the integer accumulator to the affine output
    bias: np.ndarray
    run_mean: np.ndarray
    bn_mul: np.ndarray  # gamma / sqrt(run_var + eps)
    beta: np.ndarray
    act_scale: float
    act_max: int
    n_segments: int = 1
    carry_dim: int = 0
    fresh_lo: int = -1
    fresh_hi: int = -1
    mult_carry: int = 1  # power-of-two factors aligning carry/fresh grids
    mult_fresh: int = 1


@dataclass(frozen=True)
class EvalOutputLayer:
    wlev: np.ndarray
    scale: float
    bias: np.ndarray


@dataclass(frozen=True)
class EvalPlan:
    input_spec: QuantSpec
    hidden: list[EvalHiddenLayer]
    output: EvalOutputLayer


def postacc_levels(acc, s_b, bias, run_mean, bn_mul, beta, act_scale, act_max):
    """Integer accumulator -> activation level, the shared post-accumulator
    pipeline (affine scale, batch norm, ReLU, activation quantizer).

    The exact operation order here is the contract the threshold compiler
    inverts; do not reassociate.
    """
    z = s_b * acc + bias
    y = (z - run_mean) * bn_mul + beta
    r = np.maximum(y, 0.0)
    return np.clip(np.rint(r / act_scale), 0.0, float(act_max))


def eval_plan(model: QnnModel) -> EvalPlan:
    if model.quant_bypass:
        raise ValueError("eval plans are only defined for quantized models")
    arch = model.arch
    input_spec = model.input_spec
    shapes = arch.layer_shapes()
    hidden: list[EvalHiddenLayer] = []
    prev_scale = input_spec.scale
    prev_exp = 0  # piecewise: exponent of the carry stream's scale
    act_max = QuantSpec(arch.act_bits, UNSIGNED, 1.0).max_level

    for idx, shape in enumerate(shapes[:-1]):
        layer = model.layers[idx]
        wspec = model.weight_spec(idx)
        wlev = quantize_levels(layer.weight, wspec)
        act_scale = model.act_scale_of(idx)
        bn_mul = layer.gamma / np.sqrt(layer.run_var + model.bn_eps)
        if arch.kind == PIECEWISE and shape.carry_dim > 0:
            e = prev_exp
            s_b = float(np.ldexp(wspec.scale * input_spec.scale, min(e, 0)))
            mult_carry = 1 << max(e, 0)
            mult_fresh = 1 << (-min(e, 0))
        else:
            s_b = float(wspec.scale * prev_scale)
            mult_carry = mult_fresh = 1
        hidden.append(
            EvalHiddenLayer(
                wlev=wlev,
                s_b=s_b,
                bias=layer.bias,
                run_mean=layer.run_mean,
                bn_mul=bn_mul,
                beta=layer.beta,
                act_scale=act_scale,
                act_max=act_max,
                n_segments=shape.n_segments,
                carry_dim=shape.carry_dim,
                fresh_lo=shape.fresh_lo,
                fresh_hi=shape.fresh_hi,
                mult_carry=mult_carry,
                mult_fresh=mult_fresh,
            )
        )
        prev_scale = act_scale
        prev_exp = layer.act_exp or 0

    out_idx = len(shapes) - 1
    out_layer = model.layers[out_idx]
    out_wspec = model.weight_spec(out_idx)
    output = EvalOutputLayer(
        wlev=quantize_levels(out_layer.weight, out_wspec),
        scale=float(out_wspec.scale * prev_scale),
        bias=out_layer.bias,
    )
    return EvalPlan(input_spec=input_spec, hidden=hidden, output=output)


def _layer_accumulator(eh: EvalHiddenLayer, cur: np.ndarray, lev: np.ndarray):
    """Integer accumulator of one hidden layer (float64 exact-int arithmetic)."""
    if eh.fresh_lo >= 0:  # piecewise
        fresh = lev[:, eh.fresh_lo : eh.fresh_hi]
        if eh.carry_dim == 0:
            return fresh @ eh.wlev.T
        wc = eh.wlev[:, : eh.carry_dim]
        wf = eh.wlev[:, eh.carry_dim :]
        return eh.mult_carry * (cur @ wc.T) + eh.mult_fresh * (fresh @ wf.T)
    if eh.n_segments > 1:
        seg = eh.wlev.shape[0] // eh.n_segments
        parts = [
            cur @ eh.wlev[s * seg : (s + 1) * seg].T for s in range(eh.n_segments)
        ]
        return np.concatenate(parts, axis=1)
    return cur @ eh.wlev.T


def eval_forward_levels(plan: EvalPlan, lev: np.ndarray) -> np.ndarray:
    """Eval forward from input levels; the reference the integer path must hit."""
    cur = lev
    for eh in plan.hidden:
        acc = _layer_accumulator(eh, cur, lev)
        cur = postacc_levels(
            acc, eh.s_b, eh.bias, eh.run_mean, eh.bn_mul, eh.beta,
            eh.act_scale, eh.act_max,
        )
    return plan.output.scale * (cur @ plan.output.wlev.T) + plan.output.bias


def _forward_eval_bypass(model: QnnModel, x: np.ndarray) -> np.ndarray:
    shapes = model.arch.layer_shapes()
    cur = x
    for idx, shape in enumerate(shapes[:-1]):
        layer = model.layers[idx]
        h = _gather_input(model.arch, shape, cur, x)
        z = h @ layer.weight.T + layer.bias
        y = (z - layer.run_mean) / np.sqrt(layer.run_var + model.bn_eps)
        cur = np.maximum(layer.gamma * y + layer.beta, 0.0)
    out = model.layers[-1]
    return cur @ out.weight.T + out.bias


def _gather_input(arch, shape: LayerShape, cur, full):
    """Input block of a layer: previous activations plus any fresh piece."""
    if shape.fresh_lo < 0:
        return cur
    fresh = full[:, shape.fresh_lo : shape.fresh_hi]
    if shape.carry_dim == 0:
        return fresh
    return np.concatenate([cur, fresh], axis=1)


# ---------------------------------------------------------------------------
# Training path: float forward with caches, hand-written backward.
# ---------------------------------------------------------------------------


@dataclass
class _LayerCache:
    h_in: np.ndarray
    wq: np.ndarray
    xhat: np.ndarray | None = None
    std: np.ndarray | None = None
    drop_mask: np.ndarray | None = None
    d: np.ndarray | None = None  # pre-ReLU (post-dropout)
    r: np.ndarray | None = None  # post-ReLU, pre-act-quant


def _observe_act(model: QnnModel, layer: QnnLayer, r: np.ndarray) -> None:
    """EMA percentile observer feeding the (static) activation scale."""
    q = float(np.percentile(r, 99.9))
    if layer.act_ema is None:
        layer.act_ema = q
    else:
        layer.act_ema = 0.9 * layer.act_ema + 0.1 * q
    act_max = QuantSpec(model.arch.act_bits, UNSIGNED, 1.0).max_level
    ideal = max(layer.act_ema, 1e-9) / act_max
    if model.arch.kind == PIECEWISE:
        e = int(np.clip(np.round(np.log2(ideal / model.input_scale)), -16, 16))
        layer.act_exp = e
        layer.act_scale = float(np.ldexp(model.input_scale, e))
    else:
        layer.act_scale = ideal


def _forward_train(
    model: QnnModel, x: np.ndarray, rng: np.random.Generator | None
) -> tuple[np.ndarray, list[_LayerCache], np.ndarray]:
    arch = model.arch
    shapes = arch.layer_shapes()
    bypass = model.quant_bypass

    x0 = x if bypass else fake_quantize(x, model.input_spec)
    caches: list[_LayerCache] = []
    cur = x0
    for idx, shape in enumerate(shapes[:-1]):
        layer = model.layers[idx]
        layer.weight_scale = _weight_scale(layer.weight, arch.weight_bits)
        wq = layer.weight if bypass else fake_quantize(layer.weight, model.weight_spec(idx))
        h_in = _gather_input(arch, shape, cur, x0)
        z = h_in @ wq.T + layer.bias

        mu = z.mean(axis=0)
        var = z.var(axis=0)
        std = np.sqrt(var + model.bn_eps)
        xhat = (z - mu) / std
        y = layer.gamma * xhat + layer.beta
        m = model.bn_momentum
        n = z.shape[0]
        unbiased = var * (n / (n - 1)) if n > 1 else var
        layer.run_mean = (1 - m) * layer.run_mean + m * mu
        layer.run_var = (1 - m) * layer.run_var + m * unbiased

        if arch.dropout_p > 0 and rng is not None:
            keep = rng.random(y.shape) >= arch.dropout_p
            drop_mask = keep / (1.0 - arch.dropout_p)
            d = y * drop_mask
        else:
            drop_mask = None
            d = y
        r = np.maximum(d, 0.0)
        if bypass:
            a = r
        else:
            _observe_act(model, layer, r)
            a = fake_quantize(r, model.act_spec(idx))
        caches.append(
            _LayerCache(h_in=h_in, wq=wq, xhat=xhat, std=std,
                        drop_mask=drop_mask, d=d, r=r)
        )
        cur = a

    out_idx = len(shapes) - 1
    out_layer = model.layers[out_idx]
    out_layer.weight_scale = _weight_scale(out_layer.weight, arch.weight_bits)
    wq = out_layer.weight if bypass else fake_quantize(
        out_layer.weight, model.weight_spec(out_idx)
    )
    caches.append(_LayerCache(h_in=cur, wq=wq))
    logits = cur @ wq.T + out_layer.bias
    return logits, caches, x0


def forward(
    model: QnnModel,
    features: np.ndarray,
    mode: str = "eval",
    dropout_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for a feature vector or a batch of them."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.arch.n_features:
        raise ValueError(
            f"feature length {x.shape[1]} does not match architecture input "
            f"{model.arch.n_features}"
        )
    if mode == "train":
        logits, _, _ = _forward_train(model, x, dropout_rng)
    elif mode == "eval":
        if model.quant_bypass:
            logits = _forward_eval_bypass(model, x)
        else:
            plan = eval_plan(model)
            logits = eval_forward_levels(plan, quantize_levels(x, plan.input_spec))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return logits[0] if single else logits


def _backward(
    model: QnnModel, caches: list[_LayerCache], dlogits: np.ndarray
) -> dict[str, np.ndarray]:
    arch = model.arch
    shapes = arch.layer_shapes()
    bypass = model.quant_bypass
    grads: dict[str, np.ndarray] = {}

    out_idx = len(shapes) - 1
    out_cache = caches[out_idx]
    out_layer = model.layers[out_idx]
    dwq = dlogits.T @ out_cache.h_in
    grads[f"b{out_idx}"] = dlogits.sum(axis=0)
    grads[f"W{out_idx}"] = dwq if bypass else ste_backward(
        out_layer.weight, dwq, model.weight_spec(out_idx)
    )
    dh = dlogits @ out_cache.wq

    for idx in range(out_idx - 1, -1, -1):
        layer = model.layers[idx]
        cache = caches[idx]
        shape = shapes[idx]
        da = dh
        dr = da if bypass else ste_backward(cache.r, da, model.act_spec(idx))
        dd = dr * (cache.d > 0)
        dy = dd if cache.drop_mask is None else dd * cache.drop_mask

        grads[f"g{idx}"] = (dy * cache.xhat).sum(axis=0)
        grads[f"beta{idx}"] = dy.sum(axis=0)
        dz = (layer.gamma / cache.std) * (
            dy - dy.mean(axis=0) - cache.xhat * (dy * cache.xhat).mean(axis=0)
        )

        dwq = dz.T @ cache.h_in
        grads[f"b{idx}"] = dz.sum(axis=0)
        grads[f"W{idx}"] = dwq if bypass else ste_backward(
            layer.weight, dwq, model.weight_spec(idx)
        )
        dh_in = dz @ cache.wq
        if shape.fresh_lo >= 0:
            dh = dh_in[:, : shape.carry_dim] if shape.carry_dim > 0 else None
        else:
            dh = dh_in
    return grads


# ---------------------------------------------------------------------------
# Loss, prediction, training loop.
# ---------------------------------------------------------------------------


def _label_bits(labels: np.ndarray, n_qubits: int) -> np.ndarray:
    return ((np.asarray(labels, dtype=np.int64)[:, None] >> np.arange(n_qubits)) & 1)


def loss(logits: np.ndarray, label: int) -> float:
    """Mean per-qubit sigmoid binary cross-entropy for one shot."""
    logits = np.asarray(logits, dtype=np.float64)
    t = _label_bits(np.array([label]), logits.shape[-1])[0]
    per = np.maximum(logits, 0.0) - logits * t + np.log1p(np.exp(-np.abs(logits)))
    return float(per.mean())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _loss_and_grad(logits: np.ndarray, labels: np.ndarray):
    n_out = logits.shape[1]
    t = _label_bits(labels, n_out).astype(np.float64)
    per = np.maximum(logits, 0.0) - logits * t + np.log1p(np.exp(-np.abs(logits)))
    dlogits = (_sigmoid(logits) - t) / logits.size
    return float(per.mean()), dlogits


def predict_states(logits: np.ndarray) -> int | np.ndarray:
    """Bit q set iff logit q > 0 (ties resolve to ground)."""
    logits = np.asarray(logits)
    bits = (logits > 0).astype(np.int64)
    weights = 1 << np.arange(logits.shape[-1], dtype=np.int64)
    masks = bits @ weights
    return int(masks) if logits.ndim == 1 else masks


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr0: float = 1e-3
    weight_decay: float = 1e-3
    batch_size: int = 1024
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_f_gm: float


def _named_params(model: QnnModel):
    for idx, layer in enumerate(model.layers):
        yield f"W{idx}", layer, "weight", True
        yield f"b{idx}", layer, "bias", False
        if layer.gamma is not None:
            yield f"g{idx}", layer, "gamma", False
            yield f"beta{idx}", layer, "beta", False


def train(
    model: QnnModel,
    dataset: Dataset,
    boxcar_window: int,
    cfg: TrainConfig,
) -> tuple[QnnModel, list[EpochStats]]:
    """Quantization-aware training; deterministic for a fixed cfg.seed."""
    from . import metrics  # local import to avoid cycles

    features, labels = feature_matrix(dataset, boxcar_window)
    if features.shape[1] != model.arch.n_features:
        raise ValueError(
            f"boxcar features of length {features.shape[1]} do not match "
            f"architecture input {model.arch.n_features}"
        )
    if model.arch.n_outputs != dataset.device.n_qubits:
        raise ValueError("model output count must equal the dataset's qubit count")

    split_rng = np.random.Generator(
        np.random.PCG64(splitmix64(cfg.seed ^ _SHUFFLE_SALT))
    )
    order = split_rng.permutation(len(labels))
    n_val = int(round(len(labels) * cfg.val_fraction))
    val_idx = order[len(labels) - n_val :]
    train_idx = order[: len(labels) - n_val]
    x_train, y_train = features[train_idx], labels[train_idx]
    x_val, y_val = features[val_idx], labels[val_idx]

    if not model.quant_bypass:
        calibrate_input(model, x_train)

    dropout_rng = np.random.Generator(
        np.random.PCG64(splitmix64(cfg.seed ^ _DROPOUT_SALT))
    )
    adam_m = {name: np.zeros_like(getattr(layer, attr))
              for name, layer, attr, _ in _named_params(model)}
    adam_v = {name: np.zeros_like(m) for name, m in adam_m.items()}
    step = 0
    history: list[EpochStats] = []

    for epoch in range(cfg.epochs):
        lr = cfg.lr0 * (1.0 - epoch / cfg.epochs)
        perm = split_rng.permutation(len(y_train))
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            if len(batch) < 2:
                continue  # batch norm needs at least two samples
            logits, caches, _ = _forward_train(
                model, x_train[batch],
                dropout_rng if model.arch.dropout_p > 0 else None,
            )
            batch_loss, dlogits = _loss_and_grad(logits, y_train[batch])
            grads = _backward(model, caches, dlogits)
            losses.append(batch_loss)

            step += 1
            for name, layer, attr, decay in _named_params(model):
                g = grads[name]
                if decay and cfg.weight_decay > 0:
                    g = g + cfg.weight_decay * getattr(layer, attr)
                adam_m[name] = cfg.beta1 * adam_m[name] + (1 - cfg.beta1) * g
                adam_v[name] = cfg.beta2 * adam_v[name] + (1 - cfg.beta2) * g * g
                mhat = adam_m[name] / (1 - cfg.beta1**step)
                vhat = adam_v[name] / (1 - cfg.beta2**step)
                setattr(
                    layer, attr,
                    getattr(layer, attr) - lr * mhat / (np.sqrt(vhat) + cfg.adam_eps),
                )

        val_f_gm = float("nan")
        if len(y_val) > 0:
            try:
                preds = predict_states(forward(model, x_val, "eval"))
                val_f_gm = metrics.fidelity(
                    y_val, preds, dataset.device.n_qubits
                ).f_gm
            except ValueError:
                pass  # a validation split may miss a preparation entirely
        history.append(EpochStats(epoch, lr, float(np.mean(losses)), val_f_gm))

    # Freeze quantizer scales against the final weights.
    for layer in model.layers:
        layer.weight_scale = _weight_scale(layer.weight, model.arch.weight_bits)
    return model, history
