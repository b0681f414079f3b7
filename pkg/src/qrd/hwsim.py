"""Integer-only compiled inference and a folding-based cycle latency model.

``compile_thresholds`` turns an eval-ready quantized model into a threshold
network: per hidden neuron, the whole post-accumulator pipeline (scale, batch
norm, ReLU, activation quantizer) collapses into a nondecreasing threshold
vector over the integer accumulator; the output layer keeps an exact affine
(scale, offset) so real logits are recovered.  ``int_forward`` then runs the
model entirely in 64-bit integer arithmetic, bit-exactly matching eval-mode
reference inference.

``estimate_latency`` models each layer as a matrix-vector unit folded over PE
rows and SIMD input lanes: compute cycles = ceil(in/SIMD) * ceil(out/PE),
plus a per-layer pipeline overhead.  Segmented first layers run their
segments concurrently; piecewise pipelines with streaming overlap hide every
layer except the ones fed by the final input piece.  A per-layer PE cap
stands in for stream-width limits of the interconnect; cycle counts are a
structural model, not a gate-level reproduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qnn import (
    PIECEWISE,
    SEGMENTED,
    ArchSpec,
    EvalPlan,
    QnnModel,
    eval_plan,
    postacc_levels,
)
from .quant import QuantSpec

_ACC_LIMIT = 2**62  # compile-time bound on any reachable accumulator value
_MAX_NUDGE = 1000


@dataclass(frozen=True)
class ThresholdLayer:
    wlev: np.ndarray  # int64 (out, in); sign-flipped rows where gamma < 0
    thresholds: np.ndarray  # int64 (out, n_act_levels - 1), nondecreasing rows
    act_max: int
    n_segments: int = 1
    carry_dim: int = 0
    fresh_lo: int = -1
    fresh_hi: int = -1
    mult_carry: int = 1
    mult_fresh: int = 1


@dataclass(frozen=True)
class OutputAffine:
    wlev: np.ndarray  # int64
    scale: float
    bias: np.ndarray


@dataclass(frozen=True)
class ThresholdNetwork:
    arch: ArchSpec
    input_bits: int
    input_signed: bool
    input_scale: float
    layers: list[ThresholdLayer]
    output: OutputAffine

    @property
    def input_spec(self) -> QuantSpec:
        from .quant import SIGNED, UNSIGNED

        sign = SIGNED if self.input_signed else UNSIGNED
        return QuantSpec(self.input_bits, sign, self.input_scale)


def _acc_bounds(wlev_scaled: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Reachable accumulator range for one layer given per-input level bounds."""
    a = wlev_scaled * lo[None, :]
    b = wlev_scaled * hi[None, :]
    return np.minimum(a, b).sum(axis=1), np.maximum(a, b).sum(axis=1)


def _neuron_thresholds(
    a_min: int, a_max: int, s_b, bias, mu, bn_mul, beta, act_scale, act_max
) -> np.ndarray:
    """Smallest integer accumulator reaching each activation level.

    The affine batch-norm pipeline is inverted in closed form; the result is
    then pinned against the exact pipeline at the two neighbouring integers,
    which absorbs floating-point rounding and the round-half-to-even ties.
    Sentinels a_min - 1 / a_max + 1 encode always-on / never-reached levels.
    """

    def g(acc: float) -> float:
        return float(
            postacc_levels(
                np.float64(acc), s_b, bias, mu, bn_mul, beta, act_scale, act_max
            )
        )

    low, high = a_min - 1, a_max + 1
    out = np.empty(act_max, dtype=np.int64)
    if bn_mul == 0.0 or s_b == 0.0:
        const = g(0.0)
        for k in range(1, act_max + 1):
            out[k - 1] = low if const >= k else high
        return out

    for k in range(1, act_max + 1):
        # Solve (s_b*A + bias - mu) * bn_mul + beta = (k - 1/2) * act_scale.
        t = (((k - 0.5) * act_scale - beta) / bn_mul - bias + mu) / s_b
        cand = int(math.ceil(t)) if bn_mul > 0 else int(math.floor(t))
        cand = min(max(cand, low), high)
        for _ in range(_MAX_NUDGE):
            if cand > low and g(cand - 1) >= k:
                cand -= 1
            elif cand <= a_max and g(cand) < k:
                cand += 1
            else:
                break
        else:
            raise RuntimeError("threshold inversion failed to pin the crossing")
        out[k - 1] = cand if cand <= a_max else high
    return out


def _layer_input_bounds(plan: EvalPlan, arch: ArchSpec, layer_idx: int, in_dim: int):
    """Per-input integer level bounds seen by hidden layer ``layer_idx``."""
    spec = plan.input_spec
    eh = plan.hidden[layer_idx]
    lo = np.empty(in_dim)
    hi = np.empty(in_dim)
    if eh.fresh_lo >= 0 and eh.carry_dim > 0:
        prev_max = plan.hidden[layer_idx - 1].act_max
        lo[: eh.carry_dim] = 0
        hi[: eh.carry_dim] = prev_max
        lo[eh.carry_dim :] = spec.min_level
        hi[eh.carry_dim :] = spec.max_level
    elif layer_idx == 0:
        lo[:] = spec.min_level
        hi[:] = spec.max_level
    else:
        lo[:] = 0
        hi[:] = plan.hidden[layer_idx - 1].act_max
    return lo, hi


def compile_thresholds(model: QnnModel) -> ThresholdNetwork:
    """Compile an eval-ready model; int_forward on the result is bit-exact."""
    plan = eval_plan(model)
    arch = model.arch
    layers: list[ThresholdLayer] = []
    for idx, eh in enumerate(plan.hidden):
        if not np.all(np.isfinite(eh.bn_mul)):
            raise ValueError(
                f"layer {idx}: batch-norm statistics give a non-finite multiplier"
            )
        out_dim, in_dim = eh.wlev.shape
        lo, hi = _layer_input_bounds(plan, arch, idx, in_dim)
        # Power-of-two grid multipliers fold directly into the weight levels.
        col_mult = np.ones(in_dim)
        if eh.carry_dim > 0:
            col_mult[: eh.carry_dim] = eh.mult_carry
            col_mult[eh.carry_dim :] = eh.mult_fresh
        elif eh.fresh_lo >= 0:
            col_mult[:] = eh.mult_fresh

        wlev = eh.wlev.copy()
        bias = eh.bias.copy()
        mu = eh.run_mean.copy()
        bn_mul = eh.bn_mul.copy()
        flip = bn_mul < 0
        # gamma < 0 makes the pipeline decreasing in the accumulator; jointly
        # flipping the weight row, bias, running mean, and gamma is an exact
        # equivalence that restores monotonicity.
        wlev[flip] = -wlev[flip]
        bias[flip] = -bias[flip]
        mu[flip] = -mu[flip]
        bn_mul[flip] = -bn_mul[flip]

        scaled = wlev * col_mult[None, :]
        a_min, a_max = _acc_bounds(scaled, lo, hi)
        if np.max(np.abs(a_min)) >= _ACC_LIMIT or np.max(np.abs(a_max)) >= _ACC_LIMIT:
            raise OverflowError(
                f"layer {idx}: accumulator bound exceeds 64-bit headroom"
            )
        thresholds = np.empty((out_dim, eh.act_max), dtype=np.int64)
        for j in range(out_dim):
            thresholds[j] = _neuron_thresholds(
                int(a_min[j]), int(a_max[j]), eh.s_b, bias[j], mu[j],
                bn_mul[j], eh.beta[j], eh.act_scale, eh.act_max,
            )
        layers.append(
            ThresholdLayer(
                wlev=wlev.astype(np.int64),
                thresholds=thresholds,
                act_max=eh.act_max,
                n_segments=eh.n_segments,
                carry_dim=eh.carry_dim,
                fresh_lo=eh.fresh_lo,
                fresh_hi=eh.fresh_hi,
                mult_carry=eh.mult_carry,
                mult_fresh=eh.mult_fresh,
            )
        )
    spec = plan.input_spec
    if plan.hidden:
        out_in_max = plan.hidden[-1].act_max
    else:
        out_in_max = max(abs(spec.min_level), spec.max_level)
    out_bound = np.abs(plan.output.wlev).sum(axis=1) * out_in_max
    if np.max(out_bound, initial=0) >= _ACC_LIMIT:
        raise OverflowError("output accumulator bound exceeds 64-bit headroom")
    return ThresholdNetwork(
        arch=arch,
        input_bits=spec.bits,
        input_signed=spec.signed,
        input_scale=spec.scale,
        layers=layers,
        output=OutputAffine(
            wlev=plan.output.wlev.astype(np.int64),
            scale=plan.output.scale,
            bias=plan.output.bias.copy(),
        ),
    )


def _check_levels(levels: np.ndarray, spec: QuantSpec) -> np.ndarray:
    lev = np.asarray(levels)
    as_int = lev.astype(np.int64)
    if np.any(as_int != lev):
        raise ValueError("input levels must be integers")
    if as_int.min(initial=0) < spec.min_level or as_int.max(initial=0) > spec.max_level:
        raise ValueError("input level outside the quantizer's level set")
    return as_int


def int_forward_batch(tn: ThresholdNetwork, input_levels: np.ndarray) -> np.ndarray:
    """Integer-only inference for a (B, n_features) level matrix."""
    lev = _check_levels(input_levels, tn.input_spec)
    cur = lev
    for layer in tn.layers:
        if layer.fresh_lo >= 0:
            fresh = lev[:, layer.fresh_lo : layer.fresh_hi]
            if layer.carry_dim == 0:
                acc = fresh @ layer.wlev.T
            else:
                wc = layer.wlev[:, : layer.carry_dim]
                wf = layer.wlev[:, layer.carry_dim :]
                acc = layer.mult_carry * (cur @ wc.T) + \
                    layer.mult_fresh * (fresh @ wf.T)
        else:
            acc = cur @ layer.wlev.T
        out = np.empty_like(acc)
        for j in range(acc.shape[1]):
            # activation level = number of thresholds <= accumulator
            out[:, j] = np.searchsorted(layer.thresholds[j], acc[:, j], side="right")
        cur = out
    acc = cur @ tn.output.wlev.T
    return tn.output.scale * acc.astype(np.float64) + tn.output.bias


def int_forward(tn: ThresholdNetwork, input_levels: np.ndarray) -> np.ndarray:
    return int_forward_batch(tn, np.asarray(input_levels)[None, :])[0]


# ---------------------------------------------------------------------------
# Folding latency model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerFolding:
    pe: int
    simd: int


@dataclass(frozen=True)
class FoldingConfig:
    layers: tuple[LayerFolding, ...]
    streaming_overlap: bool = False
    pipeline_overhead_cycles: int = 1
    clock_mhz: float = 400.0


@dataclass(frozen=True)
class LayerLatency:
    name: str
    out_dim: int
    in_dim: int
    pe: int
    simd: int
    cycles: int  # compute + pipeline overhead
    on_critical_path: bool


@dataclass(frozen=True)
class LatencyReport:
    per_layer: tuple[LayerLatency, ...]
    total_cycles: int
    clock_mhz: float

    @property
    def total_ns(self) -> float:
        return self.total_cycles * 1000.0 / self.clock_mhz


def _folding_dims(arch: ArchSpec):
    """(name, out_dim, in_dim) of each folding unit; a segmented first layer
    is folded per segment since segments execute concurrently."""
    dims = []
    shapes = arch.layer_shapes()
    for idx, shape in enumerate(shapes):
        if shape.is_output:
            dims.append(("output", shape.out_dim, shape.in_dim))
        elif shape.n_segments > 1:
            dims.append(
                (f"hidden{idx + 1}[x{shape.n_segments}]",
                 shape.out_dim // shape.n_segments, shape.in_dim)
            )
        else:
            dims.append((f"hidden{idx + 1}", shape.out_dim, shape.in_dim))
    return dims


def full_folding(
    arch: ArchSpec,
    pe_cap: int | None = None,
    simd_cap: int | None = None,
    streaming_overlap: bool = False,
    pipeline_overhead_cycles: int = 1,
    clock_mhz: float = 400.0,
) -> FoldingConfig:
    """Fully parallel folding, optionally capped per layer (stream-width analog)."""
    layers = tuple(
        LayerFolding(
            pe=min(out, pe_cap) if pe_cap else out,
            simd=min(inp, simd_cap) if simd_cap else inp,
        )
        for _, out, inp in _folding_dims(arch)
    )
    return FoldingConfig(
        layers=layers,
        streaming_overlap=streaming_overlap,
        pipeline_overhead_cycles=pipeline_overhead_cycles,
        clock_mhz=clock_mhz,
    )


def estimate_latency(arch: ArchSpec, folding: FoldingConfig) -> LatencyReport:
    dims = _folding_dims(arch)
    if len(folding.layers) != len(dims):
        raise ValueError(
            f"folding has {len(folding.layers)} layers, architecture needs {len(dims)}"
        )
    c_p = folding.pipeline_overhead_cycles
    per_layer = []
    for (name, out, inp), f in zip(dims, folding.layers):
        if not 1 <= f.pe <= out:
            raise ValueError(f"{name}: PE {f.pe} outside [1, {out}]")
        if not 1 <= f.simd <= inp:
            raise ValueError(f"{name}: SIMD {f.simd} outside [1, {inp}]")
        cycles = math.ceil(inp / f.simd) * math.ceil(out / f.pe) + c_p
        per_layer.append((name, out, inp, f.pe, f.simd, cycles))

    overlap = folding.streaming_overlap and arch.kind == PIECEWISE
    # With streaming overlap only the layers fed by the final input piece
    # remain on the critical path: the last hidden layer and the output.
    critical = [True] * len(per_layer)
    if overlap:
        critical = [i >= len(per_layer) - 2 for i in range(len(per_layer))]

    report_layers = tuple(
        LayerLatency(name, out, inp, pe, simd, cycles, on_path)
        for (name, out, inp, pe, simd, cycles), on_path in zip(per_layer, critical)
    )
    total = sum(l.cycles for l in report_layers if l.on_critical_path)
    return LatencyReport(
        per_layer=report_layers, total_cycles=total, clock_mhz=folding.clock_mhz
    )


@dataclass(frozen=True)
class LayerMacs:
    name: str
    macs: int  # aggregate multiply-accumulates
    per_segment: int | None = None


@dataclass(frozen=True)
class MacReport:
    per_layer: tuple[LayerMacs, ...]

    @property
    def total(self) -> int:
        return sum(l.macs for l in self.per_layer)


def mac_count(arch: ArchSpec) -> MacReport:
    layers = []
    for idx, shape in enumerate(arch.layer_shapes()):
        name = "output" if shape.is_output else f"hidden{idx + 1}"
        macs = shape.out_dim * shape.in_dim
        per_segment = None
        if shape.n_segments > 1:
            per_segment = (shape.out_dim // shape.n_segments) * shape.in_dim
        layers.append(LayerMacs(name=name, macs=macs, per_segment=per_segment))
    return MacReport(per_layer=tuple(layers))
