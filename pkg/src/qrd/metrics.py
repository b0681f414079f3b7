"""Assignment-fidelity statistics for multi-qubit state discrimination.

Per-qubit fidelity:      F_i  = 1 - [P(0_i | prep 1_i) + P(1_i | prep 0_i)] / 2
Geometric-mean fidelity: F_GM = (prod_i F_i)^(1/N)
Cross-fidelity matrix:   CF_ij = 1 - [P(1_i | prep 0_j) + P(0_i | prep 1_j)]

CF conditions only on qubit j's preparation (all other qubits marginalised);
rows index the detected qubit i, columns the prepared qubit j.  The diagonal
satisfies CF_ii = 2*F_i - 1 exactly.  Positive (negative) off-diagonals flag
correlated (anti-correlated) assignments, i.e. readout crosstalk.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-qubit tallies: errors by preparation plus preparation marginals."""

    n_pred1_prep0: np.ndarray
    n_pred0_prep1: np.ndarray
    n_prep0: np.ndarray
    n_prep1: np.ndarray


@dataclass(frozen=True)
class FidelityReport:
    fidelity: np.ndarray  # per-qubit F_i
    f_gm: float
    cross_fidelity: np.ndarray  # N x N
    confusion: ConfusionCounts

    @property
    def n_qubits(self) -> int:
        return self.fidelity.shape[0]


def _bits(masks: np.ndarray, n_qubits: int) -> np.ndarray:
    """(n_shots,) bitmasks -> (n_shots, n_qubits) 0/1 matrix, qubit 0 = LSB."""
    return (masks[:, None] >> np.arange(n_qubits)[None, :]) & 1


def _validate(labels: np.ndarray, preds: np.ndarray, n_qubits: int) -> None:
    if labels.shape != preds.shape or labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels and preds must be equal-length nonempty 1-D arrays")
    prep = _bits(labels, n_qubits)
    for q in range(n_qubits):
        if prep[:, q].min() == prep[:, q].max():
            raise ValueError(
                f"qubit {q} was prepared in only one state; "
                "fidelity conditionals are undefined"
            )


def _infer_n_qubits(labels: np.ndarray, n_qubits: int | None) -> int:
    if n_qubits is not None:
        return n_qubits
    return max(1, int(np.max(labels)).bit_length())


def fidelity(
    labels: np.ndarray, preds: np.ndarray, n_qubits: int | None = None
) -> FidelityReport:
    """Full report from prepared and predicted state bitmasks."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    nq = _infer_n_qubits(labels, n_qubits)
    _validate(labels, preds, nq)

    prep = _bits(labels, nq)
    det = _bits(preds, nq)
    n_prep1 = prep.sum(axis=0)
    n_prep0 = prep.shape[0] - n_prep1
    n_pred1_prep0 = ((1 - prep) * det).sum(axis=0)
    n_pred0_prep1 = (prep * (1 - det)).sum(axis=0)

    p10 = n_pred0_prep1 / n_prep1  # P(0_i | prep 1_i)
    p01 = n_pred1_prep0 / n_prep0  # P(1_i | prep 0_i)
    f = 1.0 - (p10 + p01) / 2.0
    f_gm = float(np.prod(f) ** (1.0 / nq))

    cf = _cross_fidelity(prep, det, n_prep0, n_prep1)
    confusion = ConfusionCounts(
        n_pred1_prep0=n_pred1_prep0.astype(np.int64),
        n_pred0_prep1=n_pred0_prep1.astype(np.int64),
        n_prep0=n_prep0.astype(np.int64),
        n_prep1=n_prep1.astype(np.int64),
    )
    return FidelityReport(fidelity=f, f_gm=f_gm, cross_fidelity=cf, confusion=confusion)


def _cross_fidelity(prep, det, n_prep0, n_prep1) -> np.ndarray:
    # P(det_i = 1 | prep_j = 0) and P(det_i = 0 | prep_j = 1), all pairs at once.
    n_det1_prep0 = det.T.astype(np.float64) @ (1 - prep)
    n_det0_prep1 = (1 - det).T.astype(np.float64) @ prep
    return 1.0 - (n_det1_prep0 / n_prep0 + n_det0_prep1 / n_prep1)


def cross_fidelity_only(
    labels: np.ndarray, preds: np.ndarray, n_qubits: int | None = None
) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    nq = _infer_n_qubits(labels, n_qubits)
    _validate(labels, preds, nq)
    prep = _bits(labels, nq)
    det = _bits(preds, nq)
    n_prep1 = prep.sum(axis=0)
    return _cross_fidelity(prep, det, prep.shape[0] - n_prep1, n_prep1)


def summarize_csv(report: FidelityReport) -> str:
    """Serialise a report to CSV; ``parse_csv`` round-trips it exactly.

    Section 1: per-qubit fidelity and error rates (p01 = P(1|prep 0),
    p10 = P(0|prep 1)).  Section 2: raw confusion counts.  Then the
    geometric-mean row and the flattened CF matrix.
    """
    buf = io.StringIO()
    nq = report.n_qubits
    c = report.confusion
    buf.write("qubit,fidelity,p01,p10\n")
    for q in range(nq):
        p01 = c.n_pred1_prep0[q] / c.n_prep0[q]
        p10 = c.n_pred0_prep1[q] / c.n_prep1[q]
        buf.write(f"{q},{report.fidelity[q]!r},{p01!r},{p10!r}\n")
    buf.write("qubit,n_pred1_prep0,n_pred0_prep1,n_prep0,n_prep1\n")
    for q in range(nq):
        buf.write(
            f"{q},{c.n_pred1_prep0[q]},{c.n_pred0_prep1[q]},"
            f"{c.n_prep0[q]},{c.n_prep1[q]}\n"
        )
    buf.write(f"f_gm,{report.f_gm!r}\n")
    for i in range(nq):
        for j in range(nq):
            buf.write(f"cf,{i},{j},{report.cross_fidelity[i, j]!r}\n")
    return buf.getvalue()


def parse_csv(text: str) -> FidelityReport:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if lines[0] != "qubit,fidelity,p01,p10":
        raise ValueError("unrecognised fidelity CSV header")
    fid_rows = []
    idx = 1
    while not lines[idx].startswith("qubit,n_pred1_prep0"):
        fid_rows.append(lines[idx].split(","))
        idx += 1
    nq = len(fid_rows)
    idx += 1  # skip counts header
    counts = [lines[idx + q].split(",") for q in range(nq)]
    idx += nq
    f_gm = float(lines[idx].split(",")[1])
    idx += 1
    cf = np.zeros((nq, nq))
    for ln in lines[idx:]:
        tag, i, j, v = ln.split(",")
        if tag != "cf":
            raise ValueError(f"unexpected row {ln!r}")
        cf[int(i), int(j)] = float(v)
    confusion = ConfusionCounts(
        n_pred1_prep0=np.array([int(r[1]) for r in counts], dtype=np.int64),
        n_pred0_prep1=np.array([int(r[2]) for r in counts], dtype=np.int64),
        n_prep0=np.array([int(r[3]) for r in counts], dtype=np.int64),
        n_prep1=np.array([int(r[4]) for r in counts], dtype=np.int64),
    )
    fid = np.array([float(r[1]) for r in fid_rows])
    return FidelityReport(
        fidelity=fid,
        f_gm=f_gm,
        cross_fidelity=cf,
        confusion=confusion,
    )


def cross_fidelity_json(report: FidelityReport) -> str:
    """CF matrix as a JSON array (row-major), for plotting scripts."""
    return json.dumps(report.cross_fidelity.tolist())
