"""Correlation power analysis and trace alignment.

The attack side is deliberately plain: hamming-weight (or distance)
hypotheses on the substitution output, streaming Pearson accumulators
per key candidate and sample, scores evaluated on a logarithmic grid of
trace counts, and a traces-to-disclosure figure defined as the first
checkpoint where the correct key reaches rank 1 and holds it for ten
consecutive checkpoints.

Alignment offers the exact DTW dynamic program (also the oracle in the
tests) and the coarsen-project-refine FastDTW approximation; ``align``
warps every trace of a set onto a reference trace by path averaging.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

from .circuits import aes_sbox_table
from .errors import ConfigError, DataError
from .traces import TraceSet, iter_traces

__all__ = [
    "Hypothesis", "AttackReport", "hw", "hd", "hypothesis_matrix",
    "default_checkpoints", "cpa", "dtw_exact", "fastdtw", "align",
]

_SBOX = np.array(aes_sbox_table(), dtype=np.int64)
_HW8 = np.array([bin(v).count("1") for v in range(256)], dtype=np.float64)

#: rank 1 must persist this many consecutive checkpoints to count as disclosure
STABILITY_WINDOW = 10

MODELS = ("hamming_weight", "hamming_distance")
TARGETS = ("sbox_output", "sbox_input")


def hw(value: int) -> int:
    """Popcount of one byte."""
    if not 0 <= value <= 0xFF:
        raise ConfigError("hw is defined on bytes")
    return int(_HW8[value])


def hd(a: int, b: int) -> int:
    """Popcount of the byte XOR difference."""
    if not (0 <= a <= 0xFF and 0 <= b <= 0xFF):
        raise ConfigError("hd is defined on bytes")
    return int(_HW8[a ^ b])


def hypothesis_matrix(plaintexts: np.ndarray, model: str = "hamming_weight",
                      target: str = "sbox_output") -> np.ndarray:
    """Hypothesis values for all 256 candidates, shape (len(plaintexts), 256).

    hamming_distance uses the candidate's substitution output for the
    all-zero plaintext as the previous register state, which is what the
    victim's output bank held one cycle earlier after reset.
    """
    if model not in MODELS:
        raise ConfigError(f"unknown leakage model '{model}'")
    if target not in TARGETS:
        raise ConfigError(f"unknown hypothesis target '{target}'")
    p = np.asarray(plaintexts, dtype=np.int64)
    if p.ndim != 1:
        raise DataError("plaintexts must be a 1-D byte array")
    if p.size and (p.min() < 0 or p.max() > 0xFF):
        raise DataError("plaintexts must be bytes")
    cand = np.arange(256, dtype=np.int64)
    inter = p[:, None] ^ cand[None, :]
    if target == "sbox_output":
        inter = _SBOX[inter]
        ref = _SBOX[cand]
    else:
        ref = cand
    if model == "hamming_distance":
        return _HW8[inter ^ ref[None, :]]
    return _HW8[inter]


@dataclass
class Hypothesis:
    """Predicted leakage of one key candidate over a plaintext sequence."""

    candidate: int
    model: str = "hamming_weight"
    target: str = "sbox_output"

    def values(self, plaintexts: np.ndarray) -> np.ndarray:
        if not 0 <= self.candidate <= 0xFF:
            raise ConfigError("candidate must be a byte")
        return hypothesis_matrix(plaintexts, self.model, self.target)[:, self.candidate]


@dataclass
class AttackReport:
    """CPA outcome over a checkpoint grid."""

    checkpoints: List[int]
    corr_max: np.ndarray            # (len(checkpoints), 256) max |corr| per candidate
    corr: np.ndarray                # (256, S) signed correlations at the last checkpoint
    model: str
    target: str
    rank_curve: Optional[np.ndarray] = None
    mtd: Optional[int] = None
    correct_key: Optional[int] = None
    degenerate: List[int] = field(default_factory=list)
    stability: int = STABILITY_WINDOW

    def best_candidate(self) -> int:
        return int(np.argmax(self.corr_max[-1]))

    def export_csv(self, path: str) -> None:
        """Rows: candidate, checkpoint, max |corr|, rank of that candidate."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["candidate", "checkpoint", "max_abs_corr", "rank"])
            for ci, n in enumerate(self.checkpoints):
                scores = self.corr_max[ci]
                order = np.argsort(-scores, kind="stable")
                rank = np.empty(256, dtype=np.int64)
                rank[order] = np.arange(1, 257)
                for cand in range(256):
                    w.writerow([cand, n, f"{scores[cand]:.8f}", int(rank[cand])])

    def export_rank_csv(self, path: str) -> None:
        if self.rank_curve is None or self.correct_key is None:
            raise DataError("rank curve requires the correct key")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["checkpoint", "rank", "correct_max_abs_corr",
                        "best_other_max_abs_corr"])
            for ci, n in enumerate(self.checkpoints):
                row = self.corr_max[ci]
                others = np.delete(row, self.correct_key)
                w.writerow([n, int(self.rank_curve[ci]),
                            f"{row[self.correct_key]:.8f}",
                            f"{others.max():.8f}"])


def default_checkpoints(n_traces: int, start: int = 25,
                        per_octave: int = 16) -> List[int]:
    """Logarithmic trace-count grid from ``start`` up to ``n_traces``."""
    if n_traces < 2:
        raise ConfigError("need at least 2 traces")
    if start < 2:
        raise ConfigError("checkpoint start must be >= 2")
    pts: List[int] = []
    k = 0
    while True:
        v = int(round(start * 2.0 ** (k / per_octave)))
        if v > n_traces:
            break
        if not pts or v > pts[-1]:
            pts.append(v)
        k += 1
    if not pts:
        pts = [n_traces]
    elif pts[-1] != n_traces:
        pts.append(n_traces)
    return pts


class _Accum:
    """Sum-based Pearson state, partitioned by sample tile for workers."""

    TILE = 512

    def __init__(self, n_samples: int, workers: int = 1):
        self.n = 0
        self.sx = np.zeros(n_samples)
        self.sxx = np.zeros(n_samples)
        self.sh = np.zeros(256)
        self.shh = np.zeros(256)
        self.shx = np.zeros((256, n_samples))
        self.workers = max(1, int(workers))
        self._tiles = [(lo, min(lo + self.TILE, n_samples))
                       for lo in range(0, n_samples, self.TILE)]

    def update(self, h: np.ndarray, x: np.ndarray) -> None:
        x64 = x.astype(np.float64, copy=False)
        self.n += x.shape[0]
        self.sx += x64.sum(0)
        self.sxx += (x64 * x64).sum(0)
        self.sh += h.sum(0)
        self.shh += (h * h).sum(0)
        ht = h.T

        def one(tile):
            lo, hi = tile
            self.shx[:, lo:hi] += ht @ x64[:, lo:hi]

        if self.workers == 1 or len(self._tiles) == 1:
            for t in self._tiles:
                one(t)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                list(ex.map(one, self._tiles))

    def correlations(self) -> Tuple[np.ndarray, np.ndarray]:
        """Signed corr (256, S) and the indices of zero-variance samples."""
        n = float(self.n)
        vx = self.sxx - self.sx * self.sx / n
        vh = self.shh - self.sh * self.sh / n
        num = self.shx - np.outer(self.sh, self.sx) / n
        dead = np.where(vx <= 0.0)[0]
        denom = np.sqrt(np.maximum(vh, 1e-300))[:, None] * \
            np.sqrt(np.maximum(vx, 1e-300))[None, :]
        corr = num / denom
        corr[:, dead] = 0.0
        corr[vh <= 0.0, :] = 0.0
        return np.clip(corr, -1.0, 1.0), dead


def _iter_blocks(traces, block: int):
    if isinstance(traces, str):
        yield from iter_traces(traces, block=block)
        return
    mat = traces.traces if isinstance(traces, TraceSet) else np.asarray(traces)
    if mat.ndim != 2:
        raise DataError("trace matrix must be 2-D")
    for lo in range(0, mat.shape[0], block):
        yield lo, mat[lo:lo + block]


def _n_traces(traces) -> int:
    if isinstance(traces, str):
        from .traces import trace_dims
        return trace_dims(traces)[0]
    mat = traces.traces if isinstance(traces, TraceSet) else np.asarray(traces)
    return int(mat.shape[0])


def cpa(traces: Union[str, TraceSet, np.ndarray], plaintexts: np.ndarray,
        correct_key: Optional[int] = None,
        checkpoints: Optional[Sequence[int]] = None,
        model: str = "hamming_weight", target: str = "sbox_output",
        stability: int = STABILITY_WINDOW, workers: int = 1,
        block: int = 8192) -> AttackReport:
    """Streaming CPA over a trace file, TraceSet, or matrix.

    One pass over the traces; Pearson state is evaluated at every
    checkpoint.  When ``correct_key`` is given the report carries the
    rank curve and the traces-to-disclosure count (first checkpoint with
    ``stability`` consecutive rank-1 evaluations).
    """
    total = _n_traces(traces)
    if total < 2:
        raise DataError("CPA needs at least 2 traces")
    p = np.asarray(plaintexts, dtype=np.int64)
    if p.shape[0] < total:
        raise DataError("one plaintext per trace is required")
    if checkpoints is None:
        cps = default_checkpoints(total)
    else:
        cps = sorted({int(c) for c in checkpoints})
        if not cps or cps[0] < 2 or cps[-1] > total:
            raise ConfigError("checkpoints must lie in [2, n_traces]")
    hyp = hypothesis_matrix(p[:total], model, target)

    acc: Optional[_Accum] = None
    cp_scores: List[np.ndarray] = []
    ranks: List[int] = []
    corr_final: Optional[np.ndarray] = None
    dead_final: np.ndarray = np.empty(0, dtype=np.int64)
    next_cp = 0

    def evaluate():
        nonlocal corr_final, dead_final
        corr, dead = acc.correlations()
        score = np.abs(corr).max(1)
        cp_scores.append(score)
        if correct_key is not None:
            ranks.append(1 + int((score > score[correct_key]).sum()))
        corr_final, dead_final = corr, dead

    for lo, chunk in _iter_blocks(traces, block):
        if acc is None:
            acc = _Accum(chunk.shape[1], workers)
        done = lo
        pos = 0
        while pos < chunk.shape[0]:
            if next_cp < len(cps) and cps[next_cp] <= done + (chunk.shape[0] - pos):
                take = cps[next_cp] - done
            else:
                take = chunk.shape[0] - pos
            acc.update(hyp[done:done + take], chunk[pos:pos + take])
            done += take
            pos += take
            while next_cp < len(cps) and acc.n == cps[next_cp]:
                evaluate()
                next_cp += 1
        if done >= cps[-1]:
            break

    if next_cp != len(cps):
        raise DataError("trace stream ended before the last checkpoint")

    rank_curve = np.array(ranks, dtype=np.int64) if correct_key is not None else None
    mtd = None
    if rank_curve is not None:
        for i in range(0, len(cps) - stability + 1):
            if np.all(rank_curve[i:i + stability] == 1):
                mtd = cps[i]
                break
    return AttackReport(
        checkpoints=list(cps), corr_max=np.vstack(cp_scores), corr=corr_final,
        model=model, target=target, rank_curve=rank_curve, mtd=mtd,
        correct_key=correct_key, degenerate=[int(i) for i in dead_final],
        stability=stability)


# -- dynamic time warping -----------------------------------------------------


@njit(cache=True)
def _dtw_full(a, b):
    n, m = a.shape[0], b.shape[0]
    D = np.empty((n + 1, m + 1))
    D[:, :] = np.inf
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            c = ai - b[j - 1]
            if c < 0.0:
                c = -c
            best = D[i - 1, j - 1]
            if D[i - 1, j] < best:
                best = D[i - 1, j]
            if D[i, j - 1] < best:
                best = D[i, j - 1]
            D[i, j] = c + best
    return D


@njit(cache=True)
def _dtw_banded(a, b, lo, hi):
    n, m = a.shape[0], b.shape[0]
    D = np.empty((n + 1, m + 1))
    D[:, :] = np.inf
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(lo[i - 1] + 1, hi[i - 1] + 1):
            c = ai - b[j - 1]
            if c < 0.0:
                c = -c
            best = D[i - 1, j - 1]
            if D[i - 1, j] < best:
                best = D[i - 1, j]
            if D[i, j - 1] < best:
                best = D[i, j - 1]
            D[i, j] = c + best
    return D


@njit(cache=True)
def _backtrack(D):
    n = D.shape[0] - 1
    m = D.shape[1] - 1
    path = np.empty((n + m + 1, 2), dtype=np.int64)
    k = path.shape[0]
    i, j = n, m
    while True:
        k -= 1
        path[k, 0] = i - 1
        path[k, 1] = j - 1
        if i == 1 and j == 1:
            break
        # diagonal preferred on ties
        best = D[i - 1, j - 1]
        move = 0
        if D[i - 1, j] < best:
            best = D[i - 1, j]
            move = 1
        if D[i, j - 1] < best:
            move = 2
        if move == 0:
            i -= 1
            j -= 1
        elif move == 1:
            i -= 1
        else:
            j -= 1
    return path[k:]


def _as_vector(a) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64).ravel()
    if v.size < 1:
        raise DataError("DTW needs at least one sample")
    return v


def dtw_exact(a, b) -> Tuple[float, List[Tuple[int, int]]]:
    """O(|a||b|) dynamic program; cost |a_i - b_j|, steps right/down/diagonal."""
    va, vb = _as_vector(a), _as_vector(b)
    D = _dtw_full(va, vb)
    path = _backtrack(D)
    return float(D[va.size, vb.size]), [(int(i), int(j)) for i, j in path]


def fastdtw(a, b, radius: int = 90) -> Tuple[float, List[Tuple[int, int]]]:
    """Coarsen-project-refine approximation of ``dtw_exact``.

    Falls back to the exact program whenever a sequence is short enough
    for the window to cover everything, so radius >= max(len) is exact.
    """
    if radius < 0:
        raise ConfigError("radius must be >= 0")
    va, vb = _as_vector(a), _as_vector(b)
    return _fastdtw_rec(va, vb, int(radius))


def _fastdtw_rec(a: np.ndarray, b: np.ndarray, radius: int):
    min_size = radius + 2
    if a.size <= min_size or b.size <= min_size:
        D = _dtw_full(a, b)
        path = _backtrack(D)
        return float(D[a.size, b.size]), [(int(i), int(j)) for i, j in path]
    half_a = _halve(a)
    half_b = _halve(b)
    _, coarse = _fastdtw_rec(half_a, half_b, radius)
    lo, hi = _project_window(coarse, a.size, b.size, radius)
    D = _dtw_banded(a, b, lo, hi)
    path = _backtrack(D)
    return float(D[a.size, b.size]), [(int(i), int(j)) for i, j in path]


def _halve(v: np.ndarray) -> np.ndarray:
    even = v.size // 2 * 2
    out = (v[0:even:2] + v[1:even:2]) / 2.0
    if v.size % 2:
        out = np.append(out, v[-1])
    return out


def _project_window(coarse_path, n: int, m: int, radius: int):
    """Per-row half-open column bands [lo, hi) around the upsampled path."""
    lo = np.full(n, m, dtype=np.int64)
    hi = np.zeros(n, dtype=np.int64)
    for ci, cj in coarse_path:
        for i in (2 * ci, 2 * ci + 1):
            if i >= n:
                continue
            j0 = max(0, 2 * cj - radius)
            j1 = min(m, 2 * cj + 2 + radius)
            if j0 < lo[i]:
                lo[i] = j0
            if j1 > hi[i]:
                hi[i] = j1
    row_r = min(radius, n)
    lo2 = lo.copy()
    hi2 = hi.copy()
    for i in range(n):
        i0 = max(0, i - row_r)
        i1 = min(n, i + row_r + 1)
        lo2[i] = lo[i0:i1].min()
        hi2[i] = hi[i0:i1].max()
    # monotone, non-empty, and connected so the DP always reaches (n, m)
    for i in range(1, n):
        if lo2[i] < lo2[i - 1]:
            lo2[i] = lo2[i - 1]
        if hi2[i] < hi2[i - 1]:
            hi2[i] = hi2[i - 1]
        if lo2[i] > hi2[i - 1]:
            lo2[i] = hi2[i - 1]
    hi2[n - 1] = m
    lo2[0] = 0
    return lo2, hi2


def align(traces: Union[TraceSet, np.ndarray], reference: int = 0,
          radius: int = 90) -> Union[TraceSet, np.ndarray]:
    """Warp every trace onto the reference trace via FastDTW paths.

    Samples mapped to the same reference index are averaged, so every
    output row has the reference length.  Returns the same container
    kind it was given.
    """
    is_set = isinstance(traces, TraceSet)
    mat = traces.traces if is_set else np.asarray(traces)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise DataError("alignment needs at least one trace")
    if not 0 <= reference < mat.shape[0]:
        raise ConfigError("reference trace index out of range")
    ref = mat[reference].astype(np.float64)
    out = np.empty_like(mat, shape=(mat.shape[0], ref.size))
    sums = np.zeros(ref.size)
    hits = np.zeros(ref.size)
    for t in range(mat.shape[0]):
        row = mat[t].astype(np.float64)
        if t == reference:
            out[t] = mat[reference]
            continue
        _, path = fastdtw(ref, row, radius)
        sums[:] = 0.0
        hits[:] = 0.0
        for i, j in path:
            sums[i] += row[j]
            hits[i] += 1.0
        out[t] = (sums / np.maximum(hits, 1.0)).astype(mat.dtype)
    if is_set:
        meta = dict(traces.meta)
        meta["aligned"] = {"reference": int(reference), "radius": int(radius)}
        return TraceSet(traces=out, meta=meta)
    return out
