"""Statistical test battery for generated bitstreams.

Seven frequency/structure tests with the usual chi-square and erfc
reference distributions, plus lag autocorrelation and two entropy
estimators.  A stream passes a test when its p-value is at least
PASS_LEVEL.  Inputs are uint8 arrays of 0/1 bits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import erfc, gammaincc, ndtr

from .errors import DataError

PASS_LEVEL = 0.01

# Tail class probabilities for the longest-run-of-ones statistic.
# Short blocks (M=8): classes are runs <=1, 2, 3, >=4.
_LR8_PI = np.array([0.2148, 0.3672, 0.2305, 0.1875])
# Long blocks (M=128): classes are runs <=4, 5, 6, 7, 8, >=9.
_LR128_PI = np.array([0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])


@dataclass
class TestResult:
    name: str
    statistic: float
    p_value: float
    passed: bool
    details: Dict[str, float] = field(default_factory=dict)


def _as_bits(bits: Sequence[int]) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or b.size == 0:
        raise DataError("bitstream must be a nonempty 1-d array")
    if np.any(b > 1):
        raise DataError("bitstream values must be 0 or 1")
    return b


def monobit(bits: Sequence[int]) -> TestResult:
    b = _as_bits(bits)
    n = b.size
    s = int(2 * int(b.sum()) - n)
    stat = abs(s) / math.sqrt(n)
    p = float(erfc(stat / math.sqrt(2.0)))
    # same tail via the normal CDF; the two routes must agree
    p_alt = float(2.0 * (1.0 - ndtr(stat)))
    if abs(p - p_alt) > 1e-9:
        raise DataError("monobit p-value routes disagree")
    return TestResult("monobit", stat, p, p >= PASS_LEVEL, {"s_n": float(s)})


def block_frequency(bits: Sequence[int], block_size: int = 128) -> TestResult:
    b = _as_bits(bits)
    n_blocks = b.size // block_size
    if n_blocks < 1:
        raise DataError("stream shorter than one block")
    trimmed = b[: n_blocks * block_size].reshape(n_blocks, block_size)
    pi = trimmed.mean(axis=1)
    chi2 = 4.0 * block_size * float(np.sum((pi - 0.5) ** 2))
    p = float(gammaincc(n_blocks / 2.0, chi2 / 2.0))
    return TestResult("block_frequency", chi2, p, p >= PASS_LEVEL,
                      {"n_blocks": float(n_blocks)})


def runs(bits: Sequence[int]) -> TestResult:
    b = _as_bits(bits)
    n = b.size
    pi = float(b.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return TestResult("runs", 0.0, 0.0, False, {"pi": pi, "pretest": 0.0})
    v = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    denom = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    stat = abs(v - 2.0 * n * pi * (1.0 - pi)) / denom
    p = float(erfc(stat))
    return TestResult("runs", float(v), p, p >= PASS_LEVEL, {"pi": pi})


def _longest_run_in_block(block: np.ndarray) -> int:
    best = cur = 0
    for bit in block:
        if bit:
            cur += 1
            if cur > best:
                best = cur
        else:
            cur = 0
    return best


def longest_run(bits: Sequence[int]) -> TestResult:
    b = _as_bits(bits)
    n = b.size
    if n < 128:
        raise DataError("longest-run test needs at least 128 bits")
    if n < 6272:
        m, pi, lo, hi = 8, _LR8_PI, 1, 4
    else:
        m, pi, lo, hi = 128, _LR128_PI, 4, 9
    n_blocks = n // m
    blocks = b[: n_blocks * m].reshape(n_blocks, m)
    counts = np.zeros(pi.size, dtype=np.int64)
    for blk in blocks:
        r = _longest_run_in_block(blk)
        counts[min(max(r, lo), hi) - lo] += 1
    expected = n_blocks * pi
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    p = float(gammaincc((pi.size - 1) / 2.0, chi2 / 2.0))
    return TestResult("longest_run", chi2, p, p >= PASS_LEVEL,
                      {"block_size": float(m), "n_blocks": float(n_blocks)})


def cusum(bits: Sequence[int]) -> TestResult:
    b = _as_bits(bits)
    n = b.size
    x = 2.0 * b.astype(np.float64) - 1.0
    s = np.cumsum(x)
    z = float(np.max(np.abs(s)))
    if z == 0.0:
        return TestResult("cusum", 0.0, 0.0, False, {})
    sqn = math.sqrt(n)
    k1 = np.arange(int(math.floor((-n / z + 1) / 4)),
                   int(math.floor((n / z - 1) / 4)) + 1)
    k2 = np.arange(int(math.floor((-n / z - 3) / 4)),
                   int(math.floor((n / z - 1) / 4)) + 1)
    term1 = np.sum(ndtr((4 * k1 + 1) * z / sqn) - ndtr((4 * k1 - 1) * z / sqn))
    term2 = np.sum(ndtr((4 * k2 + 3) * z / sqn) - ndtr((4 * k2 + 1) * z / sqn))
    p = float(1.0 - term1 + term2)
    p = min(max(p, 0.0), 1.0)
    return TestResult("cusum", z, p, p >= PASS_LEVEL, {})


def _psi_sq(b: np.ndarray, m: int) -> float:
    """Wrapped m-bit pattern statistic (zero for m <= 0)."""
    if m <= 0:
        return 0.0
    n = b.size
    ext = np.concatenate([b, b[: m - 1]]) if m > 1 else b
    idx = np.zeros(n, dtype=np.int64)
    for j in range(m):
        idx = (idx << 1) | ext[j: j + n]
    counts = np.bincount(idx, minlength=1 << m)
    return float((1 << m) / n * np.sum(counts.astype(np.float64) ** 2) - n)


def serial(bits: Sequence[int], m: int = 2) -> TestResult:
    b = _as_bits(bits)
    psi_m = _psi_sq(b, m)
    psi_m1 = _psi_sq(b, m - 1)
    psi_m2 = _psi_sq(b, m - 2)
    d1 = psi_m - psi_m1
    d2 = psi_m - 2.0 * psi_m1 + psi_m2
    p1 = float(gammaincc(2 ** (m - 2), d1 / 2.0))
    p2 = float(gammaincc(2 ** (m - 3), d2 / 2.0))
    p = min(p1, p2)
    return TestResult("serial", d1, p, p >= PASS_LEVEL, {"p1": p1, "p2": p2})


def approx_entropy(bits: Sequence[int], m: int = 2) -> TestResult:
    b = _as_bits(bits)
    n = b.size

    def phi(mm: int) -> float:
        ext = np.concatenate([b, b[: mm - 1]]) if mm > 1 else b
        idx = np.zeros(n, dtype=np.int64)
        for j in range(mm):
            idx = (idx << 1) | ext[j: j + n]
        counts = np.bincount(idx, minlength=1 << mm).astype(np.float64)
        probs = counts[counts > 0] / n
        return float(np.sum(probs * np.log(probs)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2.0) - apen)
    p = float(gammaincc(2 ** (m - 1), chi2 / 2.0))
    return TestResult("approx_entropy", chi2, p, p >= PASS_LEVEL,
                      {"apen": apen})


ALL_TESTS = (monobit, block_frequency, runs, longest_run, cusum, serial,
             approx_entropy)


@dataclass
class AutocorrResult:
    lags: np.ndarray
    r: np.ndarray
    band: float
    frac_in_band: float
    constant: bool


def autocorrelation(bits: Sequence[int], max_lag: int = 64) -> AutocorrResult:
    """Normalized autocorrelation of the mean-subtracted +/-1 stream.

    A constant stream has no variance to normalize by; it is flagged
    rather than silently passed.
    """
    b = _as_bits(bits)
    n = b.size
    if max_lag >= n:
        raise DataError("max_lag must be smaller than the stream")
    x = 2.0 * b.astype(np.float64) - 1.0
    x -= x.mean()
    denom = float(np.dot(x, x))
    lags = np.arange(1, max_lag + 1)
    if denom == 0.0:
        return AutocorrResult(lags, np.zeros(max_lag), 0.0, 0.0, True)
    r = np.array([float(np.dot(x[:-k], x[k:])) / denom for k in lags])
    band = 1.96 / math.sqrt(n)
    frac = float(np.mean(np.abs(r) <= band))
    return AutocorrResult(lags, r, band, frac, False)


def shannon_entropy_5bit(bits: Sequence[int]) -> float:
    """Shannon entropy of 5-bit symbols, normalized to [0, 1] per bit."""
    b = _as_bits(bits)
    n_sym = b.size // 5
    if n_sym < 1:
        raise DataError("need at least 5 bits")
    sym = np.zeros(n_sym, dtype=np.int64)
    for j in range(5):
        sym = (sym << 1) | b[j: n_sym * 5: 5].astype(np.int64)
    counts = np.bincount(sym, minlength=32).astype(np.float64)
    probs = counts[counts > 0] / n_sym
    return float(-np.sum(probs * np.log2(probs)) / 5.0)


def min_entropy_mcv(bits: Sequence[int]) -> float:
    b = _as_bits(bits)
    p1 = float(b.mean())
    return -math.log2(max(p1, 1.0 - p1))


def min_entropy_markov(bits: Sequence[int]) -> float:
    """First-order Markov min-entropy per bit.

    The binding transition is whichever of staying at 0, staying at 1, or
    the geometric mean of the two flip probabilities is most predictable.
    """
    b = _as_bits(bits)
    prev, cur = b[:-1], b[1:]
    n0 = int(np.count_nonzero(prev == 0))
    n1 = prev.size - n0
    if n0 == 0 or n1 == 0:
        return 0.0
    p01 = int(np.count_nonzero((prev == 0) & (cur == 1))) / n0
    p00 = 1.0 - p01
    p10 = int(np.count_nonzero((prev == 1) & (cur == 0))) / n1
    p11 = 1.0 - p10
    worst = max(p00, p11, math.sqrt(p01 * p10))
    if worst <= 0.0:
        return 0.0
    return -math.log2(worst)


def run_battery(bits: Sequence[int]) -> List[TestResult]:
    return [t(bits) for t in ALL_TESTS]


def battery_to_csv(results: List[TestResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["test", "statistic", "p_value", "passed"])
        for r in results:
            w.writerow([r.name, f"{r.statistic:.10g}", f"{r.p_value:.10g}",
                        int(r.passed)])
