"""Randomness pipeline: jittery oscillator model, sampler, and the
LFSR/CASR post-processing stage with a wide XOR output combiner.

The oscillator free-runs with independent Gaussian period draws; a sampled
bit is the oscillator's output level, i.e. the parity of completed
half-periods at the sampling instant.  Sampling slower accumulates more
phase diffusion between samples and therefore yields more entropy per bit.

Post-processing combines a 43-stage XNOR-feedback shift register
(x^43 + x^42 + x^38 + x^37 + 1) with a 37-cell rule-90/150 cellular
automaton (rule 150 in the ninth cell, null boundaries).  Both have maximal
period, and the combined state only repeats after (2^43-1)(2^37-1) steps.
Raw sampled bits perturb the shift-register feedback and the automaton's
end cells before each update.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError

#: nominal entropy oscillator: 22 inverters plus a NAND, 366 MHz, i.e. a
#: 2.73 ns period (2.8 ns at one decimal).  The sampled-bit statistics
#: depend on the exact sampling-period to oscillator-period ratio, so the
#: default keeps the frequency exact rather than the rounded period.
OSC_PERIOD_MEAN = 1.0 / 366e6
#: per-period jitter derived from a divide-by-256 period measurement
#: (716 ns mean, 251 ps std): 251 ps / sqrt(256) under independent
#: per-period increments
OSC_PERIOD_STD = 251e-12 / 16.0
#: default sampler rate for raw entropy bits
OSC_SAMPLE_HZ = 3.4e6

LFSR43_BITS = 43
#: tap stages, 1-indexed from the feedback end
LFSR43_TAPS = (43, 42, 38, 37)
LFSR43_MASK = (1 << LFSR43_BITS) - 1
_TAPMASK = 0
for _t in LFSR43_TAPS:
    _TAPMASK |= 1 << (_t - 1)

CASR37_CELLS = 37
#: the ninth cell (0-based index 8) follows rule 150; every other cell
#: follows rule 90.  This is one of the two placements (8 and its mirror
#: 28) for which the 37-cell hybrid automaton is maximal-length, which
#: the transition-matrix order test pins down.
CASR37_RULE150_AT = 8
CASR37_MASK = (1 << CASR37_CELLS) - 1

N_OUTPUTS = 243
MAX_OUTPUTS = LFSR43_BITS * CASR37_CELLS  # 1591


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


# -- entropy source -----------------------------------------------------------


class JitterOscillator:
    """Free-running oscillator whose period jitters around ``period_mean``.

    Each full period is an independent Gaussian draw (redrawn if a draw
    comes out non-positive) and the output level flips at every
    half-period.  Sampling is modeled with a two-stage synchronizer: the
    returned bit is the level captured two samples earlier.
    """

    #: internal timebase; all instants are integer femtoseconds, so
    #: boundary comparisons are exact and the jitter-free cases lock
    _FS = 1e15

    def __init__(self, period_mean: float = OSC_PERIOD_MEAN,
                 period_std: float = OSC_PERIOD_STD, seed: int = 0):
        if period_mean <= 0:
            raise ConfigError("period_mean must be positive")
        if period_std < 0:
            raise ConfigError("period_std must be >= 0")
        self.period_mean = float(period_mean)
        self.period_std = float(period_std)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._mean_fs = self.period_mean * self._FS
        self._std_fs = self.period_std * self._FS
        self.phase = 0                 # femtoseconds
        self._osc_end = 0              # time of the last generated period boundary
        self._count_base = 0           # half-periods fully consumed so far
        self._pending = np.empty(0, dtype=np.int64)
        self._pipe = [0, 0]

    def _extend(self, until: int) -> None:
        while self._osc_end <= until or len(self._pending) == 0:
            m = max(1024, int((until - self._osc_end) / self._mean_fs) + 64)
            draws = np.rint(self._rng.normal(self._mean_fs, self._std_fs, size=m))
            while True:
                bad = draws <= 0
                if not bad.any():
                    break
                draws[bad] = np.rint(
                    self._rng.normal(self._mean_fs, self._std_fs, size=int(bad.sum()))
                )
            draws = draws.astype(np.int64)
            ends = self._osc_end + np.cumsum(draws)
            b = np.empty(2 * m, dtype=np.int64)
            b[1::2] = ends
            b[0::2] = ends - draws // 2
            self._pending = np.concatenate([self._pending, b])
            self._osc_end = int(ends[-1])

    def raw_bits(self, sample_period: float, n: int, chunk: int = 1 << 14) -> np.ndarray:
        """Sample ``n`` bits at a fixed period; advances oscillator state.

        ``chunk`` bounds how many samples (and so how many generated
        oscillator periods) are held in memory at once.
        """
        if sample_period <= 0:
            raise ConfigError("sample_period must be positive")
        sp = int(round(sample_period * self._FS))
        if sp < 1:
            raise ConfigError("sample_period below the 1 fs timebase")
        out = np.empty(n, dtype=np.uint8)
        done = 0
        while done < n:
            m = min(chunk, n - done)
            t = self.phase + sp * np.arange(1, m + 1, dtype=np.int64)
            self.phase = int(t[-1])
            self._extend(self.phase)
            counts = self._count_base + np.searchsorted(self._pending, t, side="right")
            parity = (counts & 1).astype(np.uint8)
            consumed = int(np.searchsorted(self._pending, self.phase, side="right"))
            self._count_base += consumed
            self._pending = self._pending[consumed:]
            # two-stage synchronizer: emit with two samples of delay
            shifted = np.empty(m, dtype=np.uint8)
            shifted[: min(2, m)] = self._pipe[: min(2, m)]
            if m > 2:
                shifted[2:] = parity[:-2]
            tail = np.concatenate([np.array(self._pipe, dtype=np.uint8), parity])[-2:]
            self._pipe = [int(tail[0]), int(tail[1])]
            out[done : done + m] = shifted
            done += m
        return out

    def bit_source(self, sample_period: float) -> Callable[[], int]:
        """Stateful single-bit sampler sharing this oscillator."""
        return lambda: int(self.raw_bits(sample_period, 1)[0])


def sample_raw_bit(osc: JitterOscillator, sample_period: float) -> int:
    return int(osc.raw_bits(sample_period, 1)[0])


# -- post-processing registers --------------------------------------------------


class Lfsr43:
    """43-stage Fibonacci shift register with XNOR feedback.

    The lock-up state is all-ones (tap parity 0, XNOR 1 shifts ones
    forever), so construction rejects it; every other state lies on the
    single maximal cycle of length 2^43 - 1.
    """

    def __init__(self, state: int):
        state = int(state) & LFSR43_MASK
        if state == LFSR43_MASK:
            raise ConfigError("all-ones is the forbidden lock-up state")
        self.state = state

    def step(self, perturb_bit: Optional[int] = None) -> int:
        fb = _parity(self.state & _TAPMASK) ^ 1
        if perturb_bit is not None:
            fb ^= perturb_bit & 1
        self.state = ((self.state << 1) | fb) & LFSR43_MASK
        return self.state


class Casr37:
    """37-cell hybrid rule-90/150 automaton, rule 150 in the ninth cell.

    Null boundaries; the all-zeros state is the fixed point and is
    rejected at construction.
    """

    def __init__(self, state: int):
        state = int(state) & CASR37_MASK
        if state == 0:
            raise ConfigError("all-zeros is the forbidden fixed point")
        self.state = state

    def step(self, perturb_bit: Optional[int] = None) -> int:
        s = self.state
        if perturb_bit is not None and perturb_bit & 1:
            s ^= 1 | (1 << (CASR37_CELLS - 1))
        nxt = ((s >> 1) ^ (s << 1)) & CASR37_MASK
        nxt ^= s & (1 << CASR37_RULE150_AT)
        self.state = nxt
        return self.state


def ca_step(state: int, n_cells: int, rule150_at: Sequence[int] = ()) -> int:
    """One hybrid rule-90/150 update on an ``n_cells``-wide word."""
    mask = (1 << n_cells) - 1
    nxt = ((state >> 1) ^ (state << 1)) & mask
    for i in rule150_at:
        nxt ^= state & (1 << i)
    return nxt


def lfsr43_step(state: int, perturb_bit: Optional[int] = None) -> int:
    r = Lfsr43(state)
    return r.step(perturb_bit)


def casr37_step(state: int, perturb_bit: Optional[int] = None) -> int:
    r = Casr37(state)
    return r.step(perturb_bit)


def lfsr43_matrix() -> np.ndarray:
    """GF(2) transition matrix acting on state column vectors (bit 0 first)."""
    m = np.zeros((LFSR43_BITS, LFSR43_BITS), dtype=np.uint8)
    for i in range(1, LFSR43_BITS):
        m[i, i - 1] = 1
    for t in LFSR43_TAPS:
        m[0, t - 1] = 1
    # the XNOR constant is affine, not linear; the matrix captures the
    # linear part, which is what fixes the cycle structure
    return m


def casr37_matrix() -> np.ndarray:
    m = np.zeros((CASR37_CELLS, CASR37_CELLS), dtype=np.uint8)
    for i in range(CASR37_CELLS):
        if i > 0:
            m[i, i - 1] = 1
        if i + 1 < CASR37_CELLS:
            m[i, i + 1] = 1
    m[CASR37_RULE150_AT, CASR37_RULE150_AT] = 1
    return m


def gf2_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.uint32) @ b.astype(np.uint32) % 2).astype(np.uint8)


def gf2_matpow(m: np.ndarray, e: int) -> np.ndarray:
    r = np.eye(m.shape[0], dtype=np.uint8)
    b = m.copy()
    while e:
        if e & 1:
            r = gf2_matmul(r, b)
        b = gf2_matmul(b, b)
        e >>= 1
    return r


def matrix_order_is(m: np.ndarray, n: int, prime_factors: Sequence[int]) -> bool:
    """True iff the multiplicative order of ``m`` over GF(2) is exactly ``n``."""
    eye = np.eye(m.shape[0], dtype=np.uint8)
    if not np.array_equal(gf2_matpow(m, n), eye):
        return False
    for p in prime_factors:
        if n % p:
            raise ConfigError(f"{p} does not divide {n}")
        if np.array_equal(gf2_matpow(m, n // p), eye):
            return False
    return True


# -- combined generator ----------------------------------------------------------


def make_xor_pairs(design_seed: int, n_outputs: int = N_OUTPUTS) -> np.ndarray:
    """Design-time output wiring: ``n_outputs`` unique (lfsr, casr) bit pairs."""
    if not (1 <= n_outputs <= MAX_OUTPUTS):
        raise ConfigError(f"n_outputs must be in [1, {MAX_OUTPUTS}]")
    rng = np.random.default_rng(design_seed)
    flat = rng.choice(MAX_OUTPUTS, size=n_outputs, replace=False)
    pairs = np.stack([flat // CASR37_CELLS, flat % CASR37_CELLS], axis=1)
    return pairs.astype(np.int32)


@dataclass
class RngState:
    lfsr: Lfsr43
    casr: Casr37
    xor_pairs: np.ndarray
    sample_divider: int = 1

    def output(self) -> np.ndarray:
        """243-bit output word of the current state, LSB-first uint8 array."""
        lf = np.array([(self.lfsr.state >> int(i)) & 1 for i in self.xor_pairs[:, 0]],
                      dtype=np.uint8)
        ca = np.array([(self.casr.state >> int(j)) & 1 for j in self.xor_pairs[:, 1]],
                      dtype=np.uint8)
        return lf ^ ca

    def step(self, perturb_bit: Optional[int] = None) -> np.ndarray:
        self.lfsr.step(perturb_bit)
        self.casr.step(perturb_bit)
        return self.output()


def rng_output(state: RngState) -> np.ndarray:
    return state.output()


def rng_power_on(raw_source: Callable[[], int], design_seed: int = 0,
                 n_outputs: int = N_OUTPUTS, sample_divider: int = 1) -> RngState:
    """Fill both registers from raw bits, redrawing forbidden states."""

    def draw(width: int, forbidden: int) -> int:
        while True:
            v = 0
            for i in range(width):
                v |= (raw_source() & 1) << i
            if v != forbidden:
                return v

    lf = draw(LFSR43_BITS, LFSR43_MASK)
    ca = draw(CASR37_CELLS, 0)
    return RngState(
        lfsr=Lfsr43(lf),
        casr=Casr37(ca),
        xor_pairs=make_xor_pairs(design_seed, n_outputs),
        sample_divider=sample_divider,
    )


def generate_stream(state: RngState, n_bits: int,
                    perturb_source: Optional[Callable[[], int]] = None) -> np.ndarray:
    """Concatenate output words of successive steps into an n-bit stream."""
    width = state.xor_pairs.shape[0]
    steps = (n_bits + width - 1) // width
    out = np.empty(steps * width, dtype=np.uint8)
    for s in range(steps):
        p = perturb_source() if perturb_source is not None else None
        out[s * width : (s + 1) * width] = state.step(p)
    return out[:n_bits]


def throughput_bits_per_s(clock_hz: float, n_outputs: int = N_OUTPUTS) -> float:
    """One output word per clock: width times clock frequency."""
    return float(n_outputs) * float(clock_hz)


# -- bitstream files --------------------------------------------------------------


def write_bitstream(path: str, bits: np.ndarray, meta: Optional[dict] = None) -> None:
    """Packed little-endian bit file plus a JSON sidecar."""
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(bits, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(packed.tobytes())
    side = dict(meta or {})
    side["n_bits"] = int(bits.size)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)


def read_bitstream(path: str) -> Tuple[np.ndarray, dict]:
    side_path = path + ".json"
    if not os.path.exists(side_path):
        raise DataError(f"missing sidecar {side_path}")
    with open(side_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    n = int(meta.get("n_bits", -1))
    if n < 0:
        raise DataError(f"sidecar {side_path} lacks n_bits")
    raw = np.fromfile(path, dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")
    if bits.size < n:
        raise DataError(f"bitstream {path} truncated: {bits.size} < {n} bits")
    return bits[:n], meta
