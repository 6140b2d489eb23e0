"""Clock-edge randomization.

An 8-bit XNOR-feedback shift register (x^8 + x^6 + x^5 + x^4 + 1, period
255, all-ones excluded) decides for every reference-clock cycle whether
the device receives that edge.  The decision is a Boolean function of the
two least-significant state bits: AND skips about a quarter of the edges,
XOR half, OR three quarters; the edge is skipped when the function is 1.
Because the register walks a fixed 255-state cycle, every aligned
255-cycle window delivers exactly the same number of edges unless the
register is perturbed with fresh random bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

LFSR8_BITS = 8
LFSR8_TAPS = (8, 6, 5, 4)
LFSR8_MASK = 0xFF
_TAPMASK8 = 0
for _t in LFSR8_TAPS:
    _TAPMASK8 |= 1 << (_t - 1)

MODES = ("and", "xor", "or", "off")
#: presets for how often fresh randomness is folded into the register
PERTURB_PRESETS = (0, 1, 32, 256)


@dataclass
class ClockRandState:
    lfsr8: int
    mode: str = "xor"
    #: cycles between perturbations; 0 disables them
    perturb_interval: int = 0
    divider: int = 2

    def __post_init__(self) -> None:
        self.lfsr8 = int(self.lfsr8) & LFSR8_MASK
        if self.lfsr8 == LFSR8_MASK:
            raise ConfigError("all-ones is the forbidden lock-up state")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode '{self.mode}'")
        if self.perturb_interval < 0:
            raise ConfigError("perturb_interval must be >= 0")
        if not (2 <= self.divider <= 256):
            raise ConfigError("divider must lie in [2, 256]")


def edge_decision(state: ClockRandState) -> str:
    """'pass' or 'skip' for the next edge, from the two LSBs."""
    if state.mode == "off":
        return "pass"
    b0 = state.lfsr8 & 1
    b1 = (state.lfsr8 >> 1) & 1
    if state.mode == "and":
        v = b0 & b1
    elif state.mode == "xor":
        v = b0 ^ b1
    else:
        v = b0 | b1
    return "skip" if v else "pass"


def step(state: ClockRandState, perturb_bit: Optional[int] = None) -> int:
    """One XNOR shift; held for a cycle if it would lock up at all-ones."""
    fb = bin(state.lfsr8 & _TAPMASK8).count("1") & 1 ^ 1
    if perturb_bit is not None:
        fb ^= perturb_bit & 1
    nxt = ((state.lfsr8 << 1) | fb) & LFSR8_MASK
    if nxt != LFSR8_MASK:
        state.lfsr8 = nxt
    return state.lfsr8


def schedule(state: ClockRandState, n_cycles: int,
             perturb_source: Optional[Callable[[], int]] = None) -> np.ndarray:
    """Edge bitmap for the next ``n_cycles`` reference cycles.

    The decision for a cycle is taken from the current register state,
    then the register advances.  When ``perturb_interval`` is k > 0, the
    k-th, 2k-th, ... updates fold in one bit from ``perturb_source``.
    """
    if n_cycles < 1:
        raise ConfigError("n_cycles must be >= 1")
    if state.perturb_interval > 0 and perturb_source is None:
        raise ConfigError("perturb_interval set but no perturbation source given")
    out = np.empty(n_cycles, dtype=np.uint8)
    for i in range(n_cycles):
        out[i] = 1 if edge_decision(state) == "pass" else 0
        p = None
        if state.perturb_interval > 0 and (i + 1) % state.perturb_interval == 0:
            p = perturb_source()
        step(state, p)
    return out


def skip_counts_per_period(mode: str, start_state: int = 0) -> int:
    """Skips over one full 255-state cycle starting from ``start_state``."""
    st = ClockRandState(lfsr8=start_state, mode=mode)
    skips = 0
    for _ in range(255):
        if edge_decision(st) == "skip":
            skips += 1
        step(st)
    return skips


def state_from_bits(source: Callable[[], int]) -> int:
    """Serially load an initial register value, redrawing all-ones."""
    while True:
        v = 0
        for i in range(LFSR8_BITS):
            v |= (source() & 1) << i
        if v != LFSR8_MASK:
            return v


def render_clock_image(bitmap: np.ndarray, width: int) -> np.ndarray:
    """Fold the clock waveform into a pixel grid, two pixels per cycle.

    A delivered edge shows as a white/black pair (clock low then high); a
    skipped cycle stays white.  Returns a (rows, width) uint8 array with
    255 = white, 0 = black, padded with white.
    """
    if width < 1:
        raise ConfigError("width must be >= 1")
    bm = np.asarray(bitmap, dtype=np.uint8)
    px = np.empty(2 * bm.size, dtype=np.uint8)
    px[0::2] = 255
    px[1::2] = np.where(bm == 1, 0, 255).astype(np.uint8)
    rows = (px.size + width - 1) // width
    grid = np.full(rows * width, 255, dtype=np.uint8)
    grid[: px.size] = px
    return grid.reshape(rows, width)


def write_pgm(path: str, grid: np.ndarray) -> None:
    grid = np.asarray(grid, dtype=np.uint8)
    if grid.ndim != 2:
        raise ConfigError("pixel grid must be 2-D")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(grid.tobytes())
