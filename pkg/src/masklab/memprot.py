"""Session-keyed memory protection.

Addresses are scrambled and data words encrypted by XOR with per-session
keys, so the physical buses never carry logical values.  The bus log
records only physical (address, word) pairs; it is what the power model
taps.  Reads invert the write path, so the logical contract is plain
read-after-write for any keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SessionKeys:
    k_addr: int
    k_data: int
    session_id: int = 0

    @classmethod
    def from_seed(cls, seed: int, addr_bits: int = 10, data_bits: int = 32,
                  session_id: int = 0) -> "SessionKeys":
        rng = np.random.default_rng(seed)
        ka = int(rng.integers(0, 1 << addr_bits))
        kd = int(rng.integers(0, 1 << min(data_bits, 63)))
        if data_bits > 63:
            kd |= int(rng.integers(0, 1 << (data_bits - 63))) << 63
        return cls(k_addr=ka, k_data=kd, session_id=session_id)


def _expand_tables(seed: int, addr_bits: int, data_bits: int):
    """Fixed substitution-permutation tables for address-dependent keying.

    Two small substitution boxes cover the address halves; a random
    injective GF(2) spread matrix then maps the substituted address onto a
    full data word.
    """
    rng = np.random.default_rng(seed)
    half = addr_bits // 2
    s0 = rng.permutation(1 << half)
    s1 = rng.permutation(1 << (addr_bits - half))
    while True:
        rows = rng.integers(0, 1 << data_bits, size=addr_bits, dtype=np.uint64)
        # spread rows must be linearly independent so distinct addresses
        # get distinct word masks
        basis = []
        ok = True
        for r in rows.tolist():
            v = int(r)
            for b in basis:
                v = min(v, v ^ b)
            if v == 0:
                ok = False
                break
            basis.append(v)
        if ok:
            return s0, s1, half, rows


class ProtectedMemory:
    def __init__(self, addr_bits: int = 10, data_bits: int = 32,
                 keys: Optional[SessionKeys] = None, log_bus: bool = False,
                 addr_dependent: bool = False, expand_seed: int = 0):
        if not (1 <= addr_bits <= 30):
            raise ConfigError("addr_bits out of range")
        if not (1 <= data_bits <= 64):
            raise ConfigError("data_bits out of range")
        self.addr_bits = addr_bits
        self.data_bits = data_bits
        self.keys = keys or SessionKeys(0, 0)
        self.addr_mask = (1 << addr_bits) - 1
        self.data_mask = (1 << data_bits) - 1
        if self.keys.k_addr & ~self.addr_mask or self.keys.k_data & ~self.data_mask:
            raise ConfigError("session keys wider than the configured buses")
        self._store = np.zeros(1 << addr_bits, dtype=np.uint64)
        self.bus_log: List[Tuple[str, int, int]] = []
        self.log_bus = log_bus
        self.addr_dependent = addr_dependent
        self.expand_seed = expand_seed
        if addr_dependent:
            self._sp = _expand_tables(expand_seed, addr_bits, data_bits)

    def _expand(self, addr: int) -> int:
        s0, s1, half, rows = self._sp
        lo = int(s0[addr & ((1 << half) - 1)])
        hi = int(s1[addr >> half])
        sub = lo | (hi << half)
        word = 0
        for i in range(self.addr_bits):
            if (sub >> i) & 1:
                word ^= int(rows[i])
        return word & self.data_mask

    def _data_key(self, addr: int) -> int:
        k = self.keys.k_data
        if self.addr_dependent:
            k ^= self._expand(addr)
        return k

    def _check(self, addr: int) -> None:
        if not (0 <= addr <= self.addr_mask):
            raise DataError(f"address {addr:#x} outside {self.addr_bits}-bit space")

    def write(self, addr: int, data: int) -> None:
        self._check(addr)
        if data & ~self.data_mask:
            raise DataError(f"word {data:#x} wider than {self.data_bits} bits")
        pa = addr ^ self.keys.k_addr
        pd = (data ^ self._data_key(addr)) & self.data_mask
        self._store[pa] = pd
        if self.log_bus:
            self.bus_log.append(("w", pa, pd))

    def read(self, addr: int) -> int:
        self._check(addr)
        pa = addr ^ self.keys.k_addr
        pd = int(self._store[pa])
        if self.log_bus:
            self.bus_log.append(("r", pa, pd))
        return (pd ^ self._data_key(addr)) & self.data_mask

    def rekey(self, new_keys: SessionKeys) -> "ProtectedMemory":
        """Fresh empty memory for a new session; old contents are dead."""
        return ProtectedMemory(
            addr_bits=self.addr_bits,
            data_bits=self.data_bits,
            keys=new_keys,
            log_bus=self.log_bus,
            addr_dependent=self.addr_dependent,
            expand_seed=self.expand_seed,
        )


def mp_write(mem: ProtectedMemory, addr: int, data: int) -> None:
    mem.write(addr, data)


def mp_read(mem: ProtectedMemory, addr: int) -> int:
    return mem.read(addr)


def rekey(mem: ProtectedMemory, new_keys: SessionKeys) -> ProtectedMemory:
    return mem.rekey(new_keys)
