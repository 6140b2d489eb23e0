"""Reference circuits: byte substitution box and a one-byte victim round.

The substitution box computes the multiplicative inverse in GF(2^8)
followed by the usual affine map, with the inverse decomposed over the
tower field GF((2^4)^2) so the whole function lowers to AND/XOR/NOT
gates.  The decomposition (extension constant, basis change matrices) is
derived here by direct search, the generated netlist is committed under
``data/aes_sbox.nl``, and ``build_aes_sbox`` loads that file.

``build_victim_round`` wraps the box into a registered datapath:

    plaintext byte -> input register -> XOR with key byte -> sbox -> output register

so one value moves one pipeline stage per clock.  The output bank uses
enable-gated capture cells (mux-into-DFF, the standard-cell idiom for a
register with write enable); the ``en`` port is held at 1 by the
harnesses.  ``build_victim_serial`` instead captures the substitution
result into a parallel-in serial-out register and shifts one bit per
cycle, mirroring a bit-serial datapath's capture/shift structure.
"""

from __future__ import annotations

from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import InvariantError
from .netlist import Gate, Netlist, parse_netlist, serialize_netlist

GF16_POLY = 0b10011  # y^4 + y + 1
AES_POLY_BITS = (0, 1, 3, 4, 8)  # x^8 + x^4 + x^3 + x + 1
AFFINE_ROWS = (0, 4, 5, 6, 7)  # bit i' = XOR of bits (i+r) % 8
AFFINE_CONST = 0x63


# -- integer field arithmetic (used for derivation and self-checks) ---------


def _gf16_mul(a: int, b: int) -> int:
    r = 0
    for _ in range(4):
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a & 0x10:
            a ^= GF16_POLY
    return r


def _gf256_mul(a: int, b: int) -> int:
    r = 0
    for _ in range(8):
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a & 0x100:
            a ^= 0x11B
    return r


def _gf256_pow(a: int, e: int) -> int:
    r = 1
    while e:
        if e & 1:
            r = _gf256_mul(r, a)
        a = _gf256_mul(a, a)
        e >>= 1
    return r


def aes_sbox_table() -> List[int]:
    """The 256-entry substitution table from field arithmetic alone."""
    tbl = []
    for x in range(256):
        inv = 0 if x == 0 else _gf256_pow(x, 254)
        y = AFFINE_CONST
        for i in range(8):
            bit = 0
            for r in AFFINE_ROWS:
                bit ^= (inv >> ((i + r) % 8)) & 1
            y ^= bit << i
        tbl.append(y)
    return tbl


# -- tower field derivation ---------------------------------------------------


def _comp_mul(a: Tuple[int, int], b: Tuple[int, int], lam: int) -> Tuple[int, int]:
    """(hi*z + lo) product with z^2 = z + lam over GF(2^4)."""
    t = _gf16_mul(a[0], b[0])
    hi = _gf16_mul(a[0], b[1]) ^ _gf16_mul(a[1], b[0]) ^ t
    lo = _gf16_mul(a[1], b[1]) ^ _gf16_mul(t, lam)
    return hi, lo


def _derive_tower() -> Tuple[int, List[int], List[int]]:
    """Return (lam, M, Minv).

    ``lam`` makes z^2 + z + lam irreducible over GF(2^4).  ``M`` maps a byte
    in the polynomial basis of GF(2^8) to the tower basis (as 8 column
    bit-masks packed into row masks), ``Minv`` is its inverse.
    """
    reachable = {(_gf16_mul(t, t) ^ t) for t in range(16)}
    lam = next(v for v in range(1, 16) if v not in reachable)

    def comp_pow(a, e):
        r = (0, 1)
        while e:
            if e & 1:
                r = _comp_mul(r, a, lam)
            a = _comp_mul(a, a, lam)
            e >>= 1
        return r

    root = None
    for packed in range(256):
        cand = (packed >> 4, packed & 0xF)
        acc = (0, 0)
        for bit in AES_POLY_BITS:
            p = comp_pow(cand, bit) if bit else (0, 1)
            acc = (acc[0] ^ p[0], acc[1] ^ p[1])
        if acc == (0, 0) and packed >= 2:
            root = cand
            break
    if root is None:
        raise InvariantError("no root of the field polynomial in the tower field")

    cols = []
    for i in range(8):
        hi, lo = comp_pow(root, i)
        cols.append((hi << 4) | lo)
    # rows[j] = mask of input bits feeding output bit j
    rows = [0] * 8
    for i, col in enumerate(cols):
        for j in range(8):
            if (col >> j) & 1:
                rows[j] |= 1 << i
    rowsinv = _gf2_invert(rows)
    if rowsinv is None:
        raise InvariantError("tower basis change is singular")
    return lam, rows, rowsinv


def _gf2_invert(rows: Sequence[int]) -> Optional[List[int]]:
    n = len(rows)
    a = list(rows)
    inv = [1 << i for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if (a[r] >> col) & 1), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        for r in range(n):
            if r != col and (a[r] >> col) & 1:
                a[r] ^= a[col]
                inv[r] ^= inv[col]
    return inv


def _gf2_matmul(a: Sequence[int], b: Sequence[int]) -> List[int]:
    """Row-mask composition: (a @ b)[j] selects inputs of b feeding a[j]."""
    out = []
    for row in a:
        m = 0
        for i in range(len(b)):
            if (row >> i) & 1:
                m ^= b[i]
        out.append(m)
    return out


def _linear_rows(fn) -> List[int]:
    """Row masks of a linear GF(2^4) map given as int -> int."""
    rows = [0] * 4
    for i in range(4):
        img = fn(1 << i)
        for j in range(4):
            if (img >> j) & 1:
                rows[j] |= 1 << i
    return rows


# -- gate emission ------------------------------------------------------------


class NetBuilder:
    """Incremental netlist construction with fresh-name bookkeeping."""

    def __init__(self, name: str):
        self.netlist = Netlist(name=name)
        self._gates = 0
        self._nets = 0

    def input(self, name: str) -> str:
        self.netlist.inputs.append(name)
        return name

    def output(self, name: str) -> None:
        self.netlist.outputs.append(name)

    def _gid(self) -> str:
        self._gates += 1
        return f"g{self._gates}"

    def fresh(self) -> str:
        self._nets += 1
        return f"n{self._nets}"

    def emit(self, op: str, ins: Tuple[str, ...], out: Optional[str] = None) -> str:
        out = out or self.fresh()
        self.netlist.gates.append(Gate(self._gid(), op, out, ins))
        return out

    def AND(self, a, b, out=None):
        return self.emit("AND", (a, b), out)

    def OR(self, a, b, out=None):
        return self.emit("OR", (a, b), out)

    def XOR(self, a, b, out=None):
        return self.emit("XOR", (a, b), out)

    def NOT(self, a, out=None):
        return self.emit("NOT", (a,), out)

    def DFF(self, d: str, reset: int = 0, q: Optional[str] = None) -> str:
        q = q or self.fresh()
        self._gates += 1
        self.netlist.gates.append(Gate(f"r{self._gates}", "DFF", q, (d,), reset=reset))
        return q

    def xor_tree(self, nets: Sequence[str], out: Optional[str] = None) -> str:
        nets = list(nets)
        if not nets:
            raise InvariantError("empty xor tree")
        if len(nets) == 1:
            if out is not None:
                raise InvariantError("cannot rename a single net without a gate")
            return nets[0]
        acc = nets[0]
        for mid in nets[1:-1]:
            acc = self.XOR(acc, mid)
        return self.XOR(acc, nets[-1], out)

    def linear_map(self, rows: Sequence[int], bits: Sequence[str]) -> List[str]:
        out = []
        for row in rows:
            sel = [bits[i] for i in range(len(bits)) if (row >> i) & 1]
            out.append(self.xor_tree(sel))
        return out

    def finish(self) -> Netlist:
        self.netlist.validate()
        return self.netlist


def _emit_gf16_mul(b: NetBuilder, x: Sequence[str], y: Sequence[str]) -> List[str]:
    """Bilinear 4-bit product mod y^4+y+1: 16 ANDs plus XOR trees."""
    part = {}
    for i in range(4):
        for k in range(4):
            part[(i, k)] = b.AND(x[i], y[k])
    out = []
    for j in range(4):
        terms = [
            part[(i, k)]
            for i in range(4)
            for k in range(4)
            if (_gf16_mul(1 << i, 1 << k) >> j) & 1
        ]
        out.append(b.xor_tree(terms))
    return out


def _emit_sbox_cone(b: NetBuilder, x: Sequence[str], out_names: Sequence[str]) -> None:
    """Emit the full substitution cone from input bits ``x`` to ``out_names``."""
    lam, m_rows, minv_rows = _derive_tower()

    t = b.linear_map(m_rows, x)
    lo, hi = t[0:4], t[4:8]

    sq_rows = _linear_rows(lambda v: _gf16_mul(v, v))
    sqlam_rows = _linear_rows(lambda v: _gf16_mul(_gf16_mul(v, v), lam))

    a_bits = b.linear_map(sqlam_rows, hi)  # lam * hi^2
    c_bits = b.linear_map(sq_rows, lo)  # lo^2
    hl = _emit_gf16_mul(b, hi, lo)
    delta = [b.xor_tree([a_bits[j], hl[j], c_bits[j]]) for j in range(4)]

    # delta^-1 = delta^14 = d2 * d4 * d8
    d2 = b.linear_map(sq_rows, delta)
    d4 = b.linear_map(sq_rows, d2)
    d8 = b.linear_map(sq_rows, d4)
    d6 = _emit_gf16_mul(b, d2, d4)
    dinv = _emit_gf16_mul(b, d6, d8)

    hi_out = _emit_gf16_mul(b, hi, dinv)
    hilo = [b.XOR(hi[j], lo[j]) for j in range(4)]
    lo_out = _emit_gf16_mul(b, hilo, dinv)

    # combined output map: affine rows over the inverse tower map
    aff_rows = [0] * 8
    for i in range(8):
        for r in AFFINE_ROWS:
            aff_rows[i] |= 1 << ((i + r) % 8)
    final_rows = _gf2_matmul(aff_rows, minv_rows)

    inv_bits = lo_out + hi_out
    for j in range(8):
        sel = [inv_bits[i] for i in range(8) if (final_rows[j] >> i) & 1]
        if len(sel) < 2:
            raise InvariantError("degenerate output row in the combined map")
        if (AFFINE_CONST >> j) & 1:
            pre = b.xor_tree(sel)
            b.NOT(pre, out=out_names[j])
        else:
            b.xor_tree(sel, out=out_names[j])


def generate_aes_sbox_netlist() -> Netlist:
    """Regenerate the committed substitution-box netlist and self-check it."""
    b = NetBuilder("aes_sbox")
    x = [b.input(f"x{i}") for i in range(8)]
    outs = [f"s{i}" for i in range(8)]
    _emit_sbox_cone(b, x, outs)
    for o in outs:
        b.output(o)
    n = b.finish()

    tbl = aes_sbox_table()
    for v in range(256):
        got = _eval_comb_byte(n, v)
        if got != tbl[v]:
            raise InvariantError(f"substitution mismatch at {v:#04x}: {got:#04x}")
    return n


def _eval_comb_byte(n: Netlist, value: int) -> int:
    """Tiny topological evaluator used only for generation self-checks."""
    vals: Dict[str, int] = {f"x{i}": (value >> i) & 1 for i in range(8)}
    for g in n.topo_gates():
        a = vals[g.inputs[0]]
        if g.op == "NOT":
            vals[g.out] = a ^ 1
        elif g.op == "AND":
            vals[g.out] = a & vals[g.inputs[1]]
        elif g.op == "OR":
            vals[g.out] = a | vals[g.inputs[1]]
        elif g.op == "XOR":
            vals[g.out] = a ^ vals[g.inputs[1]]
        else:
            raise InvariantError("registers not supported here")
    return sum(vals[f"s{i}"] << i for i in range(8))


def build_aes_sbox() -> Netlist:
    """Load the committed substitution-box netlist (inputs x0..x7, outputs s0..s7)."""
    text = resources.files("masklab.data").joinpath("aes_sbox.nl").read_text()
    return parse_netlist(text)


def inline_netlist(
    b: NetBuilder, sub: Netlist, bindings: Dict[str, str], prefix: str
) -> Dict[str, str]:
    """Splice ``sub`` into ``b`` with renamed internals; returns output net map."""
    rename: Dict[str, str] = dict(bindings)

    def net(n: str) -> str:
        if n not in rename:
            rename[n] = f"{prefix}{n}"
        return rename[n]

    for g in sub.topo_gates():
        ins = tuple(net(i) for i in g.inputs)
        out = net(g.out)
        b.netlist.gates.append(Gate(f"{prefix}{g.gid}", g.op, out, ins, reset=g.reset))
    return {o: rename[o] for o in sub.outputs}


def build_victim_round(sbox: Optional[Netlist] = None) -> Netlist:
    """One-byte registered substitution round.

    Ports: p0..p7 plaintext, k0..k7 key (held constant by the harness), en
    write enable for the output bank (held at 1 for normal operation).
    Sixteen DFFs total: the input register bank and the output register
    bank.  Output bank cells are enable-gated: D = (en AND s) OR (NOT en
    AND q), the mux-into-DFF form of a register with write enable.
    """
    sbox = sbox or build_aes_sbox()
    b = NetBuilder("victim_round")
    p = [b.input(f"p{i}") for i in range(8)]
    k = [b.input(f"k{i}") for i in range(8)]
    en = b.input("en")
    pq = [b.DFF(p[i], reset=0, q=f"pq{i}") for i in range(8)]
    x = [b.XOR(pq[i], k[i], out=f"x{i}") for i in range(8)]
    bindings = {f"x{i}": x[i] for i in range(8)}
    souts = inline_netlist(b, sbox, bindings, prefix="sb_")
    hold = b.NOT(en)
    for i in range(8):
        cap = b.AND(en, souts[f"s{i}"])
        # q{i} is consumed here and driven by the DFF two lines down
        keep = b.AND(hold, f"q{i}")
        b.DFF(b.OR(cap, keep), reset=0, q=f"q{i}")
        b.output(f"q{i}")
    return b.finish()


def build_victim_serial(sbox: Optional[Netlist] = None) -> Netlist:
    """Bit-serial capture variant of the victim round.

    Same front end (input bank, key XOR, substitution cone), but the result
    is captured into a parallel-in serial-out bank and shifted one bit per
    cycle, LSB first, out of ``so``.  Ports: p0..p7, k0..k7, ld (capture
    strobe: pulse high for the cycle the substitution output settles, low
    while shifting; zeros shift in behind the data).  Sixteen DFFs.
    """
    sbox = sbox or build_aes_sbox()
    b = NetBuilder("victim_serial")
    p = [b.input(f"p{i}") for i in range(8)]
    k = [b.input(f"k{i}") for i in range(8)]
    ld = b.input("ld")
    pq = [b.DFF(p[i], reset=0, q=f"pq{i}") for i in range(8)]
    x = [b.XOR(pq[i], k[i], out=f"x{i}") for i in range(8)]
    bindings = {f"x{i}": x[i] for i in range(8)}
    souts = inline_netlist(b, sbox, bindings, prefix="sb_")
    shift = b.NOT(ld)
    for i in range(8):
        cap = b.AND(ld, souts[f"s{i}"])
        if i < 7:
            # sr{i+1} is consumed before its DFF is emitted on the next pass
            keep = b.AND(shift, f"sr{i + 1}")
            d = b.OR(cap, keep)
        else:
            d = cap
        b.DFF(d, reset=0, q=f"sr{i}")
    b.output("sr0")
    return b.finish()
