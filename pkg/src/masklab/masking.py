"""Two-share boolean masking and a dual-rail precharge lowering.

``mask_netlist`` splits every data net into two shares such that the XOR of
the shares equals the original value.  The nonlinear gadgets need no fresh
randomness per operation:

    AND:  z_s0 = (x_s0 & y_s0) ^ (x_s0 | ~y_s1)
          z_s1 = (x_s1 & y_s0) ^ (x_s1 | ~y_s1)

with the inverter on y_s1 shared between the two halves (7 gates per AND).
OR lowers through De Morgan with share-0 inversions (10 gates), XOR maps
per share (2 gates), and NOT inverts exactly one share (1 gate; the other
share is a plain wire alias).  Registers are duplicated, and every register
pair gets one remasking XOR pair fed by a dedicated fresh-randomness input
port, so share recombination never survives a clock edge.  Clock and reset
stay unmasked; the share-1 register resets to 0 so the reset state unmasks
to the original reset value.

``to_ddl`` further lowers the masked combinational logic to dual-rail
precharge form: every AND/OR/XOR becomes a monotone true/false rail pair,
inverters disappear into rail swaps, registers and the remasking XORs stay
single-rail, register complement rails come for free from the register's
inverted output, and complement rails that end at a remasking XOR are left
unconnected (their missing load is the residual imbalance the trace model
exposes through its differential weight).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError, InvariantError, MasklabError
from .netlist import Gate, Netlist, serialize_netlist


@dataclass
class MaskedNetlist:
    netlist: Netlist
    #: original net -> (share0 net, share1 net); aliases may repeat nets
    share_map: Dict[str, Tuple[str, str]]
    #: fresh-randomness input ports, one per original register
    random_ports: List[str]
    #: original DFF gate id -> (share0 DFF id, share1 DFF id)
    register_pairs: Dict[str, Tuple[str, str]]


def shares_of(net: str) -> Tuple[str, str]:
    return f"{net}__s0", f"{net}__s1"


def mask_netlist(n: Netlist) -> MaskedNetlist:
    """Return the two-share masked version of ``n``."""
    n.validate()
    if n.random_inputs:
        raise ConfigError("netlist already carries randomness ports; masking twice is not defined")

    out = Netlist(name=f"{n.name}__masked")
    ref: Dict[str, Tuple[str, str]] = {}

    for p in n.inputs:
        s0, s1 = shares_of(p)
        out.inputs += [s0, s1]
        ref[p] = (s0, s1)

    random_ports: List[str] = []
    register_pairs: Dict[str, Tuple[str, str]] = {}

    # register outputs are sequential sources: combinational consumers may
    # precede the DFF gate in topological order, so their share names are
    # fixed up front
    for g in n.dffs():
        ref[g.out] = shares_of(g.out)

    def emit(gid, op, o, ins, reset=0):
        out.gates.append(Gate(gid, op, o, tuple(ins), reset=reset))
        return o

    for g in n.topo_gates():
        o = g.out
        if g.op == "XOR":
            a, b = g.inputs
            for i in range(2):
                emit(f"{g.gid}__s{i}", "XOR", f"{o}__s{i}", (ref[a][i], ref[b][i]))
            ref[o] = shares_of(o)
        elif g.op == "NOT":
            a = g.inputs[0]
            emit(f"{g.gid}__s0", "NOT", f"{o}__s0", (ref[a][0],))
            ref[o] = (f"{o}__s0", ref[a][1])
        elif g.op in ("AND", "OR"):
            a, b = g.inputs
            if g.op == "AND":
                a0, a1 = ref[a]
                b0, b1 = ref[b]
                invert_out = False
            else:
                # x | y == ~(~x & ~y); inversions ride on share 0 only
                a0 = emit(f"{g.gid}__na", "NOT", f"{o}__na", (ref[a][0],))
                b0 = emit(f"{g.gid}__nb", "NOT", f"{o}__nb", (ref[b][0],))
                a1, b1 = ref[a][1], ref[b][1]
                invert_out = True
            ny = emit(f"{g.gid}__ny", "NOT", f"{o}__ny", (b1,))
            souts = []
            for i, asrc in enumerate((a0, a1)):
                t = emit(f"{g.gid}__a{i}", "AND", f"{o}__a{i}", (asrc, b0))
                u = emit(f"{g.gid}__o{i}", "OR", f"{o}__o{i}", (asrc, ny))
                tgt = f"{o}__w{i}" if (invert_out and i == 0) else f"{o}__s{i}"
                souts.append(emit(f"{g.gid}__s{i}", "XOR", tgt, (t, u)))
            if invert_out:
                souts[0] = emit(f"{g.gid}__no", "NOT", f"{o}__s0", (souts[0],))
            ref[o] = (souts[0], souts[1])
        elif g.op == "DFF":
            d = g.inputs[0]
            r = f"{o}__r"
            out.inputs.append(r)
            random_ports.append(r)
            m0 = emit(f"{g.gid}__m0", "XOR", f"{o}__m0", (ref[d][0], r))
            m1 = emit(f"{g.gid}__m1", "XOR", f"{o}__m1", (ref[d][1], r))
            emit(f"{g.gid}__s0", "DFF", f"{o}__s0", (m0,), reset=g.reset)
            emit(f"{g.gid}__s1", "DFF", f"{o}__s1", (m1,), reset=0)
            ref[o] = shares_of(o)
            register_pairs[g.gid] = (f"{g.gid}__s0", f"{g.gid}__s1")
        else:  # pragma: no cover
            raise InvariantError(f"unhandled op {g.op}")

    for y in n.outputs:
        for i in range(2):
            want = f"{y}__s{i}"
            have = ref[y][i]
            if have != want:
                # an alias crossed the port boundary; buffer it with two
                # inverters so the port net has a real driver
                mid = emit(f"po__{y}__b{i}", "NOT", f"{y}__pb{i}", (have,))
                emit(f"po__{y}__s{i}", "NOT", want, (mid,))
                ref[y] = (want, ref[y][1]) if i == 0 else (ref[y][0], want)
            out.outputs.append(want)

    out.random_inputs = frozenset(random_ports)
    out.validate()
    return MaskedNetlist(out, dict(ref), random_ports, register_pairs)


def unmask(m: MaskedNetlist, values: Dict[str, int]) -> Dict[str, int]:
    """Recombine a share-level assignment into original net values.

    Only nets whose two shares are both present are returned; asking for a
    net with exactly one share present raises, since that is always a bug.
    """
    plain: Dict[str, int] = {}
    for orig, (s0, s1) in m.share_map.items():
        have0, have1 = s0 in values, s1 in values
        if have0 and have1:
            plain[orig] = values[s0] ^ values[s1]
        elif have0 or have1:
            raise MasklabError(f"net '{orig}' has only one share in the assignment")
    return plain


# -- dual-rail precharge lowering --------------------------------------------


@dataclass(frozen=True)
class DualRailGate:
    """Monotone dual-rail implementation of one masked AND/OR/XOR gate."""

    gid: str
    op: str
    out: str  # masked net this pair computes
    out_t: str
    out_f: str
    ins: Tuple[str, ...]  # masked input nets (rails resolved via rail_map)


@dataclass
class DdlNetlist:
    #: expanded single-rail view in the base grammar (for serialization and
    #: functional equivalence checks); inverted register reads appear as NOT
    #: gates here but are free in the two-phase simulation
    netlist: Netlist
    masked: MaskedNetlist
    #: masked net -> (true rail, false rail)
    rail_map: Dict[str, Tuple[str, str]]
    dual_gates: List[DualRailGate]
    #: remasking XORs, still single-rail
    single_gates: List[Gate]
    dffs: List[Gate]
    #: false-rail net -> register q net it reads (free inverted output)
    inv_reads: Dict[str, str]
    #: complement rails with zero fanout (they end at a remasking XOR)
    unloaded_rails: List[str]
    #: masked input ports that were split into rail port pairs
    dual_inputs: List[str]


def rails_of(net: str) -> Tuple[str, str]:
    return f"{net}__t", f"{net}__f"


def to_ddl(m: MaskedNetlist) -> DdlNetlist:
    """Lower a masked netlist to dual-rail precharge form."""
    mn = m.netlist
    mn.validate()
    random_set = set(m.random_ports)

    remask_gids = set()
    for g in mn.gates:
        if g.op == "XOR" and any(i in random_set for i in g.inputs):
            remask_gids.add(g.gid)

    dual_consumers: Dict[str, int] = {}
    for g in mn.gates:
        if g.is_dff() or g.gid in remask_gids:
            continue
        for i in g.inputs:
            dual_consumers[i] = dual_consumers.get(i, 0) + 1

    drivers = mn.drivers()
    reg_q = {g.out for g in mn.gates if g.is_dff()}

    out = Netlist(name=f"{mn.name}__ddl")
    rail_map: Dict[str, Tuple[str, str]] = {}
    inv_reads: Dict[str, str] = {}
    dual_inputs: List[str] = []

    def rails(net: str) -> Tuple[str, str]:
        if net in rail_map:
            return rail_map[net]
        if net in reg_q:
            t, f = net, f"{net}__f"
            inv_reads[f] = net
        elif net in mn.inputs:
            t, f = rails_of(net)
            dual_inputs.append(net)
            out.inputs += [t, f]
        else:
            raise InvariantError(f"rails requested before driver of '{net}' was lowered")
        rail_map[net] = (t, f)
        return t, f

    # single-rail inputs first: random ports and any input only feeding
    # remasking XORs keep their original single port
    for p in mn.inputs:
        if p in random_set or dual_consumers.get(p, 0) == 0:
            out.inputs.append(p)
            rail_map[p] = (p, f"{p}__f")  # false rail never materializes

    dual_gates: List[DualRailGate] = []
    single_gates: List[Gate] = []
    dffs: List[Gate] = []

    for g in mn.topo_gates():
        if g.is_dff():
            ng = Gate(g.gid, "DFF", g.out, g.inputs, reset=g.reset)
            dffs.append(ng)
            out.gates.append(ng)
            continue
        if g.gid in remask_gids:
            a, b = g.inputs
            if a in random_set:
                a, b = b, a
            at = rails(a)[0] if (a in rail_map or a in reg_q or a in mn.inputs) else None
            if at is None:
                raise InvariantError(f"remasking input '{a}' has no lowered driver")
            ng = Gate(g.gid, "XOR", g.out, (at, b))
            single_gates.append(ng)
            out.gates.append(ng)
            rail_map[g.out] = (g.out, f"{g.out}__f")  # feeds a DFF only
            continue
        if g.op == "NOT":
            t, f = rails(g.inputs[0])
            rail_map[g.out] = (f, t)  # pure wire swap
            continue
        out_t, out_f = rails_of(g.out)
        in_rails = [rails(i) for i in g.inputs]
        if g.op == "AND":
            out.gates.append(Gate(f"{g.gid}__t", "AND", out_t, (in_rails[0][0], in_rails[1][0])))
            out.gates.append(Gate(f"{g.gid}__f", "OR", out_f, (in_rails[0][1], in_rails[1][1])))
        elif g.op == "OR":
            out.gates.append(Gate(f"{g.gid}__t", "OR", out_t, (in_rails[0][0], in_rails[1][0])))
            out.gates.append(Gate(f"{g.gid}__f", "AND", out_f, (in_rails[0][1], in_rails[1][1])))
        elif g.op == "XOR":
            (at, af), (bt, bf) = in_rails
            p0 = Gate(f"{g.gid}__p0", "AND", f"{g.out}__p0", (at, bf))
            p1 = Gate(f"{g.gid}__p1", "AND", f"{g.out}__p1", (af, bt))
            p2 = Gate(f"{g.gid}__p2", "AND", f"{g.out}__p2", (at, bt))
            p3 = Gate(f"{g.gid}__p3", "AND", f"{g.out}__p3", (af, bf))
            out.gates += [
                p0, p1, Gate(f"{g.gid}__t", "OR", out_t, (p0.out, p1.out)),
                p2, p3, Gate(f"{g.gid}__f", "OR", out_f, (p2.out, p3.out)),
            ]
        rail_map[g.out] = (out_t, out_f)
        dual_gates.append(DualRailGate(g.gid, g.op, g.out, out_t, out_f, g.inputs))

    # materialize free inverted register reads in the expanded view
    for f, q in inv_reads.items():
        out.gates.append(Gate(f"ir__{q}", "NOT", f, (q,)))

    # port shares: keep the original output declarations (register outputs
    # stay single-rail so the port names are unchanged)
    for y in mn.outputs:
        if y in reg_q:
            out.outputs.append(y)
        else:
            out.outputs.append(rail_map[y][0])

    # rails nobody consumes: these sit right before a remasking XOR, which
    # takes a single rail.  Usually the complement rail, but an inverted
    # read swaps the pair and strands the true rail instead.
    consumed = set()
    for g in out.gates:
        consumed.update(g.inputs)
    consumed.update(out.outputs)
    unloaded = sorted(
        r
        for dg in dual_gates
        for r in (dg.out_t, dg.out_f)
        if r not in consumed
    )

    out.random_inputs = frozenset(p for p in m.random_ports)
    out.validate()
    return DdlNetlist(
        netlist=out,
        masked=m,
        rail_map=rail_map,
        dual_gates=dual_gates,
        single_gates=single_gates,
        dffs=dffs,
        inv_reads=inv_reads,
        unloaded_rails=unloaded,
        dual_inputs=dual_inputs,
    )


# -- serialization with structured headers ------------------------------------


def _write_text(path_or_fh, text: str) -> None:
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
        return
    with open(path_or_fh, "w", encoding="utf-8") as fh:
        fh.write(text)


def write_masked(m: MaskedNetlist, path) -> None:
    """Serialize with header comments recording the share map and ports."""
    lines = ["# share_map: " + " ".join(f"{k}={v0},{v1}" for k, (v0, v1) in sorted(m.share_map.items()))]
    lines.append("# register_pairs: " + " ".join(f"{k}={a},{b}" for k, (a, b) in sorted(m.register_pairs.items())))
    body = serialize_netlist(m.netlist)
    _write_text(path, "\n".join(lines) + "\n" + body)


def write_ddl(d: DdlNetlist, path) -> None:
    lines = ["# unloaded_rails: " + " ".join(d.unloaded_rails)]
    lines.append("# inv_reads: " + " ".join(f"{f}={q}" for f, q in sorted(d.inv_reads.items())))
    lines.append("# rail_map: " + " ".join(f"{k}={t},{f}" for k, (t, f) in sorted(d.rail_map.items())))
    body = serialize_netlist(d.netlist)
    _write_text(path, "\n".join(lines) + "\n" + body)
