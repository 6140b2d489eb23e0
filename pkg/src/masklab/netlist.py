"""Single-bit gate-level netlist IR with a line-oriented text format.

The cell library is deliberately tiny: two-input AND/OR/XOR, an inverter,
and a D flip-flop with an implicit global clock and an implicit global
asynchronous reset.  Richer cells must be decomposed into this basis before
they enter the IR.  Wider datapaths are expressed as one net per bit.

Text format (UTF-8, one statement per line, ``#`` starts a comment)::

    module <name>
    input <net>
    output <net>
    gate <id> <AND|OR|XOR|NOT> <out> <in> [<in>]
    dff <id> <q> <d> <reset_bit>
    end

``serialize_netlist`` emits gates in canonical order (topological level,
ties broken lexically by gate id) so equal netlists serialize identically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import NetlistSyntaxError, NetlistValidationError

COMB_OPS = ("AND", "OR", "XOR", "NOT")
ARITY = {"AND": 2, "OR": 2, "XOR": 2, "NOT": 1, "DFF": 1}

#: Net names reserved for the implicit globals; they may never carry data.
RESERVED_NETS = ("clock", "reset")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]]*\Z")


@dataclass(frozen=True)
class Gate:
    """One cell instance.  For a DFF, ``out`` is q and ``inputs`` is (d,)."""

    gid: str
    op: str
    out: str
    inputs: Tuple[str, ...]
    reset: int = 0

    def is_dff(self) -> bool:
        return self.op == "DFF"


@dataclass
class Netlist:
    name: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    gates: List[Gate] = field(default_factory=list)
    #: subset of ``inputs`` that carry fresh randomness (masking transforms
    #: declare these; they round-trip through a structured header comment)
    random_inputs: frozenset = frozenset()

    # -- structure queries ------------------------------------------------

    def drivers(self) -> Dict[str, Gate]:
        """Map each gate-driven net to its (unique) driving gate."""
        d = {}
        for g in self.gates:
            if g.out in d:
                raise NetlistValidationError(f"net '{g.out}' has multiple drivers")
            d[g.out] = g
        return d

    def nets(self) -> List[str]:
        seen = dict.fromkeys(self.inputs)
        for g in self.gates:
            seen.setdefault(g.out, None)
            for i in g.inputs:
                seen.setdefault(i, None)
        return list(seen)

    def net_kind(self, net: str) -> str:
        if net in self.random_inputs:
            return "random"
        if net in self.inputs:
            return "input"
        if net in self.outputs:
            return "output"
        return "internal"

    def dffs(self) -> List[Gate]:
        return [g for g in self.gates if g.is_dff()]

    def comb_gates(self) -> List[Gate]:
        return [g for g in self.gates if not g.is_dff()]

    def stats(self) -> Dict[str, int]:
        c = {op: 0 for op in ARITY}
        for g in self.gates:
            c[g.op] += 1
        c["nets"] = len(self.nets())
        return c

    # -- ordering ---------------------------------------------------------

    def gate_levels(self) -> Dict[str, int]:
        """Longest-path level per gate id.

        Sources (input ports, DFF q outputs) sit at level 0; a gate's level
        is 1 + max level of its input nets.  A DFF gate is levelled by its
        d input, which places it after the cone that feeds it.  Raises on
        combinational cycles.
        """
        drv = self.drivers()
        net_level: Dict[str, int] = {n: 0 for n in self.inputs}
        for g in self.gates:
            if g.is_dff():
                net_level[g.out] = 0
        levels: Dict[str, int] = {}
        # Kahn over combinational gates only
        pending = {g.gid: g for g in self.gates}
        progress = True
        while pending and progress:
            progress = False
            for gid in list(pending):
                g = pending[gid]
                if all(i in net_level for i in g.inputs):
                    lvl = 1 + max((net_level[i] for i in g.inputs), default=0)
                    levels[gid] = lvl
                    if not g.is_dff():
                        net_level[g.out] = lvl
                    del pending[gid]
                    progress = True
        if pending:
            cyc = sorted(pending)
            raise NetlistValidationError(
                f"combinational cycle or undriven input involving gates: {', '.join(cyc[:8])}"
            )
        return levels

    def topo_gates(self) -> List[Gate]:
        """Gates in canonical order: level-sorted, ties broken by id."""
        levels = self.gate_levels()
        return sorted(self.gates, key=lambda g: (levels[g.gid], g.gid))

    def register_depth(self) -> Optional[int]:
        """Max number of DFFs on any input-to-output path (None if cyclic)."""
        edges: Dict[str, List[Tuple[str, int]]] = {}
        for g in self.gates:
            w = 1 if g.is_dff() else 0
            for i in g.inputs:
                edges.setdefault(i, []).append((g.out, w))
        indeg = {n: 0 for n in self.nets()}
        for src, outs in edges.items():
            for dst, _ in outs:
                indeg[dst] += 1
        order = [n for n, d in indeg.items() if d == 0]
        depth = {n: 0 for n in order}
        head = 0
        while head < len(order):
            n = order[head]
            head += 1
            for dst, w in edges.get(n, ()):
                depth[dst] = max(depth.get(dst, 0), depth[n] + w)
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    order.append(dst)
        if len(order) != len(indeg):
            return None  # cyclic through registers
        return max((depth.get(o, 0) for o in self.outputs), default=0)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if not _IDENT_RE.match(self.name):
            raise NetlistValidationError(f"bad module name '{self.name}'")
        seen_ports = set()
        for p in list(self.inputs) + list(self.outputs):
            if not _IDENT_RE.match(p):
                raise NetlistValidationError(f"bad net name '{p}'")
            if p in seen_ports:
                raise NetlistValidationError(f"duplicate port declaration '{p}'")
            seen_ports.add(p)
        for r in RESERVED_NETS:
            if r in seen_ports:
                raise NetlistValidationError(
                    f"'{r}' is the implicit global and cannot be declared as a port"
                )
        if not self.random_inputs <= set(self.inputs):
            raise NetlistValidationError("random_inputs must be a subset of inputs")

        gids = set()
        drv = {}
        for g in self.gates:
            if g.op not in ARITY:
                raise NetlistValidationError(f"gate '{g.gid}': unknown op '{g.op}'")
            if g.gid in gids:
                raise NetlistValidationError(f"duplicate gate id '{g.gid}'")
            gids.add(g.gid)
            if len(g.inputs) != ARITY[g.op]:
                raise NetlistValidationError(
                    f"gate '{g.gid}': {g.op} takes {ARITY[g.op]} input(s), got {len(g.inputs)}"
                )
            for n in (g.out,) + g.inputs:
                if not _IDENT_RE.match(n):
                    raise NetlistValidationError(f"gate '{g.gid}': bad net name '{n}'")
            for n in g.inputs:
                if n in RESERVED_NETS:
                    raise NetlistValidationError(
                        f"gate '{g.gid}': '{n}' cannot be used as a data input"
                    )
            if g.out in RESERVED_NETS:
                raise NetlistValidationError(f"gate '{g.gid}': cannot drive '{g.out}'")
            if g.is_dff() and g.reset not in (0, 1):
                raise NetlistValidationError(f"dff '{g.gid}': reset bit must be 0 or 1")
            if g.out in self.inputs:
                raise NetlistValidationError(
                    f"gate '{g.gid}': drives input port '{g.out}'"
                )
            if g.out in drv:
                raise NetlistValidationError(f"net '{g.out}' has multiple drivers")
            drv[g.out] = g

        driven = set(self.inputs) | set(drv)
        for g in self.gates:
            for n in g.inputs:
                if n not in driven:
                    raise NetlistValidationError(
                        f"gate '{g.gid}': input net '{n}' is undriven"
                    )
        for o in self.outputs:
            if o in self.inputs:
                raise NetlistValidationError(f"output '{o}' is also an input port")
            if o not in drv:
                raise NetlistValidationError(f"output net '{o}' is undriven")
        self.gate_levels()  # raises on combinational cycles

    # -- equality ----------------------------------------------------------

    def _key(self):
        return (
            self.name,
            tuple(self.inputs),
            tuple(self.outputs),
            tuple(self.topo_gates()),
            frozenset(self.random_inputs),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Netlist):
            return NotImplemented
        return self._key() == other._key()


# -- text format ------------------------------------------------------------


def parse_netlist(text: str) -> Netlist:
    """Parse the text format; raises NetlistSyntaxError with line context."""
    name = None
    inputs: List[str] = []
    outputs: List[str] = []
    gates: List[Gate] = []
    random_ports: List[str] = []
    ended = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.startswith("random_ports:"):
                random_ports.extend(body[len("random_ports:"):].split())
            continue
        code = raw.split("#", 1)[0].strip()
        if not code:
            continue
        toks = code.split()
        kw = toks[0]
        if ended:
            raise NetlistSyntaxError("statement after 'end'", lineno, raw.find(kw) + 1)

        def _need(n):
            if len(toks) != n:
                raise NetlistSyntaxError(
                    f"'{kw}' expects {n - 1} argument(s), got {len(toks) - 1}",
                    lineno,
                    raw.find(kw) + 1,
                )

        if kw == "module":
            _need(2)
            if name is not None:
                raise NetlistSyntaxError("duplicate 'module'", lineno, 1)
            name = toks[1]
        elif kw == "input":
            _need(2)
            inputs.append(toks[1])
        elif kw == "output":
            _need(2)
            outputs.append(toks[1])
        elif kw == "gate":
            if len(toks) < 5:
                raise NetlistSyntaxError("'gate' expects: id op out in...", lineno, 1)
            gid, op, out = toks[1], toks[2], toks[3]
            if op not in COMB_OPS:
                raise NetlistSyntaxError(
                    f"unknown gate op '{op}'", lineno, raw.find(op) + 1
                )
            ins = tuple(toks[4:])
            if len(ins) != ARITY[op]:
                raise NetlistSyntaxError(
                    f"{op} takes {ARITY[op]} input(s), got {len(ins)}", lineno, 1
                )
            gates.append(Gate(gid, op, out, ins))
        elif kw == "dff":
            _need(5)
            gid, q, d, rbit = toks[1], toks[2], toks[3], toks[4]
            if rbit not in ("0", "1"):
                raise NetlistSyntaxError(
                    f"dff reset bit must be 0 or 1, got '{rbit}'",
                    lineno,
                    raw.find(rbit, raw.find(d) + len(d)) + 1,
                )
            gates.append(Gate(gid, "DFF", q, (d,), reset=int(rbit)))
        elif kw == "end":
            _need(1)
            if name is None:
                raise NetlistSyntaxError("'end' before 'module'", lineno, 1)
            ended = True
        else:
            raise NetlistSyntaxError(f"unknown statement '{kw}'", lineno, raw.find(kw) + 1)

    if name is None:
        raise NetlistSyntaxError("missing 'module' statement")
    if not ended:
        raise NetlistSyntaxError("missing 'end' statement")

    n = Netlist(
        name=name,
        inputs=inputs,
        outputs=outputs,
        gates=gates,
        random_inputs=frozenset(random_ports),
    )
    n.validate()
    return n


def serialize_netlist(n: Netlist) -> str:
    """Canonical text form; ``parse_netlist`` inverts it exactly."""
    lines = []
    if n.random_inputs:
        ordered = [p for p in n.inputs if p in n.random_inputs]
        lines.append("# random_ports: " + " ".join(ordered))
    lines.append(f"module {n.name}")
    for p in n.inputs:
        lines.append(f"input {p}")
    for p in n.outputs:
        lines.append(f"output {p}")
    for g in n.topo_gates():
        if g.is_dff():
            lines.append(f"dff {g.gid} {g.out} {g.inputs[0]} {g.reset}")
        else:
            lines.append(f"gate {g.gid} {g.op} {g.out} {' '.join(g.inputs)}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def load_netlist(path) -> Netlist:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_netlist(fh.read())


def save_netlist(n: Netlist, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_netlist(n))
