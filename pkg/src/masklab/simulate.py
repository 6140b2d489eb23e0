"""Cycle-based logic simulation with toggle accounting.

Three modes:

``zero_delay``
    Every combinational net settles instantly; a net toggles at most once
    per cycle (when its settled value changes).  Supports three-valued
    logic so unreset registers propagate X and reads of X raise.

``glitchy``
    Transport-delay timing.  Every gate gets a fixed integer propagation
    delay and every input port a fixed arrival skew, both drawn once per
    run from ``delay_seed``; the output waveform is the gate function
    applied to the time-shifted input waveforms and every intermediate
    transition is counted.  Register outputs switch together at the cycle
    boundary, so glitches come from reconvergent paths of unequal depth
    (and from port skew at the boundary).  This is what makes masked
    logic leak: skewed arrivals briefly expose share combinations.

``ddl_two_phase``
    Dual-rail precharge semantics for :class:`~masklab.masking.DdlNetlist`.
    Each cycle is a precharge (all dynamic rails low) followed by a
    monotone evaluation in which exactly one rail of every dual-rail gate
    rises; the raised rail's rise plus its precharge fall are booked as two
    transitions on that rail, so per-cycle rail activity is exactly
    data-independent.  Evaluation arrival times are tracked with the same
    per-gate delays and reported for the boundary gates whose complement
    rail is unloaded; the trace model turns those into the residual
    leakage of this style.

The implementations here are deliberately simple scalar references; the
vectorized batch engines in :mod:`masklab.engine` are validated against
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, SimulationError
from .masking import DdlNetlist
from .netlist import Gate, Netlist

MODES = ("zero_delay", "glitchy", "ddl_two_phase")


@dataclass
class SimConfig:
    mode: str = "zero_delay"
    #: seed for the static per-run gate and port delays (glitchy and ddl timing)
    delay_seed: int = 0
    #: inclusive bounds, in picoticks, for gate delays and port arrival skews
    delay_range: Tuple[int, int] = (1, 4)
    apply_reset: bool = True
    #: collect per-net change lists for the waveform dump
    wave_dump: bool = False
    #: >0: bin switching activity into this many sub-cycle arrival bins
    #: (glitchy mode: toggle_hist; ddl mode: rail_hist)
    subcycle_bins: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown simulation mode '{self.mode}'")
        lo, hi = self.delay_range
        if not (1 <= lo <= hi):
            raise ConfigError(f"bad delay_range {self.delay_range}")
        if self.subcycle_bins < 0:
            raise ConfigError("subcycle_bins must be >= 0")


@dataclass
class ToggleReport:
    """Per-cycle switching activity of one simulation run."""

    mode: str
    cycles: int
    comb_toggles: List[int]
    reg_hd: List[int]
    per_net: Dict[str, List[int]]
    rail_toggles: Optional[List[int]] = None
    unloaded_rail_toggles: Optional[List[int]] = None
    #: per cycle, one (sign, arrival) pair per unloaded-complement gate;
    #: sign is +1 when the loaded (true) rail rose, -1 for the complement
    boundary_events: Optional[List[List[Tuple[int, int]]]] = None
    #: per cycle, latest evaluation arrival in picoticks (ddl mode)
    eval_span: Optional[List[int]] = None
    #: per cycle, rail rise counts per sub-cycle arrival bin (ddl mode, opt-in)
    rail_hist: Optional[List[List[int]]] = None
    #: per cycle, toggle counts per sub-cycle arrival bin (glitchy mode, opt-in)
    toggle_hist: Optional[List[List[int]]] = None
    #: static arrival bound the histogram bins divide; fixed per run
    rail_hist_span: Optional[int] = None
    waves: Optional[Dict[str, List[Tuple[int, int, int]]]] = None

    def to_csv(self) -> str:
        cols = ["cycle", "comb_toggles", "reg_hd"]
        ddl = self.rail_toggles is not None
        if ddl:
            cols += ["rail_toggles", "unloaded_rail_toggles"]
        rows = [",".join(cols)]
        for c in range(self.cycles):
            row = [c, self.comb_toggles[c], self.reg_hd[c]]
            if ddl:
                row += [self.rail_toggles[c], self.unloaded_rail_toggles[c]]
            rows.append(",".join(str(x) for x in row))
        return "\n".join(rows) + "\n"


def write_wave_dump(report: ToggleReport, fh) -> None:
    """Plain-text waveform dump: one ``cycle time net value`` line per change."""
    if report.waves is None:
        raise ConfigError("simulation was run without wave_dump")
    events = []
    for net, changes in report.waves.items():
        for cyc, t, v in changes:
            events.append((cyc, t, net, v))
    for cyc, t, net, v in sorted(events):
        fh.write(f"{cyc} {t} {net} {v}\n")


def draw_delays(
    n: Netlist, cfg: SimConfig
) -> Tuple[Dict[str, int], Dict[str, Tuple[int, ...]]]:
    """Static per-run timing: one arrival skew per input port, one
    propagation delay per combinational gate (replicated across its pins so
    consumers can index by pin), drawn in declaration then topological order.
    """
    rng = np.random.default_rng(cfg.delay_seed)
    lo, hi = cfg.delay_range
    ports = {p: int(v) for p, v in zip(n.inputs, rng.integers(lo, hi + 1, size=len(n.inputs)))}
    gates = {}
    for g in n.topo_gates():
        if g.is_dff():
            continue
        gates[g.gid] = (int(rng.integers(lo, hi + 1)),) * len(g.inputs)
    return ports, gates


# -- shared helpers -----------------------------------------------------------


def _check_stimuli(inputs: Sequence[str], stimuli: Sequence[Dict[str, int]]) -> None:
    if not stimuli:
        raise SimulationError("no stimulus cycles given")
    inset = set(inputs)
    for c, stim in enumerate(stimuli):
        for k, v in stim.items():
            if k not in inset:
                raise SimulationError(f"stimulus for unknown input '{k}' at cycle {c}")
            if v not in (0, 1):
                raise SimulationError(f"stimulus '{k}'={v!r} at cycle {c} is not a bit")
    missing = inset - set(stimuli[0])
    if missing:
        raise SimulationError(
            f"missing stimulus at cycle 0 for: {', '.join(sorted(missing)[:5])}"
        )


def _op3(op: str, a, b=None):
    """Three-valued gate evaluation; None is X."""
    if op == "AND":
        if a == 0 or b == 0:
            return 0
        if a is None or b is None:
            return None
        return 1
    if op == "OR":
        if a == 1 or b == 1:
            return 1
        if a is None or b is None:
            return None
        return 0
    if op == "XOR":
        if a is None or b is None:
            return None
        return a ^ b
    if op == "NOT":
        return None if a is None else a ^ 1
    raise SimulationError(f"bad op {op}")


# -- zero delay ---------------------------------------------------------------


def _sim_zero(n: Netlist, stimuli, cfg: SimConfig):
    order = [g for g in n.topo_gates() if not g.is_dff()]
    dffs = n.dffs()
    comb_nets = [g.out for g in order]

    regs: Dict[str, Optional[int]] = {
        g.out: (g.reset if cfg.apply_reset else None) for g in dffs
    }
    cycles = len(stimuli)
    report = ToggleReport(
        mode=cfg.mode,
        cycles=cycles,
        comb_toggles=[0] * cycles,
        reg_hd=[0] * cycles,
        per_net={net: [0] * cycles for net in comb_nets},
        waves={} if cfg.wave_dump else None,
    )
    outputs = []
    vals: Dict[str, Optional[int]] = {}
    cur_in: Dict[str, int] = {}
    prev: Dict[str, Optional[int]] = {}

    for c in range(cycles):
        if c > 0:
            hd = 0
            for g in dffs:
                d = vals[g.inputs[0]]
                if regs[g.out] is not None and d is not None:
                    hd += regs[g.out] ^ d
                regs[g.out] = d
            report.reg_hd[c] = hd
        cur_in.update(stimuli[c])
        vals = dict(regs)
        vals.update(cur_in)
        for g in order:
            a = vals[g.inputs[0]]
            b = vals[g.inputs[1]] if len(g.inputs) > 1 else None
            vals[g.out] = _op3(g.op, a, b)
        if c > 0:
            for net in comb_nets:
                if vals[net] is not None and prev.get(net) is not None and vals[net] != prev[net]:
                    report.per_net[net][c] = 1
                    report.comb_toggles[c] += 1
                    if cfg.wave_dump:
                        report.waves.setdefault(net, []).append((c, 0, vals[net]))
        prev = dict(vals)
        row = {}
        for o in n.outputs:
            if vals[o] is None:
                raise SimulationError(
                    f"output '{o}' reads X at cycle {c}: a register was read before reset/first clock"
                )
            row[o] = vals[o]
        outputs.append(row)
    return outputs, report


# -- glitchy (transport delay) -------------------------------------------------


def _sim_glitchy(n: Netlist, stimuli, cfg: SimConfig):
    if not cfg.apply_reset and n.dffs():
        raise ConfigError("glitchy mode requires reset when registers are present")
    port_skew, delays = draw_delays(n, cfg)
    order = [g for g in n.topo_gates() if not g.is_dff()]
    dffs = n.dffs()
    comb_nets = [g.out for g in order]

    regs = {g.out: g.reset for g in dffs}
    cycles = len(stimuli)
    report = ToggleReport(
        mode=cfg.mode,
        cycles=cycles,
        comb_toggles=[0] * cycles,
        reg_hd=[0] * cycles,
        per_net={net: [0] * cycles for net in comb_nets},
        waves={} if cfg.wave_dump else None,
    )
    nbins = cfg.subcycle_bins
    if nbins:
        # static arrival bound per net caps every actual change time
        bound: Dict[str, int] = dict(port_skew)
        for g in order:
            dl = delays[g.gid]
            bound[g.out] = max(
                bound.get(src, 0) + dl[i] for i, src in enumerate(g.inputs)
            )
        static_span = max(bound.values()) if bound else 0
        report.toggle_hist = [[0] * nbins for _ in range(cycles)]
        report.rail_hist_span = static_span
    outputs = []
    cur_in: Dict[str, int] = {}
    settled: Dict[str, int] = {}

    for c in range(cycles):
        if c > 0:
            hd = 0
            for g in dffs:
                d = settled[g.inputs[0]]
                hd += regs[g.out] ^ d
                regs[g.out] = d
            report.reg_hd[c] = hd
        cur_in.update(stimuli[c])

        # register outputs switch at t=0 (shared clock edge); port edges
        # arrive at their drawn skew; consumers reading t-d before a source
        # edge see the previous settled value, which is exactly the prev dict
        prev = dict(settled) if c > 0 else None
        changes: Dict[str, List[Tuple[int, int]]] = {}
        values: Dict[str, int] = {}
        for name, v in {**regs, **cur_in}.items():
            values[name] = v
            if prev is not None and prev[name] != v:
                changes[name] = [(port_skew.get(name, 0) if name in cur_in else 0, v)]
            else:
                changes[name] = []

        def _at(net: str, t: int) -> int:
            v = prev[net] if prev is not None else None
            for ct, cv in changes[net]:
                if ct <= t:
                    v = cv
                else:
                    break
            if v is None:  # first cycle: everything settles from scratch
                v = values[net]
            return v

        for g in order:
            dl = delays[g.gid]
            cand = sorted(
                {t + dl[i] for i, src in enumerate(g.inputs) for t, _ in changes[src]}
            )
            base_ins = [values[src] for src in g.inputs]
            if prev is None:
                v0 = _op3(g.op, *(base_ins if len(base_ins) > 1 else (base_ins[0], None)))
            else:
                pins = [prev[src] for src in g.inputs]
                v0 = _op3(g.op, *(pins if len(pins) > 1 else (pins[0], None)))
            out_changes = []
            last = v0
            for t in cand:
                ins = [_at(src, t - dl[i]) for i, src in enumerate(g.inputs)]
                v = _op3(g.op, *(ins if len(ins) > 1 else (ins[0], None)))
                if v != last:
                    out_changes.append((t, v))
                    last = v
            changes[g.out] = out_changes
            values[g.out] = last
            if prev is not None:
                k = len(out_changes)
                report.per_net[g.out][c] = k
                report.comb_toggles[c] += k
                if nbins:
                    for t, _ in out_changes:
                        report.toggle_hist[c][t * nbins // (static_span + 1)] += 1
                if cfg.wave_dump and out_changes:
                    report.waves.setdefault(g.out, []).extend(
                        (c, t, v) for t, v in out_changes
                    )
        settled = values
        outputs.append({o: settled[o] for o in n.outputs})
    return outputs, report


# -- dual-rail precharge two-phase --------------------------------------------

_BIG = 1 << 30


def _sim_ddl(d: DdlNetlist, stimuli, cfg: SimConfig):
    if not cfg.apply_reset:
        raise ConfigError("two-phase mode requires reset")
    mn = d.masked.netlist
    port_skew, delays = draw_delays(mn, cfg)
    dual_by_gid = {dg.gid: dg for dg in d.dual_gates}
    remask_gids = {g.gid for g in d.single_gates}
    unl = set(d.unloaded_rails)
    # boundary gates: exactly one of the two rails is unconsumed
    boundary = [
        (dg, dg.out_t in unl)
        for dg in d.dual_gates
        if (dg.out_t in unl) != (dg.out_f in unl)
    ]
    order = [g for g in mn.topo_gates() if not g.is_dff()]
    dffs = [g for g in mn.gates if g.is_dff()]

    regs = {g.out: g.reset for g in dffs}
    cycles = len(stimuli)
    rails_per_cycle = 2 * len(d.dual_gates)
    report = ToggleReport(
        mode=cfg.mode,
        cycles=cycles,
        comb_toggles=[0] * cycles,
        reg_hd=[0] * cycles,
        per_net={},
        rail_toggles=[rails_per_cycle] * cycles,
        unloaded_rail_toggles=[0] * cycles,
        boundary_events=[[] for _ in range(cycles)],
        eval_span=[0] * cycles,
    )
    for dg in d.dual_gates:
        report.per_net[dg.out_t] = [0] * cycles
        report.per_net[dg.out_f] = [0] * cycles
    for g in d.single_gates:
        report.per_net[g.out] = [0] * cycles

    nbins = cfg.subcycle_bins
    if nbins:
        # static per-net arrival bound; actual arrivals never exceed it, so
        # the bin index stays inside [0, nbins)
        bound: Dict[str, int] = dict(port_skew)
        for g in order:
            if g.gid in remask_gids or g.op == "NOT":
                src = g.inputs[0]
                if g.gid in remask_gids and src in d.masked.random_ports:
                    src = g.inputs[1]
                bound[g.out] = bound.get(src, 0)
            else:
                dl = delays[g.gid]
                bound[g.out] = max(
                    bound.get(g.inputs[0], 0) + dl[0],
                    bound.get(g.inputs[1], 0) + dl[1],
                )
        static_span = max(
            (bound.get(dg.out, 0) for dg in d.dual_gates), default=0
        )
        report.rail_hist = [[0] * nbins for _ in range(cycles)]
        report.rail_hist_span = static_span

    outputs = []
    cur_in: Dict[str, int] = {}
    remask_prev = {g.out: 0 for g in d.single_gates}

    for c in range(cycles):
        if c > 0:
            hd = 0
            for g in dffs:
                dv = val[g.inputs[0]]  # noqa: F821 - set in previous iteration
                hd += regs[g.out] ^ dv
                regs[g.out] = dv
            report.reg_hd[c] = hd
        cur_in.update(stimuli[c])

        val: Dict[str, int] = dict(regs)
        val.update(cur_in)
        tim: Dict[str, int] = {k: (port_skew.get(k, 0) if k in cur_in else 0) for k in val}
        span = 0

        for g in order:
            a = g.inputs[0]
            if g.gid in remask_gids:
                if g.inputs[0] in d.masked.random_ports:
                    rnd, share = g.inputs[0], g.inputs[1]
                else:
                    share, rnd = g.inputs[0], g.inputs[1]
                v = val[share] ^ val[rnd]
                # precharge: output relaxes to the fresh random value, then
                # the true rail rise (if the share is 1) flips it again
                tog = (1 if remask_prev[g.out] != val[rnd] else 0) + val[share]
                remask_prev[g.out] = v
                val[g.out] = v
                tim[g.out] = tim[share]
                report.per_net[g.out][c] = tog
                report.comb_toggles[c] += tog
                continue
            if g.op == "NOT":
                val[g.out] = val[a] ^ 1
                tim[g.out] = tim[a]
                continue
            b = g.inputs[1]
            dl = delays[g.gid]
            ta, tb = tim[a] + dl[0], tim[b] + dl[1]
            va, vb = val[a], val[b]
            if g.op == "XOR":
                v, t = va ^ vb, max(ta, tb)
            elif g.op == "AND":
                v = va & vb
                if v:
                    t = max(ta, tb)
                else:
                    t = min(ta if va == 0 else _BIG, tb if vb == 0 else _BIG)
            else:  # OR
                v = va | vb
                if v:
                    t = min(ta if va == 1 else _BIG, tb if vb == 1 else _BIG)
                else:
                    t = max(ta, tb)
            val[g.out], tim[g.out] = v, t
            span = max(span, t)
            dg = dual_by_gid[g.gid]
            raised = dg.out_t if v else dg.out_f
            report.per_net[raised][c] = 2
            if nbins:
                report.rail_hist[c][t * nbins // (static_span + 1)] += 1
        report.eval_span[c] = span
        for dg, unl_is_true in boundary:
            v = val[dg.out]
            raised_unloaded = (v == 1) == unl_is_true
            if raised_unloaded:
                report.unloaded_rail_toggles[c] += 2
            report.boundary_events[c].append(
                (-1 if raised_unloaded else 1, tim[dg.out])
            )
        outputs.append({o: val[o] for o in mn.outputs})
    return outputs, report


# -- public entry points ------------------------------------------------------


def simulate(
    n: Union[Netlist, DdlNetlist],
    stimuli: Sequence[Dict[str, int]],
    cfg: Optional[SimConfig] = None,
):
    """Run one stimulus sequence; returns (per-cycle outputs, ToggleReport).

    ``stimuli`` is one dict per cycle mapping input nets to bits; values
    persist across cycles once assigned, and cycle 0 must assign every
    input.  Registers update on the clock edge between cycles.
    """
    cfg = cfg or SimConfig()
    cfg.validate()
    if isinstance(n, DdlNetlist):
        if cfg.mode != "ddl_two_phase":
            raise ConfigError("dual-rail netlists simulate in ddl_two_phase mode")
        _check_stimuli(n.masked.netlist.inputs, stimuli)
        return _sim_ddl(n, stimuli, cfg)
    if cfg.mode == "ddl_two_phase":
        raise ConfigError("ddl_two_phase mode needs a DdlNetlist")
    n.validate()
    _check_stimuli(n.inputs, stimuli)
    if cfg.mode == "zero_delay":
        return _sim_zero(n, stimuli, cfg)
    return _sim_glitchy(n, stimuli, cfg)


def simulate_ddl(d: DdlNetlist, stimuli, cfg: Optional[SimConfig] = None):
    cfg = cfg or SimConfig(mode="ddl_two_phase")
    return simulate(d, stimuli, cfg)
