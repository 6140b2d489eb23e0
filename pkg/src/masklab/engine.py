"""Vectorized batch simulation.

The scalar functions in :mod:`masklab.simulate` define the semantics; the
engines here run many independent traces in parallel and are required to
agree with them bit for bit (the test suite cross-checks).  Values are kept
as one uint8 lane per trace, so every gate evaluation is a single numpy
elementwise op over the batch.

Shapes: ``B`` is the batch width.  Per-cycle stimulus is a mapping from
input net to a uint8 array of shape ``(B,)``; assignments persist across
cycles exactly like the scalar stimulus dicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SimulationError
from .masking import DdlNetlist
from .netlist import Netlist
from .simulate import SimConfig, draw_delays

_BIG = np.int32(1 << 20)

_AND, _OR, _XOR, _NOT = 0, 1, 2, 3
_OPC = {"AND": _AND, "OR": _OR, "XOR": _XOR, "NOT": _NOT}


@dataclass
class _Compiled:
    names: List[str]
    idx: Dict[str, int]
    #: (opcode, out, a, b) per comb gate in topo order; b == -1 for NOT
    gate_rows: List[Tuple[int, int, int, int]]
    gate_gids: List[str]
    dff_q: np.ndarray
    dff_d: np.ndarray
    dff_reset: np.ndarray
    comb_rows: np.ndarray
    output_rows: List[int]
    input_set: frozenset


def _compile(n: Netlist) -> _Compiled:
    names = n.nets()
    idx = {name: i for i, name in enumerate(names)}
    gate_rows = []
    gate_gids = []
    for g in n.topo_gates():
        if g.is_dff():
            continue
        a = idx[g.inputs[0]]
        b = idx[g.inputs[1]] if len(g.inputs) > 1 else -1
        gate_rows.append((_OPC[g.op], idx[g.out], a, b))
        gate_gids.append(g.gid)
    dffs = n.dffs()
    return _Compiled(
        names=names,
        idx=idx,
        gate_rows=gate_rows,
        gate_gids=gate_gids,
        dff_q=np.array([idx[g.out] for g in dffs], dtype=np.int32),
        dff_d=np.array([idx[g.inputs[0]] for g in dffs], dtype=np.int32),
        dff_reset=np.array([g.reset for g in dffs], dtype=np.uint8),
        comb_rows=np.array([r[1] for r in gate_rows], dtype=np.int32),
        output_rows=[idx[o] for o in n.outputs],
        input_set=frozenset(n.inputs),
    )


def _apply_stim(vals: np.ndarray, comp: _Compiled, stim: Dict[str, np.ndarray],
                cycle: int, batch: int, seen: set) -> None:
    for k, v in stim.items():
        if k not in comp.input_set:
            raise SimulationError(f"stimulus for unknown input '{k}' at cycle {cycle}")
        arr = np.asarray(v, dtype=np.uint8)
        if arr.shape != (batch,):
            raise SimulationError(f"stimulus '{k}' has shape {arr.shape}, want ({batch},)")
        vals[comp.idx[k]] = arr
        seen.add(k)
    if cycle == 0 and seen != comp.input_set:
        missing = sorted(comp.input_set - seen)
        raise SimulationError(f"missing stimulus at cycle 0 for: {', '.join(missing[:5])}")


@dataclass
class BatchResult:
    """Per-trace aggregates of one batch run; arrays are (cycles, B)."""

    outputs: List[Dict[str, np.ndarray]]
    comb_toggles: np.ndarray
    reg_hd: np.ndarray
    rail_toggles: Optional[np.ndarray] = None
    unloaded_rail_toggles: Optional[np.ndarray] = None
    #: per cycle: (signs int8 (n_boundary, B), arrivals int32 (n_boundary, B))
    boundary_events: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None
    #: (cycles, nbins, B) rail rise counts per arrival bin when requested
    rail_hist: Optional[np.ndarray] = None
    #: (cycles, nbins, B) unloaded-complement rises per arrival bin
    unl_hist: Optional[np.ndarray] = None
    #: (cycles, nbins, B) toggle counts per arrival bin (glitchy, opt-in)
    toggle_hist: Optional[np.ndarray] = None
    rail_hist_span: Optional[int] = None


def run_batch(
    n: Netlist,
    stimuli: Sequence[Dict[str, np.ndarray]],
    cfg: Optional[SimConfig] = None,
    batch: Optional[int] = None,
) -> BatchResult:
    """Simulate ``B`` traces in lockstep; one stimulus dict per cycle."""
    cfg = cfg or SimConfig()
    cfg.validate()
    if not cfg.apply_reset:
        raise ConfigError("batch engines require reset")
    if not stimuli:
        raise SimulationError("no stimulus cycles given")
    if batch is None:
        batch = len(next(iter(stimuli[0].values())))
    comp = _compile(n)
    if cfg.mode == "zero_delay":
        return _run_zero(n, comp, stimuli, batch)
    if cfg.mode == "glitchy":
        return _run_glitchy(n, comp, stimuli, cfg, batch)
    raise ConfigError("use run_batch_ddl for two-phase simulation")


def _run_zero(n, comp, stimuli, batch):
    C = len(stimuli)
    nv = len(comp.names)
    vals = np.zeros((nv, batch), dtype=np.uint8)
    out = BatchResult(
        outputs=[],
        comb_toggles=np.zeros((C, batch), dtype=np.int32),
        reg_hd=np.zeros((C, batch), dtype=np.int32),
    )
    regs = np.repeat(comp.dff_reset[:, None], batch, axis=1)
    seen: set = set()
    prev = None
    for c in range(C):
        if c > 0:
            newregs = vals[comp.dff_d]
            out.reg_hd[c] = (newregs ^ regs).sum(axis=0, dtype=np.int32)
            regs = newregs.copy()
        _apply_stim(vals, comp, stimuli[c], c, batch, seen)
        if len(comp.dff_q):
            vals[comp.dff_q] = regs
        for opc, o, a, b in comp.gate_rows:
            if opc == _AND:
                vals[o] = vals[a] & vals[b]
            elif opc == _OR:
                vals[o] = vals[a] | vals[b]
            elif opc == _XOR:
                vals[o] = vals[a] ^ vals[b]
            else:
                vals[o] = vals[a] ^ 1
        if c > 0:
            out.comb_toggles[c] = (
                (vals[comp.comb_rows] ^ prev[comp.comb_rows]).sum(axis=0, dtype=np.int32)
            )
        prev = vals.copy()
        out.outputs.append({o: vals[comp.idx[o]].copy() for o in n.outputs})
    return out


def _run_glitchy(n, comp, stimuli, cfg, batch):
    port_skew, delays = draw_delays(n, cfg)
    # static arrival bound per net fixes the waveform grid length
    bound = {name: port_skew.get(name, 0) for name in comp.names}
    gd = []
    for (opc, o, a, b), gid in zip(comp.gate_rows, comp.gate_gids):
        dl = delays[gid]
        da = dl[0]
        db = dl[1] if len(dl) > 1 else 0
        bound[comp.names[o]] = max(
            bound[comp.names[a]] + da,
            (bound[comp.names[b]] + db) if b >= 0 else 0,
        )
        gd.append((opc, o, a, b, da, db))
    T = max(bound.values()) + 1

    C = len(stimuli)
    nv = len(comp.names)
    wave = np.zeros((nv, T, batch), dtype=np.uint8)
    out = BatchResult(
        outputs=[],
        comb_toggles=np.zeros((C, batch), dtype=np.int32),
        reg_hd=np.zeros((C, batch), dtype=np.int32),
    )
    nbins = cfg.subcycle_bins
    if nbins:
        out.toggle_hist = np.zeros((C, nbins, batch), dtype=np.int32)
        out.rail_hist_span = T - 1
        # grid position -> bin, monotone; reduceat start index per bin
        binof = np.arange(T, dtype=np.int64) * nbins // T
        bin_starts = np.searchsorted(binof, np.arange(nbins))
        acc = np.zeros((T, batch), dtype=np.int32)
    regs = np.repeat(comp.dff_reset[:, None], batch, axis=1)
    settled = np.zeros((nv, batch), dtype=np.uint8)
    seen: set = set()
    srcvals = np.zeros((nv, batch), dtype=np.uint8)

    for c in range(C):
        if c > 0:
            newregs = settled[comp.dff_d]
            out.reg_hd[c] = (newregs ^ regs).sum(axis=0, dtype=np.int32)
            regs = newregs.copy()
        _apply_stim(srcvals, comp, stimuli[c], c, batch, seen)
        if len(comp.dff_q):
            srcvals[comp.dff_q] = regs
        prev = settled if c > 0 else None

        # register outputs switch at t=0; a port edge lands at its drawn
        # skew, before which consumers see the previous settled value
        for name in comp.input_set:
            i = comp.idx[name]
            wave[i] = srcvals[i][None, :]
            sk = port_skew.get(name, 0)
            if sk and prev is not None:
                wave[i, :sk] = prev[i][None, :]
        if len(comp.dff_q):
            wave[comp.dff_q] = regs[:, None, :]

        tog = np.zeros(batch, dtype=np.int32) if c > 0 else None
        if nbins and c > 0:
            acc[:] = 0
        for opc, o, a, b, da, db in gd:
            wa = wave[a]
            wb = wave[b] if b >= 0 else None
            sa = np.empty((T, batch), dtype=np.uint8)
            if da:
                sa[:da] = prev[a][None, :] if prev is not None else wa[0][None, :]
            sa[da:] = wa[: T - da] if da else wa
            if opc == _NOT:
                wave[o] = sa ^ 1
            else:
                sb = np.empty((T, batch), dtype=np.uint8)
                if db:
                    sb[:db] = prev[b][None, :] if prev is not None else wb[0][None, :]
                sb[db:] = wb[: T - db] if db else wb
                if opc == _AND:
                    wave[o] = sa & sb
                elif opc == _OR:
                    wave[o] = sa | sb
                else:
                    wave[o] = sa ^ sb
            if c > 0:
                w = wave[o]
                d = w[1:] ^ w[:-1]
                b0 = w[0] ^ prev[o]
                tog += d.sum(axis=0, dtype=np.int32) + b0
                if nbins:
                    acc[1:] += d
                    acc[0] += b0
        if c > 0:
            out.comb_toggles[c] = tog
            if nbins:
                out.toggle_hist[c] = np.add.reduceat(acc, bin_starts, axis=0)
        settled = wave[:, T - 1, :].copy()
        out.outputs.append({o: settled[comp.idx[o]].copy() for o in n.outputs})
    return out


def run_batch_ddl(
    d: DdlNetlist,
    stimuli: Sequence[Dict[str, np.ndarray]],
    cfg: Optional[SimConfig] = None,
    batch: Optional[int] = None,
) -> BatchResult:
    """Two-phase dual-rail batch run over the masked view of ``d``."""
    cfg = cfg or SimConfig(mode="ddl_two_phase")
    cfg.validate()
    if cfg.mode != "ddl_two_phase":
        raise ConfigError("run_batch_ddl runs in ddl_two_phase mode")
    if not stimuli:
        raise SimulationError("no stimulus cycles given")
    if batch is None:
        batch = len(next(iter(stimuli[0].values())))

    mn = d.masked.netlist
    comp = _compile(mn)
    port_skew, delays = draw_delays(mn, cfg)
    port_rows = np.array([comp.idx[p] for p in mn.inputs], dtype=np.int32)
    port_skews = np.array([port_skew[p] for p in mn.inputs], dtype=np.int32)
    random_rows = {comp.idx[r] for r in d.masked.random_ports}
    remask_gids = {g.gid for g in d.single_gates}
    unl = set(d.unloaded_rails)
    dual_by_gid = {dg.gid: dg for dg in d.dual_gates}
    boundary_rows: List[Tuple[int, bool]] = []  # (net row, unloaded side is true rail)
    for dg in d.dual_gates:
        t_u, f_u = dg.out_t in unl, dg.out_f in unl
        if t_u != f_u:
            boundary_rows.append((comp.idx[dg.out], t_u))

    plan = []
    for (opc, o, a, b), gid in zip(comp.gate_rows, comp.gate_gids):
        if gid in remask_gids:
            if a in random_rows:
                a, b = b, a
            plan.append(("remask", o, a, b, 0, 0))
        elif opc == _NOT:
            plan.append(("not", o, a, -1, 0, 0))
        else:
            dl = delays[gid]
            plan.append((("and", "or", "xor")[opc], o, a, b, dl[0], dl[1]))

    C = len(stimuli)
    nv = len(comp.names)
    val = np.zeros((nv, batch), dtype=np.uint8)
    tim = np.zeros((nv, batch), dtype=np.int32)
    out = BatchResult(
        outputs=[],
        comb_toggles=np.zeros((C, batch), dtype=np.int32),
        reg_hd=np.zeros((C, batch), dtype=np.int32),
        rail_toggles=np.full((C, batch), 2 * len(d.dual_gates), dtype=np.int32),
        unloaded_rail_toggles=np.zeros((C, batch), dtype=np.int32),
        boundary_events=[],
    )
    nbins = cfg.subcycle_bins
    dual_rows = np.array(
        [o for kind, o, *_ in plan if kind in ("and", "or", "xor")],
        dtype=np.int32,
    )
    if nbins:
        # static arrival bound per net caps every actual arrival
        bound = np.zeros(nv, dtype=np.int64)
        bound[port_rows] = port_skews
        for kind, o, a, b, da, db in plan:
            if kind in ("not", "remask"):
                bound[o] = bound[a]
            else:
                bound[o] = max(bound[a] + da, bound[b] + db)
        span = int(bound[dual_rows].max()) if dual_rows.size else 0
        out.rail_hist = np.zeros((C, nbins, batch), dtype=np.int32)
        out.unl_hist = np.zeros((C, nbins, batch), dtype=np.int32)
        out.rail_hist_span = span
    regs = np.repeat(comp.dff_reset[:, None], batch, axis=1)
    remask_prev = {
        o: np.zeros(batch, dtype=np.uint8)
        for kind, o, *_ in plan
        if kind == "remask"
    }
    seen: set = set()

    for c in range(C):
        if c > 0:
            newregs = val[comp.dff_d]
            out.reg_hd[c] = (newregs ^ regs).sum(axis=0, dtype=np.int32)
            regs = newregs.copy()
        _apply_stim(val, comp, stimuli[c], c, batch, seen)
        if len(comp.dff_q):
            val[comp.dff_q] = regs
        tim[:] = 0
        tim[port_rows] = port_skews[:, None]
        tog = np.zeros(batch, dtype=np.int32)

        for kind, o, a, b, da, db in plan:
            if kind == "remask":
                share_v, rnd_v = val[a], val[b]
                tog += (remask_prev[o] != rnd_v).astype(np.int32)
                tog += share_v
                v = share_v ^ rnd_v
                remask_prev[o] = v
                val[o] = v
                tim[o] = tim[a]
                continue
            if kind == "not":
                val[o] = val[a] ^ 1
                tim[o] = tim[a]
                continue
            va, vb = val[a], val[b]
            ta = tim[a] + da
            tb = tim[b] + db
            if kind == "xor":
                val[o] = va ^ vb
                tim[o] = np.maximum(ta, tb)
            elif kind == "and":
                v = va & vb
                t_true = np.maximum(ta, tb)
                t_false = np.minimum(
                    np.where(va == 0, ta, _BIG), np.where(vb == 0, tb, _BIG)
                )
                val[o] = v
                tim[o] = np.where(v == 1, t_true, t_false)
            else:
                v = va | vb
                t_true = np.minimum(
                    np.where(va == 1, ta, _BIG), np.where(vb == 1, tb, _BIG)
                )
                t_false = np.maximum(ta, tb)
                val[o] = v
                tim[o] = np.where(v == 1, t_true, t_false)

        out.comb_toggles[c] = tog
        if nbins and dual_rows.size:
            bins = tim[dual_rows].astype(np.int64) * nbins // (span + 1)
            flat = bins * batch + np.arange(batch, dtype=np.int64)[None, :]
            out.rail_hist[c] = np.bincount(
                flat.ravel(), minlength=nbins * batch
            ).reshape(nbins, batch).astype(np.int32)
        if boundary_rows:
            rows = np.array([r for r, _ in boundary_rows], dtype=np.int32)
            unl_true = np.array([u for _, u in boundary_rows], dtype=bool)[:, None]
            bv = val[rows].astype(bool)
            raised_unloaded = bv == unl_true
            out.unloaded_rail_toggles[c] = 2 * raised_unloaded.sum(axis=0, dtype=np.int32)
            signs = np.where(raised_unloaded, -1, 1).astype(np.int8)
            out.boundary_events.append((signs, tim[rows].copy()))
            if nbins:
                ub = tim[rows].astype(np.int64) * nbins // (span + 1)
                flat = ub * batch + np.arange(batch, dtype=np.int64)[None, :]
                out.unl_hist[c] = np.bincount(
                    flat[raised_unloaded], minlength=nbins * batch
                ).reshape(nbins, batch).astype(np.int32)
        else:
            out.boundary_events.append(
                (np.zeros((0, batch), np.int8), np.zeros((0, batch), np.int32))
            )
        out.outputs.append({o: val[comp.idx[o]].copy() for o in mn.outputs})
    return out
