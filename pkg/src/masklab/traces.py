"""Power-trace synthesis and the MLTR trace-file format.

A trace is a row of float32 samples.  Each scheduled clock slot contributes
``samples_per_cycle`` samples: passed-edge slots carry the weighted
switching activity of one simulated cycle shaped by the pulse kernel,
skipped slots carry a flat precharge baseline.  Sub-cycle activity
histograms, when the simulation recorded them, land in the sample bin
matching their arrival time; without them all activity loads the first
sample of the slot.

File format (little-endian): magic ``MLTR``, version u16, trace count u64,
samples-per-trace u32, then row-major float32 samples.  A JSON sidecar
(``<path>.json``) carries the campaign configuration and seeds.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .circuits import aes_sbox_table, build_victim_round, build_victim_serial
from .clockrand import MODES, ClockRandState, edge_decision, state_from_bits, step
from .engine import BatchResult, run_batch, run_batch_ddl
from .errors import ConfigError, DataError, InvariantError
from .masking import DdlNetlist, MaskedNetlist, mask_netlist, to_ddl
from .memprot import SessionKeys, ProtectedMemory
from .netlist import Netlist
from .simulate import SimConfig, ToggleReport

MAGIC = b"MLTR"
VERSION = 1
_HEADER = 4 + 2 + 8 + 4

#: fixed batch width; campaign determinism is per trace, so the block size
#: only affects throughput, never sample values
BLOCK = 4096


@dataclass
class LeakModel:
    """Weights mapping switching activity onto power samples."""

    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 1.5
    epsilon: float = 0.15
    noise_std: float = 2.0
    samples_per_cycle: int = 4
    pulse_shape: Tuple[float, ...] = (1.0, 0.6, 0.3, 0.1)

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma", "epsilon", "noise_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.samples_per_cycle < 1:
            raise ConfigError("samples_per_cycle must be >= 1")
        if len(self.pulse_shape) != self.samples_per_cycle:
            raise ConfigError("pulse_shape length must equal samples_per_cycle")


@dataclass
class TraceSet:
    """In-memory trace matrix plus its sidecar metadata."""

    traces: np.ndarray
    meta: Dict

    @property
    def n_traces(self) -> int:
        return int(self.traces.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.traces.shape[1])


def _pack_header(t: int, s: int) -> bytes:
    return (
        MAGIC
        + int(VERSION).to_bytes(2, "little")
        + int(t).to_bytes(8, "little")
        + int(s).to_bytes(4, "little")
    )


def _read_header(fh) -> Tuple[int, int]:
    head = fh.read(_HEADER)
    if len(head) != _HEADER:
        raise DataError("trace file truncated inside header")
    if head[:4] != MAGIC:
        raise DataError("bad magic; not an MLTR trace file")
    version = int.from_bytes(head[4:6], "little")
    if version != VERSION:
        raise DataError(f"unsupported MLTR version {version}")
    t = int.from_bytes(head[6:14], "little")
    s = int.from_bytes(head[14:18], "little")
    return t, s


def sidecar_path(path: str) -> str:
    return path + ".json"


def write_traces(path: str, traces: np.ndarray, meta: Optional[Dict] = None) -> None:
    arr = np.ascontiguousarray(traces, dtype=np.float32)
    if arr.ndim != 2:
        raise DataError("trace matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_pack_header(arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())
    if meta is not None:
        with open(sidecar_path(path), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)


def read_meta(path: str) -> Dict:
    sp = sidecar_path(path)
    if not os.path.exists(sp):
        return {}
    with open(sp) as fh:
        return json.load(fh)


def read_traces(path: str) -> TraceSet:
    with open(path, "rb") as fh:
        t, s = _read_header(fh)
        data = np.fromfile(fh, dtype="<f4", count=t * s)
    if data.size != t * s:
        raise DataError("trace file truncated inside sample data")
    return TraceSet(traces=data.reshape(t, s), meta=read_meta(path))


def trace_dims(path: str) -> Tuple[int, int]:
    with open(path, "rb") as fh:
        return _read_header(fh)


def iter_traces(path: str, block: int = 8192) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(start_row, chunk)`` without materializing the whole file."""
    if block < 1:
        raise ConfigError("block must be >= 1")
    with open(path, "rb") as fh:
        t, s = _read_header(fh)
        for lo in range(0, t, block):
            n = min(block, t - lo)
            data = np.fromfile(fh, dtype="<f4", count=n * s)
            if data.size != n * s:
                raise DataError("trace file truncated inside sample data")
            yield lo, data.reshape(n, s)


class TraceWriter:
    """Append-only MLTR writer; patches the trace count on close."""

    def __init__(self, path: str, n_samples: int, meta: Optional[Dict] = None):
        self.path = path
        self.n_samples = int(n_samples)
        self.meta = meta
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(_pack_header(0, self.n_samples))
        self._lock = threading.Lock()

    def append(self, block: np.ndarray) -> None:
        arr = np.ascontiguousarray(block, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.shape[1] != self.n_samples:
            raise DataError(
                f"block has {arr.shape[1]} samples; writer expects {self.n_samples}"
            )
        with self._lock:
            self._fh.write(arr.tobytes())
            self.count += arr.shape[0]

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(6)
        self._fh.write(int(self.count).to_bytes(8, "little"))
        self._fh.close()
        if self.meta is not None:
            with open(sidecar_path(self.path), "w") as fh:
                json.dump(self.meta, fh, indent=1, sort_keys=True)

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- sample synthesis ----------------------------------------------------------


def _pulse_matrix(model: LeakModel) -> np.ndarray:
    # lower-triangular causal kernel: sample j collects activity bin b <= j
    spc = model.samples_per_cycle
    m = np.zeros((spc, spc))
    for j in range(spc):
        for b in range(j + 1):
            m[j, b] = model.pulse_shape[j - b]
    return m


def _noise_rng(seed: int) -> np.random.Generator:
    # dedicated counter block so data draws and noise draws never collide
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 1, 0, 0]))


def _slot_profiles(report: ToggleReport, model: LeakModel,
                   bus_hw: Optional[Sequence[float]]) -> np.ndarray:
    """Per-cycle activity profiles, shape (cycles, samples_per_cycle)."""
    spc = model.samples_per_cycle
    C = report.cycles
    act = np.zeros((C, spc))
    ddl = report.rail_toggles is not None
    if ddl:
        act[:, 0] += model.alpha * np.asarray(report.rail_toggles, dtype=float)
        if model.epsilon > 0.0 and report.rail_hist is not None:
            span = report.rail_hist_span
            hist = np.asarray(report.rail_hist, dtype=float)
            unl = np.zeros((C, spc))
            for c in range(C):
                for sign, t in report.boundary_events[c]:
                    if sign < 0:
                        unl[c, t * spc // (span + 1)] += 1
            if hist.shape[1] != spc:
                raise InvariantError("rail histogram bin count != samples_per_cycle")
            act += model.epsilon * (hist - 2.0 * unl)
    else:
        if report.toggle_hist is not None:
            hist = np.asarray(report.toggle_hist, dtype=float)
            if hist.shape[1] != spc:
                raise InvariantError("toggle histogram bin count != samples_per_cycle")
            act += model.alpha * hist
        else:
            act[:, 0] += model.alpha * np.asarray(report.comb_toggles, dtype=float)
        act[:, 0] += model.beta * np.asarray(report.reg_hd, dtype=float)
    if bus_hw is not None:
        if len(bus_hw) != C:
            raise InvariantError("bus_hw length != cycle count")
        act[:, 0] += model.gamma * np.asarray(bus_hw, dtype=float)
    return act


def _render(shaped: np.ndarray, sched: np.ndarray, model: LeakModel,
            seed: int, baseline: float) -> np.ndarray:
    """Place shaped per-cycle samples into schedule slots and add noise."""
    out = np.full((len(sched), model.samples_per_cycle), baseline,
                  dtype=np.float64)
    out[sched == 1] = shaped
    flat = out.reshape(-1)
    if model.noise_std > 0.0:
        flat = flat + _noise_rng(seed).normal(0.0, model.noise_std, flat.size)
    return flat.astype(np.float32)


def synthesize_trace(report: ToggleReport, sched: np.ndarray, model: LeakModel,
                     seed: int, bus_hw: Optional[Sequence[float]] = None,
                     baseline: float = 0.0) -> np.ndarray:
    """Render one trace from a toggle report and a clock-edge bitmap."""
    model.validate()
    sched = np.asarray(sched, dtype=np.uint8)
    passes = int(sched.sum())
    if passes != report.cycles:
        raise InvariantError(
            f"schedule passes {passes} != simulated cycles {report.cycles}"
        )
    act = _slot_profiles(report, model, bus_hw)
    shaped = act @ _pulse_matrix(model).T
    return _render(shaped, sched, model, seed, baseline)


# -- campaigns -----------------------------------------------------------------

_SBOX_TABLE = aes_sbox_table()
_POP = [bin(v).count("1") for v in range(2048)]

DEFAULT_KEY = 0x2B
#: fixed SRAM address the result byte is stored to each run
BUS_ADDR = 0x113
BUILTIN_VICTIMS = ("victim_round", "victim_serial")


@dataclass
class Countermeasures:
    """Which protections the simulated device variant enables."""

    mask: bool = False
    ddl: bool = False
    clock_mode: str = "off"
    perturb_interval: int = 0
    memprot: bool = False

    def validate(self) -> None:
        if self.ddl and not self.mask:
            raise ConfigError("the dual-rail transform applies to masked netlists")
        if self.clock_mode not in MODES:
            raise ConfigError(f"unknown clock mode '{self.clock_mode}'")
        if self.perturb_interval < 0:
            raise ConfigError("perturb_interval must be >= 0")


#: the three device configurations compared throughout; identical except for
#: their countermeasure fields
PRESETS: Dict[str, Countermeasures] = {
    "ncm": Countermeasures(),
    "bm": Countermeasures(mask=True, memprot=True),
    "bm-ddl": Countermeasures(mask=True, ddl=True, memprot=True),
}


@dataclass(frozen=True)
class _Harness:
    """How a victim netlist is driven: cycle count, control pulses, bus slot."""

    name: str
    cycles: int
    controls: Tuple[Tuple[str, Tuple[int, ...]], ...]
    bus_cycle: int


def _victim_netlist(victim) -> Tuple[Netlist, str]:
    if isinstance(victim, Netlist):
        return victim, victim.name
    if victim == "victim_round":
        return build_victim_round(), victim
    if victim == "victim_serial":
        return build_victim_serial(), victim
    raise ConfigError(f"unknown builtin victim '{victim}'")


def _harness_for(n: Netlist, name: str, n_cycles: Optional[int]) -> _Harness:
    ports = set(n.inputs)
    for i in range(8):
        if f"p{i}" not in ports or f"k{i}" not in ports:
            raise ConfigError("victim must expose p0..p7 and k0..k7 ports")
    has_ld = "ld" in ports
    cycles = int(n_cycles) if n_cycles else (11 if has_ld else 4)
    if cycles < 3:
        raise ConfigError("campaign victims need at least 3 cycles")
    controls = []
    if "en" in ports:
        controls.append(("en", tuple([1] * cycles)))
    if has_ld:
        controls.append(("ld", tuple(1 if c == 1 else 0 for c in range(cycles))))
    return _Harness(name=name, cycles=cycles, controls=tuple(controls),
                    bus_cycle=cycles - 1)


def _worst_case_slots(mode: str, passes_needed: int) -> int:
    """Slots to collect the passes, exact worst case over all start phases."""
    worst = passes_needed
    for phase in range(255):
        st = ClockRandState(lfsr8=phase, mode=mode)
        got = 0
        slots = 0
        while got < passes_needed:
            if edge_decision(st) == "pass":
                got += 1
            step(st)
            slots += 1
        worst = max(worst, slots)
    return worst


def _campaign_slots(cm: Countermeasures, cycles: int) -> int:
    if cm.clock_mode == "off":
        return cycles
    # perturbation can stretch beyond the deterministic worst; double it
    return 2 * _worst_case_slots(cm.clock_mode, cycles) + 8


def _trace_seeds(seed: int, n: int) -> np.ndarray:
    g = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, 1]))
    return g.integers(1, 2**63, size=n, dtype=np.int64)


def _draw_schedule(rng: np.random.Generator, cm: Countermeasures,
                   passes: int, slots_cap: int) -> np.ndarray:
    """Edge bitmap truncated after the final needed pass; skip-padded tail."""
    st = ClockRandState(
        lfsr8=state_from_bits(lambda: int(rng.integers(2))),
        mode=cm.clock_mode, perturb_interval=cm.perturb_interval)
    out = np.zeros(slots_cap, dtype=np.uint8)
    got = 0
    for i in range(slots_cap):
        if edge_decision(st) == "pass":
            out[i] = 1
            got += 1
            if got == passes:
                return out
        p = None
        if st.perturb_interval > 0 and (i + 1) % st.perturb_interval == 0:
            p = int(rng.integers(2))
        step(st, p)
    raise InvariantError("clock schedule ran out of slots before enough edges")


def _bus_hw(y: int, mp_seed: Optional[int]) -> float:
    """Bus bits for the result store: address plus data lines."""
    if mp_seed is None:
        return float(_POP[BUS_ADDR] + _POP[y])
    keys = SessionKeys.from_seed(mp_seed, addr_bits=10, data_bits=8)
    mem = ProtectedMemory(addr_bits=10, data_bits=8, keys=keys, log_bus=True)
    mem.write(BUS_ADDR, y)
    _, pa, pd = mem.bus_log[0]
    return float(_POP[pa] + _POP[pd])


class _BlockDraws:
    """Per-trace randomness for one block, drawn in a pinned order."""

    def __init__(self, seeds: np.ndarray, plan: _Harness, cm: Countermeasures,
                 n_rp: int, key: int, slots: int):
        B = len(seeds)
        C = plan.cycles
        nctl = len(plan.controls)
        self.p = np.zeros(B, dtype=np.int64)
        self.ap = np.zeros(B, dtype=np.int64)
        self.ak = np.zeros(B, dtype=np.int64)
        self.ctrl_m = np.zeros((nctl, C, B), dtype=np.uint8)
        self.remask = np.zeros((C, n_rp, B), dtype=np.uint8)
        self.bus = np.zeros((B, C))
        self.sched = np.ones((B, slots), dtype=np.uint8)
        for j, s in enumerate(seeds):
            rng = np.random.Generator(np.random.Philox(key=int(s)))
            p = int(rng.integers(0, 256))
            self.p[j] = p
            if cm.mask:
                self.ap[j] = int(rng.integers(0, 256))
                self.ak[j] = int(rng.integers(0, 256))
                if nctl:
                    self.ctrl_m[:, :, j] = rng.integers(
                        0, 2, size=(nctl, C), dtype=np.uint8)
                self.remask[:, :, j] = rng.integers(
                    0, 2, size=(C, n_rp), dtype=np.uint8)
            mp_seed = int(rng.integers(2**63)) if cm.memprot else None
            if cm.clock_mode != "off":
                self.sched[j] = _draw_schedule(rng, cm, C, slots)
            y = _SBOX_TABLE[p ^ key]
            self.bus[j, plan.bus_cycle] = _bus_hw(y, mp_seed)


def _block_stimuli(draws: _BlockDraws, plan: _Harness, cm: Countermeasures,
                   key: int, rp_names: Sequence[str]) -> List[Dict[str, np.ndarray]]:
    C = plan.cycles
    B = len(draws.p)
    stim: List[Dict[str, np.ndarray]] = []
    for c in range(C):
        s: Dict[str, np.ndarray] = {}
        if cm.mask:
            for r, name in enumerate(rp_names):
                s[name] = draws.remask[c, r]
            for t, (port, vals) in enumerate(plan.controls):
                m = draws.ctrl_m[t, c]
                s[f"{port}__s0"] = (vals[c] ^ m).astype(np.uint8)
                s[f"{port}__s1"] = m
            if c == 0:
                for i in range(8):
                    s[f"p{i}__s0"] = (((draws.p ^ draws.ap) >> i) & 1).astype(np.uint8)
                    s[f"p{i}__s1"] = ((draws.ap >> i) & 1).astype(np.uint8)
                    s[f"k{i}__s0"] = (((key ^ draws.ak) >> i) & 1).astype(np.uint8)
                    s[f"k{i}__s1"] = ((draws.ak >> i) & 1).astype(np.uint8)
        else:
            for port, vals in plan.controls:
                s[port] = np.full(B, vals[c], dtype=np.uint8)
            if c == 0:
                for i in range(8):
                    s[f"p{i}"] = ((draws.p >> i) & 1).astype(np.uint8)
                    s[f"k{i}"] = np.full(B, (key >> i) & 1, dtype=np.uint8)
        stim.append(s)
    return stim


def _batch_profiles(res: BatchResult, model: LeakModel, ddl: bool,
                    bus: np.ndarray) -> np.ndarray:
    """(B, cycles, samples_per_cycle) activity; ops mirror _slot_profiles."""
    spc = model.samples_per_cycle
    C, B = res.comb_toggles.shape
    act = np.zeros((B, C, spc))
    if ddl:
        act[:, :, 0] += model.alpha * res.rail_toggles.T
        if model.epsilon > 0.0 and res.rail_hist is not None:
            if res.rail_hist.shape[1] != spc:
                raise InvariantError("rail histogram bin count != samples_per_cycle")
            hist = res.rail_hist.transpose(2, 0, 1).astype(float)
            unl = res.unl_hist.transpose(2, 0, 1).astype(float)
            act += model.epsilon * (hist - 2.0 * unl)
    else:
        if res.toggle_hist is not None:
            if res.toggle_hist.shape[1] != spc:
                raise InvariantError("toggle histogram bin count != samples_per_cycle")
            act += model.alpha * res.toggle_hist.transpose(2, 0, 1).astype(float)
        else:
            act[:, :, 0] += model.alpha * res.comb_toggles.T
        act[:, :, 0] += model.beta * res.reg_hd.T
    act[:, :, 0] += model.gamma * bus
    return act


def _resolve_sim(cm: Countermeasures, model: LeakModel,
                 sim: Optional[SimConfig]) -> SimConfig:
    if sim is None:
        mode = "ddl_two_phase" if cm.ddl else "glitchy"
        sim = SimConfig(mode=mode, subcycle_bins=model.samples_per_cycle)
    if cm.ddl and sim.mode != "ddl_two_phase":
        raise ConfigError("a DDL countermeasure set needs ddl_two_phase simulation")
    if not cm.ddl and sim.mode == "ddl_two_phase":
        raise ConfigError("ddl_two_phase simulation needs the DDL countermeasure")
    if sim.mode in ("glitchy", "ddl_two_phase") and \
            sim.subcycle_bins not in (None, model.samples_per_cycle):
        raise ConfigError("subcycle_bins must match samples_per_cycle")
    if sim.subcycle_bins is None and sim.mode != "zero_delay":
        sim = replace(sim, subcycle_bins=model.samples_per_cycle)
    return sim


def gen_campaign(victim, n_traces: int, key: int = DEFAULT_KEY,
                 cm: Optional[Countermeasures] = None, seed: int = 0,
                 model: Optional[LeakModel] = None,
                 sim: Optional[SimConfig] = None,
                 out_path: Optional[str] = None, workers: int = 1,
                 n_cycles: Optional[int] = None,
                 block: int = BLOCK) -> Optional[TraceSet]:
    """Simulate and synthesize a whole campaign with one fixed key.

    Every per-trace draw (plaintext, share splits, remasking bits, session
    keys, clock schedule, noise) comes from that trace's own counter-based
    stream, so results are bit-identical for any block size or worker
    count.  Writes an MLTR file when ``out_path`` is given, otherwise
    returns the TraceSet in memory.
    """
    cm = cm or Countermeasures()
    cm.validate()
    model = model or LeakModel()
    model.validate()
    if not 0 <= key <= 0xFF:
        raise ConfigError("key must be one byte")
    if n_traces < 1:
        raise ConfigError("n_traces must be >= 1")
    base, vname = _victim_netlist(victim)
    plan = _harness_for(base, vname, n_cycles)
    sim = _resolve_sim(cm, model, sim)

    if cm.mask:
        mn = mask_netlist(base)
        rp_names = list(mn.random_ports)
        net = to_ddl(mn) if cm.ddl else mn.netlist
    else:
        rp_names = []
        net = base

    C = plan.cycles
    slots = _campaign_slots(cm, C)
    spc = model.samples_per_cycle
    S = slots * spc
    seeds = _trace_seeds(seed, n_traces)
    baseline = 0.0
    if cm.clock_mode != "off":
        baseline = _calibration_baseline(victim, key, cm, seed, model, sim,
                                         n_cycles)

    meta = {
        "campaign": {
            "victim": vname,
            "n_traces": int(n_traces),
            "key": int(key),
            "seed": int(seed),
            "countermeasures": asdict(cm),
            "leak_model": {**asdict(model),
                           "pulse_shape": list(model.pulse_shape)},
            "sim": {"mode": sim.mode, "delay_seed": sim.delay_seed,
                    "delay_range": list(sim.delay_range),
                    "subcycle_bins": sim.subcycle_bins},
            "cycles": C,
            "slots_per_trace": int(slots),
            "samples_per_trace": int(S),
            "bus_addr": BUS_ADDR,
            "baseline": float(baseline),
        },
        "session_keys": bool(cm.memprot),
        "remask_bits_per_trace": (len(rp_names) * C) if cm.mask else 0,
        "trace_seed_rule": "philox(key=seed, counter=[0,0,0,1]) stream",
        "plaintexts": "",
    }

    writer = TraceWriter(out_path, S, meta) if out_path else None
    rows: List[np.ndarray] = []
    p_hex: List[str] = []

    def do_block(lo: int, hi: int) -> Tuple[np.ndarray, np.ndarray]:
        draws = _BlockDraws(seeds[lo:hi], plan, cm, len(rp_names), key, slots)
        stim = _block_stimuli(draws, plan, cm, key, rp_names)
        if cm.ddl:
            res = run_batch_ddl(net, stim, sim, batch=hi - lo)
        else:
            res = run_batch(net, stim, sim, batch=hi - lo)
        act = _batch_profiles(res, model, cm.ddl, draws.bus)
        shaped = act @ _pulse_matrix(model).T
        out = np.empty((hi - lo, S), dtype=np.float32)
        for j in range(hi - lo):
            out[j] = _render(shaped[j], draws.sched[j], model,
                             int(seeds[lo + j]), baseline)
        return out, draws.p

    spans = [(lo, min(lo + block, n_traces)) for lo in range(0, n_traces, block)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = ex.map(lambda sp: do_block(*sp), spans)
            for out, pb in results:
                p_hex.append(pb.astype(np.uint8).tobytes().hex())
                if writer:
                    writer.append(out)
                else:
                    rows.append(out)
    else:
        for lo, hi in spans:
            out, pb = do_block(lo, hi)
            p_hex.append(pb.astype(np.uint8).tobytes().hex())
            if writer:
                writer.append(out)
            else:
                rows.append(out)

    meta["plaintexts"] = "".join(p_hex)
    if writer:
        writer.meta = meta
        writer.close()
        return None
    return TraceSet(traces=np.vstack(rows), meta=meta)


def _calibration_baseline(victim, key: int, cm: Countermeasures, seed: int,
                          model: LeakModel, sim: SimConfig,
                          n_cycles: Optional[int]) -> float:
    """Mean passed-slot power of a small noiseless clock-off run."""
    cal_cm = replace(cm, clock_mode="off", perturb_interval=0)
    cal_model = replace(model, noise_std=0.0)
    cal_seed = int(np.random.Generator(
        np.random.Philox(key=seed, counter=[0, 0, 0, 2])).integers(2**63))
    ts = gen_campaign(victim, 64, key=key, cm=cal_cm, seed=cal_seed,
                      model=cal_model, sim=sim, n_cycles=n_cycles)
    return float(ts.traces.mean())


def campaign_plaintexts(meta: Dict) -> np.ndarray:
    """Decode the per-trace plaintext bytes from sidecar metadata."""
    hx = meta.get("plaintexts", "")
    if not hx:
        raise DataError("metadata carries no plaintext record")
    return np.frombuffer(bytes.fromhex(hx), dtype=np.uint8).astype(np.int64)
