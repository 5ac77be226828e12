"""Event-list scheduler: per-group stage DAGs placed on hardware lanes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..arch import ArchInstance, DeviceLibrary, Optimizations
from ..gnn import GnnModelSpec, LayerSpec, effective_graph
from ..graphio import Graph, PartitionPlan, build_partition_plan
from .latency import (aggregate_latency, bytes_per_feature, combine_latency, fetch_parts,
                      pass_time, softmax_latency, update_latency)
from .memory import MemoryModel, MemoryState, memory_fetch_time

BLOCKS = ("aggregate", "combine", "update", "memory")


@dataclass
class Event:
    block: str
    op: str
    lane: str
    layer: int
    group: int
    chunk: int
    duration: float
    deps: tuple[int, ...] = ()
    tallies: dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    start: float = 0.0
    end: float = 0.0


@dataclass
class Timeline:
    events: list[Event]
    serial: bool = False
    memory: dict = field(default_factory=dict)

    @property
    def makespan(self) -> float:
        return max((e.end for e in self.events), default=0.0)

    def busy_by_block(self) -> dict[str, float]:
        out = {b: 0.0 for b in BLOCKS}
        for e in self.events:
            out[e.block] += e.duration
        return out

    def aggregate_makespan(self) -> float:
        """Wall time covered by aggregate-block activity, summed per group."""
        spans: dict[tuple[int, int], list[float]] = {}
        for e in self.events:
            if e.block == "aggregate":
                s = spans.setdefault((e.layer, e.group), [e.start, e.end])
                s[0], s[1] = min(s[0], e.start), max(s[1], e.end)
        return sum(b - a for a, b in spans.values())

    def lane_of(self, e: Event) -> str:
        return "serial" if self.serial and e.block != "memory" else e.lane


def place(events: list[Event], serial: bool = False) -> None:
    """List-schedule ``events`` in program order.

    Each event starts when its lane is free and all dependencies have ended.
    Memory events are annotations pinned to the start of their anchor.
    """
    free: dict[str, float] = {}
    for e in events:
        if e.block == "memory":
            a = events[e.meta["anchor"]]
            e.start, e.end = a.start, a.start + e.duration
            continue
        lane = "serial" if serial else e.lane
        start = free.get(lane, 0.0)
        for d in e.deps:
            start = max(start, events[d].end)
        e.start, e.end = start, start + e.duration
        free[lane] = e.end


def check_timeline(t: Timeline, tol: float = 1e-9) -> list[str]:
    """Invariant violations: lane overlap, broken dependencies, cross-group reduce order."""
    problems = []
    lanes: dict[str, list[Event]] = {}
    for e in t.events:
        lanes.setdefault(t.lane_of(e), []).append(e)
    for name, evs in lanes.items():
        evs = sorted(evs, key=lambda e: (e.start, e.end))
        for a, b in zip(evs, evs[1:]):
            if b.start < a.end - tol:
                problems.append(f"lane {name}: overlap at {b.start}")
    for idx, e in enumerate(t.events):
        for d in e.deps:
            if e.start < t.events[d].end - tol:
                problems.append(f"event {idx} starts before dependency {d} ends")
    reduces: dict[int, dict[int, list[float]]] = {}
    for e in t.events:
        if e.op == "reduce":
            s = reduces.setdefault(e.layer, {}).setdefault(e.group, [math.inf, -math.inf])
            s[0], s[1] = min(s[0], e.start), max(s[1], e.end)
    for layer, groups in reduces.items():
        order = sorted(groups)
        for a, b in zip(order, order[1:]):
            if groups[b][0] < groups[a][1] - tol:
                problems.append(f"layer {layer}: reduce of group {b} starts before group {a} finishes")
    return problems


def pipeline_schedule(stage_times, serial: bool = False) -> Timeline:
    """Synthetic chunked pipeline; ``stage_times[k][s]`` is chunk k's time in stage s."""
    events = []
    for k, row in enumerate(stage_times):
        n = len(row)
        for s, dur in enumerate(row):
            block = ("aggregate", "combine", "update")[s] if n == 3 else f"stage{s}"
            deps = (len(events) - 1,) if s else ()
            events.append(Event(block, block, f"stage{s}", 0, 0, k, float(dur), deps))
    place(events, serial)
    return Timeline(events, serial)


def balance_passes(pass_counts, lanes: int | None = None) -> tuple[list[int], int]:
    """Greedy redistribution of reduce passes across lanes.

    Every step each lane with work left runs one of its own passes; idle lanes
    take a pass from whichever lane has the most remaining.  Returns the
    passes executed per lane and the number of steps.
    """
    rem = [int(p) for p in pass_counts]
    if lanes is not None and lanes > len(rem):
        rem += [0] * (lanes - len(rem))
    done = [0] * len(rem)
    steps = 0
    while any(rem):
        steps += 1
        idle = [q for q, r in enumerate(rem) if r == 0]
        for q, r in enumerate(rem):
            if r:
                rem[q] -= 1
                done[q] += 1
        for q in idle:
            src = max(range(len(rem)), key=lambda x: (rem[x], -x))
            if rem[src] == 0:
                break
            rem[src] -= 1
            done[q] += 1
    return done, steps


def _reduce_duration(meta: dict, factor: float) -> float:
    parts = meta["parts"]
    if meta["overlap"]:
        total = sum(max(c * factor, f) for c, f in parts)
    else:
        total = sum(c * factor + f for c, f in parts)
    return meta["fraction"] * total


def balance_workload(t: Timeline, plan: PartitionPlan | None = None) -> Timeline:
    """Rebalance reduce passes inside each group and re-place the events.

    Durations only shrink, so no event (and no makespan) moves later.
    ``plan`` is accepted for API symmetry; the per-lane pass counts travel
    with the reduce events.
    """
    events = []
    for e in t.events:
        e2 = replace(e, tallies=dict(e.tallies), meta=dict(e.meta))
        m = e2.meta
        if e2.op == "reduce" and m.get("lane_passes") and m.get("passes"):
            _, steps = balance_passes(m["lane_passes"], m.get("lanes_available"))
            factor = steps / m["passes"]
            e2.duration = min(e2.duration, _reduce_duration(m, factor))
            m["balanced_passes"] = steps
        events.append(e2)
    place(events, t.serial)
    return Timeline(events, t.serial, dict(t.memory))


def _scaled(tallies: dict[str, float], f: float) -> dict[str, float]:
    return {k: v * f for k, v in tallies.items()}


class _Builder:
    def __init__(self, g: Graph, spec: GnnModelSpec, plan: PartitionPlan, inst: ArchInstance,
                 dev: DeviceLibrary, mem: MemoryModel, opts: Optimizations,
                 state: MemoryState):
        self.g, self.spec, self.plan = g, spec, plan
        self.inst, self.dev, self.mem, self.opts, self.state = inst, dev, mem, opts, state
        self.events: list[Event] = []

    def add(self, e: Event) -> int:
        self.events.append(e)
        return len(self.events) - 1

    def memory(self, anchor: int, ns: float, lane: str = "dram") -> None:
        a = self.events[anchor]
        self.add(Event("memory", "fetch", lane, a.layer, a.group, a.chunk, ns,
                       meta={"anchor": anchor}))

    def layer_plan(self, layer: LayerSpec) -> PartitionPlan:
        if layer.sample_cap is None:
            return self.plan
        cfg = self.inst.config
        return build_partition_plan(effective_graph(self.g, layer), cfg.V, cfg.N)

    def block_sources(self, g: Graph, plan: PartitionPlan, i: int) -> dict[int, int]:
        """Distinct source vertices per input block feeding output group ``i``."""
        seen: dict[int, set[int]] = {}
        for v in plan.group_vertices(i):
            for u in g.neighbors(v).tolist():
                seen.setdefault(u // plan.n_group_size, set()).add(u)
        return {j: len(s) for j, s in seen.items()}

    def on_chip(self, l: int, F: int) -> bool:
        # outputs of the previous layer stay in the output buffer when they fit
        size = self.g.num_vertices * F * bytes_per_feature(self.inst)
        return l > 0 and size <= self.mem.capacity_bytes("output_vertices")

    def weight_fetch(self, l: int, layer: LayerSpec) -> float:
        n = layer.in_dim * layer.out_dim * layer.heads
        if layer.gat is not None:
            n += layer.heads * 2 * layer.out_dim
        return memory_fetch_time(n * bytes_per_feature(self.inst), self.mem, self.state,
                                 "weights", ("w", l))

    def conv_layer(self, l: int, layer: LayerSpec, barrier: tuple[int, ...]) -> tuple[int, ...]:
        plan = self.layer_plan(layer)
        F_in, F_out = layer.in_dim, layer.output_dim
        cfg, dev = self.inst.config, self.dev
        on_chip = self.on_chip(l, F_in)
        bn = layer.batch_norm is not None
        last = []
        for i in range(plan.num_v_groups):
            lanes = len(plan.group_vertices(i))
            agg = aggregate_latency(i, plan, F_in, self.inst, dev, self.mem, self.opts,
                                    self.state, l, on_chip)
            comb = combine_latency(F_in, F_out, self.inst, dev, self.opts, self.mem, lanes, bn)
            upd = update_latency(F_out, layer.activation, self.inst, dev, lanes)
            wns = self.weight_fetch(l, layer)
            K, R = comb.col_chunks, comb.row_chunks
            reduce_ids = []
            for k in range(K):
                meta = {"parts": agg.parts, "overlap": agg.overlap, "fraction": 1.0 / K,
                        "passes": agg.passes, "lane_passes": agg.lane_passes,
                        "lanes_available": cfg.V}
                reduce_ids.append(self.add(Event(
                    "aggregate", "reduce", "reduce", l, i, k, agg.ns / K,
                    barrier if k == 0 else (), _scaled(agg.tallies, 1.0 / K), meta)))
            self.memory(reduce_ids[0], agg.fetch_ns)
            tr_ids = {}
            for k in range(K):
                for r in range(R):
                    dur = comb.chunk_ns[k][r] + (wns if k == r == 0 else 0.0)
                    tr_ids[k, r] = self.add(Event(
                        "combine", "transform", "transform", l, i, k * R + r, dur,
                        (reduce_ids[k],), _scaled(comb.tallies, 1.0 / (R * K)), {"lanes": lanes}))
                    if k == r == 0:
                        self.memory(tr_ids[k, r], wns, "dram_weights")
            if layer.activation == "softmax":
                last.append(self.add(Event(
                    "update", "softmax", "update", l, i, 0, upd.ns,
                    tuple(tr_ids[K - 1, r] for r in range(R)), dict(upd.tallies))))
            else:
                for r in range(R):
                    last.append(self.add(Event(
                        "update", "activate", "update", l, i, r, upd.chunk_ns[r],
                        (tr_ids[K - 1, r],), _scaled(upd.tallies, 1.0 / R))))
        return tuple(last)

    def gat_layer(self, l: int, layer: LayerSpec, barrier: tuple[int, ...]) -> tuple[int, ...]:
        plan = self.layer_plan(layer)
        eg = effective_graph(self.g, layer)
        cfg, dev, inst = self.inst.config, self.dev, self.inst
        heads, F_in, F_o = layer.heads, layer.in_dim, layer.out_dim
        on_chip = self.on_chip(l, F_in)
        tp = pass_time(dev)
        last = []
        for i in range(plan.num_v_groups):
            vi = len(plan.group_vertices(i))
            degs = [int(d) for d in plan.lane_degrees[i]]
            maxdeg = int(plan.per_group_max_degree[i])
            wns = self.weight_fetch(l, layer)
            leaky_ids = []
            sources = self.block_sources(eg, plan, i)
            for n_item, part in enumerate(fetch_parts(i, plan, F_in, inst, self.mem, self.opts,
                                                      self.state, l, on_chip)):
                # only vertices that feed group i are transformed, not the whole fetched block
                if part.label.startswith("block"):
                    nv = sources[int(part.label[5:])]
                else:
                    nv = max(part.vertices, 1)
                width = min(nv, cfg.V)
                rounds = math.ceil(nv / cfg.V)
                gid = self.add(Event(
                    "aggregate", "gather", "gather", l, i, n_item,
                    part.ns + dev.dac8.latency_ns, barrier if n_item == 0 else (),
                    {"dac": nv * F_in * dev.dac8.latency_ns}))
                self.memory(gid, part.ns)
                comb = combine_latency(F_in, F_o * heads, inst, dev, self.opts, self.mem, nv)
                dur = rounds * comb.ns + (wns if n_item == 0 else 0.0)
                tid = self.add(Event("combine", "transform", "transform", l, i, n_item, dur,
                                     (gid,), comb.tallies, {"lanes": width}))
                if n_item == 0:
                    self.memory(tid, wns, "dram_weights")
                att = combine_latency(F_o, 2, inst, dev, self.opts, self.mem, nv)
                aid = self.add(Event("combine", "attention", "transform", l, i, n_item,
                                     rounds * heads * att.ns, (tid,),
                                     _scaled(att.tallies, heads), {"lanes": width}))
                lk = update_latency(2 * heads, "leaky_relu", inst, dev, nv)
                leaky_ids.append(self.add(Event("update", "activate", "update", l, i, n_item,
                                                rounds * lk.ns, (aid,), lk.tallies)))
            coeffs = sum(degs) * heads
            cycle = 1e3 / dev.softmax_clock_mhz
            sid = self.add(Event(
                "update", "softmax", "update", l, i, 0, heads * softmax_latency(maxdeg, dev),
                tuple(leaky_ids),
                {"adc": coeffs * dev.adc8.latency_ns, "softmax": coeffs * cycle,
                 "dac": coeffs * dev.dac8.latency_ns}))
            P = math.ceil(maxdeg / cfg.R_c)
            C = math.ceil(F_o / cfg.R_r)
            weigh = heads * P * C * tp
            wid = self.add(Event(
                "combine", "transform", "transform", l, i, 1, weigh, (sid,),
                {"dac": coeffs * F_o * dev.dac8.latency_ns,
                 "eo": coeffs * F_o * dev.eo_tuning.latency_ns}))
            lane_passes = [math.ceil(d / cfg.R_c) for d in degs]
            pd_passes = sum(lane_passes) * F_o * heads
            rid = self.add(Event(
                "aggregate", "reduce", "reduce", l, i, 0, weigh, (wid,),
                {"photodetector": pd_passes * dev.photodetector.latency_ns,
                 "vcsel": pd_passes * tp,
                 "eo": coeffs * F_o * dev.eo_tuning.latency_ns},
                {"parts": [(weigh, 0.0)], "overlap": True, "fraction": 1.0, "passes": P,
                 "lane_passes": lane_passes, "lanes_available": cfg.V}))
            upd = update_latency(layer.output_dim, layer.activation, inst, dev, vi)
            dur, tallies = upd.ns, dict(upd.tallies)
            if layer.batch_norm is not None and cfg.batch_norm_mrs:
                dur += dev.eo_tuning.latency_ns
                tallies["eo_bn"] = vi * layer.output_dim * dev.eo_tuning.latency_ns
            last.append(self.add(Event("update", "activate", "update", l, i, 0, dur,
                                       (rid,), tallies)))
        return tuple(last)


def build_schedule(g: Graph, spec: GnnModelSpec, plan: PartitionPlan, inst: ArchInstance,
                   dev: DeviceLibrary, mem: MemoryModel, opts: Optimizations | None = None,
                   state: MemoryState | None = None) -> Timeline:
    opts = opts or inst.config.optimizations
    state = state if state is not None else MemoryState(mem)
    b = _Builder(g, spec, plan, inst, dev, mem, opts, state)
    barrier: tuple[int, ...] = ()
    for l, layer in enumerate(spec.layers):
        if spec.family == "gat":
            barrier = b.gat_layer(l, layer, barrier)
        else:
            barrier = b.conv_layer(l, layer, barrier)
    place(b.events, serial=not opts.pp)
    t = Timeline(b.events, serial=not opts.pp, memory=state.as_dict())
    if opts.wb:
        t = balance_workload(t, plan)
    return t
