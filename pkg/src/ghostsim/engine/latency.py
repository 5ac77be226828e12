"""Per-block latency composition and device-activity tallies.

Tallies are device-time products in ns (instances x busy ns); multiplying by
a device power in mW gives pJ.  Weight-DAC activity is tallied unshared and
divided by the lane count later when DAC sharing applies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..arch import ArchInstance, DeviceLibrary, Optimizations
from ..gnn import ACTIVATIONS
from ..graphio import PartitionPlan
from .memory import MemoryModel, MemoryState, memory_fetch_time

OPTICAL_ACTIVATIONS = ("relu", "sigmoid", "tanh", "leaky_relu")


class UnsupportedActivationError(ValueError):
    pass


def pass_time(dev: DeviceLibrary) -> float:
    """One optical pass: DAC conversion, EO tuning, photodetection in series."""
    return dev.dac8.latency_ns + dev.eo_tuning.latency_ns + dev.photodetector.latency_ns


def bytes_per_feature(inst: ArchInstance) -> float:
    return inst.config.precision_bits / 8.0


@dataclass
class FetchPart:
    label: str
    vertices: int
    ns: float


@dataclass
class AggregateCost:
    ns: float
    compute_ns: float
    fetch_ns: float
    passes: int
    chunks: int
    parts: list[tuple[float, float]]
    overlap: bool
    lane_passes: list[int]
    tallies: dict[str, float] = field(default_factory=dict)


def fetch_parts(i: int, plan: PartitionPlan, F: int, inst: ArchInstance, mem: MemoryModel,
                opts: Optimizations, state: MemoryState | None = None, layer: int = 0,
                on_chip: bool = False) -> list[FetchPart]:
    """Data movement feeding output group ``i``.

    With block partitioning the group's own features and each nonzero input
    block (features plus its edge block) arrive as one batched request and
    stay resident while they fit.  Without it every neighbor is requested on
    its own and every input block's edge list is scanned, empty or not.
    """
    bpf = bytes_per_feature(inst)
    row = F * bpf
    eb = mem.edge_index_bytes
    vi = len(plan.group_vertices(i))
    counts = dict(zip(plan.nonzero_blocks[i], plan.block_edge_counts[i]))
    if opts.bp:
        parts = [FetchPart("self", vi, memory_fetch_time(vi * row, mem, state, "input_vertices",
                                                         ("h", layer, i), on_chip))]
        for j, edges in counts.items():
            nj = plan.input_group_size(j)
            t = memory_fetch_time(nj * row, mem, state, "input_vertices", ("h", layer, j), on_chip)
            t += memory_fetch_time(edges * eb, mem, state, "edges", ("e", i, j))
            parts.append(FetchPart(f"block{j}", nj, t))
        return parts
    t = 0.0
    for _ in range(vi):
        t += memory_fetch_time(row, mem, state, on_chip=on_chip)
    for _ in range(plan.group_edge_count(i)):
        t += memory_fetch_time(row, mem, state, on_chip=on_chip)
    for j in range(plan.num_n_groups):
        t += memory_fetch_time(counts.get(j, 0) * eb, mem, state)
    return [FetchPart("sequential", vi + plan.group_edge_count(i), t)]


def aggregate_latency(i: int, plan: PartitionPlan, F: int, inst: ArchInstance, dev: DeviceLibrary,
                      mem: MemoryModel, opts: Optimizations, state: MemoryState | None = None,
                      layer: int = 0, on_chip: bool = False) -> AggregateCost:
    if not 0 <= i < plan.num_v_groups:
        raise IndexError(f"group {i} out of range [0, {plan.num_v_groups})")
    cfg = inst.config
    degs = [int(d) for d in plan.lane_degrees[i]]
    lane_passes = [math.ceil(d / cfg.R_c) for d in degs]
    P = math.ceil(int(plan.per_group_max_degree[i]) / cfg.R_c)
    C = math.ceil(F / cfg.R_r)
    tp = pass_time(dev)
    compute = P * C * tp
    fparts = fetch_parts(i, plan, F, inst, mem, opts, state, layer, on_chip)
    fetch = sum(p.ns for p in fparts)
    if opts.bp:
        share = compute / len(fparts)
        parts = [(share, p.ns) for p in fparts]
        ns = sum(max(c, f) for c, f in parts)
    else:
        parts = [(compute, fetch)]
        ns = compute + fetch
    # every neighbor (and self) feature value is converted and imprinted once;
    # each lane pass ends at one photodetector per feature
    conversions = sum(degs) * F
    lane_pass_total = sum(lane_passes) * F
    tallies = {
        "dac": conversions * dev.dac8.latency_ns,
        "eo": conversions * dev.eo_tuning.latency_ns,
        "photodetector": lane_pass_total * dev.photodetector.latency_ns,
        "vcsel": lane_pass_total * tp,
        # the aggregated vector is digitised and buffered alongside the optical hand-off
        "adc": len(degs) * F * dev.adc8.latency_ns,
    }
    return AggregateCost(ns, compute, fetch, P, C, parts, opts.bp, lane_passes, tallies)


@dataclass
class CombineCost:
    ns: float
    row_chunks: int
    col_chunks: int
    chunk_ns: list[list[float]]  # [k][r], k-major issue order
    tallies: dict[str, float] = field(default_factory=dict)


def combine_latency(F_in: int, F_out: int, inst: ArchInstance, dev: DeviceLibrary,
                    opts: Optimizations | None = None, mem: MemoryModel | None = None,
                    lanes: int | None = None, batch_norm: bool = False) -> CombineCost:
    """Weight-stationary transform of ``lanes`` vertices in parallel."""
    if F_in < 1 or F_out < 1:
        raise ValueError("combine dims must be >= 1")
    cfg = inst.config
    lanes = cfg.V if lanes is None else lanes
    buf_ns = (mem or MemoryModel()).buffer_latency_ns
    R = math.ceil(F_out / cfg.T_r)
    K = math.ceil(F_in / cfg.R_r)
    tp = pass_time(dev)
    bn = batch_norm and cfg.batch_norm_mrs
    chunks = []
    for k in range(K):
        row = []
        for r in range(R):
            t = tp
            if not (k == K - 1 and r == R - 1):
                t += dev.adc8.latency_ns + buf_ns   # partial result leaves the optical path
            if bn and k == K - 1:
                t += dev.eo_tuning.latency_ns
            row.append(t)
        chunks.append(row)
    ns = sum(sum(r) for r in chunks)
    macs = lanes * F_in * F_out
    tallies = {
        "dac_weight": F_in * F_out * dev.dac8.latency_ns * lanes,
        "eo": macs * dev.eo_tuning.latency_ns,
        "photodetector": 2 * lanes * F_out * K * dev.photodetector.latency_ns,
        "vcsel": lanes * F_in * R * tp,
    }
    if R * K > 1:
        tallies["adc"] = lanes * F_out * K * dev.adc8.latency_ns
    if bn:
        tallies["eo_bn"] = lanes * F_out * dev.eo_tuning.latency_ns
    return CombineCost(ns, R, K, chunks, tallies)


@dataclass
class UpdateCost:
    ns: float
    chunk_ns: list[float]
    tallies: dict[str, float] = field(default_factory=dict)


def update_latency(F_out: int, activation: str, inst: ArchInstance, dev: DeviceLibrary,
                   lanes: int | None = None) -> UpdateCost:
    if F_out < 1:
        raise ValueError("F_out must be >= 1")
    if activation not in ACTIVATIONS:
        raise UnsupportedActivationError(f"unsupported activation {activation!r}")
    cfg = inst.config
    lanes = cfg.V if lanes is None else lanes
    R = math.ceil(F_out / cfg.T_r)
    if activation == "none":
        return UpdateCost(0.0, [0.0] * R, {})
    if activation in OPTICAL_ACTIVATIONS:
        per = dev.vcsel.latency_ns + dev.soa.latency_ns
        tallies = {"vcsel": lanes * F_out * dev.vcsel.latency_ns,
                   "soa": lanes * F_out * dev.soa.latency_ns}
        return UpdateCost(R * per, [per] * R, tallies)
    if activation != "softmax":  # pragma: no cover - ACTIVATIONS is closed
        raise UnsupportedActivationError(activation)
    cycle = 1e3 / dev.softmax_clock_mhz
    ns = R * dev.adc8.latency_ns + F_out * cycle + dev.dac8.latency_ns
    tallies = {"adc": lanes * F_out * dev.adc8.latency_ns,
               "softmax": lanes * F_out * cycle,
               "dac": lanes * F_out * dev.dac8.latency_ns}
    return UpdateCost(ns, [ns], tallies)


def softmax_latency(length: int, dev: DeviceLibrary, row_chunks: int = 1) -> float:
    cycle = 1e3 / dev.softmax_clock_mhz
    return row_chunks * dev.adc8.latency_ns + length * cycle + dev.dac8.latency_ns
