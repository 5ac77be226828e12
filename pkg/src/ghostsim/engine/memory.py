"""Parametric DRAM + on-chip buffer model (stands in for cycle-accurate DRAM/CACTI tools)."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class MemoryModel:
    dram_bandwidth_gbps: float = 256.0
    dram_latency_ns: float = 45.0
    input_vertices_kb: float = 128.0
    output_vertices_kb: float = 128.0
    edges_kb: float = 256.0
    weights_kb: float = 128.0
    buffer_latency_ns: float = 0.8
    dram_energy_pj_per_byte: float = 31.2      # ~3.9 pJ/bit HBM2
    dram_access_energy_pj: float = 15.0
    buffer_energy_pj_per_byte: float = 0.5
    buffer_access_energy_pj: float = 2.0
    edge_index_bytes: int = 4
    bandwidth_warning_gbps: float = 256.0

    def __post_init__(self):
        if not self.dram_bandwidth_gbps > 0:
            raise ValueError("DRAM bandwidth must be positive")
        if self.dram_latency_ns < 0 or self.buffer_latency_ns < 0:
            raise ValueError("latencies must be non-negative")

    def capacity_bytes(self, buffer: str) -> float:
        return getattr(self, f"{buffer}_kb") * 1024.0

    @classmethod
    def from_dict(cls, doc: dict) -> MemoryModel:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown memory model keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


BUFFERS = ("input_vertices", "output_vertices", "edges", "weights")


class MemoryState:
    """LRU residency per buffer plus traffic counters for one simulation run."""

    def __init__(self, mem: MemoryModel):
        self.mem = mem
        self._resident = {b: OrderedDict() for b in BUFFERS}
        self._used = {b: 0.0 for b in BUFFERS}
        self.dram_bytes = 0.0
        self.dram_accesses = 0
        self.buffer_bytes = 0.0
        self.buffer_accesses = 0

    def is_resident(self, buffer: str, key) -> bool:
        slots = self._resident[buffer]
        if key in slots:
            slots.move_to_end(key)
            return True
        return False

    def insert(self, buffer: str, key, nbytes: float) -> None:
        cap = self.mem.capacity_bytes(buffer)
        if nbytes > cap:
            return
        slots = self._resident[buffer]
        while self._used[buffer] + nbytes > cap and slots:
            _, freed = slots.popitem(last=False)
            self._used[buffer] -= freed
        slots[key] = nbytes
        self._used[buffer] += nbytes

    def as_dict(self) -> dict:
        return {"dram_bytes": self.dram_bytes, "dram_accesses": self.dram_accesses,
                "buffer_bytes": self.buffer_bytes, "buffer_accesses": self.buffer_accesses}


def memory_fetch_time(nbytes: float, mem: MemoryModel, state: MemoryState | None = None,
                      buffer: str | None = None, key=None, on_chip: bool = False) -> float:
    """Nanoseconds to bring ``nbytes`` to the compute blocks.

    A resident block (or data already produced on chip) costs one buffer access;
    otherwise a DRAM access plus transfer at the configured bandwidth
    (GB/s equals bytes/ns).
    """
    if nbytes < 0:
        raise ValueError("nbytes must be non-negative")
    hit = on_chip or (state is not None and buffer is not None and key is not None
                      and state.is_resident(buffer, key))
    if hit:
        if state is not None:
            state.buffer_bytes += nbytes
            state.buffer_accesses += 1
        return mem.buffer_latency_ns
    if state is not None:
        state.dram_bytes += nbytes
        state.dram_accesses += 1
        if buffer is not None and key is not None:
            state.insert(buffer, key, nbytes)
    return mem.dram_latency_ns + nbytes / mem.dram_bandwidth_gbps
