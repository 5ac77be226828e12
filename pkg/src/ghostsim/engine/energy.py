"""Energy composition from timeline tallies, static laser/TO power and memory traffic."""
from __future__ import annotations

import math

from ..arch import ArchInstance, DeviceLibrary
from ..photonics import dbm_to_watts
from .memory import MemoryModel
from .schedule import Timeline

ENERGY_CLASSES = ("dac", "adc", "eo_tuning", "to_tuning", "photodetector", "vcsel", "soa",
                  "softmax", "laser", "dram", "buffer")

PJ = 1e-12


def energy(t: Timeline, inst: ArchInstance, dev: DeviceLibrary, mem: MemoryModel,
           sharing: bool | None = None) -> tuple[float, dict[str, float]]:
    """Total joules and the per-device-class split (which sums to the total)."""
    if sharing is None:
        sharing = inst.config.optimizations.effective_dac_sharing
    acc = {c: [] for c in ENERGY_CLASSES}
    power = {
        "dac": dev.dac8.power_mw, "adc": dev.adc8.power_mw,
        "eo": dev.eo_power_per_mr_mw, "eo_bn": dev.eo_power_per_mr_mw,
        "photodetector": dev.photodetector.power_mw, "vcsel": dev.vcsel.power_mw,
        "soa": dev.soa.power_mw, "softmax": dev.softmax_power_mw,
    }
    cls_of = {"eo": "eo_tuning", "eo_bn": "eo_tuning", "dac_weight": "dac"}
    for e in t.events:
        for key, dev_ns in e.tallies.items():
            if key == "dac_weight":
                # one shared DAC drives the same weight into every active lane
                div = max(int(e.meta.get("lanes", 1)), 1) if sharing else 1
                acc["dac"].append(dev_ns / div * dev.dac8.power_mw * PJ)
            else:
                acc[cls_of.get(key, key)].append(dev_ns * power[key] * PJ)
    makespan_s = t.makespan * 1e-9
    cfg = inst.config
    if t.events:
        sources = cfg.V * cfg.R_r
        laser_w = dbm_to_watts(inst.laser_dbm) / dev.laser_wallplug_efficiency
        acc["laser"].append(sources * laser_w * makespan_s)
        acc["to_tuning"].append(dev.to_tuning.power_mw * 1e-3 * dev.to_fraction
                                * inst.total_mrs * makespan_s)
    m = t.memory
    acc["dram"].append((m.get("dram_bytes", 0.0) * mem.dram_energy_pj_per_byte
                        + m.get("dram_accesses", 0) * mem.dram_access_energy_pj) * PJ)
    acc["buffer"].append((m.get("buffer_bytes", 0.0) * mem.buffer_energy_pj_per_byte
                          + m.get("buffer_accesses", 0) * mem.buffer_access_energy_pj) * PJ)
    breakdown = {c: math.fsum(v) for c, v in acc.items()}
    return math.fsum(breakdown.values()), breakdown
