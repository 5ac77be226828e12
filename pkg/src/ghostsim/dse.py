"""Design-space drivers: device feasibility sweeps, architecture grid search, ablation."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TextIO

from .arch import DEFAULT_LIMITS, ArchConfig, DeviceLibrary, Optimizations, validate
from .engine import MemoryModel, simulate
from .photonics import (DEFAULT_SNR_REQUIREMENT_DB, CrosstalkModel, MrDesign, coherent_snr_db,
                        max_coherent_mrs, max_noncoherent_mrs, noncoherent_snr_db)
from .workloads import Workload, get_workload

SWEEP_KINDS = ("device_coherent", "device_noncoherent", "arch", "ablation")
OBJECTIVES = ("epb_per_gops", "epb", "gops")

DEFAULT_GRID = {
    "N": list(range(4, 33, 4)),
    "V": list(range(4, 33, 4)),
    "R_r": list(range(2, 19, 2)),
    "R_c": list(range(3, 21)),
    "T_r": list(range(3, 18)),
}

ABLATION_SETS = (
    ("baseline", Optimizations(bp=False, pp=False, dac_sharing=False, wb=False)),
    ("BP", Optimizations(bp=True, pp=False, dac_sharing=False, wb=False)),
    ("PP", Optimizations(bp=False, pp=True, dac_sharing=False, wb=False)),
    ("BP+PP", Optimizations(bp=True, pp=True, dac_sharing=False, wb=False)),
    ("BP+DAC", Optimizations(bp=True, pp=False, dac_sharing=True, wb=False)),
    ("PP+DAC", Optimizations(bp=False, pp=True, dac_sharing=True, wb=False)),
    ("BP+PP+DAC", Optimizations(bp=True, pp=True, dac_sharing=True, wb=False)),
    ("BP+PP+WB", Optimizations(bp=True, pp=True, dac_sharing=False, wb=True)),
)


class SweepSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    ranges: dict = field(default_factory=dict)
    workloads: tuple[str, ...] = ()
    snr_requirement: float = DEFAULT_SNR_REQUIREMENT_DB
    objective: str = "epb_per_gops"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise SweepSpecError(f"unknown sweep kind {self.kind!r}")
        if self.objective not in OBJECTIVES:
            raise SweepSpecError(f"unknown objective {self.objective!r}")
        for axis, vals in self.ranges.items():
            if len(vals) == 0:
                raise SweepSpecError(f"range {axis!r} is empty")
        if self.kind == "arch" and not self.workloads:
            raise SweepSpecError("architecture sweeps need at least one workload")

    @classmethod
    def from_dict(cls, doc: dict) -> SweepSpec:
        return cls(doc["kind"], {k: list(v) for k, v in doc.get("ranges", {}).items()},
                   tuple(doc.get("workloads", ())),
                   float(doc.get("snr_requirement", DEFAULT_SNR_REQUIREMENT_DB)),
                   doc.get("objective", "epb_per_gops"), int(doc.get("seed", 0)))


# --- device level -----------------------------------------------------------

@dataclass
class DeviceSweepResult:
    kind: str
    rows: list[dict]
    summary: list[dict]

    def write_csv(self, out: TextIO) -> None:
        fields = list(self.rows[0]) if self.rows else ["lambda_nm"]
        w = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)

    def summary_json(self) -> str:
        return json.dumps({"kind": self.kind, "summary": self.summary}, indent=2,
                          sort_keys=True) + "\n"


def _snr_cell(x: float) -> float | str:
    return "inf" if math.isinf(x) else round(x, 6)


def sweep_device(spec: SweepSpec, design: MrDesign, model: CrosstalkModel) -> DeviceSweepResult:
    req = spec.snr_requirement
    rows, summary = [], []
    if spec.kind == "device_coherent":
        lambdas = spec.ranges.get("lambda_nm", [1520.0])
        ns = spec.ranges.get("n", list(range(1, 41)))
        for lam in lambdas:
            for n in ns:
                s = coherent_snr_db(int(n), model)
                rows.append({"lambda_nm": lam, "n": int(n), "snr_db": _snr_cell(s),
                             "pass": s >= req})
            lim = max_coherent_mrs(lam, design, model, req)
            summary.append({"lambda_nm": lam, "max_n": lim.count, "saturated": lim.saturated})
    elif spec.kind == "device_noncoherent":
        lambdas = spec.ranges.get("lambda_nm", [1550.0])
        spacings = spec.ranges.get("spacing_nm", [1.0])
        ws = spec.ranges.get("w", list(range(1, 31)))
        for lam, sp in itertools.product(lambdas, spacings):
            for w in ws:
                s = noncoherent_snr_db(lam, sp, int(w), design, model)
                rows.append({"lambda_nm": lam, "spacing_nm": sp, "w": int(w),
                             "mr_count": 2 * int(w), "snr_db": _snr_cell(s), "pass": s >= req})
            lim = max_noncoherent_mrs(lam, sp, design, model, req)
            summary.append({"lambda_nm": lam, "spacing_nm": sp, "max_wavelengths":
                            lim.wavelength_count, "max_mrs": lim.mr_count,
                            "saturated": lim.saturated})
    else:
        raise SweepSpecError(f"sweep_device cannot run kind {spec.kind!r}")
    return DeviceSweepResult(spec.kind, rows, summary)


# --- architecture level -----------------------------------------------------

@dataclass(frozen=True)
class RankedConfig:
    vector: tuple[int, ...]
    objective: float
    per_workload: tuple[float, ...]


@dataclass
class ArchSweepResult:
    objective: str
    ranked: list[RankedConfig]
    infeasible: list[dict]
    workloads: tuple[str, ...]

    @property
    def best(self) -> RankedConfig | None:
        return self.ranked[0] if self.ranked else None

    def ties(self) -> list[tuple[int, ...]]:
        if not self.ranked:
            return []
        top = self.ranked[0].objective
        return [r.vector for r in self.ranked if r.objective == top]

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["rank", "N", "V", "R_r", "R_c", "T_r", "objective", "feasible", "errors"])
        for k, r in enumerate(self.ranked, 1):
            w.writerow([k, *r.vector, repr(r.objective), True, ""])
        for bad in self.infeasible:
            w.writerow(["", *bad["vector"], "", False, ";".join(bad["errors"])])

    def summary_json(self) -> str:
        doc = {
            "objective": self.objective,
            "workloads": list(self.workloads),
            "argmin": list(self.best.vector) if self.best else None,
            "argmin_objective": self.best.objective if self.best else None,
            "ties": [list(v) for v in self.ties()],
            "num_ranked": len(self.ranked),
            "num_infeasible": len(self.infeasible),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def grid_vectors(ranges: dict | None = None) -> list[tuple[int, int, int, int, int]]:
    g = dict(DEFAULT_GRID)
    g.update(ranges or {})
    return [tuple(int(x) for x in v) for v in
            itertools.product(g["N"], g["V"], g["R_r"], g["R_c"], g["T_r"])]


def _objective_value(report, objective: str) -> float:
    if objective == "gops":
        # higher throughput is better; negate so every objective sorts ascending
        return -float(report.gops)
    return float(getattr(report, objective))


def _evaluate(args) -> tuple[tuple[int, ...], list[float]]:
    vec, workload_names, seed, objective, cfg_kw, dev, mem = args
    cfg = ArchConfig.from_vector(vec, **cfg_kw)
    vals = []
    for name in workload_names:
        wl = get_workload(name, seed)
        vals.append(_objective_value(simulate(wl.graph, wl.model, cfg, dev, mem), objective))
    return vec, vals


def sweep_arch(spec: SweepSpec, dev: DeviceLibrary | None = None, mem: MemoryModel | None = None,
               threads: int = 1, limits=DEFAULT_LIMITS, base: ArchConfig | None = None
               ) -> ArchSweepResult:
    """Exhaustive grid search ranked by the mean objective across workloads."""
    if spec.kind != "arch":
        raise SweepSpecError(f"sweep_arch cannot run kind {spec.kind!r}")
    dev = dev or DeviceLibrary()
    mem = mem or MemoryModel()
    base = base or ArchConfig()
    cfg_kw = {"precision_bits": base.precision_bits, "optimizations": base.optimizations,
              "batch_norm_mrs": base.batch_norm_mrs}
    feasible, infeasible = [], []
    for vec in sorted(set(grid_vectors(spec.ranges))):
        issues = validate(ArchConfig.from_vector(vec, **cfg_kw), dev, limits)
        if issues:
            infeasible.append({"vector": list(vec), "errors": [i.code for i in issues]})
        else:
            feasible.append(vec)
    names = tuple(spec.workloads)
    jobs = [(vec, names, spec.seed, spec.objective, cfg_kw, dev, mem) for vec in feasible]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_evaluate(j) for j in jobs]
    ranked = [RankedConfig(vec, math.fsum(vals) / len(vals), tuple(vals)) for vec, vals in results]
    ranked.sort(key=lambda r: (r.objective, r.vector))
    return ArchSweepResult(spec.objective, ranked, infeasible, names)


# --- ablation ---------------------------------------------------------------

@dataclass
class AblationResult:
    labels: tuple[str, ...]
    workloads: tuple[str, ...]
    energy_j: dict[str, dict[str, float]]      # workload -> label -> J
    normalized: dict[str, dict[str, float]]    # workload -> label -> fraction of baseline

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["workload", *self.labels])
        for name in self.workloads:
            w.writerow([name, *(repr(self.normalized[name][l]) for l in self.labels)])

    def summary_json(self) -> str:
        mean = {l: math.fsum(self.normalized[w][l] for w in self.workloads) / len(self.workloads)
                for l in self.labels}
        best = {w: min(self.labels, key=lambda l: (self.normalized[w][l], l))
                for w in self.workloads}
        doc = {"normalized": self.normalized, "mean_normalized": mean, "best": best,
               "energy_j": self.energy_j}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def ablate(workloads: list[Workload], dev: DeviceLibrary | None = None,
           mem: MemoryModel | None = None, cfg: ArchConfig | None = None,
           limits=DEFAULT_LIMITS) -> AblationResult:
    """Energy under each optimization set, normalized to all-off."""
    cfg = cfg or ArchConfig()
    labels = tuple(l for l, _ in ABLATION_SETS)
    energy_j, normalized = {}, {}
    for wl in workloads:
        row = {}
        for label, opts in ABLATION_SETS:
            rep = simulate(wl.graph, wl.model, replace(cfg, optimizations=opts), dev, mem,
                           limits=limits)
            row[label] = rep.energy_total_j
        base = row["baseline"]
        energy_j[wl.name] = row
        normalized[wl.name] = {l: row[l] / base for l in labels}
    return AblationResult(labels, tuple(wl.name for wl in workloads), energy_j, normalized)
