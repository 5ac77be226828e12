"""End-to-end run: partition, schedule, energy, metrics and a self-describing report."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

from ..arch import (DEFAULT_LIMITS, ArchConfig, ArchValidationError, DeviceLibrary, Optimizations,
                    ValidationIssue, instantiate, validate)
from ..gnn import ACTIVATIONS, GnnModelSpec, effective_graph
from ..graphio import Graph, build_partition_plan
from .energy import energy
from .memory import MemoryModel, MemoryState
from .schedule import Timeline, build_schedule

CSV_FIELDS = ("N", "V", "R_r", "R_c", "T_r", "precision_bits", "optimizations", "latency_ns",
              "energy_j", "ops", "bits_processed", "gops", "epb", "epb_per_gops",
              "latency_aggregate_ns", "latency_combine_ns", "latency_update_ns")


class SimulationError(ValueError):
    """Every problem found before a run, reported together."""

    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__("; ".join(f"{i.code}: {i.message}" for i in issues))

    def to_dict(self) -> dict:
        return {"ok": False, "errors": [{"code": i.code, "message": i.message} for i in self.issues]}


def op_count(spec: GnnModelSpec, g: Graph) -> int:
    """Arithmetic operations for one inference; a MAC counts as two."""
    total = 0
    for layer in spec.layers:
        eg = effective_graph(g, layer)
        n, m = eg.num_vertices, eg.num_edges
        F, Fo, out = layer.in_dim, layer.out_dim, layer.output_dim
        if spec.family == "gat":
            h = layer.heads
            pairs = (m + n) * h
            total += 2 * n * F * Fo * h          # W z
            total += 2 * n * 2 * Fo * h          # both halves of a . [z_v || z_u]
            total += 2 * pairs                   # pairwise add + leaky relu
            total += 3 * pairs                   # softmax: exp, sum, divide
            total += 2 * pairs * Fo              # attention-weighted sum
            if not layer.gat.concat:
                total += n * Fo * h
        else:
            total += m * F
            if layer.reduce_op == "mean":
                total += n * F
            if spec.family == "gin" and layer.gin_epsilon is not None:
                total += n * F
            if layer.normalize:
                total += (m + n) * F
            total += 2 * n * F * Fo
        if layer.batch_norm is not None:
            total += 2 * n * out
        if layer.activation != "none":
            total += n * out
    return total


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class SimReport:
    """Run metrics.  ``gops``, ``epb`` and ``epb_per_gops`` are exact rationals of the
    float latency, energy and integer counts, so ``gops * latency_total_ns == ops``
    and ``epb * bits_processed == energy_total_j`` hold without rounding; files
    carry the nearest doubles.
    """
    latency_total_ns: float
    latency_by_block: dict
    energy_total_j: float
    energy_by_device_class: dict
    ops: int
    bits_processed: int
    gops: Fraction
    epb: Fraction
    epb_per_gops: Fraction
    config: dict
    warnings: tuple[str, ...] = ()
    digest: str = field(default="")

    def body(self) -> dict:
        return {
            "latency_total_ns": self.latency_total_ns,
            "latency_by_block": self.latency_by_block,
            "energy_total_j": self.energy_total_j,
            "energy_by_device_class": self.energy_by_device_class,
            "ops": self.ops,
            "bits_processed": self.bits_processed,
            "gops": float(self.gops),
            "epb": float(self.epb),
            "epb_per_gops": float(self.epb_per_gops),
            "config": self.config,
            "warnings": list(self.warnings),
        }

    def to_dict(self) -> dict:
        doc = self.body()
        doc["hash"] = self.digest
        return doc

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent, allow_nan=False) + "\n"

    def csv_row(self) -> dict:
        arch = self.config["arch"]
        return {
            "N": arch["N"], "V": arch["V"], "R_r": arch["R_r"], "R_c": arch["R_c"],
            "T_r": arch["T_r"], "precision_bits": arch["precision_bits"],
            "optimizations": self.config["optimizations"],
            "latency_ns": self.latency_total_ns, "energy_j": self.energy_total_j,
            "ops": self.ops, "bits_processed": self.bits_processed, "gops": float(self.gops),
            "epb": float(self.epb), "epb_per_gops": float(self.epb_per_gops),
            "latency_aggregate_ns": self.latency_by_block["aggregate"],
            "latency_combine_ns": self.latency_by_block["combine"],
            "latency_update_ns": self.latency_by_block["update"],
        }


def write_reports_csv(reports, out) -> None:
    w = csv.DictWriter(out, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.csv_row().items()})


def report_csv(report: SimReport) -> str:
    buf = io.StringIO()
    write_reports_csv([report], buf)
    return buf.getvalue()


def _finish(latency: float, blocks: dict, e_total: float, e_split: dict, ops: int, bits: int,
            config: dict, warnings: list[str]) -> SimReport:
    # ops per ns == 1e9 ops per s
    gops = Fraction(ops) / Fraction(latency) if latency > 0 else Fraction(0)
    if bits > 0:
        epb = Fraction(e_total) / bits
    else:
        epb = Fraction(0)
        warnings.append("no DRAM traffic; epb reported as 0")
    epb_per_gops = epb / gops if gops > 0 else Fraction(0)
    rep = SimReport(latency, blocks, e_total, e_split, ops, bits, gops, epb, epb_per_gops,
                    config, tuple(warnings))
    digest = hashlib.sha256(_canonical(rep.body()).encode()).hexdigest()
    return replace(rep, digest=digest)


def _model_summary(spec: GnnModelSpec) -> dict:
    return {"family": spec.family, "readout": spec.readout,
            "layers": [{"in_dim": l.in_dim, "out_dim": l.out_dim, "heads": l.heads,
                        "reduce_op": l.reduce_op, "activation": l.activation,
                        "batch_norm": l.batch_norm is not None, "sample_cap": l.sample_cap}
                       for l in spec.layers]}


def _graph_summary(g: Graph) -> dict:
    return {"num_vertices": g.num_vertices, "num_edges": g.num_edges,
            "sha256": hashlib.sha256(g.to_bytes()).hexdigest()}


def preflight(g: Graph, spec: GnnModelSpec, cfg: ArchConfig, dev: DeviceLibrary,
              limits=DEFAULT_LIMITS) -> list[ValidationIssue]:
    issues = list(validate(cfg, dev, limits))
    if g.num_vertices == 0:
        issues.append(ValidationIssue("empty-graph", "graph has no vertices"))
    if g.feature_dim and spec.layers[0].in_dim != g.feature_dim:
        issues.append(ValidationIssue(
            "feature-dim-mismatch",
            f"model expects {spec.layers[0].in_dim} input features, graph has {g.feature_dim}"))
    for k, layer in enumerate(spec.layers):
        if layer.activation not in ACTIVATIONS:
            issues.append(ValidationIssue("unsupported-activation",
                                          f"layer {k}: {layer.activation!r}"))
    return issues


def run_timeline(g: Graph, spec: GnnModelSpec, cfg: ArchConfig, dev: DeviceLibrary | None = None,
                 mem: MemoryModel | None = None, opts: Optimizations | None = None,
                 limits=DEFAULT_LIMITS):
    """Instantiate and schedule without computing metrics; returns (timeline, instance)."""
    dev = dev or DeviceLibrary()
    mem = mem or MemoryModel()
    if opts is not None:
        cfg = replace(cfg, optimizations=opts)
    issues = preflight(g, spec, cfg, dev, limits)
    if issues:
        raise SimulationError(issues)
    try:
        inst = instantiate(cfg, dev, limits)
    except ArchValidationError as exc:  # pragma: no cover - preflight already validated
        raise SimulationError(exc.issues) from exc
    plan = build_partition_plan(g, cfg.V, cfg.N)
    t = build_schedule(g, spec, plan, inst, dev, mem, cfg.optimizations, MemoryState(mem))
    return t, inst


def simulate(g: Graph, spec: GnnModelSpec, cfg: ArchConfig, dev: DeviceLibrary | None = None,
             mem: MemoryModel | None = None, opts: Optimizations | None = None,
             limits=DEFAULT_LIMITS) -> SimReport:
    dev = dev or DeviceLibrary()
    mem = mem or MemoryModel()
    t, inst = run_timeline(g, spec, cfg, dev, mem, opts, limits)
    return _report([(g, t)], spec, inst, dev, mem)


def _report(runs: list[tuple[Graph, Timeline]], spec: GnnModelSpec, inst, dev, mem) -> SimReport:
    cfg = inst.config
    latency, blocks, e_parts, split, ops, nbytes = 0.0, None, [], {}, 0, 0.0
    warnings = []
    for g, t in runs:
        latency += t.makespan
        busy = t.busy_by_block()
        blocks = {k: (blocks or {}).get(k, 0.0) + busy[k] for k in ("aggregate", "combine", "update")}
        e, br = energy(t, inst, dev, mem)
        e_parts.append(e)
        for k, v in br.items():
            split.setdefault(k, []).append(v)
        ops += op_count(spec, g)
        nbytes += t.memory.get("dram_bytes", 0.0)
        if t.makespan > 0:
            demand = t.memory.get("dram_bytes", 0.0) / t.makespan
            if demand > mem.bandwidth_warning_gbps:
                warnings.append(f"average DRAM demand {demand:.1f} GB/s exceeds "
                                f"{mem.bandwidth_warning_gbps} GB/s")
    e_split = {k: math.fsum(v) for k, v in split.items()}
    e_total = math.fsum(e_split.values())
    config = {
        "arch": {k: v for k, v in cfg.to_dict().items() if k != "optimizations"},
        "optimizations": cfg.optimizations.label(),
        "optimization_flags": asdict(cfg.optimizations),
        "effective_dac_sharing": cfg.optimizations.effective_dac_sharing,
        "device": dev.to_dict(),
        "memory": mem.to_dict(),
        "model": _model_summary(spec),
        "graphs": [_graph_summary(g) for g, _ in runs],
        "laser_dbm": inst.laser_dbm,
    }
    return _finish(latency, blocks, e_total, e_split, ops, int(round(nbytes * 8)), config, warnings)


def simulate_batch(graphs, spec: GnnModelSpec, cfg: ArchConfig, dev: DeviceLibrary | None = None,
                   mem: MemoryModel | None = None, opts: Optimizations | None = None,
                   limits=DEFAULT_LIMITS) -> SimReport:
    """Several small graphs (graph-level tasks): pipelined within a graph, serial across graphs."""
    dev = dev or DeviceLibrary()
    mem = mem or MemoryModel()
    runs, inst = [], None
    for g in graphs:
        t, inst = run_timeline(g, spec, cfg, dev, mem, opts, limits)
        runs.append((g, t))
    if not runs:
        raise SimulationError([ValidationIssue("empty-batch", "no graphs given")])
    return _report(runs, spec, inst, dev, mem)
