"""Batch command-line front end.

Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 internal error.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .arch import (DEFAULT_LIMITS, ArchConfig, ArchValidationError, DeviceLibrary,
                   ValidationIssue, required_laser_dbm, validate)
from .dse import SweepSpec, SweepSpecError, ablate, sweep_arch, sweep_device
from .engine import MemoryModel, SimulationError, report_csv, simulate
from .gnn import ModelSpecError, model_from_dict
from .graphio import (GRAPH_KINDS, GraphFormatError, GraphValidationError, generate_graph,
                      load_edge_list, write_edge_list, write_features)
from .photonics import PhotonicsDomainError, load_calibration
from .workloads import GRAPHS, bundled_workloads, get_workload, toy_graph, toy_model

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("ghostsim")


class CliValidationError(Exception):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__("; ".join(f"{i.code}: {i.message}" for i in issues))


class CliIOError(Exception):
    pass


@dataclass
class RunConfig:
    doc: dict = field(default_factory=dict)
    base: Path = Path(".")
    out: Path = Path(".")
    seed: int = 0
    threads: int = 1
    quiet: bool = False

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base / p


def config_schema() -> dict:
    return json.loads(resources.files("ghostsim").joinpath("data/config.schema.json").read_text())


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliValidationError([ValidationIssue("bad-json", f"{path}: {exc}")]) from exc


def load_run_config(args) -> RunConfig:
    doc, base = {}, Path(".")
    if args.config:
        path = Path(args.config)
        doc = _read_json(path)
        base = path.parent
        try:
            jsonschema.validate(doc, config_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise CliValidationError([ValidationIssue("schema", f"{path} at {where}: {exc.message}")])
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliIOError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return RunConfig(doc, base, out, args.seed, args.threads, args.quiet)


# --- config pieces ------------------------------------------------------------

def _arch(rc: RunConfig, args) -> ArchConfig:
    doc = dict(rc.doc.get("arch", {}))
    if getattr(args, "arch", None):
        doc["vector"] = [int(x) for x in args.arch.split(",")]
    if getattr(args, "bits", None) is not None:
        doc["precision_bits"] = args.bits
    if getattr(args, "opts", None) is not None:
        doc["optimizations"] = [x for x in args.opts.split(",") if x]
    try:
        return ArchConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise CliValidationError([ValidationIssue("bad-arch", str(exc))]) from exc


def _section(rc: RunConfig, key: str):
    val = rc.doc.get(key)
    if isinstance(val, str):
        return _read_json(rc.path(val))
    return val


def _device(rc: RunConfig) -> DeviceLibrary:
    doc = _section(rc, "device")
    try:
        return DeviceLibrary() if doc is None else DeviceLibrary.from_dict(doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise CliValidationError([ValidationIssue("bad-device", str(exc))]) from exc


def _memory(rc: RunConfig) -> MemoryModel:
    doc = _section(rc, "memory")
    try:
        return MemoryModel() if doc is None else MemoryModel.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise CliValidationError([ValidationIssue("bad-memory", str(exc))]) from exc


def _limits(rc: RunConfig) -> tuple[int, int]:
    lim = rc.doc.get("limits")
    return DEFAULT_LIMITS if lim is None else (int(lim[0]), int(lim[1]))


def _graph(rc: RunConfig):
    gdoc = rc.doc.get("graph")
    if gdoc is None:
        name = rc.doc.get("workload", "gcn/er64").split("/")[1]
        return toy_graph(name, rc.seed)
    if "bundled" in gdoc:
        if gdoc["bundled"] not in GRAPHS:
            raise CliValidationError([ValidationIssue("bad-graph", f"unknown graph {gdoc['bundled']!r}")])
        return toy_graph(gdoc["bundled"], rc.seed)
    if "generate" in gdoc:
        gen = gdoc["generate"]
        return generate_graph(gen["kind"], gen["n"], gen.get("param", 0.0),
                              gen.get("feature_dim", 0), gen.get("seed", rc.seed))
    if "path" not in gdoc or "num_vertices" not in gdoc:
        raise CliValidationError([ValidationIssue("bad-graph", "graph needs path and num_vertices")])
    path = rc.path(gdoc["path"])
    feat_path = rc.path(gdoc["features"]) if "features" in gdoc else None
    try:
        with open(path) as fh:
            if feat_path is not None:
                with open(feat_path) as ff:
                    return load_edge_list(fh, gdoc["num_vertices"], gdoc.get("feature_dim", 0), ff,
                                          gdoc.get("undirected", False))
            return load_edge_list(fh, gdoc["num_vertices"], 0, None, gdoc.get("undirected", False))
    except OSError as exc:
        raise CliIOError(f"cannot read {exc.filename or path}: {exc.strerror or exc}") from exc


def _model(rc: RunConfig):
    mdoc = rc.doc.get("model")
    if mdoc is None:
        fam = rc.doc.get("workload", "gcn/er64").split("/")[0]
        return toy_model(fam, rc.seed)
    if "bundled" in mdoc:
        return toy_model(mdoc["bundled"], rc.seed)
    if "path" in mdoc:
        path = rc.path(mdoc["path"])
        return model_from_dict(_read_json(path), path.parent, rc.seed)
    return model_from_dict(mdoc, rc.base, rc.seed)


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _say(rc: RunConfig, msg: str) -> None:
    if not rc.quiet:
        print(msg)


# --- commands -----------------------------------------------------------------

def cmd_simulate(rc: RunConfig, args) -> int:
    cfg = _arch(rc, args)
    g, spec = _graph(rc), _model(rc)
    rep = simulate(g, spec, cfg, _device(rc), _memory(rc), limits=_limits(rc))
    _write(rc.out / "report.json", rep.to_json())
    _write(rc.out / "report.csv", report_csv(rep))
    _say(rc, f"latency {rep.latency_total_ns:.3f} ns, energy {rep.energy_total_j:.6e} J, "
             f"{float(rep.gops):.4f} GOPS, hash {rep.digest[:16]}")
    return EXIT_OK


def _sweep_spec(rc: RunConfig, kind: str) -> SweepSpec:
    doc = dict(rc.doc.get("sweep", {"kind": kind}))
    doc["kind"] = kind
    doc.setdefault("seed", rc.seed)
    if kind == "arch" and not doc.get("workloads"):
        doc["workloads"] = rc.doc.get("workloads") or [w.name for w in bundled_workloads(rc.seed)]
    return SweepSpec.from_dict(doc)


def cmd_sweep(rc: RunConfig, args, kind: str) -> int:
    if kind == "ablation":
        names = rc.doc.get("workloads") or rc.doc.get("sweep", {}).get("workloads")
        wls = ([get_workload(n, rc.seed) for n in names] if names
               else bundled_workloads(rc.seed))
        res = ablate(wls, _device(rc), _memory(rc), _arch(rc, args), _limits(rc))
        stem = "ablation"
    elif kind == "arch":
        res = sweep_arch(_sweep_spec(rc, "arch"), _device(rc), _memory(rc), rc.threads,
                         _limits(rc), _arch(rc, args))
        stem = "sweep_arch"
    else:
        spec = _sweep_spec(rc, getattr(args, "mode", None) or "device_coherent")
        cal = rc.doc.get("calibration")
        model = load_calibration(rc.path(cal) if cal else None)
        res = sweep_device(spec, _device(rc).mr_design, model)
        stem = "sweep_device"
    buf = io.StringIO()
    res.write_csv(buf)
    _write(rc.out / f"{stem}.csv", buf.getvalue())
    summary = res.summary_json()
    _write(rc.out / f"{stem}.json", summary)
    _say(rc, summary.rstrip())
    return EXIT_OK


def cmd_gen_graph(rc: RunConfig, args) -> int:
    try:
        g = generate_graph(args.kind, args.n, args.param, args.feature_dim, rc.seed)
    except GraphValidationError as exc:
        raise CliValidationError([ValidationIssue("bad-graph", str(exc))]) from exc
    buf = io.StringIO()
    write_edge_list(g, buf, f"{args.kind} n={args.n} param={args.param} seed={rc.seed}")
    _write(rc.out / "graph.txt", buf.getvalue())
    fbuf = io.StringIO()
    write_features(g, fbuf)
    _write(rc.out / "features.csv", fbuf.getvalue())
    _say(rc, f"wrote {g.num_edges} edges to {rc.out / 'graph.txt'}")
    return EXIT_OK


def cmd_validate(rc: RunConfig, args) -> int:
    cfg = _arch(rc, args)
    dev = _device(rc)
    issues = validate(cfg, dev, _limits(rc))
    doc = {"ok": not issues, "vector": list(cfg.vector), "precision_bits": cfg.precision_bits,
           "errors": [{"code": i.code, "message": i.message} for i in issues]}
    if not any(i.code == "count-below-one" for i in issues):
        doc["laser_dbm_required"] = required_laser_dbm(cfg, dev)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _write(rc.out / "validation.json", text)
    _say(rc, text.rstrip())
    return EXIT_OK if not issues else EXIT_VALIDATION


# --- entry point --------------------------------------------------------------

def _default_threads() -> int:
    env = os.environ.get("GHOST_SIM_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker processes for sweeps (default: $GHOST_SIM_THREADS or 1)")
    common.add_argument("--quiet", action="store_true")
    arch = argparse.ArgumentParser(add_help=False)
    arch.add_argument("--arch", help="N,V,R_r,R_c,T_r (overrides the config file)")
    arch.add_argument("--bits", type=int, help="precision bits")
    arch.add_argument("--opts", help="comma list of bp,pp,dac,wb")

    p = argparse.ArgumentParser(prog="ghostsim", description="Photonic GNN accelerator simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common, arch], help="simulate one workload")
    sd = sub.add_parser("sweep-device", parents=[common, arch], help="MR bank feasibility sweep")
    sd.add_argument("--mode", choices=("device_coherent", "device_noncoherent"),
                    help="overrides sweep.kind")
    sub.add_parser("sweep-arch", parents=[common, arch], help="architecture grid search")
    sub.add_parser("ablate", parents=[common, arch], help="optimization ablation")
    gg = sub.add_parser("gen-graph", parents=[common], help="write a synthetic graph")
    gg.add_argument("--kind", required=True, choices=GRAPH_KINDS)
    gg.add_argument("--n", type=int, required=True)
    gg.add_argument("--param", type=float, default=0.0)
    gg.add_argument("--feature-dim", type=int, default=8)
    sub.add_parser("validate", parents=[common, arch], help="check an architecture config")
    return p


def _emit_errors(out: Path | None, issues: list[ValidationIssue]) -> None:
    doc = {"ok": False, "errors": [{"code": i.code, "message": i.message} for i in issues]}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stderr.write(text)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "errors.json").write_text(text)
        except OSError:
            pass


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    rc = None
    try:
        rc = load_run_config(args)
        if args.command == "simulate":
            return cmd_simulate(rc, args)
        if args.command == "sweep-device":
            kind = args.mode or rc.doc.get("sweep", {}).get("kind", "device_coherent")
            args.mode = kind
            return cmd_sweep(rc, args, "device")
        if args.command == "sweep-arch":
            return cmd_sweep(rc, args, "arch")
        if args.command == "ablate":
            return cmd_sweep(rc, args, "ablation")
        if args.command == "gen-graph":
            return cmd_gen_graph(rc, args)
        return cmd_validate(rc, args)
    except CliIOError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: cannot read {exc.filename}: {exc.strerror}\n")
        return EXIT_IO
    except CliValidationError as exc:
        _emit_errors(rc.out if rc else Path(args.out), exc.issues)
        return EXIT_VALIDATION
    except (SimulationError, ArchValidationError) as exc:
        _emit_errors(rc.out if rc else Path(args.out), exc.issues)
        return EXIT_VALIDATION
    except (GraphFormatError, GraphValidationError, ModelSpecError, SweepSpecError,
            PhotonicsDomainError, KeyError) as exc:
        _emit_errors(rc.out if rc else Path(args.out),
                     [ValidationIssue(type(exc).__name__, str(exc).strip("'\""))])
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        log.exception("internal error")
        sys.stderr.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
