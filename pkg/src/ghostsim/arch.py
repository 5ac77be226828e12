"""Architecture parameters, device constants, derived inventory and feasibility checks."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .photonics import LossTable, MrDesign, laser_power_dbm, link_loss_db

REFERENCE_CONFIG = (20, 20, 18, 7, 17)
DEFAULT_LIMITS = (20, 18)  # (max coherent bank width, max WDM wavelengths)


@dataclass(frozen=True)
class Device:
    latency_ns: float
    power_mw: float

    def __post_init__(self):
        if not (self.latency_ns > 0 and self.power_mw > 0):
            raise ValueError("device latency and power must be positive")


@dataclass(frozen=True)
class DeviceLibrary:
    """Device constants.  ``eo_tuning.power_mw`` is per nm of shift; ``to_tuning`` per FSR."""
    eo_tuning: Device = Device(20.0, 0.004)
    to_tuning: Device = Device(4000.0, 27.5)
    vcsel: Device = Device(0.07, 1.3)
    photodetector: Device = Device(0.0058, 2.8)
    soa: Device = Device(0.3, 2.2)
    dac8: Device = Device(0.29, 3.0)
    adc8: Device = Device(0.82, 3.1)
    softmax_clock_mhz: float = 294.0
    softmax_power_mw: float = 5.0
    eo_shift_nm: float = 0.5
    to_fraction: float = 0.0
    loss_table: LossTable = LossTable()
    mr_design: MrDesign = field(default_factory=MrDesign)
    laser_max_dbm: float = 10.0
    laser_wallplug_efficiency: float = 1.0
    mr_pitch_um: float = 25.0

    def __post_init__(self):
        if not 0.0 <= self.to_fraction <= 1.0:
            raise ValueError("to_fraction must lie in [0, 1]")
        if not 0.0 < self.laser_wallplug_efficiency <= 1.0:
            raise ValueError("laser wall-plug efficiency must lie in (0, 1]")
        if not (self.softmax_clock_mhz > 0 and self.softmax_power_mw > 0 and self.eo_shift_nm > 0):
            raise ValueError("softmax clock/power and EO shift must be positive")

    @property
    def eo_power_per_mr_mw(self) -> float:
        return self.eo_tuning.power_mw * self.eo_shift_nm

    @classmethod
    def from_dict(cls, doc: dict) -> DeviceLibrary:
        kw = {}
        for f in fields(cls):
            if f.name not in doc:
                continue
            val = doc[f.name]
            if f.name in ("eo_tuning", "to_tuning", "vcsel", "photodetector", "soa", "dac8", "adc8"):
                val = Device(float(val["latency_ns"]), float(val["power_mw"]))
            elif f.name == "loss_table":
                val = LossTable.from_dict(val)
            elif f.name == "mr_design":
                val = MrDesign(**val)
            kw[f.name] = val
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown device library keys: {sorted(unknown)}")
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Optimizations:
    bp: bool = True
    pp: bool = True
    dac_sharing: bool = True
    wb: bool = False

    @property
    def effective_dac_sharing(self) -> bool:
        # lanes running at independent rates cannot share weight DACs
        return self.dac_sharing and not self.wb

    @classmethod
    def parse(cls, names) -> Optimizations:
        if isinstance(names, dict):
            return cls(**{k.lower(): bool(v) for k, v in names.items()})
        flags = {n.strip().lower() for n in names if n.strip()}
        flags = {"dac_sharing" if n in ("dac", "dac_sharing") else n for n in flags}
        unknown = flags - {"bp", "pp", "dac_sharing", "wb"}
        if unknown:
            raise ValueError(f"unknown optimization flags {sorted(unknown)}")
        return cls(bp="bp" in flags, pp="pp" in flags, dac_sharing="dac_sharing" in flags,
                   wb="wb" in flags)

    def label(self) -> str:
        parts = [n for n, on in (("BP", self.bp), ("PP", self.pp),
                                  ("DAC", self.dac_sharing), ("WB", self.wb)) if on]
        return "+".join(parts) if parts else "baseline"


@dataclass(frozen=True)
class ArchConfig:
    N: int = 20
    V: int = 20
    R_r: int = 18
    R_c: int = 7
    T_r: int = 17
    precision_bits: int = 8
    optimizations: Optimizations = Optimizations()
    batch_norm_mrs: bool = True

    @property
    def vector(self) -> tuple[int, int, int, int, int]:
        return (self.N, self.V, self.R_r, self.R_c, self.T_r)

    @classmethod
    def from_vector(cls, vec, **kw) -> ArchConfig:
        n, v, rr, rc, tr = (int(x) for x in vec)
        return cls(n, v, rr, rc, tr, **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> ArchConfig:
        doc = dict(doc)
        if "vector" in doc:
            n, v, rr, rc, tr = doc.pop("vector")
            doc.update(N=n, V=v, R_r=rr, R_c=rc, T_r=tr)
        if "optimizations" in doc:
            doc["optimizations"] = Optimizations.parse(doc["optimizations"])
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


class ArchValidationError(ValueError):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__("; ".join(f"{i.code}: {i.message}" for i in issues))


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


def worst_link_segments(cfg: ArchConfig, dev: DeviceLibrary) -> list[tuple[str, float]]:
    """Optical path from a reduce-row source through a transform row to its BPD.

    The signal fans out to R_c columns, is imprinted by one ring, combined,
    fanned out again to T_r transform rows and passes every ring on that row.
    """
    pitch_cm = dev.mr_pitch_um * 1e-4
    ring_cm = dev.mr_design.circumference_um * 1e-4
    n_passed = cfg.R_c + cfg.R_r
    return [
        ("splitter", math.ceil(math.log2(cfg.R_c)) if cfg.R_c > 1 else 0),
        ("splitter", math.ceil(math.log2(cfg.T_r)) if cfg.T_r > 1 else 0),
        ("combiner", 1),
        ("mr_through", max(n_passed - 2, 0)),
        ("mr_modulation", 2),
        ("eo_tuning", 2 * ring_cm),
        ("waveguide", n_passed * pitch_cm),
    ]


def required_laser_dbm(cfg: ArchConfig, dev: DeviceLibrary) -> float:
    loss = link_loss_db(worst_link_segments(cfg, dev), dev.loss_table)
    return laser_power_dbm(dev.loss_table.pd_sensitivity, loss, cfg.R_r)


def validate(cfg: ArchConfig, dev: DeviceLibrary | None = None,
             limits: tuple[int, int] = DEFAULT_LIMITS) -> list[ValidationIssue]:
    """All violated checks; an empty list means the configuration is usable."""
    dev = dev or DeviceLibrary()
    max_coherent, max_wavelengths = limits
    issues = []
    counts = dict(N=cfg.N, V=cfg.V, R_r=cfg.R_r, R_c=cfg.R_c, T_r=cfg.T_r)
    bad = [k for k, v in counts.items() if not isinstance(v, int) or v < 1]
    if bad:
        issues.append(ValidationIssue("count-below-one", f"parameters {bad} must be integers >= 1"))
    if not 2 <= cfg.precision_bits <= 16:
        issues.append(ValidationIssue("precision-out-of-range",
                                      f"precision_bits={cfg.precision_bits} not in [2, 16]"))
    if cfg.R_c > max_coherent:
        issues.append(ValidationIssue("coherent-width-exceeded",
                                      f"R_c={cfg.R_c} exceeds coherent bank limit {max_coherent}"))
    if cfg.R_r > max_wavelengths:
        issues.append(ValidationIssue("noncoherent-width-exceeded",
                                      f"R_r={cfg.R_r} exceeds WDM limit {max_wavelengths}"))
    if not bad:
        need = required_laser_dbm(cfg, dev)
        if need > dev.laser_max_dbm:
            issues.append(ValidationIssue(
                "laser-infeasible",
                f"worst link needs {need:.2f} dBm per source, laser max is {dev.laser_max_dbm} dBm"))
    return issues


@dataclass(frozen=True)
class DacCounts:
    combine: int
    gather: int

    @property
    def total(self) -> int:
        return self.combine + self.gather


@dataclass(frozen=True)
class ArchInstance:
    config: ArchConfig
    mrs_reduce: int
    mrs_transform: int
    bn_mrs: int
    dacs: DacCounts
    adc_count: int
    vcsel_count: int
    pd_count: int
    soa_count: int
    laser_dbm: float

    @property
    def wavelengths_noncoherent(self) -> int:
        return self.config.R_r

    @property
    def coherent_bank_width(self) -> int:
        return self.config.R_c

    @property
    def dac_count_total(self) -> int:
        return self.dacs.total

    @property
    def total_mrs(self) -> int:
        return self.mrs_reduce + self.mrs_transform + self.bn_mrs


def dac_count(inst_or_cfg: ArchInstance | ArchConfig, sharing: bool) -> DacCounts:
    """Weight DACs in the combine block plus gather-path DACs.

    With sharing, each weight DAC drives the same ring position in all V
    transform units.
    """
    cfg = inst_or_cfg.config if isinstance(inst_or_cfg, ArchInstance) else inst_or_cfg
    per_unit = cfg.R_r * cfg.T_r
    combine = per_unit if sharing else cfg.V * per_unit
    return DacCounts(combine, cfg.V * cfg.R_r)


def instantiate(cfg: ArchConfig, dev: DeviceLibrary | None = None,
                limits: tuple[int, int] = DEFAULT_LIMITS) -> ArchInstance:
    dev = dev or DeviceLibrary()
    issues = validate(cfg, dev, limits)
    if issues:
        raise ArchValidationError(issues)
    v, rr, rc, tr = cfg.V, cfg.R_r, cfg.R_c, cfg.T_r
    return ArchInstance(
        config=cfg,
        mrs_reduce=v * (rr * rc + rr),
        mrs_transform=v * rr * tr,
        bn_mrs=v * tr if cfg.batch_norm_mrs else 0,
        dacs=dac_count(cfg, cfg.optimizations.effective_dac_sharing),
        adc_count=v * rr + v * tr,
        vcsel_count=v * rr + v * rc + v * tr,
        pd_count=v * rr + v * tr,
        soa_count=v * tr,
        laser_dbm=required_laser_dbm(cfg, dev),
    )


def load_device_library(path: str | Path | None) -> DeviceLibrary:
    if path is None:
        return DeviceLibrary()
    return DeviceLibrary.from_dict(json.loads(Path(path).read_text()))


def with_optimizations(cfg: ArchConfig, opts: Optimizations) -> ArchConfig:
    return replace(cfg, optimizations=opts)
