"""Analog photonic device math: line shapes, crosstalk noise, SNR budgets and MR-bank sizing.

Powers are carried in watts internally; dB/dBm appear only at function
boundaries that are explicitly logarithmic.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, TextIO

import numpy as np

SCAN_CAP = 512
DEFAULT_SNR_REQUIREMENT_DB = 21.3


class PhotonicsDomainError(ValueError):
    pass


def fwhm(lambda_res: float, q: float) -> float:
    """Resonance linewidth in the units of ``lambda_res``."""
    if not q > 0:
        raise PhotonicsDomainError(f"Q-factor must be positive, got {q}")
    return lambda_res / q


def snr_db(p_signal: float, p_noise: float) -> float:
    if not (p_signal > 0 and p_noise > 0):
        raise PhotonicsDomainError("signal and noise powers must be positive")
    return 10.0 * math.log10(p_signal / p_noise)


def required_snr_db(n_levels: int, r_tune: float) -> float:
    """Minimum SNR that keeps ``n_levels`` amplitude levels distinguishable over ``r_tune``."""
    if n_levels < 1 or not r_tune > 0:
        raise PhotonicsDomainError("n_levels must be >= 1 and r_tune > 0")
    return 10.0 * math.log10(n_levels / r_tune)


def resolvability_margin(n_levels: int, lambda_mr: float, q: float, snr: float) -> float:
    """Signed margin (nm) of the tuning range over the noise-limited level spacing.

    Positive exactly when ``snr > required_snr_db(n_levels, 2 * lambda_mr / q)``.
    """
    if n_levels < 1 or not lambda_mr > 0 or not q > 0:
        raise PhotonicsDomainError("inputs must be positive")
    return 2.0 * lambda_mr / q - n_levels * 10.0 ** (-snr / 10.0)


def lowest_level_power(p_signal: float, r_tune: float, n_levels: int) -> float:
    """Power of the smallest representable amplitude step."""
    return p_signal * r_tune / n_levels


def levels_resolvable(p_signal: float, p_noise: float, r_tune: float, n_levels: int) -> bool:
    """True when the smallest amplitude step stays above the noise floor."""
    return lowest_level_power(p_signal, r_tune, n_levels) > p_noise


def q_factor_from_coupling(n_g: float, length_um: float, kappa: float, a: float,
                           lambda_mr_nm: float) -> float:
    """Loaded Q of a ring from group index, circumference, cross-coupling and attenuation."""
    if not 0.0 < kappa < 1.0:
        raise PhotonicsDomainError("kappa must lie in (0, 1)")
    if not 0.0 < a <= 1.0:
        raise PhotonicsDomainError("attenuation must lie in (0, 1]")
    x = a * (1.0 - kappa * kappa)
    if x >= 1.0:
        raise PhotonicsDomainError("degenerate ring: a * (1 - kappa^2) >= 1")
    length_nm = length_um * 1e3
    return math.pi * n_g * length_nm * math.sqrt(x) / (lambda_mr_nm * (1.0 - x))


def kappa_for_q(q: float, n_g: float, length_um: float, a: float, lambda_mr_nm: float) -> float:
    """Inverse of :func:`q_factor_from_coupling` in kappa (closed form)."""
    c = q * lambda_mr_nm / (math.pi * n_g * length_um * 1e3)
    root = (-1.0 + math.sqrt(1.0 + 4.0 * c * c)) / (2.0 * c)  # sqrt(a (1 - kappa^2))
    k2 = 1.0 - root * root / a
    if not 0.0 < k2 < 1.0:
        raise PhotonicsDomainError("no kappa in (0, 1) reaches the requested Q")
    return math.sqrt(k2)


@dataclass(frozen=True)
class MrDesign:
    resonant_wavelength_nm: float = 1550.0
    q_factor: float = 3100.0
    attenuation: float = 0.99
    cross_coupling: float | None = None
    group_index: float = 4.2
    radius_um: float = 10.0
    waveguide_width_nm: float = 450.0
    gap_nm: float = 300.0

    def __post_init__(self):
        if not self.q_factor > 0:
            raise PhotonicsDomainError("q_factor must be positive")
        if not 0.0 < self.attenuation <= 1.0:
            raise PhotonicsDomainError("attenuation must lie in (0, 1]")
        if self.cross_coupling is None:
            k = kappa_for_q(self.q_factor, self.group_index, self.circumference_um,
                            self.attenuation, self.resonant_wavelength_nm)
            object.__setattr__(self, "cross_coupling", k)
        if not 0.0 < self.cross_coupling < 1.0:
            raise PhotonicsDomainError("cross_coupling must lie in (0, 1)")

    @property
    def circumference_um(self) -> float:
        return 2.0 * math.pi * self.radius_um

    @property
    def tunable_range_nm(self) -> float:
        return 2.0 * fwhm(self.resonant_wavelength_nm, self.q_factor)


@dataclass(frozen=True)
class CrosstalkModel:
    """Pluggable crosstalk coupling and per-MR coherent leak.

    ``phi_kind`` selects a scaled Lorentzian or a tabulated curve of coupling
    versus absolute detuning.  The scale applies to off-resonance leakage only,
    so zero detuning always couples fully.  The Lorentzian linewidth is taken
    at ``linewidth_ref_nm`` so coupling depends on detuning alone.
    """
    phi_kind: str = "lorentzian"
    phi_scale: float = 1.0
    linewidth_ref_nm: float = 1550.0
    phi_table_detuning_nm: tuple[float, ...] = ()
    phi_table_values: tuple[float, ...] = ()
    x0: float = 0.0
    pass_loss: float = 1.0

    def __post_init__(self):
        if self.phi_kind not in ("lorentzian", "table"):
            raise PhotonicsDomainError(f"unknown phi kind {self.phi_kind!r}")
        if not self.linewidth_ref_nm > 0:
            raise PhotonicsDomainError("linewidth reference wavelength must be positive")
        if not 0.0 < self.phi_scale <= 1.0:
            raise PhotonicsDomainError("phi scale must lie in (0, 1]")
        if not 0.0 < self.pass_loss <= 1.0:
            raise PhotonicsDomainError("per-MR pass loss factor must lie in (0, 1]")
        if self.x0 < 0:
            raise PhotonicsDomainError("x0 must be non-negative")
        if self.phi_kind == "table":
            d, v = np.asarray(self.phi_table_detuning_nm), np.asarray(self.phi_table_values)
            if len(d) < 2 or d.shape != v.shape:
                raise PhotonicsDomainError("phi table needs >= 2 aligned points")
            if np.any(np.diff(d) <= 0) or np.any(np.diff(v) > 0):
                raise PhotonicsDomainError("phi table must be increasing in detuning, "
                                           "non-increasing in value")
            if np.any(v < 0) or np.any(v > 1):
                raise PhotonicsDomainError("phi table values must lie in [0, 1]")

    def x_mr(self, rho: float = 0.0, index: int = 1) -> float:
        # phase-independent leak; rho is accepted so callers can pass it through
        return self.x0

    def to_dict(self) -> dict:
        phi: dict = {"kind": self.phi_kind, "scale": self.phi_scale,
                     "ref_nm": self.linewidth_ref_nm}
        if self.phi_kind == "table":
            phi["table"] = {"detuning_nm": list(self.phi_table_detuning_nm),
                            "values": list(self.phi_table_values)}
        return {"phi": phi, "x0": self.x0, "L_p": self.pass_loss}

    @classmethod
    def from_dict(cls, doc: dict) -> CrosstalkModel:
        phi = doc.get("phi", {})
        table = phi.get("table") or {}
        return cls(phi_kind=phi.get("kind", "lorentzian"), phi_scale=float(phi.get("scale", 1.0)),
                   linewidth_ref_nm=float(phi.get("ref_nm", 1550.0)),
                   phi_table_detuning_nm=tuple(table.get("detuning_nm", ())),
                   phi_table_values=tuple(table.get("values", ())),
                   x0=float(doc.get("x0", 0.0)), pass_loss=float(doc.get("L_p", 1.0)))


def load_calibration(path: str | Path | None = None) -> CrosstalkModel:
    """Load a calibration JSON; ``None`` returns the shipped calibration."""
    if path is None:
        text = resources.files("ghostsim").joinpath("data/calibration.json").read_text()
    else:
        text = Path(path).read_text()
    return CrosstalkModel.from_dict(json.loads(text))


def coupling_factor(lambda_i: float, lambda_j: float, q: float, model: CrosstalkModel) -> float:
    if not (lambda_i > 0 and lambda_j > 0):
        raise PhotonicsDomainError("wavelengths must be positive")
    detuning = abs(lambda_i - lambda_j)
    if detuning == 0.0:
        return 1.0
    if model.phi_kind == "table":
        return float(np.interp(detuning, model.phi_table_detuning_nm, model.phi_table_values))
    half = fwhm(model.linewidth_ref_nm, q) / 2.0
    return model.phi_scale * half * half / (half * half + detuning * detuning)


def heterodyne_noise(channels: Sequence[tuple[float, float]], victim_index: int, q: float,
                     model: CrosstalkModel) -> float:
    """Leaked power (W) from every other channel into the victim's resonance."""
    if not 0 <= victim_index < len(channels):
        raise PhotonicsDomainError(f"victim index {victim_index} out of range")
    lam_v = channels[victim_index][0]
    total = 0.0
    for k, (lam, power) in enumerate(channels):
        if power <= 0:
            raise PhotonicsDomainError("channel powers must be positive")
        if k != victim_index:
            total += coupling_factor(lam, lam_v, q, model) * power
    return total


def channel_signal(channels: Sequence[tuple[float, float]], victim_index: int, q: float,
                   model: CrosstalkModel) -> float:
    lam, power = channels[victim_index]
    return coupling_factor(lam, lam, q, model) * power


def homodyne_noise(p_in: float, n_mrs: int, model: CrosstalkModel, rho: float = 0.0) -> float:
    """Coherent leak (W) accumulated along a bank of ``n_mrs`` rings."""
    if n_mrs < 0:
        raise PhotonicsDomainError("n_mrs must be >= 0")
    lp = model.pass_loss
    return math.fsum(p_in * model.x_mr(rho, i) * lp ** (n_mrs - i) for i in range(1, n_mrs + 1))


def homodyne_noise_closed_form(p_in: float, n_mrs: int, model: CrosstalkModel) -> float:
    lp = model.pass_loss
    if lp == 1.0:
        return p_in * model.x0 * n_mrs
    return p_in * model.x0 * (1.0 - lp ** n_mrs) / (1.0 - lp)


@dataclass(frozen=True)
class LossTable:
    waveguide_propagation: float = 1.0   # dB/cm
    splitter: float = 0.13               # dB
    combiner: float = 0.9                # dB
    mr_through: float = 0.02             # dB
    mr_modulation: float = 0.72          # dB
    eo_tuning: float = 6.0               # dB/cm
    pd_sensitivity: float = -20.0        # dBm

    def __post_init__(self):
        for name in ("waveguide_propagation", "splitter", "combiner", "mr_through",
                     "mr_modulation", "eo_tuning"):
            if getattr(self, name) < 0:
                raise PhotonicsDomainError(f"loss entry {name} must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> LossTable:
        return cls(**{k: float(v) for k, v in doc.items()})


LINK_COMPONENTS = {
    "waveguide": "waveguide_propagation",
    "splitter": "splitter",
    "combiner": "combiner",
    "mr_through": "mr_through",
    "mr_modulation": "mr_modulation",
    "eo_tuning": "eo_tuning",
}


def link_loss_db(segments: Iterable[tuple[str, float]], table: LossTable) -> float:
    """Sum of component losses; ``waveguide``/``eo_tuning`` amounts are lengths in cm."""
    total = 0.0
    for kind, amount in segments:
        if kind not in LINK_COMPONENTS:
            raise ValueError(f"unknown link component {kind!r}")
        if amount < 0:
            raise ValueError(f"negative amount for {kind}")
        total += getattr(table, LINK_COMPONENTS[kind]) * amount
    return total


def laser_power_dbm(s_detector_dbm: float, p_photo_loss_db: float, n_wavelengths: int) -> float:
    """Minimum per-source laser power for a multi-wavelength link."""
    if n_wavelengths < 1:
        raise PhotonicsDomainError("n_wavelengths must be >= 1")
    return s_detector_dbm + p_photo_loss_db + 10.0 * math.log10(n_wavelengths)


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


class CoherentLimit(NamedTuple):
    count: int
    saturated: bool


class NoncoherentLimit(NamedTuple):
    mr_count: int
    wavelength_count: int
    saturated: bool


def coherent_snr_db(n_mrs: int, model: CrosstalkModel, p_in: float = 1e-3) -> float:
    noise = homodyne_noise(p_in, n_mrs, model)
    return math.inf if noise == 0.0 else snr_db(p_in, noise)


def max_coherent_mrs(lambda_nm: float, design: MrDesign, model: CrosstalkModel,
                     snr_requirement: float, p_in: float = 1e-3,
                     cap: int = SCAN_CAP) -> CoherentLimit:
    """Largest coherent bank whose homodyne-limited SNR meets the requirement."""
    if not math.isfinite(snr_requirement):
        raise PhotonicsDomainError("SNR requirement must be finite")
    signal = coupling_factor(lambda_nm, lambda_nm, design.q_factor, model) * p_in
    best = 0
    for n in range(1, cap + 1):
        noise = homodyne_noise(p_in, n, model)
        if noise > 0.0 and snr_db(signal, noise) < snr_requirement:
            return CoherentLimit(best, False)
        best = n
    return CoherentLimit(best, True)


def comb(lambda0: float, spacing: float, w: int, power: float = 1e-3) -> list[tuple[float, float]]:
    return [(lambda0 + k * spacing, power) for k in range(w)]


def noncoherent_snr_db(lambda0: float, spacing: float, w: int, design: MrDesign,
                       model: CrosstalkModel, p_in: float = 1e-3) -> float:
    """SNR at the comb center: heterodyne from the other channels plus homodyne along one bank."""
    channels = comb(lambda0, spacing, w, p_in)
    victim = (w - 1) // 2
    signal = channel_signal(channels, victim, design.q_factor, model)
    noise = heterodyne_noise(channels, victim, design.q_factor, model) + homodyne_noise(p_in, w, model)
    return math.inf if noise == 0.0 else snr_db(signal, noise)


def max_noncoherent_mrs(lambda0: float, spacing: float, design: MrDesign, model: CrosstalkModel,
                        snr_requirement: float, p_in: float = 1e-3,
                        cap: int = SCAN_CAP) -> NoncoherentLimit:
    """Largest WDM comb (and its two-bank MR count) meeting the requirement."""
    if not spacing > 0:
        raise PhotonicsDomainError("channel spacing must be positive")
    best = 0
    for w in range(1, cap + 1):
        if noncoherent_snr_db(lambda0, spacing, w, design, model, p_in) < snr_requirement:
            return NoncoherentLimit(2 * best, best, False)
        best = w
    return NoncoherentLimit(2 * best, best, True)


def fit_calibration(design: MrDesign | None = None, coherent_target: int = 20,
                    coherent_lambda: float = 1520.0, wavelength_target: int = 18,
                    lambda0: float = 1550.0, spacing: float = 1.0,
                    snr_requirement: float = DEFAULT_SNR_REQUIREMENT_DB,
                    mr_through_db: float = 0.02) -> CrosstalkModel:
    """Fit (x0, Lorentzian scale) so the two bank-size cutoffs land on the targets.

    The pass-loss factor comes from the MR through loss.  x0 is placed at the
    geometric centre of its feasible interval from the coherent cutoff, then
    the scale at the geometric centre of its interval from the WDM cutoff.
    """
    design = design or MrDesign()
    lp = 10.0 ** (-mr_through_db / 10.0)
    budget = 10.0 ** (-snr_requirement / 10.0)  # noise/signal ratio allowed

    def geo(n: int) -> float:
        return (1.0 - lp ** n) / (1.0 - lp) if lp < 1.0 else float(n)

    x_lo, x_hi = budget / geo(coherent_target + 1), budget / geo(coherent_target)
    x0 = math.sqrt(x_lo * x_hi)

    unit = CrosstalkModel(phi_scale=1.0, linewidth_ref_nm=design.resonant_wavelength_nm,
                          x0=0.0, pass_loss=lp)

    def het(w: int) -> float:
        ch = comb(lambda0, spacing, w, 1.0)
        return heterodyne_noise(ch, (w - 1) // 2, design.q_factor, unit)

    s_lo = max(0.0, (budget - x0 * geo(wavelength_target + 1)) / het(wavelength_target + 1))
    s_hi = (budget - x0 * geo(wavelength_target)) / het(wavelength_target)
    if not (0.0 < s_hi and s_lo < s_hi):
        raise PhotonicsDomainError("targets are not jointly reachable with this model family")
    scale = math.sqrt(s_lo * s_hi) if s_lo > 0 else s_hi / 2.0
    return CrosstalkModel(phi_scale=min(scale, 1.0), linewidth_ref_nm=design.resonant_wavelength_nm,
                          x0=x0, pass_loss=lp)


def write_sweep_csv(rows: Iterable[dict], out: TextIO,
                    fields: Sequence[str] = ("lambda_nm", "n", "snr_db", "pass")) -> None:
    writer = csv.DictWriter(out, fieldnames=list(fields), extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
