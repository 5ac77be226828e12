"""Regenerate src/ghostsim/data/calibration.json.

Fits the coherent leak x0 and the Lorentzian scale so that, at the default
ring design and a 21.3 dB requirement, the coherent bank tops out at 20 rings
at 1520 nm and the WDM comb at 18 wavelengths from 1550 nm with 1 nm spacing.
The per-ring pass loss comes from the 0.02 dB through loss.

    python3 tools/fit_calibration.py [output.json]
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

from ghostsim.photonics import MrDesign, fit_calibration, max_coherent_mrs, max_noncoherent_mrs

TARGETS = dict(coherent_target=20, coherent_lambda=1520.0, wavelength_target=18,
               lambda0=1550.0, spacing=1.0, snr_requirement=21.3, mr_through_db=0.02)


def main(argv: list[str]) -> int:
    out = Path(argv[1]) if len(argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src/ghostsim/data/calibration.json")
    design = MrDesign()
    model = fit_calibration(design, **TARGETS)
    coh = max_coherent_mrs(TARGETS["coherent_lambda"], design, model, TARGETS["snr_requirement"])
    wdm = max_noncoherent_mrs(TARGETS["lambda0"], TARGETS["spacing"], design, model,
                              TARGETS["snr_requirement"])
    assert coh.count == TARGETS["coherent_target"], coh
    assert wdm.wavelength_count == TARGETS["wavelength_target"], wdm
    doc = model.to_dict()
    doc["_fit"] = {
        "coherent_target": TARGETS["coherent_target"],
        "coherent_lambda_nm": TARGETS["coherent_lambda"],
        "wavelength_target": TARGETS["wavelength_target"],
        "lambda0_nm": TARGETS["lambda0"],
        "spacing_nm": TARGETS["spacing"],
        "snr_requirement_db": TARGETS["snr_requirement"],
        "mr_through_db": TARGETS["mr_through_db"],
    }
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}: x0={model.x0:.6g} scale={model.phi_scale:.6g} L_p={model.pass_loss:.9f}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
