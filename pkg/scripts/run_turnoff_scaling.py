#!/usr/bin/env python3
"""Turn-off transient study: retrieval half-time tau_I on a high-D grid and
two-photon half-time tau_II (with the late Gamma-decay fit) on a low-D grid."""
import os
import sys

from rydeit.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/turnoff_scaling"
    cfg_hi = os.path.join(out, "grid_high_d.ini")
    os.makedirs(out, exist_ok=True)
    with open(cfg_hi, "w") as fh:
        fh.write("[scan]\nd_list = 9.1,18.2,27.3\nomega_c_list = 0.05,0.2,0.5\n")
    rc = main(["scan-turnoff", "--config", cfg_hi, "--out", os.path.join(out, "high_d")])
    cfg_lo = os.path.join(out, "grid_low_d.ini")
    with open(cfg_lo, "w") as fh:
        fh.write("[scan]\nd_list = 2.9,5.5,9.1\nomega_c_list = 0.05,0.25,0.5\n")
    rc |= main(["scan-turnoff", "--config", cfg_lo, "--out", os.path.join(out, "low_d")])
    raise SystemExit(rc)
