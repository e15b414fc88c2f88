#!/usr/bin/env python3
"""Measured-device replica: EIT spectrum, 1 us square-pulse propagation and
the time-resolved g2 trace (D ~ 10, 2 Omega_c = 2pi x 6.4 MHz,
gamma_r = 2pi x 0.8 MHz, optical depth per blockade radius ~ 0.9)."""
import sys

from rydeit.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/replica"
    raise SystemExit(main(["replica", "--out", out]))
