#!/usr/bin/env python3
"""Single-photon window study: windowed g2 and generation probability while
shrinking the detection window toward the pulse end (fixed final time),
square against Gaussian input."""
import sys

from rydeit.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/window_scan"
    raise SystemExit(main([
        "window-scan", "--out", out, "--n-atoms", "28",
        "--omega-c-mhz", "3.2", "--gamma-r-mhz", "0.8", "--duration-ns", "1000",
    ]))
