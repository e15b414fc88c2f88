#!/usr/bin/env python3
"""Store a Gaussian pulse in the measured-device medium by switching the
control off mid-flight, hold for 500 ns, retrieve, and report the
whole-retrieval windowed g2 and generation probability."""
import sys

from rydeit.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/storage"
    raise SystemExit(main([
        "storage", "--out", out, "--shape", "gaussian", "--duration-ns", "1500",
        "--n-atoms", "28", "--omega-c-mhz", "3.2", "--gamma-r-mhz", "0.8",
        "--blockade", "power_law", "--d-b", "0.9",
        "--t-off-ns", "900", "--t-store-ns", "500",
    ]))
