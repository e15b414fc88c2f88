#!/usr/bin/env python3
"""Turn-on transient scaling study: tau_0 against the EIT traversal time over
a (D, Omega_c) grid in a fully blockaded medium.  Writes turnon.csv."""
import sys

from rydeit.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/turnon_scaling"
    raise SystemExit(main(["scan-turnon", "--out", out]))
