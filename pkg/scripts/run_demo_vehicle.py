#!/usr/bin/env python3
"""End-to-end desk-scale patrol demo.

Synthesizes the corridor controller for the 1-D shuttle scenario,
runs the closed-loop batch under uniformly sampled delays, verifies
every trace against the patrol specification, and checks clearance
from the keep-out region.  Results land in out/desk relative to the
config file unless --out overrides.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from ncsctl.cli import main

CONFIG = pathlib.Path(__file__).resolve().parent.parent / "configs" / "vehicle_desk.ini"

if __name__ == "__main__":
    raise SystemExit(main(["demo-vehicle", str(CONFIG), *sys.argv[1:]]))
