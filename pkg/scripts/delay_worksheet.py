#!/usr/bin/env python3
"""Delay worksheet for the full-scale vehicle scenario.

Computes message sizes and round-trip delay bounds from the network
description and prints the resulting sampling-interval window, i.e.
how many abstraction periods a control burst must cover.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from ncsctl.cli import main

CONFIG = pathlib.Path(__file__).resolve().parent.parent / "configs" / "vehicle_full.ini"

if __name__ == "__main__":
    raise SystemExit(main(["delays", str(CONFIG), *sys.argv[1:]]))
