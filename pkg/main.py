#!/usr/bin/env python3
"""
UWB relative localization simulator entry point

Run this script to simulate scenarios, run the full evaluation batch and build
comparison reports. See `python main.py --help`.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
