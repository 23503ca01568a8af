#!/usr/bin/env python3
"""Run the acceptance gate and print one verdict line per criterion.

    python3 scripts/run_acceptance.py            # all twelve (about an hour on one core)
    python3 scripts/run_acceptance.py -k "01 or 02"
"""
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(pytest.main([str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider", *sys.argv[1:]]))
