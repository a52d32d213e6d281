"""Fixture runs: the shipped presets, produced by invoking the simulator CLI.

These tests consume the simulator only through its command line and the
CSV/JSON files it writes.
"""

import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def preset_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    out = {}
    for preset in ("exact", "generic-collapse"):
        run_dir = base / preset
        subprocess.run(
            [sys.executable, "-m", "bklcone.cli", "simulate",
             "--config", preset, "--out", str(run_dir)],
            check=True,
        )
        out[preset] = run_dir
    return out
