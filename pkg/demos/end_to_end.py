"""
Whole pipeline from the command line entry point
================================================

Equivalent shell session::

    crashspot synth --out out
    crashspot run --config out/run_config.json
"""
import os
import sys
import tempfile
from pathlib import Path

from crashspot.cli import main

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
work.mkdir(parents=True, exist_ok=True)
os.chdir(work)

assert main(["synth", "--out", "out"]) == 0
assert main(["run", "--config", "out/run_config.json"]) == 0

for p in sorted(Path("out").iterdir()):
    print(f"{p.stat().st_size:9d}  {p}")
print()
print(Path("out/report.md").read_text())

# the pedestrian-only variant reuses the same inputs with one flag changed
assert main(["run", "--config", "out/run_config.json", "--category", "pedestrian", "--out", "out_pedestrian"]) == 0
