"""Synthesize data for the small scenario and invert it with the ROM approach.

Run with ``python demos/quickstart.py``; takes a few seconds.
"""

import tempfile
from pathlib import Path

from romwave.cli import main

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "small.yaml"

with tempfile.TemporaryDirectory() as tmp:
    data = Path(tmp) / "data"
    main(["synthesize", str(SCENARIO), str(data)])
    main(["invert", str(SCENARIO), str(data), "--approach", "rom2", "--iters", "4",
          "--out", str(data / "run")])
    print((data / "run" / "misfit.csv").read_text())
