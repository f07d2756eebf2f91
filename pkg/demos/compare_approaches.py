"""Run all four inversion approaches on scenario A and print the misfit table.

Usage: ``python demos/compare_approaches.py [out_dir]``. With ``out_dir`` the
per-iteration and final misfits are written as CSV. Takes about a minute on
one core.
"""

import sys
from pathlib import Path

from romwave.cli import bench, format_bench, write_bench
from romwave.scenario import load_scenario

scenario = load_scenario(Path(__file__).resolve().parents[1] / "scenarios" / "scenario_a.yaml")
states = bench(scenario, reg="tikhonov", iters=5)
print(format_bench(states))

footprint = scenario.inclusion_mask()
for approach, state in states.items():
    mean = state.c_k.c[footprint].mean()
    print(f"{approach:>6s}: mean speed over the inclusion {mean:.4f} (true 1.1)")

if len(sys.argv) > 1:
    write_bench(sys.argv[1], states)
    print(f"wrote CSV files to {sys.argv[1]}")
