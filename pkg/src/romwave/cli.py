"""Command-line front end: ``romwave {synthesize, invert, verify, bench}``.

Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure, 4 I/O
error. The thread count for per-source simulations comes from
``ROMWAVE_THREADS`` (default 1).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import InvalidArgumentError, ROMWaveError
from .fileio import FormatError, atomic_write, read_cube, write_csv, write_cube, write_grid
from .inversion import APPROACHES, BASIS_KINDS, REGULARIZERS, InversionConfig, invert
from .scenario import load_scenario
from .wave_sim import add_noise, make_data_cube

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
BENCH_APPROACHES = ("rom1", "rom2", "fwi", "ideal")
BENCH_SLACK = 1.05

log = logging.getLogger("romwave")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _noisy(scenario, clean, seed=None):
    seed = scenario.noise_seed if seed is None else seed
    return add_noise(clean, scenario.noise_level, seed)


def synthesize(scenario, out_dir, workers=None):
    """Simulate the scenario and write the data, the true medium and a manifest.

    Files: ``cube.rwiv`` (noise per the scenario), ``cube_clean.rwiv``,
    ``true_speed.rwiv`` and ``manifest.yaml``. The manifest echoes the
    resolved scenario and can be fed back to ``synthesize``.
    """
    out = Path(out_dir)
    setup = scenario.setup(workers=workers)
    medium = scenario.true_medium()
    t0 = time.perf_counter()
    clean = make_data_cube(medium, setup.array, setup.pulse, setup.time_grid, setup.boundaries,
                           workers=workers)
    cube = _noisy(scenario, clean)
    write_cube(out / "cube.rwiv", cube)
    write_cube(out / "cube_clean.rwiv", clean)
    write_grid(out / "true_speed.rwiv", medium.c, medium.grid.h)
    files = {name: _sha256(out / name) for name in ("cube.rwiv", "cube_clean.rwiv", "true_speed.rwiv")}
    manifest = {"format": "romwave-manifest", "version": __version__,
                "scenario": scenario.to_dict(), "derived": scenario.derived(),
                "cube": {"count": cube.count, "m": cube.m, "tau": cube.tau},
                "files": files}
    atomic_write(out / "manifest.yaml", yaml.safe_dump(manifest, sort_keys=False))
    log.info("synthesized %d matrices of size %d in %.1f s", cube.count, cube.m,
             time.perf_counter() - t0)
    return cube


def _load_cube(scenario, cube_dir, seed=None):
    cube_dir = Path(cube_dir)
    if seed is not None and scenario.noise_level > 0:
        cube = _noisy(scenario, read_cube(cube_dir / "cube_clean.rwiv"), seed)
    else:
        cube = read_cube(cube_dir / "cube.rwiv")
    tg = scenario.time_grid
    if cube.m != scenario.array.m or abs(cube.tau - tg.tau) > 1e-12 * tg.tau:
        raise InvalidArgumentError(
            f"cube (m={cube.m}, tau={cube.tau}) does not match the scenario "
            f"(m={scenario.array.m}, tau={tg.tau})")
    return cube


def _config(scenario, approach, reg, gamma, iters, eps=None, stop_tol=None):
    inv = scenario.config["inversion"]
    return InversionConfig(
        approach=approach, reg=reg,
        gamma=scenario.default_gamma(reg) if gamma is None else gamma,
        max_iters=iters, eps=scenario.eps if eps is None else eps,
        stop_tol=float(inv["stop_tol"]) if stop_tol is None else stop_tol,
        quadrature=inv["quadrature"])


def write_run(out_dir, state, history, grid):
    """Misfit CSV, one eta row per accepted iterate and a grid file per iterate."""
    out = Path(out_dir)
    write_csv(out / "misfit.csv", ["iter", "misfit"], enumerate(state.misfit_history))
    width = len(history[0][1]) if history else 0
    write_csv(out / "eta.csv", ["iter"] + [f"eta_{q}" for q in range(width)],
              [[k] + list(eta) for k, eta, _ in history])
    for k, _, c in history:
        write_grid(out / f"c_{k:03d}.rwiv", c, grid.h)


def run_inversion(scenario, cube, config, basis=None, workers=None):
    """``invert`` with the iterate history recorded; returns ``(state, history)``."""
    setup = scenario.setup(basis, workers)
    c0 = setup.background()
    history = [(0, np.zeros(setup.basis.n_rho), c0.c)]
    true = scenario.true_medium() if config.approach == "ideal" else None
    state = invert(config, cube, setup, c0=c0, true_medium=true,
                   callback=lambda st: history.append((st.k, st.eta.copy(), st.c_k.c)))
    return state, history


def cmd_synthesize(args):
    scenario = load_scenario(args.scenario)
    synthesize(scenario, args.out_dir, args.workers)
    print(f"wrote {Path(args.out_dir) / 'manifest.yaml'}")
    return EXIT_OK


def cmd_invert(args):
    scenario = load_scenario(args.scenario)
    cube = _load_cube(scenario, args.cube_dir, args.seed)
    config = _config(scenario, args.approach, args.reg, args.gamma, args.iters, args.eps)
    out = Path(args.out) if args.out else Path(args.cube_dir) / f"invert-{args.approach}-{args.reg}"
    state, history = run_inversion(scenario, cube, config, args.basis, args.workers)
    write_run(out, state, history, scenario.grid)
    summary = {"approach": config.approach, "reg": config.reg, "gamma": config.gamma,
               "basis": args.basis or scenario.config["basis"]["kind"],
               "iterations": state.k, "rejected_step": state.rejected, "eps": state.eps,
               "misfit": [float(v) for v in state.misfit_history],
               "seed": args.seed}
    atomic_write(out / "summary.yaml", yaml.safe_dump(summary, sort_keys=False))
    for k, v in enumerate(state.misfit_history):
        print(f"{k:3d}  {v:.6f}")
    return EXIT_OK


def cmd_verify(args):
    from .checks import CHECKS, VerifyContext, run_checks
    if args.list:
        for name, (text, _) in CHECKS.items():
            print(f"{name:<22s} {text}")
        return EXIT_OK
    if args.scenario is None:
        raise InvalidArgumentError("verify needs a scenario file (or --list)")
    names = args.only.split(",") if args.only else None
    if names and set(names) - set(CHECKS):
        raise InvalidArgumentError(f"unknown checks: {sorted(set(names) - set(CHECKS))}")
    ctx = VerifyContext(load_scenario(args.scenario), args.workers, args.perturb_r, args.seed or 0)
    results = run_checks(ctx, names)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def bench_ordering(finals, slack=BENCH_SLACK):
    """Named ordering tests on the final misfits of the four runs."""
    i, r2, r1, f = finals["ideal"], finals["rom2"], finals["rom1"], finals["fwi"]
    return {"ideal <= rom2": i <= r2,
            f"rom2 <= {slack:g} rom1": r2 <= slack * r1,
            f"rom2 <= {slack:g} fwi": r2 <= slack * f}


def bench(scenario, reg="tikhonov", gamma=None, iters=5, basis=None, seed=None, workers=None):
    """Run every approach on one cube; returns ``{approach: InversionState}``."""
    setup = scenario.setup(basis, workers)
    clean = make_data_cube(scenario.true_medium(), setup.array, setup.pulse, setup.time_grid,
                           setup.boundaries, workers=workers)
    cube = _noisy(scenario, clean, seed)
    states = {}
    for approach in BENCH_APPROACHES:
        config = _config(scenario, approach, reg, gamma, iters, stop_tol=0.0)
        t0 = time.perf_counter()
        states[approach], _ = run_inversion(scenario, cube, config, basis, workers)
        log.info("%s finished in %.1f s", approach, time.perf_counter() - t0)
    return states


def bench_table(states):
    """``(header, rows)`` of per-iteration misfits; blanks after a run stops."""
    length = max(len(s.misfit_history) for s in states.values())
    rows = [[k] + [s.misfit_history[k] if k < len(s.misfit_history) else None
                   for s in states.values()] for k in range(length)]
    return ["iter"] + list(states), rows


def format_bench(states, slack=BENCH_SLACK):
    """Printable table, final misfits and the ordering verdicts."""
    header, rows = bench_table(states)
    lines = ["  ".join(f"{h:>10s}" for h in header)]
    for row in rows:
        lines.append("  ".join(f"{v:10d}" if isinstance(v, int) else
                               (f"{v:10.6f}" if v is not None else " " * 10) for v in row))
    finals = {a: s.final_misfit for a, s in states.items()}
    lines.append("final   " + "  ".join(f"{a}={v:.6f}" for a, v in finals.items()))
    for name, ok in bench_ordering(finals, slack).items():
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}")
    return "\n".join(lines)


def write_bench(out_dir, states):
    out = Path(out_dir)
    header, rows = bench_table(states)
    write_csv(out / "bench_misfit.csv", header, rows)
    write_csv(out / "bench_final.csv", ["approach", "final_misfit", "iterations", "rejected_step"],
              [[a, s.final_misfit, s.k, s.rejected] for a, s in states.items()])


def cmd_bench(args):
    scenario = load_scenario(args.scenario)
    states = bench(scenario, args.reg, args.gamma, args.iters, args.basis, args.seed, args.workers)
    print(format_bench(states))
    if args.out:
        write_bench(args.out, states)
    ordering = bench_ordering({a: s.final_misfit for a, s in states.items()})
    return EXIT_OK if all(ordering.values()) else EXIT_NUMERICAL


def build_parser():
    p = argparse.ArgumentParser(prog="romwave", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="threads for per-source simulations (default ROMWAVE_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="simulate a scenario and write the data cube")
    s.add_argument("scenario")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_synthesize)

    def run_flags(q, iters):
        q.add_argument("--reg", choices=REGULARIZERS, default="tikhonov")
        q.add_argument("--gamma", type=float, default=None,
                       help="regularization parameter (default 0.03 Tikhonov, 0.01 TV, "
                            "or the scenario's value)")
        q.add_argument("--basis", choices=BASIS_KINDS, default=None)
        q.add_argument("--iters", type=int, default=iters)
        q.add_argument("--seed", type=int, default=None,
                       help="noise seed replacing the scenario's (noisy scenarios only)")

    s = sub.add_parser("invert", help="estimate the wave speed from a synthesized cube")
    s.add_argument("scenario")
    s.add_argument("cube_dir")
    s.add_argument("--approach", choices=APPROACHES, default="rom2")
    run_flags(s, 10)
    s.add_argument("--eps", type=float, default=None, help="mass-matrix regularization")
    s.add_argument("--out", default=None, help="results directory")
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("verify", help="run the invariant checks")
    s.add_argument("scenario", nargs="?")
    s.add_argument("--list", action="store_true", help="list the checks and exit")
    s.add_argument("--only", default=None, help="comma-separated subset of checks")
    s.add_argument("--perturb-r", type=float, default=0.0,
                   help="relative perturbation of R before the data-fit check")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bench", help="compare rom1, rom2, fwi and the ideal run")
    s.add_argument("scenario")
    run_flags(s, 5)
    s.add_argument("--out", default=None, help="directory for the CSV tables")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidArgumentError, FormatError, yaml.YAMLError) as err:
        print(f"romwave: invalid input: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except ROMWaveError as err:
        print(f"romwave: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"romwave: I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
