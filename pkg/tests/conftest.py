from pathlib import Path

import numpy as np
import pytest

from romwave.scenario import load_scenario
from romwave.wave_sim import frak_for, make_data_cube, make_snapshots

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIOS


@pytest.fixture(scope="session")
def small():
    return load_scenario(SCENARIOS / "small.yaml")


@pytest.fixture(scope="session")
def small_data(small):
    """Cube, background cube and snapshots for the small scenario."""
    setup = small.setup()
    medium = small.true_medium()
    background = setup.background()
    cube = make_data_cube(medium, setup.array, setup.pulse, setup.time_grid, setup.boundaries)
    cube_ref = make_data_cube(background, setup.array, setup.pulse, setup.time_grid,
                              setup.boundaries)
    frak = frak_for(setup.pulse, setup.time_grid)
    snaps_ref = make_snapshots(background, setup.array, frak, setup.time_grid,
                               with_derivative=True, boundaries=setup.boundaries,
                               kind="reference_u")
    snaps_true = make_snapshots(medium, setup.array, frak, setup.time_grid,
                                boundaries=setup.boundaries)
    return {"setup": setup, "medium": medium, "background": background, "cube": cube,
            "cube_ref": cube_ref, "snaps_ref": snaps_ref, "snaps_true": snaps_true}


def cosine_cube(size=20, m=2, n=6, tau=1.0, seed=0):
    """Exact data ``D_j = U0^T cos(j tau sqrt(A)) U0`` of a random SPD matrix.

    Returns ``(D, U, P)`` with snapshot matrix ``U`` (column ``j*m + s``) and
    propagator ``P = cos(tau sqrt(A))``.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((size, size)))
    w = rng.uniform(0.2, 40.0, size)
    U0 = rng.standard_normal((size, m))
    cosj = lambda j: (Q * np.cos(j * tau * np.sqrt(w))) @ Q.T  # noqa: E731
    D = np.array([U0.T @ cosj(j) @ U0 for j in range(2 * n)])
    U = np.hstack([cosj(j) @ U0 for j in range(n)])
    return D, U, cosj(1)
