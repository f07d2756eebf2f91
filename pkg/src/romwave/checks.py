"""Invariant checks run by ``romwave verify``.

Each check returns a :class:`CheckResult` holding the measured error, the
tolerance it is held to and a short note. Checks that need wave simulations
share one :class:`VerifyContext`, which computes each ingredient once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .internal_wave import build_reference_basis, check_datafit, estimate_internal
from .inversion import gsvd_values, rho_of_speeds, speed_of_rho, tikhonov_step, forward_check
from .rom import (ROM, assemble_mass, assemble_stiffness, block_cholesky, galerkin_extend,
                  rom_step, symmetrize_regularize)
from .core import BlockMatrix
from .wave_sim import frak_for, make_data_cube, make_snapshots


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    note: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<22s} {self.value:10.3e} <= {self.tol:.1e}  {self.note}"


def cosine_oracle(size=8, tau=0.3, j_max=50, seed=0):
    """Three-term recursion against ``cos(j tau sqrt(A)) u0`` from an eigendecomposition.

    Returns the largest relative error over ``j <= j_max``.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((size, size)))
    lam = rng.uniform(0.5, 4.0, size)
    A = (Q * lam) @ Q.T
    u0 = rng.standard_normal(size)
    w, V = np.linalg.eigh(A)
    P = (V * np.cos(tau * np.sqrt(w))) @ V.T
    prev, cur = u0, P @ u0
    coef = V.T @ u0
    worst = 0.0
    for j in range(j_max + 1):
        exact = V @ (np.cos(j * tau * np.sqrt(w)) * coef)
        got = u0 if j == 0 else cur
        worst = max(worst, np.linalg.norm(got - exact) / np.linalg.norm(exact))
        if j >= 1:
            prev, cur = cur, 2.0 * P @ cur - prev
    return worst


def hankel_toeplitz_error(cube, n):
    """Largest deviation of the assembled ``M`` and ``S`` from their defining sums."""
    D = np.asarray(getattr(cube, "D", cube))
    M = assemble_mass(cube, n)
    S = assemble_stiffness(cube, n)
    err = 0.0
    for i in range(n):
        for j in range(n):
            Mij = 0.5 * (D[i + j] + D[abs(i - j)])
            Sij = 0.25 * (D[i + j + 1] + D[abs(i - j - 1)] + D[abs(i + j - 1)] + D[abs(i - j + 1)])
            err = max(err, np.abs(M.block(i, j) - Mij).max(), np.abs(S.block(i, j) - Sij).max())
    return float(err)


def cholesky_error(M):
    R = block_cholesky(M)
    return float(np.linalg.norm(R.data.T @ R.data - M.data) / np.linalg.norm(M.data))


def rom_snapshot_errors(rom, j_max):
    """``(in_span, extended)``: ROM snapshots against ``R e_j`` and against ``R g_j``."""
    n, m = rom.n, rom.m
    snaps = rom_step(rom.P, rom.R, j_max)
    Rd = rom.R.data
    e1 = max(np.linalg.norm(snaps[j] - Rd[:, j * m:(j + 1) * m]) / np.linalg.norm(Rd[:, j * m:(j + 1) * m])
             for j in range(n))
    g = galerkin_extend(rom.M, rom.S, j_max)
    e2 = 0.0
    for j in range(n, j_max + 1):
        ref = Rd @ g[j]
        e2 = max(e2, np.linalg.norm(snaps[j] - ref) / np.linalg.norm(ref))
    return float(e1), float(e2)


def gsvd_normalization_error(seed=0):
    """Worst ``|s_G^2 + s_P^2 - 1|`` and generalized-value mismatch on 6x4 / 8x4 pencils."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for rows in (6, 8):
        G = rng.standard_normal((rows, 4))
        Psi = rng.standard_normal((rows, 4))
        sg, sp_ = gsvd_values(G, Psi)
        worst = max(worst, np.abs(sg ** 2 + sp_ ** 2 - 1).max())
        # oracle: eigenvalues of the pencil (G^T G, Psi^T Psi)
        ev = np.sort(np.linalg.eigvals(np.linalg.solve(Psi.T @ Psi, G.T @ G)).real)
        ratios = np.sort(sg / sp_)
        worst = max(worst, np.abs(ratios - np.sqrt(ev)).max() / np.sqrt(ev).max())
    return float(worst)


def tikhonov_monotone_violation(instances=20, seed=0):
    """Largest increase of ``||x(gamma)||`` along an increasing ``gamma`` sweep."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        rows, cols = rng.integers(8, 30), rng.integers(3, 8)
        G = rng.standard_normal((rows, cols))
        b = rng.standard_normal(rows)
        norms = [np.linalg.norm(tikhonov_step(G, b, g)) for g in np.geomspace(1e-3, 10, 25)]
        worst = max(worst, max(0.0, *(np.diff(norms) / norms[0])))
    return float(worst)


def rho_roundtrip_error(c, c_ref):
    rho = rho_of_speeds(c, c_ref)
    return float(np.abs(speed_of_rho(rho, c_ref) - c).max() / np.abs(c).max())


class VerifyContext:
    """Lazily simulated ingredients for one scenario."""

    def __init__(self, scenario, workers=None, perturb_r=0.0, seed=0):
        self.scenario = scenario
        self.setup = scenario.setup(workers=workers)
        self.perturb_r = perturb_r
        self.seed = seed

    @cached_property
    def medium(self):
        return self.scenario.true_medium()

    @cached_property
    def background(self):
        return self.setup.background()

    @cached_property
    def cube(self):
        return make_data_cube(self.medium, self.setup.array, self.setup.pulse,
                              self.setup.time_grid, self.setup.boundaries, workers=self.setup.workers)

    @cached_property
    def cube_ref(self):
        return make_data_cube(self.background, self.setup.array, self.setup.pulse,
                              self.setup.time_grid, self.setup.boundaries, workers=self.setup.workers)

    @cached_property
    def rom(self):
        return ROM(self.cube, self.setup.time_grid.n, eps=0.0)

    @cached_property
    def snaps_ref(self):
        s = self.setup
        return make_snapshots(self.background, s.array, frak_for(s.pulse, s.time_grid), s.time_grid,
                              boundaries=s.boundaries, kind="reference_u", workers=s.workers)

    def check_cosine(self):
        return CheckResult("cosine_recursion", cosine_oracle(), 1e-12,
                           "8x8 SPD oracle, j <= 50")

    def check_reciprocity(self):
        D = self.cube.D
        err = float(np.abs(D - D.transpose(0, 2, 1)).max() / np.abs(D).max())
        return CheckResult("reciprocity", err, 1e-10, "D_j symmetric")

    def check_assembly(self):
        return CheckResult("mass_stiffness", hankel_toeplitz_error(self.cube, self.setup.time_grid.n),
                           0.0, "Hankel plus Toeplitz sums, exact")

    def check_cholesky(self):
        M = symmetrize_regularize(self.rom.M_raw, self.rom.eps)
        return CheckResult("cholesky", cholesky_error(M), 1e-10,
                           f"||R^T R - M|| / ||M||, eps={self.rom.eps:g}")

    def check_rom_snapshots(self):
        e1, _ = rom_snapshot_errors(self.rom, self.rom.n - 1)
        return CheckResult("rom_snapshots", e1, 1e-8, "rom_step vs R e_j, j < n")

    def check_galerkin(self):
        _, e2 = rom_snapshot_errors(self.rom, 2 * self.rom.n - 1)
        return CheckResult("galerkin_extend", e2, 1e-8, "rom_step vs R g_j, n <= j < 2n")

    def check_datafit(self):
        basis = build_reference_basis(self.snaps_ref, self.rom.eps)
        R = self.rom.R
        note = f"eps={self.rom.eps:g}"
        if self.perturb_r:
            rng = np.random.default_rng(self.seed)
            E = rng.standard_normal(R.data.shape) * np.triu(np.ones_like(R.data))
            E *= self.perturb_r * np.linalg.norm(R.data) / np.linalg.norm(E)
            R = BlockMatrix(R.nblocks, R.block_size, R.data + E, R.structure_tag)
            note += f", R perturbed by {self.perturb_r:g}"
        report = check_datafit(estimate_internal(basis, R), self.cube)
        return CheckResult("datafit", report.max, 1e-8, note)

    def check_forward(self):
        """Exact forward relation with the true internal wave on the inclusion footprint."""
        mask = np.abs(self.medium.c - self.scenario.c_bar) > 0
        if not mask.any():
            diff = float(np.abs(self.cube.D - self.cube_ref.D).max())
            return CheckResult("forward_relation", diff, 0.0, "homogeneous medium")
        s = self.setup
        fr = frak_for(s.pulse, s.time_grid)
        u_true = make_snapshots(self.medium, s.array, fr, s.time_grid, sample_every=1, mask=mask,
                                boundaries=s.boundaries, workers=s.workers)
        du_ref = make_snapshots(self.background, s.array, fr, s.time_grid, sample_every=1,
                                mask=mask, with_derivative=True, boundaries=s.boundaries,
                                kind="reference_u", workers=s.workers)
        rho = rho_of_speeds(self.medium.c, self.scenario.c_bar)
        _, peak = forward_check(rho, u_true, du_ref, self.cube, self.cube_ref)
        return CheckResult("forward_relation", peak, 0.1, "true wave, error / peak of D - D_ref")

    def check_rho(self):
        return CheckResult("rho_roundtrip", rho_roundtrip_error(self.medium.c, self.scenario.c_bar),
                           1e-14, "c -> rho -> c")

    def check_gsvd(self):
        return CheckResult("gsvd_normalization", gsvd_normalization_error(), 1e-10,
                           "random 6x4 and 8x4 pencils")

    def check_tikhonov(self):
        return CheckResult("tikhonov_monotone", tikhonov_monotone_violation(), 1e-12,
                           "||d eta|| non-increasing in gamma")


CHECKS = {
    "cosine_recursion": ("three-term cosine recursion against an eigendecomposition oracle",
                         VerifyContext.check_cosine),
    "reciprocity": ("data matrices are symmetric", VerifyContext.check_reciprocity),
    "mass_stiffness": ("mass and stiffness blocks follow the Hankel plus Toeplitz sums",
                       VerifyContext.check_assembly),
    "cholesky": ("block Cholesky reconstructs the mass matrix", VerifyContext.check_cholesky),
    "rom_snapshots": ("ROM time stepping reproduces the columns of R",
                      VerifyContext.check_rom_snapshots),
    "galerkin_extend": ("Galerkin extension agrees with ROM time stepping",
                        VerifyContext.check_galerkin),
    "datafit": ("estimated internal wave satisfies the data-fit relations",
                VerifyContext.check_datafit),
    "forward_relation": ("true internal wave reproduces D - D_ref", VerifyContext.check_forward),
    "rho_roundtrip": ("contrast to speed round trip", VerifyContext.check_rho),
    "gsvd_normalization": ("GSVD pairs satisfy s_G^2 + s_P^2 = 1", VerifyContext.check_gsvd),
    "tikhonov_monotone": ("Tikhonov step norm decreases with gamma",
                          VerifyContext.check_tikhonov),
}


def run_checks(ctx, names=None):
    names = list(CHECKS) if names is None else names
    return [CHECKS[name][1](ctx) for name in names]
