"""Orthonormal reference basis and the data-driven internal-wave estimate.

The reference snapshots ``U_ref`` are orthogonalized block by block,
``V = U_ref R_ref^{-1}``. Replacing ``R_ref`` by the Cholesky factor ``R`` of
the data mass matrix gives the estimate ``V R e_j`` of the internal wave in
the true medium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .core import BlockMatrix, InvalidArgumentError
from .rom import block_cholesky, factor_with_escalation, symmetrize_regularize


@dataclass(frozen=True, eq=False)
class ReferenceBasis:
    """Basis fields ``V[:, a]`` on the stored nodes of ``template``.

    Columns follow the snapshot order ``a = j*m + s``.
    """

    V: np.ndarray
    R_ref: BlockMatrix
    template: object  # SnapshotSet supplying grid, nodes and time step
    eps: float = 0.0

    @property
    def n(self):
        return self.R_ref.nblocks

    @property
    def m(self):
        return self.R_ref.block_size

    def gram(self):
        h = self.template.grid.h
        return h * h * (self.V.T @ self.V)


def reference_mass(U_ref):
    """Midpoint-rule mass matrix ``h^2 U^T U`` of a snapshot set."""
    U = U_ref.U()
    h = U_ref.grid.h
    n, m = U_ref.n, U_ref.m
    return BlockMatrix(n, m, h * h * (U.T @ U))


def build_reference_basis(U_ref, eps=0.0, escalate=False):
    """Orthonormalize the reference snapshots.

    ``eps`` should match the regularization of the data mass matrix so that
    ``R`` and ``R_ref`` are comparable. With ``escalate`` the rom module's
    retry policy is applied on breakdown.
    """
    M_ref = reference_mass(U_ref)
    if escalate:
        R_ref, eps = factor_with_escalation(M_ref, eps)
    else:
        R_ref = block_cholesky(symmetrize_regularize(M_ref, eps))
    V = sla.solve_triangular(R_ref.data, U_ref.U().T, trans="T", lower=False).T
    return ReferenceBasis(V, R_ref, U_ref, eps)


def _as_snapshots(basis, coeffs, kind):
    """Fields ``V @ coeffs[:, :, j*m:(j+1)*m]`` as a SnapshotSet."""
    n, m = basis.n, basis.m
    fields = basis.V @ coeffs  # (nodes, n*m)
    values = fields.T.reshape(n, m, -1)
    return basis.template.with_values(values, kind)


def estimate_internal(basis, R):
    """``u~_j = V R e_j``: the internal wave estimated from the data factor ``R``."""
    Rd = np.asarray(getattr(R, "data", R))
    if Rd.shape != basis.R_ref.shape:
        raise InvalidArgumentError(
            f"data factor has shape {Rd.shape}, basis expects {basis.R_ref.shape}")
    return _as_snapshots(basis, Rd, "estimated_u")


def reference_internal(basis):
    """``V R_ref e_j``, which reproduces the reference snapshots."""
    return _as_snapshots(basis, basis.R_ref.data, "reference_u")


@dataclass(frozen=True)
class DataFitReport:
    r1: np.ndarray
    r2: np.ndarray

    @property
    def max(self):
        return float(max(self.r1.max(initial=0.0), self.r2.max(initial=0.0)))


def _rel(a, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / nb if nb > 0 else np.linalg.norm(a)


def check_datafit(est, cube):
    """Relative residuals of the two data-fit relations.

    ``r1[j]`` compares ``D_j`` with ``int u_0^T u_j`` and ``r2[j]`` compares
    ``D_{j+n-1} + D_{n-1-j}`` with ``2 int u_{n-1}^T u_j``, for ``j < n``.
    """
    D = np.asarray(getattr(cube, "D", cube))
    n = est.n
    if D.shape[0] < 2 * n - 1:
        raise InvalidArgumentError(f"need {2 * n - 1} data matrices, got {D.shape[0]}")
    h2 = est.grid.h ** 2
    u = est.values  # (n, m, nodes)
    G0 = h2 * np.einsum("sx,jrx->jsr", u[0], u)      # int u_0^(s) u_j^(r)
    Gl = h2 * np.einsum("sx,jrx->jsr", u[n - 1], u)
    r1 = np.array([_rel(G0[j], D[j]) for j in range(n)])
    r2 = np.array([_rel(2.0 * Gl[j], D[j + n - 1] + D[n - 1 - j]) for j in range(n)])
    return DataFitReport(r1, r2)


def interpolate_in_time(snaps, t, which="values"):
    """Linear interpolation between the bracketing snapshots; ``(m, nodes)``."""
    data = snaps.values if which == "values" else snaps.derivative
    T = (snaps.n - 1) * snaps.dt_sample
    if not (-1e-12 * max(T, 1.0) <= t <= T * (1 + 1e-12)):
        raise InvalidArgumentError(f"t={t} outside [0, {T}]")
    x = min(max(t / snaps.dt_sample, 0.0), snaps.n - 1)
    j = min(int(np.floor(x)), snaps.n - 2) if snaps.n > 1 else 0
    w = x - j
    if snaps.n == 1 or w == 0.0:
        return data[j].copy()
    return (1.0 - w) * data[j] + w * data[j + 1]
