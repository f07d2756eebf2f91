"""Data-driven reduced-order model: mass/stiffness assembly, block Cholesky,
the ROM propagator and the cosine (Chebyshev) recursions.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg as sla

from .core import BlockMatrix, InvalidArgumentError, ROMWaveError

log = logging.getLogger(__name__)


class NotPositiveDefiniteError(ROMWaveError):
    """Cholesky breakdown; ``block`` is the first failing diagonal block."""

    def __init__(self, block, message=None):
        super().__init__(message or f"matrix is not positive definite (block {block})")
        self.block = block


def _cube_array(cube):
    return np.asarray(getattr(cube, "D", cube), dtype=float)


def assemble_mass(cube, n):
    """Mass matrix ``M_ij = (D_{i+j} + D_{|i-j|}) / 2`` for ``0 <= i, j < n``."""
    D = _cube_array(cube)
    if D.shape[0] < 2 * n - 1:
        raise InvalidArgumentError(f"mass matrix needs {2 * n - 1} data matrices, got {D.shape[0]}")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    blocks = 0.5 * (D[i + j] + D[np.abs(i - j)])
    return BlockMatrix.from_blocks(blocks)


def assemble_stiffness(cube, n):
    """``S_ij = (D_{i+j+1} + D_{|i-j-1|} + D_{|i+j-1|} + D_{|i-j+1|}) / 4``."""
    D = _cube_array(cube)
    if D.shape[0] < 2 * n:
        raise InvalidArgumentError(f"stiffness matrix needs {2 * n} data matrices, got {D.shape[0]}")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    blocks = 0.25 * (D[i + j + 1] + D[np.abs(i - j - 1)] + D[np.abs(i + j - 1)] + D[np.abs(i - j + 1)])
    return BlockMatrix.from_blocks(blocks)


def symmetrize_regularize(M, eps=0.0):
    """``(M + M^T)/2`` with ``eps * M_00`` added to every diagonal block.

    ``M_00 = D_0`` is the block recorded next to the array, so the shift is
    relative to the data scale and keeps the Hankel-plus-Toeplitz structure.
    """
    if eps < 0:
        raise InvalidArgumentError(f"eps must be nonnegative, got {eps!r}")
    A = 0.5 * (M.data + M.data.T)
    if eps:
        m = M.block_size
        shift = eps * A[:m, :m]
        A = A.copy()
        for i in range(M.nblocks):
            A[i * m:(i + 1) * m, i * m:(i + 1) * m] += shift
    return BlockMatrix(M.nblocks, M.block_size, A, "symmetric")


def block_cholesky(M):
    """Block upper-triangular ``R`` with ``R^T R = M`` and positive diagonal.

    Block column ``j`` is found from the columns to its left:
    ``R[:j, j] = R[:j, :j]^{-T} M[:j, j]`` and ``R_jj = chol(M_jj - R[:j, j]^T R[:j, j])``.

    Raises
    ------
    NotPositiveDefiniteError
        With the index of the diagonal block where the pivot is not SPD.
    """
    A = np.asarray(M.data)
    n, m = M.nblocks, M.block_size
    R = np.zeros_like(A)
    for j in range(n):
        cols = slice(j * m, (j + 1) * m)
        C = A[cols, cols]
        if j:
            X = sla.solve_triangular(R[:j * m, :j * m], A[:j * m, cols], trans="T", lower=False)
            R[:j * m, cols] = X
            C = C - X.T @ X
        try:
            R[cols, cols] = np.linalg.cholesky(0.5 * (C + C.T)).T
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(j) from None
        if not np.all(np.isfinite(R[cols, cols])):
            raise NotPositiveDefiniteError(j)
    return BlockMatrix(n, m, R, "block-upper-triangular")


def factor_with_escalation(M, eps=0.0, retries=4, factor=10.0, base=0.01):
    """Regularize and factor, multiplying ``eps`` by ``factor`` on breakdown.

    Starting from ``eps = 0`` the first escalation jumps to ``base``.

    Returns
    -------
    R : BlockMatrix
    eps : float
        The value that succeeded.
    """
    current = eps
    for attempt in range(retries + 1):
        try:
            return block_cholesky(symmetrize_regularize(M, current)), current
        except NotPositiveDefiniteError as err:
            if attempt == retries:
                raise NotPositiveDefiniteError(
                    err.block, f"mass matrix not positive definite after eps={current:g} "
                               f"(block {err.block})") from None
            nxt = current * factor if current > 0 else base
            log.warning("mass factorization failed at block %d with eps=%g; retrying with %g",
                        err.block, current, nxt)
            current = nxt
    raise AssertionError("unreachable")


def rom_propagator(R, S):
    """``P = R^{-T} S R^{-1}`` via two triangular solves, symmetrized."""
    Rd = np.asarray(getattr(R, "data", R))
    Sd = np.asarray(getattr(S, "data", S))
    X = sla.solve_triangular(Rd, Sd, trans="T", lower=False)
    P = sla.solve_triangular(Rd, X.T, trans="T", lower=False)
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise ROMWaveError("ROM propagator has non-finite entries")
    nb, m = (R.nblocks, R.block_size) if hasattr(R, "nblocks") else (1, P.shape[0])
    return BlockMatrix(nb, m, P, "symmetric")


def rom_step(P, R, j_max):
    """ROM snapshots ``u_j^ROM`` for ``j = 0 ... j_max``, shape ``(j_max+1, nm, m)``.

    ``u_0 = R e_0``, ``u_1 = P u_0`` and ``u_{j+1} = 2 P u_j - u_{j-1}``.
    """
    Pd = np.asarray(P.data)
    m = R.block_size
    out = np.empty((j_max + 1, Pd.shape[0], m))
    out[0] = R.data[:, :m]
    if j_max >= 1:
        out[1] = Pd @ out[0]
    for j in range(1, j_max):
        out[j + 1] = 2.0 * Pd @ out[j] - out[j - 1]
    return out


def galerkin_extend(M, S, j_max):
    """Galerkin coefficients ``g_j`` of the snapshots beyond the ROM span.

    ``g_{j+1} = 2 M^{-1} S g_j - g_{j-1}`` seeded with ``g_{n-2} = e_{n-2}`` and
    ``g_{n-1} = e_{n-1}``; returns the array ``g[j]`` of shape
    ``(j_max+1, nm, m)`` with ``g[j] = e_j`` for ``j < n``.
    """
    n, m = M.nblocks, M.block_size
    if n < 2:
        raise InvalidArgumentError("Galerkin extension needs at least two snapshots")
    Md = 0.5 * (M.data + M.data.T)
    T = sla.cho_solve(sla.cho_factor(Md), 2.0 * np.asarray(S.data))
    out = np.zeros((max(j_max, n - 1) + 1, n * m, m))
    for j in range(n):
        out[j, j * m:(j + 1) * m] = np.eye(m)
    for j in range(n - 1, j_max):
        out[j + 1] = T @ out[j] - out[j - 1]
    return out[:j_max + 1]


def nyquist_tau(pulse, c_bar=1.0, drop_db=6.0):
    """ROM sampling step at the Nyquist rate of the pulse band.

    The band edge is where the compressed-pulse spectrum has fallen by
    ``drop_db`` decibels above the centre, ``omega_c + B sqrt(ln(10^(dB/10)))``.
    """
    w_max = pulse.omega_c + pulse.B * math.sqrt(math.log(10 ** (drop_db / 10)))
    return math.pi / w_max


class ROM:
    """Mass, stiffness, Cholesky factor and propagator built from one cube."""

    def __init__(self, cube, n, eps=0.0, retries=4, escalate=True):
        self.n = n
        self.m = _cube_array(cube).shape[1]
        self.M_raw = assemble_mass(cube, n)
        self.S = assemble_stiffness(cube, n)
        if escalate:
            self.R, self.eps = factor_with_escalation(self.M_raw, eps, retries)
        else:
            self.R, self.eps = block_cholesky(symmetrize_regularize(self.M_raw, eps)), eps
        self.M = symmetrize_regularize(self.M_raw, self.eps)
        self.P = rom_propagator(self.R, self.S)

    def snapshots(self, j_max=None):
        return rom_step(self.P, self.R, self.n - 1 if j_max is None else j_max)
