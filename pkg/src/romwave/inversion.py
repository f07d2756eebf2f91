"""Velocity estimation from the data-driven internal wave.

The unknown ``rho = (c^2 - c_ref^2) / (c c_ref)`` is expanded in a search
basis ``{beta_q}``. The data residual is then linear in the coefficients,
``D_j - D_j(c_ref) ~ sum_q eta_q Lambda_q(j tau)``, with

    Lambda_q^{(r,s)}(t) = int_0^t dt' int beta_q u~^{(s)}(t') d_t u^{(r)}(t - t'; c_ref) dx.

Each iteration solves a regularized linear least-squares problem for
``eta`` and maps it back to a speed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .core import InvalidArgumentError, ROMWaveError
from .internal_wave import build_reference_basis, estimate_internal
from .rom import ROM
from .wave_sim import BoundarySpec, frak_for, make_data_cube, make_snapshots

log = logging.getLogger(__name__)


class RegularizationSetupError(ROMWaveError):
    pass


# ---------------------------------------------------------------------------
# rho <-> c


def rho_of_speeds(c, c_ref):
    c = np.asarray(c, dtype=float)
    c_ref = np.asarray(c_ref, dtype=float)
    if np.any(c <= 0) or np.any(c_ref <= 0):
        raise InvalidArgumentError("wave speeds must be positive")
    return (c * c - c_ref * c_ref) / (c * c_ref)


def speed_of_rho(rho, c_ref):
    """Inverse of :func:`rho_of_speeds`; positive for any real ``rho``."""
    rho = np.asarray(rho, dtype=float)
    c_ref = np.asarray(c_ref, dtype=float)
    if np.any(c_ref <= 0):
        raise InvalidArgumentError("reference speed must be positive")
    # written to avoid cancellation when rho is large and negative
    root = np.sqrt(4.0 + rho * rho)
    return np.where(rho >= 0, 0.5 * c_ref * (rho + root), 2.0 * c_ref / (root - rho))


# ---------------------------------------------------------------------------
# search basis


BASIS_KINDS = ("hat", "gaussian", "pixel")


@dataclass(frozen=True, eq=False)
class SearchBasis:
    """Basis functions as rows of a sparse ``(N_rho, grid.size)`` matrix."""

    kind: str
    grid: object
    region: object  # Rect, the inversion domain
    matrix: sp.csr_matrix
    centers: np.ndarray

    @property
    def n_rho(self):
        return self.matrix.shape[0]

    def field(self, eta):
        """``sum_q eta_q beta_q`` on the grid."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.n_rho,):
            raise InvalidArgumentError(f"expected {self.n_rho} coefficients, got {eta.shape}")
        return (self.matrix.T @ eta).reshape(self.grid.shape)

    def on_nodes(self, nodes):
        """Basis restricted to the given flat node indices (columns)."""
        return self.matrix[:, nodes]

    def support_mask(self):
        mask = np.zeros(self.grid.size, dtype=bool)
        mask[np.unique(self.matrix.indices)] = True
        return mask.reshape(self.grid.shape)

    @classmethod
    def hat(cls, grid, region, d_range, d_cross):
        """Bilinear tents on the interior nodes of a ``d_cross x d_range`` mesh."""
        xs, zs = _mesh(region, d_cross, d_range)
        X, Z = grid.coordinates()
        rows, cols, vals, centers = [], [], [], []
        for xc in xs:
            for zc in zs:
                b = (np.clip(1 - np.abs(X - xc) / d_cross, 0, None)
                     * np.clip(1 - np.abs(Z - zc) / d_range, 0, None)).ravel()
                nz = np.flatnonzero(b > 0)
                rows.append(np.full(len(nz), len(centers)))
                cols.append(nz)
                vals.append(b[nz])
                centers.append((xc, zc))
        return cls._build("hat", grid, region, rows, cols, vals, centers)

    @classmethod
    def gaussian(cls, grid, region, d_range, d_cross, sigma_range, sigma_cross, cutoff=1e-8):
        """Gaussians centred on the interior mesh nodes, truncated to ``region``."""
        xs, zs = _mesh(region, d_cross, d_range)
        X, Z = grid.coordinates()
        inside = region.mask(grid).ravel()
        rows, cols, vals, centers = [], [], [], []
        for xc in xs:
            for zc in zs:
                b = np.exp(-0.5 * ((X - xc) / sigma_cross) ** 2
                           - 0.5 * ((Z - zc) / sigma_range) ** 2).ravel()
                nz = np.flatnonzero((b > cutoff) & inside)
                rows.append(np.full(len(nz), len(centers)))
                cols.append(nz)
                vals.append(b[nz])
                centers.append((xc, zc))
        return cls._build("gaussian", grid, region, rows, cols, vals, centers)

    @classmethod
    def pixel(cls, grid, region, size):
        """Indicator functions of ``size x size`` cells tiling ``region``."""
        X, Z = grid.coordinates()
        inside = region.mask(grid)
        tol = 1e-9 * grid.h
        ia = np.floor((X - region.x0 + tol) / size).astype(int)
        ka = np.floor((Z - region.z0 + tol) / size).astype(int)
        na = max(1, math.ceil((region.x1 - region.x0) / size - 1e-9))
        nb = max(1, math.ceil((region.z1 - region.z0) / size - 1e-9))
        ia = np.clip(ia, 0, na - 1)
        ka = np.clip(ka, 0, nb - 1)
        label = np.where(inside, ia * nb + ka, -1).ravel()
        rows, cols, vals, centers = [], [], [], []
        for lab in np.unique(label[label >= 0]):
            nz = np.flatnonzero(label == lab)
            a, b = divmod(int(lab), nb)
            rows.append(np.full(len(nz), len(centers)))
            cols.append(nz)
            vals.append(np.ones(len(nz)))
            centers.append((region.x0 + (a + 0.5) * size, region.z0 + (b + 0.5) * size))
        return cls._build("pixel", grid, region, rows, cols, vals, centers)

    @classmethod
    def _build(cls, kind, grid, region, rows, cols, vals, centers):
        if not centers:
            raise InvalidArgumentError("search basis is empty; the region is too small for the mesh")
        mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(len(centers), grid.size))
        return cls(kind, grid, region, mat, np.array(centers))


def _mesh(region, dx, dz):
    """Interior nodes of a lattice anchored at the region corner."""
    nx = int(math.floor((region.x1 - region.x0) / dx + 1e-9))
    nz = int(math.floor((region.z1 - region.z0) / dz + 1e-9))
    # centre the lattice in the region
    x_off = 0.5 * ((region.x1 - region.x0) - nx * dx)
    z_off = 0.5 * ((region.z1 - region.z0) - nz * dz)
    xs = region.x0 + x_off + dx * np.arange(1, nx)
    zs = region.z0 + z_off + dz * np.arange(1, nz)
    return xs, zs


def default_basis(kind, grid, region, wavelength):
    """Basis with the standard sizes for the given central wavelength."""
    lam = wavelength
    if kind == "hat":
        return SearchBasis.hat(grid, region, 3 * lam / 16, lam / 4)
    if kind == "gaussian":
        return SearchBasis.gaussian(grid, region, 3 * lam / 16, lam / 4, 0.0796 * lam, 0.11 * lam)
    if kind == "pixel":
        return SearchBasis.pixel(grid, region, lam / 8)
    raise InvalidArgumentError(f"unknown basis kind {kind!r}")


# ---------------------------------------------------------------------------
# Lambda matrices


def _deriv(snaps):
    return snaps.derivative if snaps.derivative is not None else snaps.values


def _conv_fields(a, b, dt, rule, outputs):
    """``K[i][x, r, s] ~ int_0^t a^s(t1, x) b^r(t - t1, x) dt1`` at ``t = outputs[i]*dt``."""
    n, m, X = a.shape
    out = np.zeros((len(outputs), X, m, m))
    if rule == "midpoint":
        # cells of width dt centred on the samples, clipped to [0, t]
        for i, j in enumerate(outputs):
            if j > 0:
                w = np.ones(j + 1)
                w[0] = w[-1] = 0.5
                out[i] = dt * np.einsum("l,lsx,lrx->xrs", w, a[:j + 1], b[j::-1], optimize=True)
    elif rule == "interpolated":
        # linear interpolants of both factors at the centre of each interval
        am = 0.5 * (a[1:] + a[:-1])
        bm = 0.5 * (b[1:] + b[:-1])
        for i, j in enumerate(outputs):
            if j > 0:
                out[i] = dt * np.einsum("lsx,lrx->xrs", am[:j], bm[j - 1::-1], optimize=True)
    else:
        raise InvalidArgumentError(f"unknown quadrature rule {rule!r}")
    return out


def lambda_matrices(beta, u_est, du_ref, rule="midpoint", every=1):
    """``Lambda[i, q, r, s]`` at ``t = i * every * dt_sample``.

    The time integral is a convolution,
    ``int_0^t dt1 int beta_q u~^{(s)}(t1) d_t u^{(r)}(t - t1; c_ref) dx``,
    evaluated on the sample lattice.

    Parameters
    ----------
    beta : SearchBasis or (N, nodes) matrix
        Weight functions; a SearchBasis is restricted to the stored nodes.
    u_est : SnapshotSet
        Internal-wave snapshots (source index ``s``).
    du_ref : SnapshotSet
        Reference snapshots carrying time derivatives (receiver index ``r``).
    rule : {"midpoint", "interpolated"}
        ``midpoint`` sums over the samples, each standing for the cell of
        width ``dt_sample`` around it (half cells at ``0`` and ``t``).
        ``interpolated`` evaluates the linear interpolants of both factors
        at the centre of every sample interval.
    every : int
        Output stride in samples.
    """
    if u_est.n != du_ref.n or abs(u_est.dt_sample - du_ref.dt_sample) > 1e-12 * u_est.dt_sample:
        raise InvalidArgumentError("snapshot sets are on different time lattices")
    if not np.array_equal(u_est.node_indices, du_ref.node_indices) or u_est.m != du_ref.m:
        raise InvalidArgumentError("snapshot sets store different nodes or sources")
    if isinstance(beta, SearchBasis):
        B = beta.on_nodes(u_est.node_indices)
    else:
        B = sp.csr_matrix(np.atleast_2d(beta)) if not sp.issparse(beta) else beta.tocsr()
    if B.shape[1] != u_est.values.shape[2]:
        raise InvalidArgumentError("basis width does not match the snapshot nodes")
    outputs = list(range(0, u_est.n, every))
    # only nodes touched by some basis function matter
    used = np.flatnonzero(np.asarray(abs(B).sum(axis=0)).ravel() > 0)
    B = B[:, used]
    K = _conv_fields(u_est.values[:, :, used], _deriv(du_ref)[:, :, used],
                     u_est.dt_sample, rule, outputs)
    h2 = u_est.grid.h ** 2
    m = u_est.m
    lam = np.empty((len(outputs), B.shape[0], m, m))
    for i in range(len(outputs)):
        lam[i] = h2 * np.asarray(B @ K[i].reshape(len(used), m * m)).reshape(-1, m, m)
    return lam


def forward_check(rho, u_true, du_ref, cube, cube_ref, rule="midpoint", floor=0.01):
    """Compare ``D - D_ref`` with the ``rho``-weighted time-space integral.

    The snapshot lattice may be finer than ``tau`` as long as ``tau`` is a
    multiple of it. Entries below ``floor`` times the peak of ``|D - D_ref|``
    are excluded.

    Returns
    -------
    max_rel : float
        Largest entry-wise relative error over the retained entries.
    peak_rel : float
        Largest error relative to the peak.
    """
    ratio = cube.tau / u_true.dt_sample
    L = int(round(ratio))
    if abs(ratio - L) > 1e-9:
        raise InvalidArgumentError("tau is not a multiple of the snapshot sample step")
    rho = np.asarray(rho, dtype=float).ravel()[u_true.node_indices]
    lam = lambda_matrices(rho[None, :], u_true, du_ref, rule, every=L)
    J = min(lam.shape[0], cube.count)
    pred = lam[:J, 0]
    diff = np.asarray(cube.D[:J]) - np.asarray(cube_ref.D[:J])
    peak = np.abs(diff).max()
    if peak == 0:
        return 0.0, float(np.abs(pred).max())
    err = np.abs(pred - diff)
    keep = np.abs(diff) >= floor * peak
    return float((err[keep] / np.abs(diff[keep])).max()), float(err.max() / peak)


def assemble_lsq(lam, cube, cube_ref, n=None):
    """``Gamma`` (rows ``(j, r, s)``, ``j`` outer) and ``b``, both scaled by ``sqrt(tau)``."""
    lam = np.asarray(lam)
    n = lam.shape[0] if n is None else n
    nq, m = lam.shape[1], lam.shape[2]
    D = np.asarray(getattr(cube, "D", cube))[:n]
    Dr = np.asarray(getattr(cube_ref, "D", cube_ref))[:n]
    if D.shape != (n, m, m) or Dr.shape != (n, m, m):
        raise InvalidArgumentError("data cubes do not match the Lambda matrices")
    w = math.sqrt(cube.tau)
    Gamma = w * lam[:n].transpose(0, 2, 3, 1).reshape(n * m * m, nq)
    b = w * (D - Dr).reshape(-1)
    return Gamma, b


# ---------------------------------------------------------------------------
# regularized solves


def tikhonov_step(Gamma, b, gamma):
    """Solve ``(G^T G + alpha I) x = G^T b`` with ``alpha = (gamma ||G||_2)^2``."""
    Gamma = np.asarray(Gamma, dtype=float)
    sigma = np.linalg.norm(Gamma, 2) if Gamma.size else 0.0
    if sigma == 0:
        raise InvalidArgumentError("Gamma is zero")
    if gamma < 0:
        raise InvalidArgumentError("gamma must be nonnegative")
    alpha = (gamma * sigma) ** 2
    A = Gamma.T @ Gamma + alpha * np.eye(Gamma.shape[1])
    return sla.solve(A, Gamma.T @ np.asarray(b, dtype=float), assume_a="sym")


def gsvd_values(Gamma, Psi):
    """Normalized generalized singular pairs of the pencil ``(Gamma, Psi)``.

    Uses a QR factorization of the stacked pencil followed by the SVD of its
    two blocks (cosine-sine split). Returns ``(s_gamma, s_psi)`` ordered so
    that the ratios ``s_gamma / s_psi`` increase.
    """
    Gamma = np.asarray(Gamma, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    p = Gamma.shape[1]
    if Psi.shape[1] != p:
        raise InvalidArgumentError("pencil matrices need the same number of columns")
    if np.linalg.matrix_rank(Psi) < p:
        raise RegularizationSetupError("Psi is rank deficient")
    Q, _ = np.linalg.qr(np.vstack([Gamma, Psi]))
    Q1 = Q[:Gamma.shape[0]]
    # the right singular vectors of Q1 also diagonalize Q2^T Q2 = I - Q1^T Q1
    _, c, Zt = np.linalg.svd(Q1, full_matrices=False) if Gamma.shape[0] >= p else _svd_pad(Q1)
    s = np.linalg.norm(Q[Gamma.shape[0]:] @ Zt.T, axis=0)
    order = np.argsort(c / s)
    return c[order], s[order]


def _svd_pad(Q1):
    p = Q1.shape[1]
    Q1p = np.vstack([Q1, np.zeros((p - Q1.shape[0], p))])
    return np.linalg.svd(Q1p)


def max_generalized_singular_value(Gamma, Psi):
    """``sqrt(lambda_max)`` of ``G^T G w = lambda Psi^T Psi w``."""
    A = Gamma.T @ Gamma
    Bm = Psi.T @ Psi
    try:
        lam = sla.eigh(A, Bm, eigvals_only=True, subset_by_index=[A.shape[0] - 1, A.shape[0] - 1])
    except np.linalg.LinAlgError as err:
        raise RegularizationSetupError(f"Psi^T Psi is not positive definite: {err}") from None
    return math.sqrt(max(float(lam[-1]), 0.0))


def gradient_operator(grid, region_mask):
    """Forward differences (over ``h``) for all grid edges touching the region.

    Rows are ordered as all x-differences followed by all z-differences, both
    indexed by the node at the low end of the edge.
    """
    nx, nz = grid.shape
    idx = np.arange(grid.size).reshape(nx, nz)
    mask = np.asarray(region_mask, dtype=bool).reshape(nx, nz)
    mats = []
    for lo, hi in ((idx[:-1, :], idx[1:, :]), (idx[:, :-1], idx[:, 1:])):
        keep = mask.ravel()[lo.ravel()] | mask.ravel()[hi.ravel()]
        a, b = lo.ravel()[keep], hi.ravel()[keep]
        r = np.arange(len(a))
        mats.append(sp.csr_matrix((np.concatenate([-np.ones(len(a)), np.ones(len(a))]),
                                   (np.concatenate([r, r]), np.concatenate([a, b]))),
                                  shape=(len(a), grid.size)) / grid.h)
    return mats[0], mats[1]


def tv_step(Gamma, b, eta_k, basis, c_ref_field, gamma, smoothing_eps):
    """One smoothed-TV regularized Gauss-Newton step.

    ``c~(eta) = speed_of_rho(sum eta_q beta_q, c_ref_field)`` is linearized
    at ``eta_k``; the TV term is replaced by an IRLS-weighted quadratic.
    Returns ``delta_eta``.
    """
    grid = basis.grid
    eta_k = np.asarray(eta_k, dtype=float)
    c_ref = np.asarray(c_ref_field, dtype=float).ravel()
    rho = basis.field(eta_k).ravel()
    c_t = speed_of_rho(rho, c_ref)
    scale = c_t * 0.5 * (1.0 + rho / np.sqrt(4.0 + rho * rho))
    J = sp.diags(scale) @ basis.matrix.T  # (grid.size, N_rho)
    Dx, Dz = gradient_operator(grid, basis.support_mask() | basis.region.mask(grid))
    # pointwise |grad c|^2 at the low node of each edge
    gx, gz = Dx @ c_t, Dz @ c_t
    g2 = np.zeros(grid.size)
    np.add.at(g2, Dx.indices[Dx.data < 0], gx ** 2)
    np.add.at(g2, Dz.indices[Dz.data < 0], gz ** 2)
    w_node = (g2 + smoothing_eps ** 2) ** -0.25
    wx = w_node[Dx.indices[Dx.data < 0]]
    wz = w_node[Dz.indices[Dz.data < 0]]
    W = sp.diags(np.concatenate([wx, wz]))
    Dg = sp.vstack([Dx, Dz]).tocsr()
    Psi = np.asarray((W @ Dg @ J).todense())
    xi = W @ (Dg @ c_t)
    Gamma = np.asarray(Gamma, dtype=float)
    sigma = max_generalized_singular_value(Gamma, Psi)
    alpha = (gamma * sigma) ** 2
    A = Gamma.T @ Gamma + alpha * (Psi.T @ Psi)
    rhs = Gamma.T @ np.asarray(b, dtype=float) - alpha * (Psi.T @ xi)
    try:
        return sla.solve(A, rhs, assume_a="sym")
    except np.linalg.LinAlgError as err:
        raise RegularizationSetupError(f"TV normal equations are singular: {err}") from None


# ---------------------------------------------------------------------------
# driver


APPROACHES = ("rom1", "rom2", "fwi", "ideal")
REGULARIZERS = ("tikhonov", "tv")


@dataclass(frozen=True)
class InversionConfig:
    approach: str = "rom2"
    reg: str = "tikhonov"
    gamma: float = 0.03
    max_iters: int = 10
    tv_smoothing_eps: float | None = None  # default 1e-3 * c_bar / wavelength
    stop_tol: float = 1e-3
    eps: float = 0.0
    eps_retries: int = 4
    quadrature: str = "midpoint"

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise InvalidArgumentError(f"approach must be one of {APPROACHES}")
        if self.reg not in REGULARIZERS:
            raise InvalidArgumentError(f"regularization must be one of {REGULARIZERS}")
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be positive")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be at least 1")
        if self.eps < 0 or self.stop_tol < 0:
            raise InvalidArgumentError("eps and stop_tol must be nonnegative")


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything about the experiment except the unknown medium."""

    grid: object
    c_bar: float
    region: object
    array: object
    pulse: object
    time_grid: object
    basis: SearchBasis
    boundaries: BoundarySpec = BoundarySpec()
    workers: int | None = None

    def background(self):
        from .core import Medium
        return Medium.homogeneous(self.grid, self.c_bar, self.region)

    def simulate(self, medium, snapshots=True, derivative=True):
        """Data cube and (optionally) full-grid snapshots in ``medium``."""
        cube = make_data_cube(medium, self.array, self.pulse, self.time_grid,
                              self.boundaries, workers=self.workers)
        if not snapshots:
            return cube, None
        snaps = make_snapshots(medium, self.array, frak_for(self.pulse, self.time_grid),
                               self.time_grid, with_derivative=derivative,
                               boundaries=self.boundaries, workers=self.workers)
        return cube, snaps


@dataclass
class InversionState:
    eta: np.ndarray
    c_k: object  # Medium
    misfit_history: list = field(default_factory=list)
    k: int = 0
    eps: float = 0.0
    rejected: int | None = None

    @property
    def final_misfit(self):
        """Misfit of ``c_k`` (a rejected last step is not counted)."""
        return self.misfit_history[self.k]


def relative_misfit(cube, cube_k):
    """``[sum_j ||D_j - D_j(c_k)||^2 / sum_j ||D_j||^2]^(1/2)`` over the whole cube."""
    D = np.asarray(getattr(cube, "D", cube))
    Dk = np.asarray(getattr(cube_k, "D", cube_k))
    if D.shape != Dk.shape:
        raise InvalidArgumentError(f"cube shapes differ: {D.shape} vs {Dk.shape}")
    den = float(np.sum(D * D))
    if den == 0:
        raise InvalidArgumentError("reference cube is zero")
    return math.sqrt(float(np.sum((D - Dk) ** 2)) / den)


def _step(config, Gamma, b, eta_lin, basis, base_speed, setup):
    if config.reg == "tikhonov":
        return tikhonov_step(Gamma, b, config.gamma)
    eps = config.tv_smoothing_eps
    if eps is None:
        eps = 1e-3 * setup.c_bar / (setup.c_bar * setup.pulse.wavelength)
    return tv_step(Gamma, b, eta_lin, basis, base_speed, config.gamma, eps)


def invert(config, cube, setup, c0=None, true_medium=None, callback=None):
    """Iterative velocity estimation.

    Parameters
    ----------
    config : InversionConfig
    cube : DataCube
        Measured data with ``2n`` matrices.
    setup : Setup
    c0 : Medium, optional
        Initial guess (default: constant ``c_bar``).
    true_medium : Medium, optional
        Needed only by the ``ideal`` approach, which uses the true internal wave.
    callback : callable, optional
        ``callback(state)`` after every iteration.

    Returns
    -------
    InversionState
        ``misfit_history[0]`` is the misfit of ``c0``; one entry is appended
        per iteration. Iteration stops once the relative decrease of the
        misfit falls below ``config.stop_tol``; a step that increases the
        misfit is recorded but not taken, and ``rejected`` names it.
    """
    n = setup.time_grid.n
    if cube.count < 2 * n:
        raise InvalidArgumentError(f"cube needs {2 * n} matrices, has {cube.count}")
    cube = cube.truncated(2 * n)
    c0 = setup.background() if c0 is None else c0
    basis = setup.basis
    nodes = np.flatnonzero(basis.support_mask().ravel())

    rom = None
    eps = config.eps
    if config.approach in ("rom1", "rom2"):
        rom = ROM(cube, n, eps=eps, retries=config.eps_retries)
        eps = rom.eps
    u_true = None
    if config.approach == "ideal":
        if true_medium is None:
            raise InvalidArgumentError("the ideal approach needs the true medium")
        _, u_true = setup.simulate(true_medium, derivative=False)
        u_true = u_true.restricted(nodes)

    cube_0, snaps_0 = setup.simulate(c0)
    state = InversionState(np.zeros(basis.n_rho), c0, [relative_misfit(cube, cube_0)], 0, eps)
    cube_ref, snaps_ref = cube_0, snaps_0
    log.info("%s/%s: initial misfit %.4g", config.approach, config.reg, state.misfit_history[0])

    for k in range(1, config.max_iters + 1):
        c_ref = state.c_k
        if config.approach == "rom1":
            du_ref, D_ref, base = snaps_0, cube_0, c0
        else:
            du_ref, D_ref, base = snaps_ref, cube_ref, c_ref
        du = du_ref.restricted(nodes)

        if config.approach in ("rom1", "rom2"):
            vbasis = build_reference_basis(snaps_ref, eps)
            u_int = estimate_internal(vbasis, rom.R).restricted(nodes)
        elif config.approach == "fwi":
            u_int = snaps_ref.restricted(nodes)
        else:
            u_int = u_true

        lam = lambda_matrices(basis, u_int, du, config.quadrature)
        Gamma, b = assemble_lsq(lam, cube, D_ref, n)
        if config.approach == "rom1":
            # eta is re-solved relative to c0; TV linearizes at the previous eta
            if config.reg == "tv":
                d = _step(config, Gamma, b - Gamma @ state.eta, state.eta, basis, base.c, setup)
                eta = state.eta + d
            else:
                eta = _step(config, Gamma, b, state.eta, basis, base.c, setup)
        else:
            eta = _step(config, Gamma, b, np.zeros(basis.n_rho), basis, base.c, setup)

        c_new = c0.with_speed(speed_of_rho(basis.field(eta), base.c))
        new_cube, new_snaps = setup.simulate(c_new)
        misfit = relative_misfit(cube, new_cube)
        prev = state.misfit_history[-1]
        log.info("%s/%s: iteration %d misfit %.4g", config.approach, config.reg, k, misfit)
        if misfit > prev:
            # keep the better estimate; the rejected misfit stays in the record
            state.misfit_history.append(misfit)
            state.rejected = k
            break
        state = InversionState(eta, c_new, state.misfit_history + [misfit], k, eps)
        cube_ref, snaps_ref = new_cube, new_snaps
        if callback is not None:
            callback(state)
        if prev > 0 and (prev - misfit) / prev < config.stop_tol:
            break
    return state
