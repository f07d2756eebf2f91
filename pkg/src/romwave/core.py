"""Grids, media, sensor geometry, time lattices and the block-matrix container.

Conventions
-----------
Fields live on node arrays of shape ``(nx, nz)``. ``x`` runs along the array
(cross-range) and ``z`` runs away from it (range). Node ``(i, k)`` sits at
``origin + (i*h, k*h)``. Scenario media put the hard (Neumann) top boundary
half a cell above row ``k = 0``, so ``origin = (0, h/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ROMWaveError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(ROMWaveError, ValueError):
    pass


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not np.isfinite(value) or value <= 0:
            raise InvalidArgumentError(f"{name} must be positive, got {value!r}")


def grid_spacing(omega_c, B, c_bar):
    """Mesh size ``pi * c_bar / (4 * (omega_c + B))``.

    With ``B = omega_c / 4`` this is a tenth of the central wavelength.
    """
    _require_positive(omega_c=omega_c, B=B, c_bar=c_bar)
    return math.pi * c_bar / (4.0 * (omega_c + B))


def cfl_dt(h, c_max, safety=0.5, tau=None):
    """Leapfrog time step for the 2D five-point scheme.

    Returns ``safety * h / (c_max * sqrt(2))``. If ``tau`` is given the step
    is reduced so that ``tau / dt`` is an integer, and ``(dt, steps_per_tau)``
    is returned instead.
    """
    _require_positive(h=h, c_max=c_max)
    if not 0 < safety < 1:
        raise InvalidArgumentError(f"safety must lie in (0, 1), got {safety!r}")
    dt = safety * h / (c_max * math.sqrt(2.0))
    if tau is None:
        return dt
    _require_positive(tau=tau)
    # guard against tau/dt landing a hair above an integer
    steps = max(1, math.ceil(tau / dt - 1e-9))
    return tau / steps, steps


@dataclass(frozen=True)
class Grid2D:
    nx: int
    nz: int
    h: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.nz) != self.nz or self.nx < 2 or self.nz < 2:
            raise InvalidArgumentError(f"grid needs nx, nz >= 2, got {self.nx}x{self.nz}")
        _require_positive(h=self.h)
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nz", int(self.nz))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self):
        return (self.nx, self.nz)

    @property
    def size(self):
        return self.nx * self.nz

    @property
    def cell_area(self):
        return self.h * self.h

    def position(self, i, k):
        return (self.origin[0] + i * self.h, self.origin[1] + k * self.h)

    def index(self, x, z):
        """Nearest node index to a position."""
        i = int(round((x - self.origin[0]) / self.h))
        k = int(round((z - self.origin[1]) / self.h))
        if not (0 <= i < self.nx and 0 <= k < self.nz):
            raise InvalidArgumentError(f"point ({x}, {z}) lies outside the grid")
        return i, k

    def coordinates(self):
        """Meshgrids ``(X, Z)`` of node positions, each of shape ``(nx, nz)``."""
        x = self.origin[0] + self.h * np.arange(self.nx)
        z = self.origin[1] + self.h * np.arange(self.nz)
        return np.meshgrid(x, z, indexing="ij")

    @property
    def extent(self):
        """``(xmin, xmax, zmin, zmax)`` of the node lattice."""
        x0, z0 = self.origin
        return (x0, x0 + (self.nx - 1) * self.h, z0, z0 + (self.nz - 1) * self.h)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [z0, z1]``."""

    x0: float
    x1: float
    z0: float
    z1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.z1 > self.z0):
            raise InvalidArgumentError(f"degenerate rectangle {self}")

    def mask(self, grid):
        X, Z = grid.coordinates()
        tol = 1e-9 * grid.h
        return (
            (X >= self.x0 - tol) & (X <= self.x1 + tol)
            & (Z >= self.z0 - tol) & (Z <= self.z1 + tol)
        )

    def contains(self, other):
        return (other.x0 >= self.x0 and other.x1 <= self.x1
                and other.z0 >= self.z0 and other.z1 <= self.z1)


@dataclass(frozen=True, eq=False)
class Medium:
    """Wave speed on the grid nodes.

    ``omega_in`` is the rectangle that may contain unknown variations; outside
    it the speed must equal ``c_bar``.
    """

    grid: Grid2D
    c: np.ndarray
    c_bar: float
    omega_in: Rect | None = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.shape != self.grid.shape:
            raise InvalidArgumentError(f"speed has shape {c.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise InvalidArgumentError("wave speed must be positive and finite everywhere")
        _require_positive(c_bar=self.c_bar)
        if self.omega_in is not None:
            outside = ~self.omega_in.mask(self.grid)
            if np.any(np.abs(c[outside] - self.c_bar) > 1e-12 * self.c_bar):
                raise InvalidArgumentError("speed differs from c_bar outside omega_in")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def homogeneous(cls, grid, c_bar, omega_in=None):
        return cls(grid, np.full(grid.shape, float(c_bar)), c_bar, omega_in)

    def with_speed(self, c):
        return Medium(self.grid, c, self.c_bar, self.omega_in)

    @property
    def c_max(self):
        return float(self.c.max())

    def check_near_array(self, array, radius):
        """Raise unless the speed is ``c_bar`` within ``radius`` of every sensor."""
        X, Z = self.grid.coordinates()
        near = np.zeros(self.grid.shape, dtype=bool)
        for (i, k) in array.nodes:
            x, z = self.grid.position(i, k)
            near |= (X - x) ** 2 + (Z - z) ** 2 < radius ** 2
        if np.any(np.abs(self.c[near] - self.c_bar) > 1e-12 * self.c_bar):
            raise InvalidArgumentError(
                "medium is not homogeneous near the array (within c_bar * t_F)")


@dataclass(frozen=True)
class SensorArray:
    """Co-located sources/receivers, snapped to grid nodes on one row."""

    grid: Grid2D
    nodes: tuple

    def __post_init__(self):
        nodes = tuple((int(i), int(k)) for i, k in self.nodes)
        if len(nodes) < 1:
            raise InvalidArgumentError("sensor array needs at least one sensor")
        if len(set(nodes)) != len(nodes):
            raise InvalidArgumentError("sensor positions must be distinct")
        for i, k in nodes:
            if not (0 < i < self.grid.nx - 1 and 0 <= k < self.grid.nz - 1):
                raise InvalidArgumentError(f"sensor node {(i, k)} is not strictly inside the top edge")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def centered(cls, grid, m, spacing, row=0):
        """``m`` sensors on ``row``, ``spacing`` apart, centred in cross-range."""
        step = spacing / grid.h
        if abs(step - round(step)) > 1e-6:
            raise InvalidArgumentError(
                f"sensor spacing {spacing} is not a multiple of h={grid.h}")
        step = int(round(step))
        span = (m - 1) * step
        i0 = (grid.nx - 1 - span) // 2
        return cls(grid, tuple((i0 + q * step, row) for q in range(m)))

    @property
    def m(self):
        return len(self.nodes)

    @property
    def positions(self):
        return np.array([self.grid.position(i, k) for i, k in self.nodes])

    def flat_indices(self):
        return np.array([i * self.grid.nz + k for i, k in self.nodes])


@dataclass(frozen=True)
class TimeGrid:
    """ROM sampling ``tau`` with ``n`` snapshots and the leapfrog step ``dt``.

    Simulations start at ``t_start = -start_steps * dt`` with quiescent fields;
    ``start_steps`` is a multiple of ``steps_per_tau`` so every ``j*tau`` falls
    exactly on a step.
    """

    tau: float
    n: int
    steps_per_tau: int
    start_taus: int

    def __post_init__(self):
        _require_positive(tau=self.tau)
        if self.n < 1 or self.steps_per_tau < 1 or self.start_taus < 0:
            raise InvalidArgumentError("n, steps_per_tau must be >= 1 and start_taus >= 0")

    @classmethod
    def build(cls, tau, n, h, c_max, t_support, safety=0.5):
        """Pick ``dt`` from the CFL bound and a start time before ``-t_support``."""
        _, steps = cfl_dt(h, c_max, safety, tau=tau)
        return cls(tau, int(n), steps, math.ceil(t_support / tau - 1e-12))

    @property
    def dt(self):
        return self.tau / self.steps_per_tau

    @property
    def start_steps(self):
        return self.start_taus * self.steps_per_tau

    @property
    def t_start(self):
        return -self.start_steps * self.dt

    def step_of(self, j):
        """Simulation step index (from the start) at time ``j * tau``."""
        return self.start_steps + j * self.steps_per_tau

    def time_of_step(self, k):
        return (k - self.start_steps) * self.dt

    def refined(self, factor=2):
        """Same ``tau`` and start time, ``dt`` divided by ``factor``."""
        return TimeGrid(self.tau, self.n, self.steps_per_tau * factor, self.start_taus)


_TAGS = ("general", "block-upper-triangular", "symmetric")


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """Dense ``(n*m, n*m)`` matrix seen as an ``n x n`` grid of ``m x m`` blocks."""

    nblocks: int
    block_size: int
    data: np.ndarray
    structure_tag: str = "general"

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        N = self.nblocks * self.block_size
        if data.shape != (N, N):
            raise InvalidArgumentError(f"expected {(N, N)} matrix, got {data.shape}")
        if self.structure_tag not in _TAGS:
            raise InvalidArgumentError(f"unknown structure tag {self.structure_tag!r}")
        if self.structure_tag == "block-upper-triangular":
            m = self.block_size
            for i in range(1, self.nblocks):
                if np.any(data[i * m:(i + 1) * m, :i * m] != 0):
                    raise InvalidArgumentError("block below the diagonal is nonzero")
        elif self.structure_tag == "symmetric":
            scale = max(np.abs(data).max(), np.finfo(float).tiny)
            if np.abs(data - data.T).max() > 1e-12 * scale:
                raise InvalidArgumentError("matrix tagged symmetric is not symmetric")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def identity(cls, nblocks, block_size):
        return cls(nblocks, block_size, np.eye(nblocks * block_size), "symmetric")

    @classmethod
    def from_blocks(cls, blocks, structure_tag="general"):
        """Build from a nested list (or ``(n, n, m, m)`` array) of blocks."""
        arr = np.asarray(blocks, dtype=float)
        n, _, m, _ = arr.shape
        return cls(n, m, arr.transpose(0, 2, 1, 3).reshape(n * m, n * m), structure_tag)

    @property
    def shape(self):
        return self.data.shape

    def block(self, i, j):
        n, m = self.nblocks, self.block_size
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"block index {(i, j)} out of range for {n}x{n} blocks")
        return self.data[i * m:(i + 1) * m, j * m:(j + 1) * m].copy()

    def blocks(self):
        """View as an ``(n, n, m, m)`` array."""
        n, m = self.nblocks, self.block_size
        return self.data.reshape(n, m, n, m).transpose(0, 2, 1, 3)

    def block_column(self, j):
        """The ``(n*m, m)`` block column ``j``, i.e. ``data @ e_j``."""
        m = self.block_size
        return self.data[:, j * m:(j + 1) * m].copy()
