"""Leapfrog FDTD solver for the 2D acoustic wave equation.

The scheme is second order in space and time on a square mesh. Soft
(Dirichlet) edges pin the outermost node line to zero; hard (Neumann) edges
mirror the edge node into a ghost node, which places the reflecting wall half
a cell outside the edge nodes and keeps the discrete Laplacian symmetric.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, ROMWaveError
from .signals import SampledSignal, derivative, pulse_f, sample_even

SOFT, HARD = "soft", "hard"


class StabilityError(ROMWaveError):
    pass


class DivergenceError(ROMWaveError):
    def __init__(self, step):
        super().__init__(f"non-finite field values at step {step}")
        self.step = step


@dataclass(frozen=True)
class BoundarySpec:
    top: str = HARD
    bottom: str = SOFT
    left: str = SOFT
    right: str = SOFT

    def __post_init__(self):
        for side in ("top", "bottom", "left", "right"):
            if getattr(self, side) not in (SOFT, HARD):
                raise InvalidArgumentError(f"{side} boundary must be 'soft' or 'hard'")

    def pinned_mask(self, grid):
        """Nodes held at zero by the soft edges (corners included)."""
        mask = np.zeros(grid.shape, dtype=bool)
        if self.left == SOFT:
            mask[0, :] = True
        if self.right == SOFT:
            mask[-1, :] = True
        if self.top == SOFT:
            mask[:, 0] = True
        if self.bottom == SOFT:
            mask[:, -1] = True
        return mask


def laplacian(p, h, bc, out=None):
    """Five-point Laplacian over the last two axes of ``p``."""
    if out is None:
        out = np.empty_like(p)
    np.multiply(p, -4.0, out=out)
    out[..., 1:, :] += p[..., :-1, :]
    out[..., :-1, :] += p[..., 1:, :]
    out[..., :, 1:] += p[..., :, :-1]
    out[..., :, :-1] += p[..., :, 1:]
    if bc.left == HARD:
        out[..., 0, :] += p[..., 0, :]
    if bc.right == HARD:
        out[..., -1, :] += p[..., -1, :]
    if bc.top == HARD:
        out[..., :, 0] += p[..., :, 0]
    if bc.bottom == HARD:
        out[..., :, -1] += p[..., :, -1]
    out *= 1.0 / (h * h)
    return out


def default_workers():
    try:
        return max(1, int(os.environ.get("ROMWAVE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class TraceSet:
    """Receiver time series ``values[s, r, k]`` at ``t0 + k*dt``."""

    values: np.ndarray
    dt: float
    t0: float


def _check_cfl(medium, dt):
    limit = medium.grid.h / (medium.c_max * math.sqrt(2.0))
    if dt > limit * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.4g} exceeds the CFL limit {limit:.4g}")


def _leapfrog(medium, src_nodes, src_values, bc, dt, nsteps, on_step=None,
              trace_nodes=None, check_every=200):
    """March ``len(src_nodes)`` independent runs; returns traces (s, r, k).

    ``src_values[k]`` is the source amplitude at step ``k`` (the field at step
    ``k+1`` feels it). ``on_step(k, field)`` sees the field at step ``k``.
    """
    grid = medium.grid
    ns = len(src_nodes)
    coef = (dt * medium.c) ** 2
    pinned = bc.pinned_mask(grid)
    prev = np.zeros((ns,) + grid.shape)
    cur = np.zeros_like(prev)
    buf = np.empty_like(prev)
    si = np.array([n[0] for n in src_nodes])
    sk = np.array([n[1] for n in src_nodes])
    rows = np.arange(ns)
    kick = dt * dt / grid.cell_area
    traces = None
    if trace_nodes is not None:
        ti = np.array([n[0] for n in trace_nodes])
        tk = np.array([n[1] for n in trace_nodes])
        traces = np.zeros((ns, len(trace_nodes), nsteps + 1))
    for k in range(nsteps + 1):
        if traces is not None:
            traces[:, :, k] = cur[:, ti, tk]
        if on_step is not None:
            on_step(k, cur)
        if k == nsteps:
            break
        laplacian(cur, grid.h, bc, out=buf)
        buf *= coef
        buf += 2.0 * cur
        buf -= prev
        buf[rows, si, sk] += kick * src_values[k]
        buf[:, pinned] = 0.0
        prev, cur, buf = cur, buf, prev
        if (k + 1) % check_every == 0 and not np.isfinite(cur).all():
            raise DivergenceError(k + 1)
    if not np.isfinite(cur).all():
        raise DivergenceError(nsteps)
    return traces


def fdtd_run(medium, array, source_signal, time_grid, nsteps, boundaries=BoundarySpec(),
             sources=None, record_traces=True, on_step=None):
    """Solve ``[d_t^2 - c^2 Lap] p = s(t) delta_{x_s}`` from rest at ``t_start``.

    Parameters
    ----------
    source_signal : SampledSignal
        Source time function on the simulation lattice; zero outside its record.
    nsteps : int
        Number of leapfrog steps after ``time_grid.t_start``.
    sources : sequence of int, optional
        Sensor indices to fire (default: all), each in its own run.
    on_step : callable, optional
        ``on_step(k, p)`` with ``p`` of shape ``(len(sources), nx, nz)``.

    Returns
    -------
    TraceSet or None
        ``values[s, r, k]``: field at receiver ``r`` for source ``s`` at step ``k``.
    """
    dt = time_grid.dt
    _check_cfl(medium, dt)
    if sources is None:
        sources = range(array.m)
    src_nodes = [array.nodes[s] for s in sources]
    src = source_signal.on_lattice(dt, -time_grid.start_steps, nsteps + 1)
    traces = _leapfrog(medium, src_nodes, src, boundaries, dt, nsteps, on_step,
                       array.nodes if record_traces else None)
    if traces is None:
        return None
    return TraceSet(traces, dt, time_grid.t_start)


def _split(seq, parts):
    seq = list(seq)
    parts = max(1, min(parts, len(seq)))
    size = math.ceil(len(seq) / parts)
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def _parallel(fn, sources, workers):
    chunks = _split(sources, workers)
    if len(chunks) == 1:
        return [fn(chunks[0])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(fn, chunks))


def source_derivative(sig, time_grid, nsteps):
    """Centred-difference derivative of ``sig`` resampled on the run lattice."""
    dt = time_grid.dt
    k0 = -time_grid.start_steps
    vals = sig.on_lattice(dt, k0 - 1, nsteps + 3)
    d = derivative(SampledSignal(dt, vals, (k0 - 1) * dt))
    return SampledSignal(dt, d.values[1:-1], k0 * dt)


# ---------------------------------------------------------------------------
# data cube


@dataclass(frozen=True, eq=False)
class DataCube:
    """Data matrices ``D[j]`` at ``t = j*tau``, ``D[j][r, s]`` receiver ``r``, source ``s``."""

    D: np.ndarray
    tau: float

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        if D.ndim != 3 or D.shape[1] != D.shape[2]:
            raise InvalidArgumentError(f"data cube must have shape (J, m, m), got {D.shape}")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def m(self):
        return self.D.shape[1]

    @property
    def count(self):
        return self.D.shape[0]

    def __getitem__(self, j):
        return self.D[j]

    def truncated(self, count):
        if count > self.count:
            raise InvalidArgumentError(f"cube holds {self.count} matrices, asked for {count}")
        return DataCube(self.D[:count], self.tau)


def data_run_steps(time_grid, count):
    """Steps needed to form ``count`` data matrices (convolution tail included)."""
    return time_grid.step_of(count - 1) + time_grid.start_steps


def make_data_cube(medium, array, pulse, time_grid, boundaries=BoundarySpec(), count=None,
                   workers=None, return_traces=False):
    """Simulate every source and form ``D_j = M(j tau) + M(-j tau)``.

    ``M(t) = f(-t) * p(t, x_r)`` is a dt-weighted sum over the recorded traces,
    which start at rest at ``time_grid.t_start``.
    """
    if count is None:
        count = 2 * time_grid.n
    medium.check_near_array(array, 0.999 * medium.c_bar * pulse.t_F)
    dt = time_grid.dt
    pad = time_grid.start_steps
    nsteps = data_run_steps(time_grid, count)
    f = SampledSignal.from_function(lambda t: pulse_f(pulse, t), dt,
                                    -pad - 2, nsteps - pad + 2)
    src = source_derivative(f, time_grid, nsteps)
    workers = workers or default_workers()

    def run(chunk):
        return fdtd_run(medium, array, src, time_grid, nsteps, boundaries, sources=chunk).values

    traces = np.concatenate(_parallel(run, range(array.m), workers), axis=0)
    t_rec = time_grid.t_start + dt * np.arange(nsteps + 1)

    js = np.arange(count)
    W_pos = dt * pulse_f(pulse, t_rec[None, :] - (js * time_grid.tau)[:, None])
    W_neg = dt * pulse_f(pulse, t_rec[None, :] + (js * time_grid.tau)[:, None])
    # traces[s, r, k] -> D[j, r, s]
    D = np.einsum("jk,srk->jrs", W_pos + W_neg, traces, optimize=True)
    cube = DataCube(D, time_grid.tau)
    if return_traces:
        return cube, TraceSet(traces, dt, time_grid.t_start)
    return cube


def add_noise(cube, level, seed=None):
    """Add i.i.d. Gaussian noise to ``D_1 ... D_{J-1}``; ``D_0`` stays clean.

    The variance is ``level^2 / (J m^2) * sum_j ||D_j||_F^2`` with ``J`` the
    number of matrices (``2n`` for a full cube).
    """
    if level < 0:
        raise InvalidArgumentError(f"noise level must be nonnegative, got {level!r}")
    if level == 0:
        return cube
    J, m, _ = cube.D.shape
    var = level ** 2 / (J * m * m) * float(np.sum(cube.D ** 2))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(var), size=(J - 1, m, m))
    D = cube.D.copy()
    D[1:] += noise
    return DataCube(D, cube.tau)


# ---------------------------------------------------------------------------
# snapshots


KINDS = ("true_u", "reference_u", "estimated_u")


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Wave fields ``values[l, s, node]`` at times ``l * dt_sample``.

    Only the flat node indices in ``nodes`` are stored (all nodes if None).
    ``derivative`` holds the matching time derivatives when available.
    """

    grid: object
    values: np.ndarray
    dt_sample: float
    kind: str
    nodes: np.ndarray | None = None
    derivative: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown snapshot kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise InvalidArgumentError("snapshot values must have shape (times, sources, nodes)")
        width = self.grid.size if self.nodes is None else len(self.nodes)
        if v.shape[2] != width:
            raise InvalidArgumentError("snapshot width does not match the stored nodes")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("snapshot values must be finite")
        if self.derivative is not None and np.shape(self.derivative) != v.shape:
            raise InvalidArgumentError("derivative must match the snapshot shape")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.dt_sample * np.arange(self.n)

    @property
    def node_indices(self):
        return np.arange(self.grid.size) if self.nodes is None else self.nodes

    def field(self, j, s, which="values"):
        """Snapshot ``j`` of source ``s`` as a full ``(nx, nz)`` grid."""
        data = self.values if which == "values" else self.derivative
        out = np.zeros(self.grid.size)
        out[self.node_indices] = data[j, s]
        return out.reshape(self.grid.shape)

    def U(self):
        """``(nodes, n*m)`` matrix with column ``j*m + s`` equal to ``u_j^{(s)}``."""
        n, m, w = self.values.shape
        return self.values.reshape(n * m, w).T

    def with_values(self, values, kind, derivative=None):
        return SnapshotSet(self.grid, values, self.dt_sample, kind, self.nodes, derivative)

    def restricted(self, nodes):
        """Keep a subset of the stored nodes (given as flat grid indices)."""
        nodes = np.asarray(nodes)
        pos = np.searchsorted(self.node_indices, nodes)
        if np.any(self.node_indices[pos] != nodes):
            raise InvalidArgumentError("requested nodes are not stored in this set")
        der = None if self.derivative is None else self.derivative[:, :, pos]
        return SnapshotSet(self.grid, self.values[:, :, pos], self.dt_sample, self.kind, nodes, der)


def make_snapshots(medium, array, frak, time_grid, with_derivative=False,
                   boundaries=BoundarySpec(), sample_every=None, n_samples=None,
                   mask=None, kind="true_u", workers=None):
    """Snapshots ``u(t, x) = zeta(t, x) + zeta(-t, x)`` of the symmetrized wave.

    ``zeta = (c_bar / c) q`` where ``q`` solves the wave equation driven by
    ``frak'(t) delta_{x_s}``. By default the samples sit at ``j*tau`` for
    ``j < n``; ``sample_every`` (in leapfrog steps) gives a finer lattice.

    Parameters
    ----------
    frak : SampledSignal
        The square-root pulse on the simulation step.
    mask : bool array, optional
        Store only these nodes.
    """
    if kind == "estimated_u":
        raise InvalidArgumentError("estimated snapshots come from the internal-wave estimate")
    grid = medium.grid
    dt = time_grid.dt
    stride = time_grid.steps_per_tau if sample_every is None else int(sample_every)
    if n_samples is None:
        n_samples = (time_grid.n - 1) * time_grid.steps_per_tau // stride + 1
    s0 = time_grid.start_steps
    last = (n_samples - 1) * stride
    nsteps = s0 + last + 1
    src = source_derivative(frak, time_grid, nsteps)
    nodes = None if mask is None else np.flatnonzero(np.asarray(mask).ravel())
    scale = (medium.c_bar / medium.c).ravel()
    scale = scale if nodes is None else scale[nodes]
    width = grid.size if nodes is None else len(nodes)

    # step -> list of (target, sample index, weight)
    plan = {}

    def add(step, target, l, w):
        if 0 <= step <= nsteps:
            plan.setdefault(step, []).append((target, l, w))

    for l in range(n_samples):
        add(s0 + l * stride, 0, l, 1.0)
        add(s0 - l * stride, 0, l, 1.0)
        if with_derivative and l > 0:
            add(s0 + l * stride + 1, 1, l, 0.5 / dt)
            add(s0 + l * stride - 1, 1, l, -0.5 / dt)
            add(s0 - l * stride + 1, 1, l, -0.5 / dt)
            add(s0 - l * stride - 1, 1, l, 0.5 / dt)

    workers = workers or default_workers()

    def run(chunk):
        out = np.zeros((2, n_samples, len(chunk), width))

        def on_step(k, p):
            for target, l, w in plan.get(k, ()):
                flat = p.reshape(len(chunk), -1)
                vals = flat if nodes is None else flat[:, nodes]
                out[target, l] += w * vals

        fdtd_run(medium, array, src, time_grid, nsteps, boundaries, sources=chunk,
                 record_traces=False, on_step=on_step)
        return out

    parts = _parallel(run, range(array.m), workers)
    out = np.concatenate(parts, axis=2) * scale
    return SnapshotSet(grid, out[0], stride * dt, kind, nodes,
                       out[1] if with_derivative else None)


def frak_for(pulse, time_grid):
    """Square-root pulse sampled on the simulation step of ``time_grid``."""
    from .signals import pulse_frak
    return pulse_frak(pulse, time_grid.dt, time_grid.start_steps * time_grid.dt + 2 * time_grid.dt)


def inner_products(a, b, h):
    """Midpoint-rule Gram ``h^2 * A^T B`` for node-by-column matrices."""
    return h * h * (a.T @ b)


def f_sampled(pulse, dt, half_width):
    return sample_even(lambda t: pulse_f(pulse, t), dt, half_width)
