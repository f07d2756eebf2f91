"""Probing pulse, compressed pulse and the square-root pulse.

The probe is a Gaussian-modulated cosine ``f``; ``F = f(-t) * f(t)`` is the
pulse after compression and ``frak`` is the even pulse whose Fourier
transform is ``sqrt(F_hat)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, ROMWaveError


class SpectralValidityError(ROMWaveError):
    """The compressed pulse has a significantly negative spectrum."""


@dataclass(frozen=True)
class PulseSpec:
    omega_c: float
    B: float

    def __post_init__(self):
        if not self.B > 0:
            raise InvalidArgumentError(f"bandwidth B must be positive, got {self.B!r}")
        if not self.omega_c >= 0:
            raise InvalidArgumentError(f"omega_c must be nonnegative, got {self.omega_c!r}")

    @classmethod
    def from_central_frequency(cls, omega_c):
        """The usual choice ``B = omega_c / 4``."""
        return cls(omega_c, omega_c / 4.0)

    @property
    def t_F(self):
        """Effective half-width of the support of ``F``."""
        return 2.0 * math.sqrt(3.0) / self.B

    @property
    def wavelength(self):
        """Central wavelength for unit speed; multiply by ``c_bar``."""
        return 2.0 * math.pi / self.omega_c


def pulse_f(spec, t):
    t = np.asarray(t, dtype=float)
    return (2.0 * np.pi / np.sqrt(2.0)) * np.exp(-0.5 * (spec.B * t) ** 2) * np.cos(spec.omega_c * t)


def pulse_F(spec, t):
    """Compressed pulse, keeping the small ``exp(-omega_c^2/B^2)`` offset term."""
    t = np.asarray(t, dtype=float)
    B, w = spec.B, spec.omega_c
    return (np.pi ** 2.5 / B) * np.exp(-0.25 * (B * t) ** 2) * (np.cos(w * t) + np.exp(-(w / B) ** 2))


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Samples ``values[k]`` at times ``t0 + k*dt``."""

    dt: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise InvalidArgumentError("signal values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("signal values must be finite")
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, dt, k_start, k_stop):
        """Sample ``fn`` at ``k*dt`` for integer ``k_start <= k < k_stop``."""
        k = np.arange(k_start, k_stop)
        return cls(dt, fn(k * dt), k_start * dt)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.values))

    def __len__(self):
        return len(self.values)

    def on_lattice(self, dt, k_start, count):
        """Values at ``(k_start + q) * dt`` for ``q < count``; zero off the record."""
        if abs(dt - self.dt) > 1e-12 * dt:
            raise InvalidArgumentError(f"signal step {self.dt} does not match lattice step {dt}")
        offset = self.t0 / dt
        if abs(offset - round(offset)) > 1e-6:
            raise InvalidArgumentError("signal start is not on the simulation lattice")
        first = k_start - int(round(offset))
        out = np.zeros(count)
        lo, hi = max(first, 0), min(first + count, len(self.values))
        if hi > lo:
            out[lo - first:hi - first] = self.values[lo:hi]
        return out


def sample_even(fn, dt, half_width):
    """Sample an even function on the symmetric lattice ``|k*dt| <= half_width``."""
    L = int(math.floor(half_width / dt + 1e-9))
    return SampledSignal.from_function(fn, dt, -L, L + 1)


def pulse_frak(spec, dt, half_width):
    """Square-root pulse ``frak`` with ``frak_hat = sqrt(F_hat)``, sampled at ``dt``.

    ``F`` is sampled on ``[-8*sqrt(3)/B, 8*sqrt(3)/B]``, transformed with an FFT,
    its spectrum square-rooted and transformed back. The result is returned on
    the symmetric lattice covering ``[-half_width, half_width]``.
    """
    if not dt > 0 or not half_width >= 0:
        raise InvalidArgumentError("dt must be positive and half_width nonnegative")
    window = 8.0 * math.sqrt(3.0) / spec.B
    L = int(math.ceil(window / dt))
    t = dt * np.arange(-L, L + 1)
    # index 0 <-> t = 0, so the transform of the even sequence is real
    F_hat = dt * np.fft.fft(np.fft.ifftshift(pulse_F(spec, t))).real
    top = F_hat.max()
    if top <= 0 or F_hat.min() < -1e-6 * top:
        raise SpectralValidityError(
            f"compressed pulse spectrum dips to {F_hat.min():.3e} (peak {top:.3e})")
    F_hat = np.where(F_hat < 1e-14 * top, 0.0, F_hat)
    frak = np.fft.fftshift(np.fft.ifft(np.sqrt(F_hat)).real) / dt
    # symmetrize away the rounding-level odd part
    frak = 0.5 * (frak + frak[::-1])

    L_out = int(math.floor(half_width / dt + 1e-9))
    out = np.zeros(2 * L_out + 1)
    keep = min(L, L_out)
    out[L_out - keep:L_out + keep + 1] = frak[L - keep:L + keep + 1]
    return SampledSignal(dt, out, -L_out * dt)


def derivative(sig):
    """Centred difference in the interior, one-sided at the two ends."""
    if len(sig) < 3:
        raise InvalidArgumentError("derivative needs at least three samples")
    return SampledSignal(sig.dt, np.gradient(sig.values, sig.dt), sig.t0)


def convolve(a, b):
    """Discrete approximation of ``(a * b)(t) = int a(s) b(t - s) ds``."""
    if abs(a.dt - b.dt) > 1e-12 * a.dt:
        raise InvalidArgumentError("signals must share the same step")
    return SampledSignal(a.dt, a.dt * np.convolve(a.values, b.values), a.t0 + b.t0)
