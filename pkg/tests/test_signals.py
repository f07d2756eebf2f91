import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from romwave import signals
from romwave.core import InvalidArgumentError
from romwave.signals import (PulseSpec, SampledSignal, SpectralValidityError, convolve, derivative,
                             pulse_F, pulse_f, pulse_frak, sample_even)

SPEC = PulseSpec.from_central_frequency(2 * math.pi)


def test_pulse_constants():
    assert SPEC.B == pytest.approx(math.pi / 2)
    assert SPEC.t_F == pytest.approx(2 * math.sqrt(3) / SPEC.B)
    assert SPEC.wavelength == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        PulseSpec(1.0, 0.0)


def test_compressed_pulse_is_autocorrelation_of_probe():
    # F(t) = int f(s) f(s + t) ds, evaluated by a fine Riemann sum
    dt = 0.005
    s = np.arange(-12, 12 + dt / 2, dt)
    f = pulse_f(SPEC, s)
    for t in (0.0, 0.3, 1.1):
        direct = dt * np.sum(f * pulse_f(SPEC, s + t))
        assert direct == pytest.approx(float(pulse_F(SPEC, t)), rel=1e-9, abs=1e-12)


def test_compressed_pulse_is_even_and_small_beyond_support():
    t = np.linspace(0, 6, 61)
    assert np.array_equal(pulse_F(SPEC, t), pulse_F(SPEC, -t))
    assert abs(pulse_F(SPEC, SPEC.t_F)) < 0.06 * pulse_F(SPEC, 0.0)


def test_frak_squares_to_compressed_pulse():
    dt = 0.01
    half = 4 * SPEC.t_F
    fr = pulse_frak(SPEC, dt, half)
    assert np.allclose(fr.values, fr.values[::-1], atol=0)
    conv = convolve(fr, fr)
    F = pulse_F(SPEC, conv.times)
    assert np.abs(conv.values - F).max() < 1e-6 * np.abs(F).max()


def test_frak_rejects_negative_spectrum(monkeypatch):
    def bad(spec, t):
        return pulse_F(spec, t) - 2.0 * pulse_F(spec, 0.0) * np.exp(-np.asarray(t) ** 2)

    monkeypatch.setattr(signals, "pulse_F", bad)
    with pytest.raises(SpectralValidityError):
        pulse_frak(SPEC, 0.02, 2.0)


def test_sampled_signal_lattice_and_padding():
    sig = SampledSignal(0.1, [1.0, 2.0, 3.0], t0=-0.1)
    assert np.allclose(sig.times, [-0.1, 0.0, 0.1])
    assert np.array_equal(sig.on_lattice(0.1, -3, 6), [0, 0, 1, 2, 3, 0])
    with pytest.raises(InvalidArgumentError):
        sig.on_lattice(0.2, 0, 3)
    with pytest.raises(InvalidArgumentError):
        SampledSignal(0.1, [np.nan])
    with pytest.raises(InvalidArgumentError):
        SampledSignal(0.0, [1.0])


def test_sample_even_is_symmetric():
    sig = sample_even(np.cos, 0.1, 0.55)
    assert len(sig) == 11 and sig.t0 == pytest.approx(-0.5)
    assert np.allclose(sig.values, sig.values[::-1])


@given(w=st.floats(0.5, 5.0))
def test_derivative_of_sine(w):
    dt = 1e-3
    sig = SampledSignal.from_function(lambda t: np.sin(w * t), dt, 0, 2000)
    d = derivative(sig)
    exact = w * np.cos(w * sig.times)
    assert np.abs(d.values[1:-1] - exact[1:-1]).max() < 1e-6 * w ** 3 + 1e-9


def test_convolution_of_boxes():
    box = SampledSignal(0.5, [1.0, 1.0])
    c = convolve(box, box)
    assert np.allclose(c.values, [0.5, 1.0, 0.5])
    with pytest.raises(InvalidArgumentError):
        convolve(box, SampledSignal(0.25, [1.0]))
