import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afmloc.errors import ArgumentError, DegenerateTraceError
from afmloc.harness.presets import resolve
from afmloc.propagator import Seismogram, forward_solve
from afmloc.source import RickerSource, ricker
from afmloc.trace import (
    MisfitVector,
    NoiseSpec,
    TimeWindow,
    add_noise,
    misfit,
    select_window,
    sum_abs_misfit,
    trapezoid_weights,
)


def _sig(values, dt):
    return Seismogram(dt, np.atleast_2d(values))


def test_identical_traces_zero():
    d = _sig(np.sin(np.linspace(0, 7, 300)), 0.01)
    assert misfit(d, d).chi[0] == 0.0


def test_zero_synthetic_half():
    rng = np.random.default_rng(0)
    d = Seismogram(0.01, rng.standard_normal((4, 200)))
    m = misfit(d, Seismogram(0.01, np.zeros((4, 200))))
    assert np.all(m.chi == 0.5)


def test_shifted_sine_against_closed_form():
    dt = 1e-3
    t = np.arange(1001) * dt
    d = _sig(np.sin(2 * np.pi * t), dt)
    s = _sig(np.sin(2 * np.pi * (t - 0.1)), dt)
    # d - s = 2 sin(0.1 pi) cos(2 pi t - 0.1 pi) over one full period
    want = 2 * math.sin(0.1 * math.pi) ** 2
    assert abs(misfit(d, s).chi[0] - want) <= 1e-6


def test_residual_is_normalized_difference():
    dt = 0.01
    t = np.arange(101) * dt
    d = _sig(np.cos(3 * t), dt)
    s = _sig(np.cos(3 * t + 0.2), dt)
    m = misfit(d, s)
    w = trapezoid_weights(101, dt)
    norm = float(np.sum(w * d.data[0] ** 2))
    assert m.norms[0] == pytest.approx(norm)
    assert np.allclose(m.residual[0], (d.data[0] - s.data[0]) * (w / dt) / norm)


def test_degenerate_trace_names_receiver():
    d = Seismogram(0.01, np.vstack([np.ones(50), np.zeros(50)]), (3, 7))
    with pytest.raises(DegenerateTraceError) as e:
        misfit(d, d)
    assert e.value.receiver == 7


@settings(max_examples=30)
@given(st.floats(0.01, 100), st.booleans())
def test_scale_invariance(alpha, flip):
    alpha = -alpha if flip else alpha
    rng = np.random.default_rng(4)
    d = Seismogram(0.01, rng.standard_normal((2, 80)))
    s = Seismogram(0.01, rng.standard_normal((2, 80)))
    a = misfit(d, s).chi
    b = misfit(Seismogram(0.01, alpha * d.data), Seismogram(0.01, alpha * s.data)).chi
    assert np.allclose(a, b, rtol=1e-12)


def test_window_excludes_outside_samples():
    rng = np.random.default_rng(8)
    d = Seismogram(0.01, rng.standard_normal((1, 300)))
    s = Seismogram(0.01, rng.standard_normal((1, 300)))
    win = TimeWindow((1,), [0.5], [2.0])
    a = misfit(d, s, win).chi[0]
    d2 = d.data.copy()
    d2[0, :40] += 5.0
    d2[0, 210:] -= 3.0
    b = misfit(Seismogram(0.01, d2), s, win).chi[0]
    assert a == b


def test_sum_abs_misfit():
    m = MisfitVector((1, 2), np.array([0.1, 0.2]), np.ones(2), np.zeros((2, 3)))
    assert sum_abs_misfit(m) == pytest.approx(0.3)
    assert sum_abs_misfit(MisfitVector((1,), np.zeros(1), np.ones(1), np.zeros((1, 3)))) == 0


def test_noise_zero_ratio_unchanged():
    s = Seismogram(0.01, np.random.default_rng(0).standard_normal((2, 50)))
    assert np.array_equal(add_noise(s, NoiseSpec(0.0, 3)).data, s.data)


def test_noise_statistics():
    t = np.arange(25000) * 0.001
    clean = Seismogram(0.001, np.vstack([np.sin(t), 3 * np.cos(2 * t)]))
    noisy = add_noise(clean, NoiseSpec(0.1, 17))
    for i in range(2):
        sd = np.std(noisy.data[i] - clean.data[i])
        assert sd == pytest.approx(0.1 * np.abs(clean.data[i]).max(), rel=0.03)


def test_noise_deterministic_and_per_receiver():
    s = Seismogram(0.01, np.ones((3, 100)), (1, 2, 3))
    a = add_noise(s, NoiseSpec(0.2, 5))
    b = add_noise(s, NoiseSpec(0.2, 5))
    assert np.array_equal(a.data, b.data)
    # receiver streams do not depend on which other receivers are present
    c = add_noise(s.select((3,)), NoiseSpec(0.2, 5))
    assert np.array_equal(c.data[0], a.data[2])


def test_noise_rejects_negative():
    with pytest.raises(ArgumentError):
        NoiseSpec(-0.1)


def test_window_contains_ricker():
    f0 = 2.0
    dt = 0.005
    t = np.arange(2401) * dt
    d = _sig(ricker(RickerSource(f0, 6.0), t), dt)
    w = select_window(d, 0.02, 0.5, f0)
    t0, t1 = w.bounds(1)
    assert t0 <= 6 - 1 / f0 and t1 >= 6 + 1 / f0
    assert not w.warning


def test_window_flat_trace_falls_back():
    d = _sig(np.zeros(200), 0.01)
    w = select_window(d, 0.02, 0.5, 2.0)
    assert w.bounds(1) == (0.0, d.T) and w.warning


def test_window_clamped():
    dt = 0.01
    t = np.arange(401) * dt
    d = _sig(ricker(RickerSource(2.0, 2.0), t), dt)
    w = select_window(d, 0.02, 100.0, 2.0)
    assert w.bounds(1) == (0.0, pytest.approx(d.T))


def test_window_validation():
    d = _sig(np.ones(10), 0.01)
    with pytest.raises(ArgumentError):
        select_window(d, 1.5)
    with pytest.raises(ArgumentError):
        TimeWindow((1,), [2.0], [1.0])


def test_window_override():
    d = _sig(np.ones(100), 0.01)
    w = TimeWindow.full(d).with_override(1, 0.2, 0.5)
    assert w.bounds(1) == (0.2, 0.5)


def test_trapezoid_weights_window():
    w = trapezoid_weights(11, 0.1, (0.2, 0.6))
    assert np.allclose(w, [0, 0, 0.05, 0.1, 0.1, 0.1, 0.05, 0, 0, 0, 0])


def test_windowing_reduces_noise_misfit():
    s = resolve({})
    clean = forward_solve(s.model, s.src.at(2.0), (23.5, 11.0), s.cfg, s.recv)
    noisy = add_noise(clean, NoiseSpec(0.1, 99))
    win = select_window(noisy, s.window["threshold"], s.window["pad"], s.src.f0)
    full = misfit(noisy, clean, labels=s.recv.active).chi
    windowed = misfit(noisy, clean, win, labels=s.recv.active).chi
    assert np.all(windowed < full)


def test_window_keeps_the_run_through_the_peak():
    f0, dt = 2.0, 0.005
    t = np.arange(2401) * dt
    trace = ricker(RickerSource(f0, 3.0), t) + 0.3 * ricker(RickerSource(f0, 9.0), t)
    d = _sig(trace, dt)
    t0, t1 = select_window(d, 0.02, 0.25, f0).bounds(1)
    assert t0 < 3.0 < t1 < 8.0
    t0, t1 = select_window(d, 0.02, 0.25, f0, contiguous=False).bounds(1)
    assert t0 < 3.0 and t1 > 9.0
