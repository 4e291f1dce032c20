import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from lislnet.optics import (
    BeamParams,
    beam_radius,
    capacity,
    effective_rate,
    intensity,
    jitter_quantile,
    max_rate,
)

DEFAULT = BeamParams()


def reference_rate(z, P0=20.0, W0=9.87e-3, lam=1.55e-6, B=1e9, A=0.01, psi=0.5, sn=3e-7, sj=10e-6, eps=1e-3):
    """Straight transcription of the beam, capacity and jitter formulas."""
    zr = math.pi * W0**2 / lam
    w = W0 * math.sqrt(1 + (z / zr) ** 2)
    y = z * sj * math.sqrt(-2 * math.log(eps))
    phi = 2 * P0 / (math.pi * W0**2) * (W0 / w) ** 2 * math.exp(-2 * y**2 / w**2)
    c = B / 2 * math.log2(1 + (A * phi * psi) ** 2 / (2 * math.pi * math.e * sn**2))
    return (1 - eps) * c


def test_derived_rayleigh_range():
    assert DEFAULT.rayleigh_range_m == pytest.approx(197.4479, rel=1e-6)
    assert BeamParams(rayleigh_range_m=1970.0).rayleigh_range_m == 1970.0


def test_beam_radius():
    assert beam_radius(DEFAULT, 0.0) == DEFAULT.waist_radius_m
    assert beam_radius(DEFAULT, DEFAULT.rayleigh_range_m) == pytest.approx(DEFAULT.waist_radius_m * math.sqrt(2), rel=1e-14)
    assert beam_radius(DEFAULT, 1e6) == pytest.approx(50.0, rel=1e-3)


def test_intensity_unit_case():
    p = BeamParams(power_w=math.pi / 2, waist_radius_m=1.0)
    assert intensity(p, 0.0, 0.0) == pytest.approx(1.0, rel=1e-15)


def test_intensity_at_beam_radius():
    z = 2e5
    w = beam_radius(DEFAULT, z)
    assert intensity(DEFAULT, w, z) == pytest.approx(intensity(DEFAULT, 0.0, z) * math.exp(-2), rel=1e-12)


@pytest.mark.parametrize("z", [0.0, 150.0, 1e4, 1e6])
def test_power_conservation(z):
    w = beam_radius(DEFAULT, z)
    total, _ = integrate.quad(lambda y: intensity(DEFAULT, y, z) * 2 * math.pi * y, 0, 12 * w, epsabs=0, epsrel=1e-10)
    assert total == pytest.approx(DEFAULT.power_w, rel=1e-3)


def test_capacity_unit_snr():
    # choose P0 so that A * Phi(0, 0) * Psi = sigma_N * sqrt(2 pi e)
    target_phi = DEFAULT.noise_amp_a * math.sqrt(2 * math.pi * math.e) / (DEFAULT.aperture_m2 * DEFAULT.responsivity_a_per_w)
    p0 = target_phi * math.pi * DEFAULT.waist_radius_m**2 / 2
    p = DEFAULT.with_(power_w=p0)
    assert capacity(p, 0.0, 0.0) == pytest.approx(DEFAULT.bandwidth_hz / 2, rel=1e-12)


def test_capacity_vanishes_off_axis():
    z = 1e5
    ys = np.linspace(0, 20 * beam_radius(DEFAULT, z), 200)
    c = capacity(DEFAULT, ys, z)
    assert np.all(np.diff(c) <= 0)
    assert c[-1] < 1e-6 * c[0]


def test_capacity_default_regime():
    assert capacity(DEFAULT, 0.0, 1e6) == pytest.approx(4.36e9, rel=1e-2)


def test_capacity_nonincreasing_in_noise():
    assert capacity(DEFAULT.with_(noise_amp_a=6e-7), 0.0, 1e6) < capacity(DEFAULT, 0.0, 1e6)


def test_jitter_quantile():
    p = BeamParams(jitter_sigma_rad=1.0, outage_eps=math.exp(-2))
    assert jitter_quantile(p) == pytest.approx(2.0, rel=1e-15)
    # Rayleigh CDF inversion: 1 - exp(-x^2 / 2 sigma^2) = 1 - eps
    from scipy.stats import rayleigh
    assert jitter_quantile(DEFAULT) == pytest.approx(rayleigh.ppf(1 - 1e-3, scale=10e-6), rel=1e-9)
    assert jitter_quantile(DEFAULT) == pytest.approx(3.7169e-5, rel=1e-4)


def test_jitter_quantile_monte_carlo():
    rng = np.random.default_rng(12)
    n = 1_000_000
    frac = np.mean(rng.rayleigh(DEFAULT.jitter_sigma_rad, n) > jitter_quantile(DEFAULT))
    eps = DEFAULT.outage_eps
    assert abs(frac - eps) <= 3 * math.sqrt(eps * (1 - eps) / n)


@pytest.mark.parametrize("z", [1e3, 1e5, 5e5, 1e6, 2e6, 3e6])
def test_effective_rate_matches_reference(z):
    assert effective_rate(DEFAULT, z) == pytest.approx(reference_rate(z), rel=1e-12)


def test_effective_rate_default_regime():
    assert effective_rate(DEFAULT, 1e6) == pytest.approx(2.78e9, rel=1e-2)


def test_no_jitter_limit():
    p = DEFAULT.with_(jitter_sigma_rad=1e-15, outage_eps=1e-12)
    assert effective_rate(p, 7e5) == pytest.approx(capacity(p, 0.0, 7e5), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 5e6), st.floats(1.0001, 10.0))
def test_effective_rate_decreasing(z, factor):
    assert effective_rate(DEFAULT, z) > effective_rate(DEFAULT, z * factor)


@settings(max_examples=100, deadline=None)
@given(st.floats(10.0, 5e6))
def test_rate_bounds(z):
    r = effective_rate(DEFAULT, z)
    assert 0 < r < (1 - DEFAULT.outage_eps) * capacity(DEFAULT, 0.0, z)
    assert r <= max_rate(DEFAULT)
    assert intensity(DEFAULT, 1.0, z) <= intensity(DEFAULT, 0.0, z)


def test_invalid_params():
    with pytest.raises(ValueError):
        BeamParams(power_w=0.0)
    with pytest.raises(ValueError):
        BeamParams(outage_eps=1.0)
