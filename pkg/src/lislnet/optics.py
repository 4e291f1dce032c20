"""Gaussian-beam link model: intensity, capacity lower bound and the
outage-relaxed effective rate of a laser inter-satellite link."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class BeamParams:
    power_w: float = 20.0
    waist_radius_m: float = 9.87e-3
    rayleigh_range_m: float | None = None  # None -> pi * W0^2 / wavelength
    wavelength_m: float = 1.55e-6
    bandwidth_hz: float = 1.0e9
    aperture_m2: float = 0.01
    responsivity_a_per_w: float = 0.5
    noise_amp_a: float = 3.0e-7
    jitter_sigma_rad: float = 10.0e-6
    outage_eps: float = 1.0e-3

    def __post_init__(self):
        if self.rayleigh_range_m is None:
            zr = math.pi * self.waist_radius_m**2 / self.wavelength_m
            object.__setattr__(self, "rayleigh_range_m", zr)
        for name in ("power_w", "waist_radius_m", "rayleigh_range_m", "wavelength_m",
                     "bandwidth_hz", "aperture_m2", "responsivity_a_per_w", "noise_amp_a",
                     "jitter_sigma_rad"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.outage_eps < 1.0:
            raise ValueError("outage_eps must lie in (0, 1)")

    @property
    def peak_intensity(self) -> float:
        return 2.0 * self.power_w / (math.pi * self.waist_radius_m**2)

    def with_(self, **changes) -> "BeamParams":
        return replace(self, **changes)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def beam_radius(params: BeamParams, z):
    return _scalar(_beam_radius(params, z))


def _beam_radius(params, z):
    return params.waist_radius_m * np.sqrt(1.0 + (np.asarray(z, dtype=float) / params.rayleigh_range_m) ** 2)


def intensity(params: BeamParams, y, z):
    """Intensity in W/m^2 at radial offset ``y`` and distance ``z`` from the waist."""
    w = _beam_radius(params, z)
    y = np.asarray(y, dtype=float)
    return _scalar(params.peak_intensity * (params.waist_radius_m / w) ** 2 * np.exp(-2.0 * y**2 / w**2))


def capacity(params: BeamParams, y, z):
    """Capacity lower bound (bps) of an intensity-modulated direct-detection link."""
    current = params.aperture_m2 * intensity(params, y, z) * params.responsivity_a_per_w
    snr = current**2 / (2.0 * math.pi * math.e * params.noise_amp_a**2)
    return _scalar(0.5 * params.bandwidth_hz * np.log1p(snr) / math.log(2.0))


def jitter_quantile(params: BeamParams) -> float:
    """Jitter angle exceeded with probability ``outage_eps`` (Rayleigh tail)."""
    return params.jitter_sigma_rad * math.sqrt(-2.0 * math.log(params.outage_eps))


def effective_rate(params: BeamParams, z):
    """Outage-discounted link rate in bps at satellite distance ``z`` (m)."""
    z = np.maximum(np.asarray(z, dtype=float), MIN_DISTANCE_M)
    return _scalar((1.0 - params.outage_eps) * capacity(params, z * jitter_quantile(params), z))


def max_rate(params: BeamParams, min_distance_m: float = MIN_DISTANCE_M) -> float:
    """Upper bound on any effective rate: the jitter-free rate at ``min_distance_m``."""
    return float((1.0 - params.outage_eps) * capacity(params, 0.0, max(min_distance_m, MIN_DISTANCE_M)))
