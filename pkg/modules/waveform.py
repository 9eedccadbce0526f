"""
Transmit waveform for the cooperative sensing simulation.

This module handles:
- The lowpass-equivalent Gaussian pulse and its closed-form derivative
- Pulse/sampling parameters shared by every receiver and the fusion center
"""

import logging
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from modules.exceptions import WaveformError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class PulseSpec:
    """Pulse width, sampling grid and transmit energy."""
    T: float = 2e-8     # pulse width parameter, s
    Ts: float = 1e-8    # sampling period, s
    Tc: float = 6e-8    # effective pulse duration, s
    Td: float = 8e-8    # observation window length, s
    E: float = 1.0      # transmit energy

    def __post_init__(self) -> None:
        if not (self.T > 0 and self.Ts > 0 and self.Tc > 0):
            raise WaveformError(f"T, Ts and Tc must be positive (T={self.T}, Ts={self.Ts}, Tc={self.Tc})")
        if self.Td < self.Tc:
            raise WaveformError(f"Td ({self.Td}) must be at least Tc ({self.Tc})")
        if self.E < 0:
            raise WaveformError(f"Transmit energy must be non-negative, got {self.E}")
        ratio = self.Td / self.Ts
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise WaveformError(f"Td/Ts must be a positive integer, got {ratio}")

    @property
    def window_samples(self) -> int:
        """Number of samples forwarded per receiver (Td/Ts + 2)."""
        return int(round(self.Td / self.Ts)) + 2

    @property
    def amplitude(self) -> float:
        """Peak value (2/T^2)^0.25 of the unit-energy pulse."""
        return (2.0 / self.T ** 2) ** 0.25

    def with_energy(self, energy: float) -> "PulseSpec":
        return replace(self, E=float(energy))


def sample_pulse(spec: PulseSpec, t: ArrayLike) -> ArrayLike:
    """
    Evaluate s(t) = (2/T^2)^0.25 * exp(-pi t^2 / T^2).

    Args:
        spec: Pulse parameters
        t: Time(s) in seconds, scalar or array

    Returns:
        Pulse amplitude with the shape of t
    """
    t = np.asarray(t, dtype=float)
    value = spec.amplitude * np.exp(-np.pi * t ** 2 / spec.T ** 2)
    return float(value) if value.ndim == 0 else value


def pulse_derivative(spec: PulseSpec, t: ArrayLike) -> ArrayLike:
    """Closed-form ds/dt = -(2 pi t / T^2) s(t)."""
    t = np.asarray(t, dtype=float)
    value = -(2.0 * np.pi * t / spec.T ** 2) * sample_pulse(spec, t)
    return float(value) if np.ndim(value) == 0 else value


def discrete_energy(spec: PulseSpec, half_span: float) -> float:
    """Ts * sum of s(kTs)^2 over |kTs| <= half_span."""
    k_max = int(np.floor(half_span / spec.Ts))
    t = np.arange(-k_max, k_max + 1) * spec.Ts
    return float(spec.Ts * np.sum(sample_pulse(spec, t) ** 2))
