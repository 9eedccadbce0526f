"""
Received-signal synthesis and sample-index windows.

This module handles:
- Random reflection coefficients and per-trial channel realizations
- Discretized noisy received samples at each receiver
- The coarse capture window K0 and the forwarded window K_n
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from modules.exceptions import GeometryError
from modules.geometry import (Scene, SearchRegion, TargetTruth, amplitude_coefficient,
                              bistatic_delay, bistatic_delays)
from modules.waveform import PulseSpec, sample_pulse

logger = logging.getLogger(__name__)

# Guard added on both sides of the coarse window, in units of the pulse width T
COARSE_GUARD_PULSES = 3.0
# Lattice resolution used to bound the delay support of a region
SUPPORT_GRID_POINTS = 401


@dataclass(frozen=True)
class ReceiverChannel:
    """Channel seen by a single receiver."""
    xi: complex         # reflection coefficient, |xi| = 1
    rho: float          # amplitude path loss
    tau: float          # true delay, s
    sigma2: float       # noise variance

    @property
    def alpha(self) -> complex:
        return self.rho * self.xi


@dataclass(frozen=True)
class ChannelRealization:
    """Per-receiver reflection, path-loss, delay and noise parameters."""
    xi: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.sigma2 <= 0):
            raise GeometryError("Noise variances must be positive")

    @property
    def alpha(self) -> np.ndarray:
        return self.rho * self.xi

    @property
    def n_receivers(self) -> int:
        return len(self.tau)

    def receiver(self, n: int) -> ReceiverChannel:
        return ReceiverChannel(xi=complex(self.xi[n]), rho=float(self.rho[n]),
                               tau=float(self.tau[n]), sigma2=float(self.sigma2[n]))


@dataclass(frozen=True)
class ObservationWindow:
    """Contiguous sample indices k (sample time k*Ts)."""
    indices: np.ndarray

    @property
    def start(self) -> int:
        return int(self.indices[0])

    @property
    def size(self) -> int:
        return len(self.indices)

    def times(self, spec: PulseSpec) -> np.ndarray:
        return self.indices * spec.Ts

    def contains(self, other: "ObservationWindow") -> bool:
        return other.indices[0] >= self.indices[0] and other.indices[-1] <= self.indices[-1]

    def positions_of(self, other: "ObservationWindow") -> np.ndarray:
        """Offsets of other's indices inside this window."""
        return other.indices - self.start


def draw_reflection(rng: np.random.Generator) -> complex:
    """Unit-modulus reflection coefficient with uniform phase on [0, 2pi)."""
    return complex(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi)))


def draw_channel(scene: Scene, target: TargetTruth, rng: np.random.Generator,
                 sigma2: float = 1.0) -> ChannelRealization:
    """Draw reflection phases and evaluate path loss and delays for every receiver."""
    position = target.as_array()
    n = scene.n_receivers
    xi = np.array([draw_reflection(rng) for _ in range(n)])
    rho = np.array([amplitude_coefficient(scene, i, position) for i in range(n)])
    tau = np.array([bistatic_delay(scene, i, position) for i in range(n)])
    return ChannelRealization(xi=xi, rho=rho, tau=tau, sigma2=np.full(n, float(sigma2)))


def synthesize_received(spec: PulseSpec, channel: ReceiverChannel, window: ObservationWindow,
                        rng: np.random.Generator) -> np.ndarray:
    """
    r(kTs) = sqrt(E) alpha s(kTs - tau) + w(kTs) over the window.

    Noise is circular complex Gaussian with variance sigma2 (sigma2/2 per part).
    """
    if window.size == 0:
        raise GeometryError("Cannot synthesize samples over an empty window")
    clean = np.sqrt(spec.E) * channel.alpha * sample_pulse(spec, window.times(spec) - channel.tau)
    noise = rng.standard_normal((2, window.size)) * np.sqrt(channel.sigma2 / 2.0)
    return clean + noise[0] + 1j * noise[1]


def observation_window(tau_hat: float, spec: PulseSpec) -> ObservationWindow:
    """
    Forwarded window K_n of Td/Ts + 2 samples around tau_hat.

    Starts at floor(tau_hat/Ts - Td/(2 Ts)) so it always covers
    ceil((tau_hat - Td/2)/Ts) .. floor((tau_hat + Td/2)/Ts).
    """
    if tau_hat < 0:
        raise GeometryError(f"Delay estimate must be non-negative, got {tau_hat}")
    half = spec.Td / (2.0 * spec.Ts)
    start = int(np.floor(tau_hat / spec.Ts - half + 1e-9))
    return ObservationWindow(np.arange(start, start + spec.window_samples))


def coarse_window(scene: Scene, n: int, region: SearchRegion, spec: PulseSpec) -> ObservationWindow:
    """K0 capture window: full delay support of the region for receiver n plus a 3T guard."""
    points = region.grid(SUPPORT_GRID_POINTS)
    delays = bistatic_delays(scene, points)[:, n]
    guard = COARSE_GUARD_PULSES * spec.T
    lo = int(np.floor((max(delays.min() - guard, 0.0)) / spec.Ts))
    hi = int(np.ceil((delays.max() + guard) / spec.Ts))
    return ObservationWindow(np.arange(lo, hi + 1))


def coarse_windows(scene: Scene, region: SearchRegion, spec: PulseSpec) -> List[ObservationWindow]:
    windows = [coarse_window(scene, n, region, spec) for n in range(scene.n_receivers)]
    logger.debug(f"Coarse windows: {[w.size for w in windows]} samples")
    return windows
